"""Independent reference computations used to derive and check test fixtures.

Everything here is written directly from the model definitions with
scipy.integrate or brute-force loops and shares no code with the package.
"""

import math
from fractions import Fraction

import numpy as np
from scipy import integrate


# two-covariate design: X ~ U(-1,1)^2, p = 0.5 cos^2 x1 + 0.5 sin^2 x2,
# Y ~ U(0.9 - p, 1.9 - p), C ~ U(0, 1), psi = 1{y <= 0.9}
def m1(x):
    return 0.5 * np.cos(x) ** 2


def m2(x):
    return 0.5 * np.sin(x) ** 2


def p_of(x1, x2):
    return m1(x1) + m2(x2)


def component_means():
    """Closed forms of int m_l q_l with q_l = 1/2 on [-1, 1]."""
    return 0.25 * (1 + math.sin(2) / 2), 0.25 * (1 - math.sin(2) / 2)


def censoring_rate():
    """P(Y <= C) = E (0.1 + p(X))^2 / 2 by adaptive 2-d quadrature."""
    val, _ = integrate.dblquad(
        lambda x2, x1: (0.1 + p_of(x1, x2)) ** 2 / 2 * 0.25, -1, 1, -1, 1,
        epsabs=1e-12, epsrel=1e-12,
    )
    return val


def expected_psi_known_g():
    """E psi(Y) = E p(X) = 0.5."""
    val, _ = integrate.dblquad(lambda x2, x1: p_of(x1, x2) * 0.25, -1, 1, -1, 1)
    return val


def H_design(x1, x2):
    """E(psi^2(Y)/G(Y) | X) = int_{0.9-p}^{0.9} dy / (1 - y)."""
    p = p_of(x1, x2)
    val, _ = integrate.quad(lambda y: 1.0 / (1.0 - y), 0.9 - p, 0.9, epsabs=1e-13)
    return val


def tau_sq_design(x1, qform="squared"):
    """int H(x1, u) q(u)^k / f(x1, u) du over u in [-1, 1] with q = 1/2, f = 1/4."""
    power = 2 if qform == "squared" else 1
    val, _ = integrate.quad(lambda u: H_design(x1, u) * 0.5**power / 0.25, -1, 1, epsabs=1e-12)
    return val


def sigma1_design(grid=None):
    grid = np.linspace(-1, 1, 201) if grid is None else grid
    return math.sqrt(0.6 * max(tau_sq_design(v) for v in grid))


# Kaplan-Meier -----------------------------------------------------------
def brute_force_km(z, delta):
    """Product-limit estimate of P(C > t) at each distinct censoring time.

    At tied times uncensored observations leave the risk set first, so the
    risk set of a censoring time t is {Z > t} plus the censored ties at t.
    Returns ``{t: (float value, exact Fraction value)}``.
    """
    z = list(map(float, z))
    delta = list(map(int, delta))
    times = sorted({t for t, d in zip(z, delta) if d == 0})
    out = {}
    s_float, s_exact = 1.0, Fraction(1)
    for t in times:
        at_risk = sum(1 for zi, di in zip(z, delta) if zi > t or (zi == t and di == 0))
        events = sum(1 for zi, di in zip(z, delta) if zi == t and di == 0)
        s_float *= (at_risk - events) / at_risk
        s_exact *= Fraction(at_risk - events, at_risk)
        out[t] = (s_float, s_exact)
    return out


# bias of the marginal-integration estimator -----------------------------
def epanechnikov(u):
    return np.where(np.abs(u) <= 1, 0.75 * (1 - u**2), 0.0)


def _smooth(func, x, h, lo=-1.0, hi=1.0):
    """int_{lo}^{hi} K_h(x - u) func(u) du."""
    a, b = max(lo, x - h), min(hi, x + h)
    if a >= b:
        return 0.0
    val, _ = integrate.quad(lambda u: epanechnikov((x - u) / h) / h * func(u), a, b,
                            epsabs=1e-14, epsrel=1e-13)
    return val


def expected_eta1(x1, h, q_lo, q_hi):
    """E eta_hat_1(x1) for the known-f, known-G estimator, uniform q on [q_lo, q_hi].

    With known G and f the estimator's mean is the kernel smooth of m over
    the covariate box; for m = m1 + m2 it factors into one-dimensional
    smooths.
    """
    qd = 1.0 / (q_hi - q_lo)
    one = lambda u: 1.0  # noqa: E731

    def q_int(func):
        val, _ = integrate.quad(func, q_lo, q_hi, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val * qd

    s1 = lambda v: _smooth(m1, v, h)  # noqa: E731
    s2 = lambda v: _smooth(m2, v, h)  # noqa: E731
    a = lambda v: _smooth(one, v, h)  # noqa: E731
    A2, S2 = q_int(a), q_int(s2)
    A1, S1 = q_int(a), q_int(s1)
    partial = s1(x1) * A2 + a(x1) * S2
    total = S1 * A2 + A1 * S2
    return partial - total


def true_eta1(x1, q_lo, q_hi):
    val, _ = integrate.quad(m1, q_lo, q_hi, epsabs=1e-14)
    return m1(x1) - val / (q_hi - q_lo)
