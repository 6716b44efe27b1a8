"""Inverse-probability-of-censoring weighting and the internal kernel regression.

The regression estimator is the internal IPCW smoother, with the covariate
density taken at the data points:

    m(x) = 1/n sum_i delta_i psi(Z_i) / (G(Z_i) f(X_i)) prod_l K_l((x_l - X_il) / h_l) / h_l

where ``G`` is either the Kaplan-Meier estimate or a known survival
function and ``f`` is either the kernel density estimate evaluated at the
data points or a known density.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from .errors import DegenerateDensityError, DivergenceError, ValidationError
from .kernels import convolve_with_density, get_kernel
from .survival import SurvivalCurve, km_censoring_survival

__all__ = [
    "BandwidthPlan",
    "GModel",
    "EstimatorConfig",
    "IPCWRegression",
    "ThetaPositivityWarning",
    "kde",
    "product_kernel_sum",
    "ipcw_weight",
    "ipcw_weights",
    "synthetic_transform",
    "m_tilde_star",
]

log = logging.getLogger(__name__)


class ThetaPositivityWarning(UserWarning):
    """Synthetic responses were computed with a rho giving nonpositive Theta_1."""


@dataclass(frozen=True)
class BandwidthPlan:
    """Bandwidths for the density estimate and for each regression axis.

    Either give the values directly or build a power-law schedule
    ``h = c * n**(-a)`` with :meth:`power_law`.
    """

    h_density: float
    h_axis: tuple
    density_law: tuple = None
    axis_laws: tuple = None
    n: int = None

    def __post_init__(self):
        h_axis = tuple(float(h) for h in np.atleast_1d(self.h_axis))
        object.__setattr__(self, "h_axis", h_axis)
        object.__setattr__(self, "h_density", float(self.h_density))
        if not self.h_density > 0 or not all(h > 0 for h in h_axis):
            raise ValidationError("all bandwidths must be > 0")
        if self.n is not None and self.density_law is not None:
            c0, a0 = self.density_law
            if not np.isclose(self.h_density, c0 * self.n ** (-a0), rtol=1e-12):
                raise ValidationError("h_density does not match its power law")
        if self.n is not None and self.axis_laws is not None:
            for h, (c, a) in zip(h_axis, self.axis_laws):
                if not np.isclose(h, c * self.n ** (-a), rtol=1e-12):
                    raise ValidationError("h_axis does not match its power law")

    @classmethod
    def fixed(cls, h, d, h_density=None):
        return cls(h if h_density is None else h_density, (h,) * d)

    @classmethod
    def power_law(cls, n, density_law, axis_laws):
        c0, a0 = density_law
        laws = tuple(tuple(law) for law in axis_laws)
        return cls(
            c0 * n ** (-a0),
            tuple(c * n ** (-a) for c, a in laws),
            tuple(density_law),
            laws,
            int(n),
        )

    @property
    def d(self):
        return len(self.h_axis)


@dataclass(frozen=True)
class GModel:
    """Censoring survival function: a Kaplan-Meier curve or a known function."""

    kind: str
    func: object = field(repr=False)

    @classmethod
    def estimated(cls, sample):
        return cls("estimated", km_censoring_survival(sample))

    @classmethod
    def from_curve(cls, curve):
        return cls("estimated", curve)

    @classmethod
    def known(cls, func, check_range=(0.0, 10.0)):
        grid = np.linspace(*check_range, 2001)
        vals = np.asarray(func(grid), dtype=float)
        if np.any((vals < 0) | (vals > 1)) or np.any(np.diff(vals) > 1e-12):
            raise ValidationError("a known G must be nonincreasing with values in [0, 1]")
        return cls("known", func)

    @classmethod
    def one(cls):
        return cls("known", lambda t: np.ones(np.shape(t)))

    def __call__(self, t):
        return np.asarray(self.func(np.asarray(t, dtype=float)), dtype=float)

    @property
    def curve(self):
        return self.func if isinstance(self.func, SurvivalCurve) else None

    def _zero_before(self, z):
        """Smallest time in ``[0, z]`` where G vanishes (bisection for analytic G)."""
        lo, hi = 0.0, float(z)
        if self(lo) <= 0:
            return 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self(mid) <= 0:
                hi = mid
            else:
                lo = mid
        return hi

    def inverse_integral(self, z, epsabs=1e-10):
        """``int_0^z dt / G(t)`` for each ``z``.

        Exact for a step ``G``; adaptive vector quadrature otherwise.
        Raises :class:`DivergenceError` when G vanishes before some ``z``.
        """
        z = np.atleast_1d(np.asarray(z, dtype=float))
        curve = self.curve
        if curve is not None:
            t0 = curve.first_zero
            if np.any(z > t0):
                raise DivergenceError(f"G vanishes at t={t0:.17g}, before z={z.max():.17g}")
            return curve.inverse_integral(z)
        gz = self(z)
        if np.any(gz <= 0):
            t0 = self._zero_before(float(z[gz <= 0].min()))
            raise DivergenceError(f"G vanishes at t={t0:.17g}")
        if z.size == 0:
            return z
        val, _ = integrate.quad_vec(
            lambda s: z / self(z * s), 0.0, 1.0, epsabs=epsabs, epsrel=1e-12
        )
        return np.asarray(val)


def _as_kernels(kernels, d):
    if isinstance(kernels, (str,)) or not np.iterable(kernels):
        kernels = [kernels] * d
    kernels = [get_kernel(k) for k in kernels]
    if len(kernels) != d:
        raise ValidationError(f"expected {d} axis kernels, got {len(kernels)}")
    return kernels


def product_kernel_sum(points, centers, h, kernels, weights=None):
    """``sum_i w_i prod_l K_l((p_l - c_il) / h_l) / h_l`` for every point ``p``.

    Neighbour pairs are found with a k-d tree in bandwidth-scaled
    coordinates, so the cost is proportional to the number of pairs whose
    kernel product can be nonzero.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (centers.shape[1],))
    reach = max(max(abs(k.support[0]), abs(k.support[1])) for k in kernels)
    tree = cKDTree(centers / h)
    hits = tree.query_ball_point(points / h, r=reach * (1 + 1e-12), p=np.inf)
    lengths = np.fromiter((len(v) for v in hits), dtype=np.intp, count=len(hits))
    out = np.zeros(len(points))
    if lengths.sum() == 0:
        return out
    rows = np.repeat(np.arange(len(points)), lengths)
    cols = np.concatenate([np.asarray(v, dtype=np.intp) for v in hits if len(v)])
    vals = np.ones(len(rows))
    for ax, k in enumerate(kernels):
        vals *= k.scaled(points[rows, ax] - centers[cols, ax], h[ax])
    if weights is not None:
        vals *= np.asarray(weights, dtype=float)[cols]
    return np.bincount(rows, weights=vals, minlength=len(points))


def kde(sample, x, plan, k_density="epanechnikov"):
    """Product-kernel density estimate ``1/(n h^d) sum_i K((x - X_i) / h)``.

    ``x`` may be a single point or an ``(m, d)`` array.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != sample.d:
        raise ValidationError(f"point dimension {pts.shape[1]} != sample dimension {sample.d}")
    kernels = _as_kernels(k_density, sample.d)
    out = product_kernel_sum(pts, sample.x, plan.h_density, kernels) / sample.n
    return float(out[0]) if single else out


def ipcw_weights(sample, psi, g):
    """``delta_i psi(Z_i) / G(Z_i)`` for all observations.

    Observations with ``G(Z_i) = 0`` get weight 0 and a warning is logged.
    """
    out = np.zeros(sample.n)
    obs = sample.delta == 1
    if not obs.any():
        return out
    z = sample.z[obs]
    gz = g(z)
    num = psi(z)
    dead = gz <= 0
    if np.any(dead & (num != 0)):
        log.warning(
            "G(Z_i) = 0 for %d uncensored observation(s); their IPCW weight is set to 0",
            int(np.sum(dead & (num != 0))),
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        out[obs] = np.where(dead, 0.0, num / np.where(dead, 1.0, gz))
    return out


def ipcw_weight(obs, psi, g):
    """Weight ``delta psi(Z) / G(Z)`` of a single observation."""
    if obs.delta == 0:
        return 0.0
    gz = float(g(obs.z))
    if gz <= 0:
        log.warning("G(Z) = 0 at Z=%r; IPCW weight set to 0", obs.z)
        return 0.0
    return float(psi(np.asarray(obs.z))) / gz


def synthetic_transform(data, g, rho):
    """Generalised synthetic response ``delta Theta_1(Z) + (1 - delta) Theta_2(Z)``.

    ``Theta_2(z) = (1 + rho) int_0^z dt / G(t)`` and
    ``Theta_1(z) = Theta_2(z) - rho z / G(z)``. ``rho = -1`` gives
    ``delta Z / G(Z)`` and ``rho = 0`` gives ``int_0^Z dt / G(t)``.

    Parameters
    ----------
    data : CensoredSample or CensoredObservation
    g : GModel
    rho : float

    Returns
    -------
    float or ndarray
    """
    single = not hasattr(data, "n")
    z = np.atleast_1d(np.asarray(data.z, dtype=float))
    delta = np.atleast_1d(np.asarray(data.delta))
    rho = float(rho)
    if 1.0 + rho != 0.0:
        integral = g.inverse_integral(z)
        theta2 = (1.0 + rho) * integral
    else:
        theta2 = np.zeros_like(z)
    out = theta2.copy()
    obs = delta == 1
    if obs.any():
        if rho != 0.0:
            gz = g(z[obs])
            if np.any(gz <= 0):
                t0 = float(z[obs][gz <= 0].min())
                raise DivergenceError(f"G vanishes at t={t0:.17g} for an uncensored observation")
            theta1 = theta2[obs] - rho * z[obs] / gz
        else:
            theta1 = theta2[obs]
        if np.any(theta1 <= 0) and np.any(z[obs] > 0):
            warnings.warn(
                f"rho={rho:g} gives Theta_1(Z) <= 0 for {int(np.sum(theta1 <= 0))} observation(s)",
                ThetaPositivityWarning,
                stacklevel=2,
            )
        out[obs] = theta1
    return float(out[0]) if single else out


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything the internal regression estimator needs besides the data.

    ``g`` is ``"estimated"`` (Kaplan-Meier) or a :class:`GModel`; ``f`` is
    ``"estimated"`` (kernel density at the data points) or a callable
    density of the covariates.
    """

    plan: BandwidthPlan
    psi: object
    axis_kernels: object = "epanechnikov"
    density_kernel: object = "epanechnikov"
    g: object = "estimated"
    f: object = "estimated"

    def build(self, sample):
        return IPCWRegression(sample, self)

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


class IPCWRegression:
    """The internal IPCW kernel regression fitted to one sample.

    Calling the object evaluates the estimator at points; :meth:`marginal`
    and :meth:`total` integrate it against product densities using the
    product structure of the kernel.
    """

    def __init__(self, sample, config):
        self.sample = sample
        self.config = config
        d = sample.d
        plan = config.plan
        if plan.d != d:
            raise ValidationError(f"bandwidth plan has {plan.d} axes, sample has {d}")
        self.h = np.asarray(plan.h_axis)
        self.kernels = _as_kernels(config.axis_kernels, d)
        self.psi = config.psi
        g = config.g
        self.g = GModel.estimated(sample) if isinstance(g, str) and g == "estimated" else g
        numer = ipcw_weights(sample, self.psi, self.g)
        f = config.f
        if isinstance(f, str) and f == "estimated":
            self.f_at_data = kde(sample, sample.x, plan, config.density_kernel)
        else:
            self.f_at_data = np.asarray(f(sample.x), dtype=float)
        active = numer != 0
        self._degenerate = active & ~(self.f_at_data > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.weights = np.where(active & ~self._degenerate, numer / self.f_at_data, 0.0)
        self.numerators = numer

    @property
    def n(self):
        return self.sample.n

    @property
    def d(self):
        return self.sample.d

    def _check_degenerate(self, contributing):
        bad = self._degenerate & contributing
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DegenerateDensityError(
                f"density is {self.f_at_data[i]!r} at X_{i + 1}, which contributes to the estimate"
            )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.d:
            raise ValidationError(f"point dimension {pts.shape[1]} != sample dimension {self.d}")
        if self._degenerate.any():
            touched = product_kernel_sum(
                self.sample.x, pts, self.h, self.kernels, weights=None
            ) > 0
            self._check_degenerate(touched)
        out = product_kernel_sum(pts, self.sample.x, self.h, self.kernels, self.weights) / self.n
        return float(out[0]) if single else out

    def smoothed_q(self, q, rule=None):
        """``A[i, j] = int K_j((u - X_ij) / h_j) / h_j q_j(u) du`` for every axis."""
        cols = []
        for j in range(self.d):
            cols.append(
                convolve_with_density(
                    self.kernels[j], self.h[j], self.sample.x[:, j], q[j], q[j].support, rule
                )
            )
        return np.column_stack(cols)

    def total(self, q, rule=None):
        """``int m(x) q(x) dx``."""
        A = self.smoothed_q(q, rule)
        prod = A.prod(axis=1)
        self._check_degenerate(prod > 0)
        return float(np.dot(self.weights, prod) / self.n)

    def marginal(self, ell, x_ell, q, rule=None, A=None):
        """``int m(x) q_{-l}(x_{-l}) dx_{-l}`` at each ``x_ell``."""
        x_ell = np.atleast_1d(np.asarray(x_ell, dtype=float))
        if A is None:
            A = self.smoothed_q(q, rule)
        other = np.prod(np.delete(A, ell, axis=1), axis=1)
        kmat = self.kernels[ell].scaled(x_ell[:, None] - self.sample.x[None, :, ell], self.h[ell])
        if self._degenerate.any():
            self._check_degenerate(((kmat > 0).any(axis=0)) & (other > 0))
        return kmat @ (self.weights * other) / self.n


def m_tilde_star(sample, x, plan, axis_kernels, psi, g, f_model="estimated",
                 density_kernel="epanechnikov"):
    """Evaluate the internal IPCW regression estimator at ``x``."""
    config = EstimatorConfig(plan, psi, axis_kernels, density_kernel, g, f_model)
    return IPCWRegression(sample, config)(x)
