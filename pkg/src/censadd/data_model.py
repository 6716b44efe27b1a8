"""Censored samples, response transforms psi, CSV I/O and the simulation design.

The simulation reproduces the design used to illustrate the method: two
uniform covariates on (-1, 1), additive success probability
``p(x) = 0.5 cos^2(x1) + 0.5 sin^2(x2)``, a response uniform on
``(0.9 - p, 1.9 - p)`` so that ``P(Y <= 0.9 | X) = p``, and censoring
``C ~ U(0, 1)`` independent of everything else.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import DivergenceError, SchemaError, ValidationError
from .kernels import QuadratureRule

__all__ = [
    "CensoredObservation",
    "CensoredSample",
    "PsiFunction",
    "Region",
    "SimulationModel",
    "SimulationTruth",
    "two_covariate_model",
    "substream",
    "load_csv",
    "write_csv",
    "format_float",
    "generate_simulation",
    "empirical_censoring_rate",
]


def format_float(value):
    """Serialise a float with 17 significant digits (round-trips exactly)."""
    return format(float(value), ".17g")


def substream(seed, replication=0):
    """Independent generator for one replication: PCG64 seeded with ``seed ^ replication``."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.PCG64(seed ^ int(replication)))


@dataclass(frozen=True)
class CensoredObservation:
    z: float
    delta: int
    x: tuple

    def __post_init__(self):
        if not math.isfinite(self.z) or self.z < 0:
            raise ValidationError(f"observed time must be finite and >= 0, got {self.z!r}")
        if self.delta not in (0, 1):
            raise ValidationError(f"delta must be 0 or 1, got {self.delta!r}")


@dataclass(frozen=True, eq=False)
class CensoredSample:
    """``n`` observations ``(Z_i, delta_i, X_i)`` held as read-only arrays.

    Parameters
    ----------
    z : array_like, shape (n,)
        Observed times ``min(Y, C)``.
    delta : array_like, shape (n,)
        ``1`` when the response was observed (``Y <= C``).
    x : array_like, shape (n, d)
        Covariates.
    """

    z: np.ndarray
    delta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1)
        delta_raw = np.array(self.delta, dtype=float).reshape(-1)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(z), -1) if len(z) else x.reshape(0, 1)
        n = len(z)
        if n < 1:
            raise ValidationError("n >= 1 required")
        if len(delta_raw) != n or x.shape[0] != n:
            raise ValidationError("z, delta and x must have the same number of rows")
        if x.shape[1] < 1:
            raise ValidationError("at least one covariate is required")
        bad = np.flatnonzero(~np.isfinite(z) | (z < 0))
        if bad.size:
            raise ValidationError("observed time must be finite and >= 0", row=int(bad[0]) + 1)
        bad = np.flatnonzero((delta_raw != 0) & (delta_raw != 1))
        if bad.size:
            raise ValidationError("delta must be 0 or 1", row=int(bad[0]) + 1)
        bad = np.flatnonzero(~np.isfinite(x).all(axis=1))
        if bad.size:
            raise ValidationError("covariates must be finite", row=int(bad[0]) + 1)
        delta = delta_raw.astype(np.int8)
        for arr in (z, delta, x):
            arr.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return len(self.z)

    @property
    def d(self):
        return self.x.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return CensoredObservation(float(self.z[i]), int(self.delta[i]), tuple(self.x[i]))

    def __iter__(self):
        return (self[i] for i in range(self.n))

    def __eq__(self, other):
        if not isinstance(other, CensoredSample):
            return NotImplemented
        return (
            np.array_equal(self.z, other.z)
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.x, other.x)
        )

    @classmethod
    def from_observations(cls, observations):
        observations = list(observations)
        if not observations:
            raise ValidationError("n >= 1 required")
        dims = {len(o.x) for o in observations}
        if len(dims) != 1:
            raise ValidationError("all observations must share the covariate dimension")
        return cls(
            [o.z for o in observations],
            [o.delta for o in observations],
            [list(o.x) for o in observations],
        )

    def permuted(self, order):
        order = np.asarray(order)
        return CensoredSample(self.z[order], self.delta[order], self.x[order])


@dataclass(frozen=True)
class PsiFunction:
    """Bounded transform of the response whose conditional mean is estimated.

    Use the constructors :meth:`identity_truncated`, :meth:`indicator` and
    :meth:`custom`. ``cutoff`` is the point above which psi vanishes
    (``None`` when unknown); integrals against ``1/G`` are split there.
    """

    kind: str
    func: object = field(repr=False, compare=False)
    bound: float
    cutoff: object = None
    label: str = ""

    @classmethod
    def identity_truncated(cls, omega):
        omega = float(omega)
        return cls(
            "identity-truncated",
            lambda y: np.where(y <= omega, y, 0.0),
            bound=abs(omega),
            cutoff=omega,
            label=f"identity-truncated({omega:g})",
        )

    @classmethod
    def indicator(cls, t):
        t = float(t)
        return cls(
            "indicator",
            lambda y: (y <= t).astype(float),
            bound=1.0,
            cutoff=t,
            label=f"indicator({t:g})",
        )

    @classmethod
    def custom(cls, func, bound, cutoff=None, label="custom"):
        return cls("custom", func, bound=float(bound), cutoff=cutoff, label=label)

    @classmethod
    def constant(cls, c):
        c = float(c)
        return cls.custom(lambda y: np.full(np.shape(y), c), abs(c), None, f"constant({c:g})")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.asarray(self.func(y), dtype=float)
        if self.kind == "custom" and out.size and np.abs(out).max() > self.bound * (1 + 1e-12):
            raise ValidationError(f"psi {self.label!r} exceeds its declared bound {self.bound}")
        return out

    def combine(self, a, other, b):
        """The transform ``a * self + b * other``."""
        cut = None
        if self.cutoff is not None and other.cutoff is not None:
            cut = max(self.cutoff, other.cutoff)
        return PsiFunction.custom(
            lambda y: a * self(y) + b * other(y),
            abs(a) * self.bound + abs(b) * other.bound,
            cut,
            f"{a:g}*{self.label}+{b:g}*{other.label}",
        )

    @property
    def is_zero(self):
        return self.bound == 0.0


@dataclass(frozen=True)
class Region:
    """Product of compact intervals ``C_l = [a_l, c_l]`` plus a margin ``alpha``."""

    intervals: tuple
    alpha: float = 0.1

    def __post_init__(self):
        ivs = tuple((float(a), float(c)) for a, c in self.intervals)
        for a, c in ivs:
            if not a < c:
                raise ValidationError(f"interval [{a}, {c}] must have a < c")
        if not self.alpha > 0:
            raise ValidationError("alpha must be > 0")
        object.__setattr__(self, "intervals", ivs)

    @property
    def d(self):
        return len(self.intervals)


def _m1(x):
    return 0.5 * np.cos(x) ** 2


def _m2(x):
    return 0.5 * np.sin(x) ** 2


@dataclass(frozen=True)
class SimulationModel:
    """Additive censored-response simulation design.

    ``X`` is uniform on ``(cov_low, cov_high)^d`` with ``d = len(components)``,
    ``p(x) = sum_l m_l(x_l)`` must stay in ``(0, 1)``, ``Y`` is uniform on
    ``(threshold - p, threshold - p + width)`` and ``C`` is uniform on
    ``(0, censor_max)``; ``censor_max = inf`` switches censoring off.
    """

    components: tuple = (_m1, _m2)
    psi: PsiFunction = field(default_factory=lambda: PsiFunction.indicator(0.9))
    threshold: float = 0.9
    width: float = 1.0
    censor_max: float = 1.0
    cov_low: float = -1.0
    cov_high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise ValidationError("at least one component is required")
        if not self.cov_low < self.cov_high:
            raise ValidationError("covariate support must satisfy low < high")
        if not (self.width > 0 and self.censor_max > 0):
            raise ValidationError("width and censor_max must be positive")
        lo, hi = self.p_range()
        if not (0.0 < lo and hi < 1.0):
            raise ValidationError(
                f"p(x) must lie in (0, 1) on the covariate support; found [{lo}, {hi}]"
            )

    @property
    def d(self):
        return len(self.components)

    def p(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return sum(m(x[:, j]) for j, m in enumerate(self.components))

    def p_range(self, resolution=None):
        """Range of ``p`` over the covariate box, each component scanned separately."""
        resolution = resolution or 4001
        grid = np.linspace(self.cov_low, self.cov_high, resolution)
        lows = [float(np.min(m(grid))) for m in self.components]
        highs = [float(np.max(m(grid))) for m in self.components]
        return sum(lows), sum(highs)


def two_covariate_model(seed=0, psi=None, **overrides):
    """Default :class:`SimulationModel`: ``p = 0.5 cos^2 x1 + 0.5 sin^2 x2``, ``psi = 1{y <= 0.9}``.

    ``psi`` and any model field can be overridden.
    """
    kw = dict(seed=seed)
    if psi is not None:
        kw["psi"] = psi
    kw.update(overrides)
    return SimulationModel(**kw)


class SimulationTruth:
    """Closed-form and quadrature ground truth for a :class:`SimulationModel`."""

    def __init__(self, model, rule=None):
        self.model = model
        self.rule = rule or QuadratureRule.gauss_legendre(64)

    @property
    def d(self):
        return self.model.d

    @property
    def psi(self):
        return self.model.psi

    def with_psi(self, psi):
        m = self.model
        return SimulationTruth(
            SimulationModel(
                m.components, psi, m.threshold, m.width, m.censor_max,
                m.cov_low, m.cov_high, m.seed,
            ),
            self.rule,
        )

    # laws -------------------------------------------------------------
    def G(self, t):
        """Survival function of the censoring time."""
        t = np.asarray(t, dtype=float)
        if math.isinf(self.model.censor_max):
            return np.ones_like(t)
        return np.clip(1.0 - t / self.model.censor_max, 0.0, 1.0)

    def f(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = self.model
        inside = ((x >= m.cov_low) & (x <= m.cov_high)).all(axis=1)
        return np.where(inside, (m.cov_high - m.cov_low) ** -m.d, 0.0)

    def f_marginal(self, ell, t):
        m = self.model
        t = np.asarray(t, dtype=float)
        inside = (t >= m.cov_low) & (t <= m.cov_high)
        return np.where(inside, 1.0 / (m.cov_high - m.cov_low), 0.0)

    @property
    def support(self):
        return [(self.model.cov_low, self.model.cov_high)] * self.d

    # metadata ----------------------------------------------------------
    @cached_property
    def T_G(self):
        return float(self.model.censor_max)

    @cached_property
    def T_F(self):
        m = self.model
        return m.threshold - m.p_range()[0] + m.width

    @property
    def T_H(self):
        return min(self.T_F, self.T_G)

    @property
    def omega0(self):
        return self.psi.cutoff

    # regression truth ------------------------------------------------
    def conditional_expectation(self, func, x, upper=None):
        """``E(func(Y) | X = x)`` by Gauss-Legendre over the response law.

        The integral is truncated at ``upper`` (where ``func`` is known to
        vanish above it); ``func`` must be smooth on the remaining range.
        """
        m = self.model
        lo = m.threshold - m.p(x)
        hi = lo + m.width
        top = hi if upper is None else np.minimum(hi, upper)
        top = np.maximum(top, lo)
        half = 0.5 * (top - lo)
        mid = 0.5 * (top + lo)
        y = mid[:, None] + half[:, None] * self.rule.nodes[None, :]
        return (func(y) @ self.rule.weights) * half / m.width

    def m_psi(self, x):
        """``E(psi(Y) | X = x)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._indicator_at_threshold:
            return self.model.p(x)
        return self.conditional_expectation(self.psi, x, self.psi.cutoff)

    @property
    def _indicator_at_threshold(self):
        m = self.model
        return self.psi.kind == "indicator" and self.psi.cutoff == m.threshold and m.width >= 1.0

    @property
    def components(self):
        """Additive components of ``m_psi`` when it is additive, else ``None``."""
        if self._indicator_at_threshold:
            return self.model.components
        return None

    @property
    def constant(self):
        return 0.0

    def component_mean(self, ell, q):
        """``int m_l(u) q_l(u) du`` by adaptive quadrature (abs tol 1e-10)."""
        comps = self.components
        if comps is None:
            raise ValueError("m_psi is not additive for this psi")
        lo, hi = q.support
        val, _ = integrate.quad(
            lambda u: float(comps[ell](np.asarray(u))) * float(q(np.asarray(u))),
            lo, hi, epsabs=1e-10, epsrel=1e-12, limit=200,
        )
        return val

    def H_psi(self, x):
        """``E(psi(Y)^2 / G(Y) | X = x)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        psi = self.psi
        if psi.is_zero:
            return np.zeros(len(x))
        upper = psi.cutoff
        T_G = self.T_G
        m = self.model
        hi = m.threshold - m.p(x) + m.width
        reach = hi if upper is None else np.minimum(hi, upper)
        if np.any(reach >= T_G):
            if upper is None:
                probe = np.linspace(T_G, float(np.max(hi)), 257)
                if probe.size and np.any(psi(probe) != 0):
                    raise DivergenceError(f"G vanishes at t={T_G:g} where psi is nonzero")
                upper = T_G
            else:
                raise DivergenceError(f"G vanishes at t={T_G:g} inside the support of psi")
        return self.conditional_expectation(lambda y: psi(y) ** 2 / self.G(y), x, upper)

    def expected_psi(self):
        """``E psi(Y)`` by tensor quadrature over the covariate law."""
        from .kernels import tensor_quadrature

        return tensor_quadrature(
            lambda u: self.m_psi(u) * self.f(u), self.support, self.rule
        )


def generate_simulation(model, n, replication=0):
    """Draw ``n`` observations; returns ``(sample, truth)``.

    Draw order is X, then Y, then C from the substream
    ``seed ^ replication``, so results are bitwise reproducible.
    """
    n = int(n)
    if n < 1:
        raise ValidationError("n >= 1 required")
    rng = substream(model.seed, replication)
    x = rng.uniform(model.cov_low, model.cov_high, size=(n, model.d))
    y = model.threshold - model.p(x) + model.width * rng.uniform(size=n)
    if math.isinf(model.censor_max):
        c = np.full(n, np.inf)
    else:
        c = model.censor_max * rng.uniform(size=n)
    z = np.minimum(y, c)
    delta = (y <= c).astype(np.int8)
    return CensoredSample(z, delta, x), SimulationTruth(model)


def empirical_censoring_rate(sample):
    """Fraction of uncensored observations, ``mean(delta)``."""
    return float(np.mean(sample.delta))


def load_csv(path, d=None):
    """Read a ``z,delta,x1,...,xd`` file into a :class:`CensoredSample`."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        n_cov = len(header) - 2
        if d is None:
            d = n_cov
        expected = ["z", "delta"] + [f"x{j}" for j in range(1, d + 1)]
        if header != expected:
            raise SchemaError(f"{path}: expected columns {','.join(expected)}, got {','.join(header)}")
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected):
                raise SchemaError(f"{path}: row {i} has {len(row)} fields, expected {len(expected)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ValidationError("non-numeric cell", row=i) from None
    if not rows:
        raise ValidationError("n >= 1 required")
    data = np.asarray(rows)
    return CensoredSample(data[:, 0], data[:, 1], data[:, 2:])


def write_csv(sample, path):
    path = Path(path)
    header = ["z", "delta"] + [f"x{j}" for j in range(1, sample.d + 1)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for z, dl, x in zip(sample.z, sample.delta, sample.x):
            w.writerow([format_float(z), int(dl)] + [format_float(v) for v in x])
    return path
