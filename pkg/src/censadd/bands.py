"""Variance constants, plug-in scale estimates and simultaneous bands.

The limiting scale of the l-th component is

    sigma_l = sup_{x_l} sqrt( tau^2(x_l) int K_l^2 ),
    tau^2(x_l) = int H(u) q_{-l}(u_{-l})^2 / f(u) du_{-l},   u = (x_l, u_{-l}),

with ``H(u) = E(psi(Y)^2 / G(Y) | X = u)``. Bands are
``eta_hat +- (1 + eps) L_n`` with
``L_n = sqrt(2 |log h| / (n h) * tau2_hat * int K^2)``.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import format_float
from .errors import DegenerateDensityError, ValidationError
from .ipcw import kde
from .kernels import QuadratureRule, get_kernel, l2_norm_sq

__all__ = [
    "ConfidenceBand",
    "H_psi_oracle",
    "tau_sq_oracle",
    "sigma_oracle",
    "sigma_total",
    "tau_hat_plugin",
    "band_halfwidth",
    "component_band",
    "grid_coverage",
    "write_band_csv",
    "TAU_FORMS",
]

TAU_FORMS = ("printed", "consistent")
_ORACLE_FORMS = ("squared", "single", "plugin-limit")


def H_psi_oracle(truth, u):
    """``E(psi(Y)^2 / G(Y) | X = u)`` by quadrature over the conditional law."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    out = truth.H_psi(np.atleast_2d(u))
    return float(out[0]) if single else out


def _other_nodes(q, ell, rule, panels=1):
    """Tensor nodes and weights over the supports of ``q_j``, ``j != ell``."""
    others = [j for j in range(len(q)) if j != ell]
    axes = [rule.points(*q[j].support, panels) for j in others]
    if not axes:
        return others, np.empty((1, 0)), np.ones(1)
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    return others, nodes, weights


def tau_sq_oracle(truth, ell, x_ell, q, form="squared", rule=None, panels=1):
    """Squared local scale ``phi_l(x_l) / f_l(x_l)`` of component ``ell``.

    ``form="squared"`` weights by ``q_{-l}^2`` (the variance of the
    marginal-integration estimator), ``"single"`` by ``q_{-l}`` and
    ``"plugin-limit"`` returns ``int H q_{-l}``, the value the printed
    plug-in estimator converges to.
    """
    if form not in _ORACLE_FORMS:
        raise ValueError(f"form must be one of {_ORACLE_FORMS}")
    rule = rule or QuadratureRule.gauss_legendre(64)
    x_ell = np.atleast_1d(np.asarray(x_ell, dtype=float))
    d = len(q)
    others, nodes, weights = _other_nodes(q, ell, rule, panels)
    qprod = np.ones(len(nodes))
    for col, j in enumerate(others):
        qprod *= q[j](nodes[:, col])
    f_ell = truth.f_marginal(ell, x_ell)
    if np.any(f_ell <= 0):
        raise DegenerateDensityError(f"marginal density of X_{ell + 1} vanishes on the grid")
    out = np.empty(len(x_ell))
    for k, v in enumerate(x_ell):
        pts = np.empty((len(nodes), d))
        pts[:, ell] = v
        pts[:, others] = nodes
        H = truth.H_psi(pts)
        if form == "plugin-limit":
            integrand = H * qprod
        else:
            fu = truth.f(pts)
            power = 2 if form == "squared" else 1
            with np.errstate(divide="ignore", invalid="ignore"):
                integrand = np.where(qprod > 0, H * qprod**power / fu, 0.0)
            if np.any((qprod > 0) & ~(fu > 0)):
                raise DegenerateDensityError("covariate density vanishes inside the q support")
        out[k] = float(np.dot(weights, integrand))
    return out


def sigma_oracle(truth, ell, q, kernel="epanechnikov", interval=None, grid_size=201,
                 form="squared", rule=None):
    """``sigma_{psi,l} = sup_{x_l in C_l} sqrt(tau^2(x_l) int K_l^2)`` on a finite grid.

    ``interval`` is ``C_l`` (defaults to the support of ``q_l``).
    """
    kernel = get_kernel(kernel)
    if interval is None:
        interval = q[ell].support
    grid = np.linspace(interval[0], interval[1], int(grid_size))
    tau2 = tau_sq_oracle(truth, ell, grid, q, form, rule)
    return float(np.sqrt(np.max(tau2) * l2_norm_sq(kernel)))


def sigma_total(truths, q, kernels="epanechnikov", intervals=None, grid_size=201,
                form="squared"):
    """``sum_l max_psi sigma_{psi,l}`` over a finite family of truths (one per psi)."""
    d = len(q)
    if isinstance(kernels, str) or not np.iterable(kernels):
        kernels = [kernels] * d
    intervals = intervals or [None] * d
    return float(
        sum(
            max(sigma_oracle(t, ell, q, kernels[ell], intervals[ell], grid_size, form)
                for t in truths)
            for ell in range(d)
        )
    )


def tau_hat_plugin(estimator, ell, x_ell, q, form="printed", nodes_per_panel=8,
                   panels=None):
    """Plug-in estimate of the squared local scale of component ``ell``.

    ``form="printed"`` is

        1/(n h_l) sum_i delta_i psi^2(Z_i) / G^2(Z_i) K_l((x_l - X_il)/h_l)
            * int prod_{j != l} K_j((x_j - X_ij)/h_j)/h_j / f_hat(x) q_{-l}(x_{-l}) dx_{-l};

    ``form="consistent"`` replaces ``q_{-l} / f_hat`` by ``q_{-l}^2 / f_hat^2``,
    which converges to ``int H q_{-l}^2 / f``. ``f_hat`` follows the
    estimator configuration (kernel estimate or known density), as does G.
    The inner integral uses composite Gauss-Legendre with panels of half
    a bandwidth.
    """
    if form not in TAU_FORMS:
        raise ValueError(f"form must be one of {TAU_FORMS}")
    sample = estimator.sample
    cfg = estimator.config
    d = sample.d
    n = sample.n
    h = estimator.h
    x_ell = np.atleast_1d(np.asarray(x_ell, dtype=float))
    a = np.zeros(n)
    obs = sample.delta == 1
    if obs.any():
        gz = estimator.g(sample.z[obs])
        num = estimator.psi(sample.z[obs]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            a[obs] = np.where(gz > 0, num / np.where(gz > 0, gz, 1.0) ** 2, 0.0)
    k_ell = estimator.kernels[ell]
    kmat = k_ell.scaled(x_ell[:, None] - sample.x[None, :, ell], h[ell])  # (G, n)
    if not np.any(a):
        return np.zeros(len(x_ell))
    others = [j for j in range(d) if j != ell]
    if panels is None:
        panels = [max(1, int(np.ceil((q[j].support[1] - q[j].support[0]) / (0.5 * h[j]))))
                  for j in others]
    elif np.ndim(panels) == 0:
        panels = [int(panels)] * len(others)
    rule = QuadratureRule.gauss_legendre(nodes_per_panel)
    axes = [rule.points(*q[j].support, p) for j, p in zip(others, panels)]
    if axes:
        nodes = np.stack([g.ravel() for g in np.meshgrid(*[ax[0] for ax in axes], indexing="ij")], 1)
        wts = np.prod(
            np.stack([g.ravel() for g in np.meshgrid(*[ax[1] for ax in axes], indexing="ij")], 1), 1
        )
    else:
        nodes, wts = np.empty((1, 0)), np.ones(1)
    qvals = np.ones(len(nodes))
    kprod = np.ones((n, len(nodes)))
    for col, j in enumerate(others):
        qvals *= q[j](nodes[:, col])
        kprod *= estimator.kernels[j].scaled(nodes[None, :, col] - sample.x[:, None, j], h[j])
    power = 1 if form == "printed" else 2
    # density at every (x_l, node) pair
    pts = np.empty((len(x_ell), len(nodes), d))
    pts[:, :, ell] = x_ell[:, None]
    pts[:, :, others] = nodes[None, :, :]
    flat = pts.reshape(-1, d)
    if isinstance(cfg.f, str) and cfg.f == "estimated":
        fhat = kde(sample, flat, cfg.plan, cfg.density_kernel)
    else:
        fhat = np.asarray(cfg.f(flat), dtype=float)
    fhat = fhat.reshape(len(x_ell), len(nodes))
    dead = ~(fhat > 0)
    with np.errstate(divide="ignore"):
        inv = np.where(dead, 0.0, 1.0 / np.where(dead, 1.0, fhat) ** power)
    inner = kprod @ (inv * (wts * qvals**power)[None, :]).T  # (n, G)
    if dead.any():
        reach = (kprod > 0) @ (dead & (qvals > 0)[None, :]).T.astype(float)
        if np.any((a[None, :] * kmat > 0) & (reach.T > 0)):
            raise DegenerateDensityError("density estimate vanishes where the plug-in integrand does not")
    # kmat already carries the 1/h_l factor
    return (kmat * a[None, :] * inner.T).sum(axis=1) / n


def band_halfwidth(tau_sq_hat, n, h, kernel="epanechnikov"):
    """``sqrt(2 |log h| / (n h) * tau_sq_hat) * sqrt(int K^2)``."""
    tau_sq_hat = np.asarray(tau_sq_hat, dtype=float)
    if not 0 < h < 1:
        raise ValidationError(f"bandwidth must lie in (0, 1) for a band, got {h!r}")
    if n <= 0:
        raise ValidationError("n must be positive")
    if np.any(tau_sq_hat < 0):
        raise ValidationError("tau_sq_hat must be nonnegative")
    # sqrt(tau) factored out so that scaling tau by 4 doubles the width exactly
    scale = np.sqrt(2.0 * abs(np.log(h)) / (n * h) * l2_norm_sq(get_kernel(kernel)))
    out = np.sqrt(tau_sq_hat) * scale
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """Simultaneous band ``center +- (1 + epsilon) L`` for one component."""

    ell: int
    grid: np.ndarray
    center: np.ndarray
    base_halfwidth: np.ndarray
    epsilon: float = 0.0
    boundary: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(np.asarray(self.base_halfwidth) < 0):
            raise ValidationError("band half-width must be nonnegative")
        if 1.0 + self.epsilon < 0:
            raise ValidationError("inflation 1 + epsilon must be nonnegative")

    @property
    def halfwidth(self):
        return (1.0 + self.epsilon) * np.asarray(self.base_halfwidth)

    @property
    def lower(self):
        return self.center - self.halfwidth

    @property
    def upper(self):
        return self.center + self.halfwidth

    def inflated(self, epsilon):
        return ConfidenceBand(self.ell, self.grid, self.center, self.base_halfwidth,
                              epsilon, self.boundary)

    def contains(self, values):
        values = np.asarray(values, dtype=float)
        return (self.lower <= values) & (values <= self.upper)


def component_band(fit, ell, estimator, q, epsilon=0.0, tau_form="consistent", tau_sq=None):
    """Band around the fitted component ``ell`` on its grid.

    ``tau_sq`` overrides the plug-in scale (e.g. an oracle value or 0).
    The default plug-in form is the one that converges to ``tau^2``; the
    printed form converges to ``int H q_{-l}``, which is smaller by the
    factor ``f(u_{-l} | x_l) / q_{-l}`` (one half in the two-axis uniform
    design) and gives bands that are too narrow.
    """
    grid = fit.grids[ell]
    if tau_sq is None:
        tau_sq = tau_hat_plugin(estimator, ell, grid, q, form=tau_form)
    tau_sq = np.broadcast_to(np.asarray(tau_sq, dtype=float), grid.shape)
    L = band_halfwidth(tau_sq, estimator.n, float(estimator.h[ell]), estimator.kernels[ell])
    return ConfidenceBand(ell, grid, np.asarray(fit.eta[ell]), np.asarray(L, dtype=float),
                          float(epsilon), fit.boundary[ell])


def grid_coverage(band, truth_values, interval=(-0.9, 0.9)):
    """Fraction of grid points inside ``interval`` where the truth lies in the band."""
    mask = (band.grid >= interval[0] - 1e-12) & (band.grid <= interval[1] + 1e-12)
    if not mask.any():
        raise ValidationError("no grid point inside the coverage interval")
    return float(np.mean(band.contains(truth_values)[mask]))


def write_band_csv(bands, path):
    """``ell,x,eta_hat,halfwidth,lower,upper`` rows, ``ell`` 1-based."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ell", "x", "eta_hat", "halfwidth", "lower", "upper"])
        for band in bands:
            hw, lo, up = band.halfwidth, band.lower, band.upper
            for k, xv in enumerate(band.grid):
                w.writerow([band.ell + 1] + [format_float(v) for v in
                                             (xv, band.center[k], hw[k], lo[k], up[k])])
    return path
