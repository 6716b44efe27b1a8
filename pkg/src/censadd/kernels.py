"""Compactly supported smoothing kernels and Gauss-Legendre quadrature.

Every kernel shipped here lives on ``[-1, 1]``. Quadrature is fixed-order
Gauss-Legendre, optionally composite (``panels`` equal sub-intervals per
axis); integrands with kinks should be split at the kinks by the caller,
which is what :func:`convolve_with_density` does for kernel supports.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureError

__all__ = [
    "QuadratureRule",
    "Kernel",
    "KERNELS",
    "get_kernel",
    "kernel_moment",
    "verify_order",
    "OrderReport",
    "l2_norm_sq",
    "tensor_quadrature",
    "product_moment",
    "verify_product_order",
    "convolve_with_density",
    "DEFAULT_NODES",
    "MAX_TENSOR_DIM",
]

DEFAULT_NODES = 64
MAX_TENSOR_DIM = 4


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on ``[-1, 1]``.

    A rule with ``m`` nodes integrates polynomials of degree ``2m - 1``
    exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, m=DEFAULT_NODES):
        if m < 1:
            raise QuadratureError("a quadrature rule needs at least one node")
        x, w = leggauss(int(m))
        x.setflags(write=False)
        w.setflags(write=False)
        return cls(x, w)

    @property
    def size(self):
        return len(self.nodes)

    @property
    def degree(self):
        """Highest polynomial degree integrated exactly."""
        return 2 * self.size - 1

    def points(self, a, b, panels=1):
        """Nodes and weights mapped onto ``[a, b]`` split into ``panels`` pieces."""
        edges = np.linspace(a, b, int(panels) + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        x = (mid[:, None] + half[:, None] * self.nodes[None, :]).ravel()
        w = (half[:, None] * self.weights[None, :]).ravel()
        return x, w

    def integrate(self, f, a, b, panels=1):
        x, w = self.points(a, b, panels)
        return float(np.dot(w, f(x)))


_DEFAULT_RULE = QuadratureRule.gauss_legendre(DEFAULT_NODES)


def _rule(rule):
    return _DEFAULT_RULE if rule is None else rule


@dataclass(frozen=True)
class Kernel:
    """A univariate kernel with compact support.

    Parameters
    ----------
    name : str
        Registry name.
    profile : callable
        Vectorised formula valid on the support; it is masked to zero
        outside, so it need not vanish there itself.
    order : int
        Declared order: moments ``1 .. order - 1`` vanish.
    support : tuple of float
        Closed support interval.
    """

    name: str
    profile: object = field(repr=False)
    order: int
    support: tuple = (-1.0, 1.0)

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise ValueError(f"kernel {self.name!r}: empty support {self.support}")
        mass = _DEFAULT_RULE.integrate(self.profile, lo, hi)
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"kernel {self.name!r} integrates to {mass!r}, not 1")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (u >= lo) & (u <= hi)
        return np.where(inside, self.profile(np.where(inside, u, 0.0)), 0.0)

    def scaled(self, u, h):
        """``K(u / h) / h``."""
        return self(np.asarray(u, dtype=float) / h) / h

    @cached_property
    def total_variation(self):
        lo, hi = self.support
        grid = np.linspace(lo, hi, 20001)
        vals = self.profile(grid)
        # jumps from 0 at both ends of the support are part of the variation
        return float(np.abs(np.diff(vals)).sum() + abs(vals[0]) + abs(vals[-1]))

    @cached_property
    def sup_norm(self):
        lo, hi = self.support
        return float(np.abs(self.profile(np.linspace(lo, hi, 20001))).max())


KERNELS = {
    "epanechnikov": Kernel("epanechnikov", lambda u: 0.75 * (1.0 - u**2), order=2),
    "uniform": Kernel("uniform", lambda u: np.full_like(u, 0.5), order=2),
    "biweight": Kernel("biweight", lambda u: 0.9375 * (1.0 - u**2) ** 2, order=2),
    "poly4": Kernel(
        "poly4", lambda u: 15.0 / 32.0 * (3.0 - 10.0 * u**2 + 7.0 * u**4), order=4
    ),
}


def get_kernel(name):
    if isinstance(name, Kernel):
        return name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; choose one of {sorted(KERNELS)}"
        ) from None


def kernel_moment(k, j, rule=None):
    """``int u**j k(u) du`` over the kernel support."""
    lo, hi = k.support
    return _rule(rule).integrate(lambda u: u**j * k.profile(u), lo, hi)


@dataclass(frozen=True)
class OrderReport:
    ok: bool
    gamma: int
    moments: dict
    abs_moment_gamma: float

    def __bool__(self):
        return self.ok


def verify_order(k, gamma, tol=1e-10, rule=None):
    """Check that moments ``1 .. gamma - 1`` of ``k`` vanish to ``tol``.

    Returns an :class:`OrderReport`, truthy iff the kernel has order
    ``gamma`` (the absolute ``gamma``-th moment must also be finite).
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    moments = {j: kernel_moment(k, j, rule) for j in range(0, gamma + 1)}
    lo, hi = k.support
    abs_gamma = _rule(rule).integrate(
        lambda u: np.abs(u**gamma * k.profile(u)), lo, hi, panels=2
    )
    ok = all(abs(moments[j]) <= tol for j in range(1, gamma)) and np.isfinite(abs_gamma)
    return OrderReport(bool(ok), gamma, moments, abs_gamma)


def l2_norm_sq(k, rule=None):
    """``int k(u)**2 du``."""
    lo, hi = k.support
    return _rule(rule).integrate(lambda u: k.profile(u) ** 2, lo, hi)


def tensor_quadrature(f, box, rule=None, panels=1):
    """Tensor-product Gauss-Legendre integral of ``f`` over a box.

    Parameters
    ----------
    f : callable
        Maps an ``(m, d)`` array of points to ``m`` values.
    box : sequence of (float, float)
        Integration interval per axis.
    rule : QuadratureRule, optional
        Defaults to 64-node Gauss-Legendre.
    panels : int or sequence of int
        Composite sub-intervals per axis.
    """
    box = [tuple(map(float, b)) for b in box]
    d = len(box)
    if d == 0:
        raise QuadratureError("empty integration box")
    if d > MAX_TENSOR_DIM:
        raise QuadratureError(
            f"tensor quadrature limited to {MAX_TENSOR_DIM} dimensions, got {d}"
        )
    rule = _rule(rule)
    if np.ndim(panels) == 0:
        panels = [int(panels)] * d
    axes = [rule.points(a, b, p) for (a, b), p in zip(box, panels)]
    if d == 1:
        x, w = axes[0]
        return float(np.dot(w, f(x[:, None])))
    # the trailing axes form one block, looped over the leading axis nodes
    rest_x = np.stack(np.meshgrid(*[a[0] for a in axes[1:]], indexing="ij"), -1)
    rest_x = rest_x.reshape(-1, d - 1)
    rest_w = np.prod(
        np.stack(np.meshgrid(*[a[1] for a in axes[1:]], indexing="ij"), -1), axis=-1
    ).ravel()
    total = 0.0
    pts = np.empty((len(rest_x), d))
    pts[:, 1:] = rest_x
    for x0, w0 in zip(*axes[0]):
        pts[:, 0] = x0
        total += w0 * float(np.dot(rest_w, f(pts)))
    return total


def product_moment(kernels, powers, rule=None):
    """Mixed moment of the product kernel ``prod_l K_l`` by tensor quadrature."""
    box = [k.support for k in kernels]

    def integrand(u):
        out = np.ones(len(u))
        for col, (k, j) in enumerate(zip(kernels, powers)):
            out *= u[:, col] ** j * k(u[:, col])
        return out

    return tensor_quadrature(integrand, box, rule)


def verify_product_order(kernels, s, tol=1e-10, rule=None):
    """Every mixed moment of total degree ``1 .. s - 1`` of the product kernel vanishes.

    Returns ``(ok, moments)`` with ``moments`` keyed by multi-index.
    """
    d = len(kernels)
    moments = {}
    for powers in product(range(s), repeat=d):
        if 1 <= sum(powers) <= s - 1:
            moments[powers] = product_moment(kernels, powers, rule)
    ok = all(abs(v) <= tol for v in moments.values())
    return ok, moments


def convolve_with_density(kernel, h, centers, density, support, rule=None):
    """``int K((u - c) / h) / h * q(u) du`` for every center ``c``.

    The integral runs over the intersection of the kernel window around
    ``c`` with ``support``, so a polynomial kernel times a polynomial
    density is integrated exactly.
    """
    rule = _rule(rule)
    centers = np.asarray(centers, dtype=float)
    klo, khi = kernel.support
    lo = np.maximum(support[0], centers + h * klo)
    hi = np.minimum(support[1], centers + h * khi)
    width = np.clip(hi - lo, 0.0, None)
    half = 0.5 * width
    mid = 0.5 * (lo + hi)
    u = mid[:, None] + half[:, None] * rule.nodes[None, :]
    vals = kernel.scaled(u - centers[:, None], h) * density(u)
    return (vals @ rule.weights) * half
