"""Static checks of bandwidth and censoring-moment conditions for power-law schedules.

With ``h_n = c0 n^-a0`` (density) and ``h_l = c_l n^-a_l`` (axes) every
condition reduces to a sign check on an exponent. Exponents are compared
as exact rationals built from their decimal representation, so borderline
cases such as ``1 - 0.2 - 4 * 0.2 = 0`` are decided exactly.
"""

from dataclasses import dataclass
from fractions import Fraction

from .errors import ValidationError

__all__ = ["PowerLawSpec", "ConditionResult", "ConditionReport", "check_power_law"]


def _exact(x):
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class PowerLawSpec:
    """Exponents of a power-law bandwidth schedule.

    Parameters
    ----------
    a0 : float
        Density bandwidth exponent.
    a : tuple of float
        One exponent per regression axis.
    d : int
        Covariate dimension.
    s : int
        Kernel order.
    p : float
        Censoring moment parameter in ``(0, 1/2]``.
    """

    a0: float
    a: tuple
    d: int
    s: int = 2
    p: float = 0.5

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        object.__setattr__(self, "a", a)
        if self.d < 2:
            raise ValidationError("d >= 2 required")
        if len(a) != self.d:
            raise ValidationError(f"need {self.d} axis exponents, got {len(a)}")
        if self.a0 <= 0 or any(v <= 0 for v in a):
            raise ValidationError("exponents must be > 0")
        if self.s < 1:
            raise ValidationError("kernel order s >= 1 required")
        if not 0 < self.p <= 0.5:
            raise ValidationError("p must lie in (0, 1/2]")


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: object  # True, False or "assumed"
    inequality: str
    reason: str

    @property
    def verdict(self):
        if self.passed == "assumed":
            return "assumed"
        return "pass" if self.passed else "fail"


@dataclass(frozen=True)
class ConditionReport:
    spec: PowerLawSpec
    results: tuple

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def ok(self):
        return all(r.passed is True or r.passed == "assumed" for r in self.results)

    def verdicts(self):
        return {r.name: r.verdict for r in self.results}

    def table(self):
        width = max(len(r.inequality) for r in self.results)
        lines = [f"{'condition':<10} {'verdict':<8} {'inequality':<{width}}  reason"]
        for r in self.results:
            lines.append(f"{r.name:<10} {r.verdict:<8} {r.inequality:<{width}}  {r.reason}")
        return "\n".join(lines)


def _fmt(x):
    return format(float(x), "g")


def check_power_law(spec):
    """Evaluate H.1-H.5, A(ii)(c) and list A(ii)(a) as assumed.

    Strict inequalities fail at equality, except A(ii)(c) where the
    ``|log h|`` factor still diverges at exponent zero.
    """
    a0 = _exact(spec.a0)
    a = [_exact(v) for v in spec.a]
    d, s, p = spec.d, spec.s, _exact(spec.p)
    amin = min(a)
    out = []

    lhs = d * a0
    ok = lhs < 1
    out.append(ConditionResult(
        "H.1", ok, f"d*a0 = {_fmt(lhs)} < 1",
        "n h^d / log n diverges" if ok else "n h^d does not outgrow log n",
    ))
    ok = all(v < 1 for v in a)
    out.append(ConditionResult(
        "H.2", ok, f"max a_l = {_fmt(max(a))} < 1",
        "n h_l / log n diverges on every axis" if ok else "some axis bandwidth shrinks too fast",
    ))
    worst = max(1 - v - 2 * s * amin for v in a)
    ok = worst < 0
    reason = "squared bias vanishes faster than the variance"
    if worst == 0:
        reason = "exponent 0: the ratio decays only like 1/log n, treated as failing"
    elif not ok:
        reason = "squared bias dominates the variance"
    out.append(ConditionResult(
        "H.3", ok, f"max_l 1 - a_l - 2s*min a = {_fmt(worst)} < 0", reason,
    ))
    gap = min(v - d * a0 for v in a)
    ok = gap > 0
    reason = "density bandwidth negligible against every axis bandwidth"
    if gap == 0:
        reason = "equality: the log ratio tends to a nonzero constant"
    elif not ok:
        reason = "density bandwidth not negligible"
    out.append(ConditionResult("H.4", ok, f"min_l a_l - d*a0 = {_fmt(gap)} > 0", reason))
    out.append(ConditionResult(
        "H.5", True, "power law", "log(1/h)/log log n diverges for every power law",
    ))
    worst = min(2 * p - 1 + v for v in a)
    ok = worst >= 0
    reason = "polynomial factor diverges"
    if worst == 0:
        reason = "exponent 0: the |log h| factor still diverges"
    elif not ok:
        reason = "n^(2p-1) / h_l decays polynomially"
    out.append(ConditionResult("A(ii)(c)", ok, f"min_l 2p - 1 + a_l = {_fmt(worst)} >= 0", reason))
    out.append(ConditionResult(
        "A(ii)(a)", "assumed", "censoring moment integral finite",
        "distribution-level condition, not checkable from exponents",
    ))
    return ConditionReport(spec, tuple(out))
