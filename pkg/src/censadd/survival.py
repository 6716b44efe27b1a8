"""Kaplan-Meier estimation of the censoring survival function."""

from dataclasses import dataclass

import numpy as np

__all__ = ["SurvivalCurve", "km_censoring_survival", "eval_survival"]


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Right-continuous, nonincreasing step function equal to 1 before the first jump.

    Parameters
    ----------
    jump_times : ndarray
        Strictly increasing jump locations.
    values : ndarray
        Value on ``[jump_times[k], jump_times[k + 1])``.
    """

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.jump_times, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float).reshape(-1)
        if t.shape != v.shape:
            raise ValueError("jump_times and values must have the same length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if np.any((v < 0) | (v > 1)) or np.any(np.diff(v) > 0):
            raise ValueError("values must be nonincreasing and inside [0, 1]")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return eval_survival(self, t)

    @property
    def first_zero(self):
        """Smallest time where the curve reaches 0, or ``inf``."""
        hit = np.flatnonzero(self.values <= 0.0)
        return float(self.jump_times[hit[0]]) if hit.size else np.inf

    def inverse_integral(self, z):
        """``int_0^z dt / S(t)``, exact for the step function (``inf`` past a zero)."""
        z = np.asarray(z, dtype=float)
        positive = self.jump_times > 0
        knots = np.concatenate(([0.0], self.jump_times[positive]))
        vals = np.concatenate(([eval_survival(self, 0.0)], self.values[positive]))
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / vals
            cum = np.concatenate(([0.0], np.cumsum(np.diff(knots) * inv[:-1])))
            k = np.clip(np.searchsorted(knots, z, side="right") - 1, 0, None)
            gap = z - knots[k]
            tail = np.where(gap > 0, gap * inv[k], 0.0)
        return np.where(z <= 0, 0.0, cum[k] + tail)


def eval_survival(curve, t):
    """Right-continuous evaluation ``S(t)``."""
    t = np.asarray(t, dtype=float)
    padded = np.concatenate(([1.0], curve.values))
    out = padded[np.searchsorted(curve.jump_times, t, side="right")]
    return float(out) if out.ndim == 0 else out


def km_censoring_survival(sample):
    """Product-limit estimate of ``G(t) = P(C > t)``.

    Censored responses (``delta = 0``) are the events of ``C``. At tied
    times uncensored observations are ordered before censored ones, so
    they leave the risk set first.
    """
    z = np.asarray(sample.z, dtype=float)
    delta = np.asarray(sample.delta)
    n = len(z)
    order = np.lexsort((1 - delta, z))
    zs = z[order]
    cens = delta[order] == 0
    if not cens.any():
        return SurvivalCurve(np.empty(0), np.empty(0))
    pos = np.flatnonzero(cens)
    times = zs[pos]
    # group tied censoring times; the risk set at a group is everything from its first member on
    first = np.concatenate(([True], times[1:] != times[:-1]))
    starts = pos[first]
    counts = np.diff(np.append(np.flatnonzero(first), len(pos)))
    at_risk = n - starts
    surv = np.cumprod((at_risk - counts) / at_risk)
    return SurvivalCurve(times[first], surv)
