"""Small statistical helpers: proportions, confidence intervals, log fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

Z95 = 1.959963984540054


def proportion_ci(successes: int, n: int) -> tuple[float, float]:
    """Estimate and 95% normal half-width of a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    p = successes / n
    return p, Z95 * math.sqrt(max(p * (1 - p), 0.0) / n)


def mean_ci(x) -> tuple[float, float]:
    """Sample mean and 95% normal half-width."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if x.size == 1:
        return float(x[0]), math.inf
    return float(x.mean()), Z95 * float(x.std(ddof=1)) / math.sqrt(x.size)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _fit(x, y, window) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points to fit a line")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss if ss > 0 else 1.0
    return LineFit(float(slope), float(intercept), r2, window)


def _select(t, v, window):
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    lo, hi = window if window is not None else (t.min(), t.max())
    keep = (t >= lo) & (t <= hi) & (v > 0) & np.isfinite(v)
    return t[keep], v[keep], (float(lo), float(hi))


def loglog_fit(t, v, window=None) -> LineFit:
    """Fit ``log v = slope * log t + intercept`` over positive values in ``window``."""
    t, v, w = _select(t, v, window)
    keep = t > 0
    return _fit(np.log(t[keep]), np.log(v[keep]), w)


def loglinear_fit(t, v, window=None) -> LineFit:
    """Fit ``log v = slope * t + intercept`` over positive values in ``window``."""
    t, v, w = _select(t, v, window)
    return _fit(t, np.log(v), w)
