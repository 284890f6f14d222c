"""Dynamical critical percolation: estimators built on the compiled kernels.

Every bit carries a rate-``r`` exponential clock and resamples to a fair
bit when it rings, so bits flip at rate ``r/2`` and the product
Bernoulli(1/2) measure is stationary.  Crossing runs use ``r = 1/Piv(n)``
(time measured in units of ``Piv(n)`` rings per bit); ball runs use
unit-rate clocks.

Replica ``i`` of a run with master seed ``s`` is seeded by
``SeedSequence(s, spawn_key=(i,))``, so results do not depend on the order
in which replicas are processed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..seeding import replica_seeds
from ..spectral import DecorrelationCurve
from ..stats import LineFit, loglinear_fit, loglog_fit, mean_ci, proportion_ci
from . import _kernels as K
from .lattice import KINDS, BallGeometry, CrossingGeometry, ball_geometry, crossing_geometry

#: Minimum number of surviving replicas for a conditional comparison.
MIN_SURVIVORS = 100


@dataclass(frozen=True)
class LatticeSpec:
    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown lattice kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 2:
            raise ValueError("lattice size must be at least 2")

    def geometry(self) -> CrossingGeometry:
        return _geometry(self.kind, self.n)


_GEOMETRY_CACHE: dict[tuple[str, int], CrossingGeometry] = {}


def _geometry(kind: str, n: int) -> CrossingGeometry:
    key = (kind, n)
    if key not in _GEOMETRY_CACHE:
        _GEOMETRY_CACHE[key] = crossing_geometry(kind, n)
    return _GEOMETRY_CACHE[key]


def _seeds(seed: int, replicas: int) -> np.ndarray:
    if replicas < 1:
        raise ValueError("need at least one replica")
    return replica_seeds(seed, replicas).astype(np.uint32)


# ---------------------------------------------------------------------------
# static configurations


@dataclass(eq=False)
class DynLattice:
    """A configuration on a crossing geometry with from-scratch connectivity queries."""

    spec: LatticeSpec
    bits: np.ndarray

    @property
    def geometry(self) -> CrossingGeometry:
        return self.spec.geometry()

    def has_crossing(self) -> bool:
        return bool(K.has_crossing(*self.geometry.primal.arrays(), self.bits))

    def count_pivotal(self) -> int:
        g = self.geometry
        return int(K.count_pivotal(*g.primal.arrays(), *g.dual.arrays(), self.bits))

    def open_fraction(self) -> float:
        return float(self.bits.mean())


def sample_critical(spec: LatticeSpec, seed: int) -> DynLattice:
    """Fair bits drawn from ``RandomState(seed)``-compatible uniforms."""
    return DynLattice(spec, K.random_bits(np.uint32(seed), spec.geometry().n_bits))


def lattice_from_bits(spec: LatticeSpec, bits) -> DynLattice:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (spec.geometry().n_bits,):
        raise ValueError("bit array has the wrong length for this lattice")
    return DynLattice(spec, bits.copy())


@dataclass(frozen=True)
class PivEstimate:
    mean: float
    half_width: float
    crossing: float
    crossing_half_width: float
    replicas: int
    seed: int


def estimate_piv(spec: LatticeSpec, replicas: int, seed: int) -> PivEstimate:
    """Mean pivotal count (and crossing frequency) over independent fair samples."""
    g = spec.geometry()
    piv, cross = K.piv_batch(*g.primal.arrays(), *g.dual.arrays(), g.n_bits, _seeds(seed, replicas))
    m, hw = mean_ci(piv)
    c, chw = proportion_ci(int(cross.sum()), replicas)
    return PivEstimate(m, hw, c, chw, replicas, seed)


def exact_piv(spec: LatticeSpec, max_bits: int = 22) -> tuple[float, float]:
    """``(E[pivotal count], P[crossing])`` by enumerating every configuration."""
    g = spec.geometry()
    if g.n_bits > max_bits:
        raise ValueError(f"{g.n_bits} bits is too many to enumerate")
    total, crossing = K.piv_exhaustive(*g.primal.arrays(), *g.dual.arrays(), g.n_bits)
    return total / 2 ** g.n_bits, crossing / 2 ** g.n_bits


# ---------------------------------------------------------------------------
# crossing dynamics


@dataclass(eq=False)
class CrossingRun:
    """Per-replica records of one crossing simulation."""

    spec: LatticeSpec
    rate: float
    grid: np.ndarray
    t_max: float
    seed: int
    status: np.ndarray  # crossing at each grid time
    density: np.ndarray  # open fraction at each grid time
    cluster: np.ndarray | None  # largest open cluster at each grid time
    exit_times: np.ndarray | None  # first time the crossing fails (inf if never)
    changes: np.ndarray | None  # crossing status changes in [0, t_max]

    @property
    def replicas(self) -> int:
        return self.status.shape[0]


def simulate_crossing(spec: LatticeSpec, grid, replicas: int, seed: int, rate: float | None = None,
                      piv: float | None = None, track: bool = True, record_cluster: bool = False,
                      t_max: float | None = None) -> CrossingRun:
    """Run ``replicas`` independent stationary trajectories.

    ``rate`` defaults to ``1/piv``.  With ``track`` the crossing status is
    maintained exactly at every flip, which yields exit times and status
    change counts; otherwise it is only evaluated at ``grid``.
    """
    grid = np.asarray(sorted(set(float(x) for x in grid)), dtype=float)
    if grid.size == 0 or grid[0] < 0:
        raise ValueError("grid must be nonempty and nonnegative")
    t_max = float(grid[-1]) if t_max is None else float(t_max)
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if rate is None:
        if piv is None or piv <= 0:
            raise ValueError("give either a clock rate or a positive pivotal count")
        rate = 1.0 / piv
    if rate < 0:
        raise ValueError("clock rate must be nonnegative")
    g = spec.geometry()
    status, density, cluster, exits, changes = K.crossing_batch(
        *g.primal.arrays(), *g.primal.bit_arrays(), *g.dual.arrays(), *g.dual.bit_arrays(),
        g.n_bits, float(rate), grid, t_max, _seeds(seed, replicas), track, record_cluster)
    return CrossingRun(spec, float(rate), grid, t_max, seed, status, density,
                       cluster if record_cluster else None,
                       exits if track else None, changes if track else None)


@dataclass
class SurvivalEstimate:
    t: np.ndarray
    survival: np.ndarray
    ci: np.ndarray
    replicas: int
    seed: int

    def to_csv(self, path) -> None:
        _write_csv(path, ("t", "survival", "ci"), zip(self.t, self.survival, self.ci))


def survival_curve(run: CrossingRun, t=None) -> SurvivalEstimate:
    """``P[crossing throughout [0, t]]`` from the exact exit times."""
    if run.exit_times is None:
        raise ValueError("survival needs a tracked run")
    t = run.grid if t is None else np.asarray(t, dtype=float)
    if np.any(t > run.t_max):
        raise ValueError("survival requested beyond the simulated horizon")
    surv, ci = [], []
    for s in t:
        p, hw = proportion_ci(int((run.exit_times > s).sum()), run.replicas)
        surv.append(p)
        ci.append(hw)
    return SurvivalEstimate(t, np.array(surv), np.array(ci), run.replicas, run.seed)


def simulate_survival(spec: LatticeSpec, t_max: float, t_grid, replicas: int, seed: int,
                      piv: float | None = None, piv_replicas: int = 4000) -> SurvivalEstimate:
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if piv is None:
        piv = estimate_piv(spec, piv_replicas, seed).mean
    run = simulate_crossing(spec, t_grid, replicas, seed, piv=piv, t_max=t_max)
    return survival_curve(run)


def lower_bound_half_units(t: float) -> float:
    """``(1/4)^ceil(2t)``."""
    return 0.25 ** math.ceil(2 * t - 1e-12)


@dataclass(frozen=True)
class HalfUnitStep:
    k: int
    ratio: float
    sigma: float
    survivors: int


def half_unit_ratios(run: CrossingRun, steps: int = 4) -> list[HalfUnitStep]:
    """``P[A((k+1)/2) | A(k/2)]`` for ``k < steps`` with binomial standard errors.

    ``A(s)`` is the event that the crossing holds throughout ``[0, s]``.
    """
    if run.exit_times is None:
        raise ValueError("needs a tracked run")
    out = []
    for k in range(steps):
        if (k + 1) / 2 > run.t_max:
            break
        n = int((run.exit_times > k / 2).sum())
        m = int((run.exit_times > (k + 1) / 2).sum())
        if n == 0:
            out.append(HalfUnitStep(k, math.nan, math.nan, 0))
            continue
        r = m / n
        out.append(HalfUnitStep(k, r, math.sqrt(max(r * (1 - r), 0.0) / n), n))
    return out


def pivotal_flux(run: CrossingRun) -> tuple[float, float]:
    """Crossing status changes per unit time, with a 95% half-width."""
    if run.changes is None:
        raise ValueError("needs a tracked run")
    m, hw = mean_ci(run.changes / run.t_max)
    return m, hw


@dataclass
class DecorrelationEstimate:
    t: np.ndarray
    corr: np.ndarray
    ci: np.ndarray
    p: float
    replicas: int
    seed: int

    def to_csv(self, path) -> None:
        _write_csv(path, ("t", "corr", "ci"), zip(self.t, self.corr, self.ci))

    def upper_curve(self) -> DecorrelationCurve:
        """Step majorant of ``d(s) = corr(s) / (p(1-p))`` from the upper confidence limits.

        Running minima are valid because the true ``d`` is nonincreasing.
        """
        if self.t[0] != 0:
            raise ValueError("the grid must start at t = 0")
        upper = np.minimum.accumulate((self.corr + self.ci) / (self.p * (1 - self.p)))
        upper = np.clip(upper, 0.0, 1.0)
        return DecorrelationCurve(self.p, self.t, upper, "envelope", discrete_time=False)

    def fit(self, lo: float, hi: float) -> LineFit:
        return loglog_fit(self.t, self.corr, (lo, hi))


def estimate_decorrelation(run: CrossingRun, p: float | None = None, max_lag: int | None = None,
                           average_origins: bool = False) -> DecorrelationEstimate:
    """``Cov(1[cross at 0], 1[cross at t])`` on the run grid.

    With ``p`` given (exactly 1/2 on the self-dual geometries) the centring
    uses it; otherwise the pooled crossing frequency is used.  With
    ``average_origins`` the grid must be evenly spaced, and each lag is
    averaged over every pair of grid times at that lag within a replica
    (valid by stationarity); confidence intervals come from the per-replica
    averages, which are independent.
    """
    if run.grid[0] != 0:
        raise ValueError("the grid must start at t = 0")
    x = run.status.astype(float)
    pp = float(x.mean()) if p is None else float(p)
    c = x - pp
    G = x.shape[1]
    lags = G if max_lag is None else min(G, int(max_lag) + 1)
    if average_origins:
        step = np.diff(run.grid)
        if step.size and np.ptp(step) > 1e-9 * max(1.0, step[0]):
            raise ValueError("origin averaging needs an evenly spaced grid")
    corr, ci = [], []
    for j in range(lags):
        if average_origins:
            per = (c[:, : G - j] * c[:, j:]).mean(axis=1)
        else:
            per = c[:, 0] * c[:, j]
        m, hw = mean_ci(per)
        corr.append(m)
        ci.append(hw)
    return DecorrelationEstimate(run.grid[:lags], np.array(corr), np.array(ci), pp,
                                 run.replicas, run.seed)


@dataclass
class Comparison:
    name: str
    conditioned: float
    unconditioned: float
    diff: float
    sigma: float

    @property
    def dominates(self) -> bool:
        return self.diff >= -3 * self.sigma


@dataclass
class FkgReport:
    t: float
    survivors: int
    comparisons: list[Comparison] = field(default_factory=list)
    inconclusive: bool = False

    @property
    def passed(self) -> bool:
        return not self.inconclusive and all(c.dominates for c in self.comparisons)


def _compare(name: str, x: np.ndarray, keep: np.ndarray) -> Comparison:
    a, b = x[keep].astype(float), x.astype(float)
    d = a.mean() - b.mean()
    # d = (1 - share kept) * (mean kept - mean rest), two independent groups
    rest = x[~keep].astype(float)
    frac = rest.size / x.size
    va = a.var(ddof=1) / a.size if a.size > 1 else math.inf
    vr = rest.var(ddof=1) / rest.size if rest.size > 1 else 0.0
    sigma = frac * math.sqrt(va + vr)
    return Comparison(name, float(a.mean()), float(b.mean()), float(d), float(sigma))


def fkg_report(run: CrossingRun, t: float) -> FkgReport:
    """Monotone statistics at time ``t`` among survivors of ``[0, t]`` against all replicas."""
    if run.exit_times is None:
        raise ValueError("needs a tracked run")
    j = int(np.searchsorted(run.grid, t - 1e-12))
    if j >= run.grid.size or abs(run.grid[j] - t) > 1e-9:
        raise ValueError(f"time {t!r} is not on the run grid")
    keep = run.exit_times > t
    n = int(keep.sum())
    rep = FkgReport(float(t), n)
    if n < MIN_SURVIVORS or n == run.replicas:
        rep.inconclusive = True
        return rep
    rep.comparisons.append(_compare("open_density", run.density[:, j], keep))
    if run.cluster is not None:
        rep.comparisons.append(_compare("largest_cluster", run.cluster[:, j], keep))
    return rep


def fkg_domination_test(spec: LatticeSpec, t: float, replicas: int, seed: int,
                        piv: float | None = None) -> FkgReport:
    if piv is None:
        piv = estimate_piv(spec, 4000, seed).mean
    run = simulate_crossing(spec, [0.0, t] if t > 0 else [0.0], replicas, seed, piv=piv,
                            record_cluster=True, t_max=max(t, 1e-9))
    return fkg_report(run, t)


# ---------------------------------------------------------------------------
# first exceptional time in a ball


def guard_lower_bound(kind: str, t: float) -> float:
    """``P[every bit next to the origin stays closed on [0, t]]`` for unit-rate resampling.

    Each bit starts closed with probability 1/2 and every ring resamples it
    closed with probability 1/2, giving ``(1/2) e^{-t/2}`` per bit.
    """
    m = ball_geometry(kind, 1).guard_bits.size
    return (0.5 * math.exp(-t / 2)) ** m


@dataclass
class FetResult:
    kind: str
    radii: np.ndarray
    t_max: float
    seed: int
    times: np.ndarray  # replicas x radii, inf past t_max

    @property
    def replicas(self) -> int:
        return self.times.shape[0]

    def survival(self, t) -> tuple[np.ndarray, np.ndarray]:
        """``P[FET_R > t]`` for each radius (rows) and time (columns), with half-widths."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = np.empty((self.radii.size, t.size))
        ci = np.empty_like(s)
        for i in range(self.radii.size):
            for j, tt in enumerate(t):
                s[i, j], ci[i, j] = proportion_ci(int((self.times[:, i] > tt).sum()), self.replicas)
        return s, ci

    def fit(self, radius: int, lo: float = 1.0, hi: float = 10.0, points: int = 19) -> LineFit:
        """Log-linear fit of the survival of ``FET_radius`` over ``[lo, hi]``."""
        i = int(np.flatnonzero(self.radii == radius)[0])
        t = np.linspace(lo, hi, points)
        s, _ = self.survival(t)
        if np.count_nonzero(s[i] > 0) < 2:
            raise ValueError("degenerate fit: too few surviving replicas")
        return loglinear_fit(t, s[i])

    def monotone_violations(self) -> int:
        """Replicas in which ``FET_R`` decreases with ``R``."""
        return int((self.times[:, 1:] < self.times[:, :-1]).any(axis=1).sum())

    def to_csv(self, path, t) -> None:
        s, ci = self.survival(t)
        rows = [(int(R), tt, s[i, j], ci[i, j]) for i, R in enumerate(self.radii)
                for j, tt in enumerate(np.atleast_1d(t))]
        _write_csv(path, ("R", "t", "survival", "ci"), rows)


def simulate_fet(kind: str, radii, t_max: float, replicas: int, seed: int,
                 rate: float = 1.0) -> FetResult:
    """First time the origin connects to distance ``R``, for every ``R`` in ``radii``.

    All radii are read from one simulation on the largest ball, which
    couples them through shared bits and clocks.
    """
    radii = np.asarray(sorted(set(int(r) for r in radii)), dtype=np.int64)
    if radii.size == 0 or radii[0] < 1:
        raise ValueError("radii must be positive")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    ball: BallGeometry = ball_geometry(kind, int(radii[-1]))
    g = ball.graph
    times = K.fet_batch(*g.arrays(), *g.bit_arrays(), ball.dist, radii, ball.n_bits,
                        float(rate), float(t_max), _seeds(seed, replicas))
    return FetResult(kind, radii, float(t_max), seed, times)


def fetR_monotone_check(kind: str, radii, t_max: float, replicas: int, seed: int) -> int:
    return simulate_fet(kind, radii, t_max, replicas, seed).monotone_violations()


# ---------------------------------------------------------------------------


def _write_csv(path, header, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


__all__ = [
    "CrossingRun",
    "DecorrelationEstimate",
    "DynLattice",
    "FetResult",
    "FkgReport",
    "LatticeSpec",
    "PivEstimate",
    "SurvivalEstimate",
    "estimate_decorrelation",
    "estimate_piv",
    "exact_piv",
    "fetR_monotone_check",
    "fkg_domination_test",
    "fkg_report",
    "guard_lower_bound",
    "half_unit_ratios",
    "lattice_from_bits",
    "lower_bound_half_units",
    "pivotal_flux",
    "sample_critical",
    "simulate_crossing",
    "simulate_fet",
    "simulate_survival",
    "survival_curve",
]
