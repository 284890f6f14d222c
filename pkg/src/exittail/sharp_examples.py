"""Example chains where exit tails and decorrelation can be compared in closed form.

The heavy-tailed conductance walk lives on ``{-N..-1} u {1..N}``.  Edges
join ``n`` to ``n+1`` with conductance ``n^-beta`` (mirrored on the
negative side) plus a bridge ``-1 -- 1``; self-loops make the walk lazy.
Staying on the positive side has a polynomial tail, while the indicator of
the positive side decorrelates at a comparable rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .chain_core import ChainError, ConductanceGraph, EventSet, ReversibleChain, from_conductances
from .stats import loglinear_fit, loglog_fit

UNDERFLOW = 1e-300


@dataclass(frozen=True)
class ConductanceWalkSpec:
    """Parameters of the conductance walk.

    ``boundary='fold'`` drops the outward edge at ``+-N`` and adds its
    conductance to the self-loop there.
    """

    beta: float
    N: int
    boundary: str = "fold"

    def __post_init__(self):
        if not 1 < self.beta < 2:
            raise ValueError("beta must lie in (1, 2)")
        if self.N < 4:
            raise ValueError("N must be at least 4")
        if self.boundary != "fold":
            raise ValueError(f"unknown boundary policy {self.boundary!r}")

    def index(self, n: int) -> int:
        """State index of site ``n``: ``-N..-1`` then ``1..N``."""
        if n == 0 or abs(n) > self.N:
            raise ValueError(f"site {n} is not in the walk")
        return n + self.N if n < 0 else self.N + n - 1

    @property
    def sites(self) -> np.ndarray:
        return np.concatenate([np.arange(-self.N, 0), np.arange(1, self.N + 1)])


def _walk_edges(spec: ConductanceWalkSpec) -> list[tuple[int, int, float]]:
    N, b = spec.N, spec.beta
    ix = spec.index
    edges = [(ix(-1), ix(1), 0.5)]
    for n in range(1, N):
        c = n ** -b
        edges.append((ix(n), ix(n + 1), c))
        edges.append((ix(-n), ix(-n - 1), c))
    for s in (1, -1):
        edges.append((ix(s), ix(s), 0.5))
        for n in range(2, N + 1):
            inner = (n - 1) ** -b
            loop = inner + n ** -b  # at n = N this folds the dropped edge into the loop
            edges.append((ix(s * n), ix(s * n), loop))
    return edges


def build_conductance_walk(spec: ConductanceWalkSpec, sparse: bool | None = None) -> ReversibleChain:
    return from_conductances(ConductanceGraph(2 * spec.N, _walk_edges(spec)), sparse)


def positive_side(spec: ConductanceWalkSpec, chain: ReversibleChain) -> EventSet:
    return EventSet.of(chain, spec.sites > 0)


@dataclass(frozen=True)
class ExponentFit:
    window: tuple[float, float]
    slope: float
    residual: float
    target: float
    tolerance: float
    passed: bool
    truncated: bool = False

    def to_dict(self) -> dict:
        return {"slope": self.slope, "target": self.target, "residual": self.residual,
                "window": list(self.window), "pass": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def log_grid(lo: float, hi: float, points: int = 40) -> np.ndarray:
    """Distinct integers spread evenly in ``log t`` over ``[lo, hi]``."""
    return np.unique(np.logspace(math.log10(lo), math.log10(hi), points).astype(np.int64))


def fit_exponent(t, v, target, tol, linear=False, truncated=False) -> ExponentFit:
    fit = (loglinear_fit if linear else loglog_fit)(t, v)
    x = np.asarray(t, float) if linear else np.log(np.asarray(t, float))
    resid = np.log(v) - (fit.slope * x + fit.intercept)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    ok = abs(fit.slope - target) <= tol and not truncated
    return ExponentFit((float(t[0]), float(t[-1])), fit.slope, rms, target, tol, ok, truncated)


@dataclass
class WalkSweep:
    """Exact survival and correlation at every ``t = 0..t_max``."""

    survival: np.ndarray
    corr: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.corr / self.survival


def walk_sweep(chain: ReversibleChain, C: EventSet, t_max: int, correlations: bool = True) -> WalkSweep:
    """Survival in ``C`` and ``Cov(1_C(w_0), 1_C(w_t))`` for ``t = 0..t_max``."""
    idx = np.flatnonzero(C.mask)
    K = chain.K
    Kcc = K[idx][:, idx] if chain.is_sparse else K[np.ix_(idx, idx)]
    pc = chain.pi[idx]
    u = np.ones(idx.size)
    f0 = C.indicator - C.p
    h = f0.copy()
    w = chain.pi * f0
    surv = np.empty(t_max + 1)
    corr = np.full(t_max + 1, np.nan)
    surv[0] = pc.sum()
    if correlations:
        corr[0] = float(w @ h)
    for t in range(1, t_max + 1):
        u = Kcc @ u
        surv[t] = pc @ u
        if correlations:
            h = K @ h
            corr[t] = float(w @ h)
    return WalkSweep(surv, corr)


def survival_exponent(chain: ReversibleChain, C: EventSet, t_grid, target: float = math.nan,
                      tol: float = math.inf) -> ExponentFit:
    """Log-log slope of the exit tail over ``t_grid``.

    Grid points past the first underflow (below ``1e-300``) are dropped and
    the fit is flagged as truncated.
    """
    t_grid = np.asarray(sorted(set(int(x) for x in t_grid)))
    if t_grid.size < 2:
        raise ValueError("an exponent fit needs at least two grid points")
    surv = walk_sweep(chain, C, int(t_grid[-1]), correlations=False).survival[t_grid]
    keep = surv > UNDERFLOW
    truncated = not keep.all()
    if keep.sum() < 2:
        raise ValueError("survival underflows before two grid points")
    return fit_exponent(t_grid[keep], surv[keep], target, tol, truncated=truncated)


@dataclass
class CorrelationSurvival:
    t: int
    corr: float
    survival: float

    @property
    def ratio(self) -> float:
        return self.corr / self.survival

    @property
    def half_bound_holds(self) -> bool:
        return self.corr <= self.survival / 2


def correlation_vs_survival(chain: ReversibleChain, C: EventSet, t: int) -> CorrelationSurvival:
    sw = walk_sweep(chain, C, int(t))
    if sw.survival[-1] <= UNDERFLOW:
        raise ValueError("survival underflows at this horizon")
    return CorrelationSurvival(int(t), float(sw.corr[-1]), float(sw.survival[-1]))


def write_sweep_csv(path, rows) -> None:
    """Rows of ``(beta, N, t, survival, corr)``; the ratio column is derived."""
    with open(path, "w") as fh:
        fh.write("beta,N,t,survival,corr,ratio\n")
        for beta, N, t, s, c in rows:
            fh.write(f"{beta!r},{N},{t},{s:.17g},{c:.17g},{c / s:.17g}\n")


# ---------------------------------------------------------------------------
# parity-balanced variant


def even_sites_graph(spec: ConductanceWalkSpec) -> ConductanceGraph:
    """The conductance walk with self-loops set so every step lands on an even site w.p. 1/2.

    With ``e`` and ``o`` the non-loop conductance from ``v`` to even and odd
    neighbours, the loop is ``o - e`` at even ``v`` and ``e - o`` at odd ``v``.
    A negative solution cannot be repaired by rescaling and raises.
    """
    sites = spec.sites
    edges = [e for e in _walk_edges(spec) if e[0] != e[1]]
    even_w = np.zeros(2 * spec.N)
    odd_w = np.zeros(2 * spec.N)
    for u, v, c in edges:
        for a, b in ((u, v), (v, u)):
            (even_w if sites[b] % 2 == 0 else odd_w)[a] += c
    for v in range(2 * spec.N):
        loop = odd_w[v] - even_w[v] if sites[v] % 2 == 0 else even_w[v] - odd_w[v]
        if loop < 0:
            raise ChainError(f"no nonnegative self-loop balances parity at site {int(sites[v])}")
        edges.append((v, v, float(loop)))
    return ConductanceGraph(2 * spec.N, edges)


@dataclass
class EvenSitesReport:
    p: float
    parity_deviation: float
    excess_fit: ExponentFit
    survival_fit: ExponentFit
    survival_r2: float
    times: np.ndarray
    excess: np.ndarray

    def to_dict(self) -> dict:
        return {"p": self.p, "parity_deviation": self.parity_deviation,
                "excess_fit": self.excess_fit.to_dict(),
                "survival_fit": self.survival_fit.to_dict(), "survival_r2": self.survival_r2}


def even_sites_example(spec: ConductanceWalkSpec, excess_window=(1e2, 1e5),
                       survival_window=(20, 200), tol: float = 0.10) -> EvenSitesReport:
    """Conditional return excess decays polynomially while the exit tail is exponential."""
    chain = from_conductances(even_sites_graph(spec))
    sites = spec.sites
    even = (sites % 2 == 0).astype(float)
    deviation = float(np.abs(chain.apply(even) - 0.5).max())
    C = EventSet.of(chain, (sites > 0) & (sites % 2 == 0))

    grid = log_grid(*excess_window)
    marks = set(grid.tolist())
    u = C.indicator
    w = chain.pi * C.indicator
    excess = []
    for t in range(1, int(grid[-1]) + 1):
        u = chain.apply(u)
        if t in marks:
            excess.append(float(w @ u) / C.p - 0.25)
    excess = np.array(excess)
    target = (1 - spec.beta) / 2
    keep = excess > 0
    excess_fit = fit_exponent(grid[keep], excess[keep], target, tol, truncated=not keep.all())

    ts = np.arange(int(survival_window[0]), int(survival_window[1]) + 1)
    surv = walk_sweep(chain, C, int(ts[-1]), correlations=False).survival[ts]
    lin = loglinear_fit(ts, surv)
    surv_fit = fit_exponent(ts, surv, -math.log(2), math.inf, linear=True)
    return EvenSitesReport(C.p, deviation, excess_fit, surv_fit, lin.r2, grid, excess)


# ---------------------------------------------------------------------------
# transition-probability checks


def graph_distances(chain: ReversibleChain) -> np.ndarray:
    """Hop distance in the graph of nonzero transitions (``inf`` if unreachable)."""
    A = chain.K.copy() if chain.is_sparse else np.array(chain.K)
    return shortest_path(A != 0, method="D", unweighted=True, directed=False)


@dataclass(frozen=True)
class CarneVaropoulos:
    bound: float
    exact: float
    ok: bool


def carne_varopoulos(chain: ReversibleChain, x: int, y: int, s: int,
                     distances: np.ndarray | None = None,
                     power: np.ndarray | None = None) -> CarneVaropoulos:
    """``K^s(x, y) <= 2 sqrt(pi(y)/pi(x)) exp(-dist(x, y)^2 / (2s))``.

    ``power`` may pass a precomputed ``K^s`` to avoid recomputation in sweeps.
    """
    if s < 1 or int(s) != s:
        raise ValueError("s must be a positive integer")
    if distances is None:
        distances = graph_distances(chain)
    if power is None:
        e = np.zeros(chain.n)
        e[y] = 1.0
        for _ in range(int(s)):
            e = chain.apply(e)
        exact = float(e[x])
    else:
        exact = float(power[x, y])
    dist = distances[x, y]
    if math.isinf(dist):
        return CarneVaropoulos(0.0, exact, exact == 0)
    bound = 2.0 * math.sqrt(chain.pi[y] / chain.pi[x]) * math.exp(-dist * dist / (2.0 * s))
    return CarneVaropoulos(bound, exact, exact <= bound + 1e-12)


def carne_varopoulos_sweep(chain: ReversibleChain, s_max: int) -> int:
    """Number of violations over all pairs and ``s = 1..s_max``."""
    D = graph_distances(chain)
    P = np.eye(chain.n)
    K = chain.dense_kernel()
    ratio = np.sqrt(chain.pi[None, :] / chain.pi[:, None])
    bad = 0
    with np.errstate(invalid="ignore"):
        for s in range(1, s_max + 1):
            P = P @ K
            B = np.where(np.isinf(D), 0.0, 2.0 * ratio * np.exp(-(D * D) / (2.0 * s)))
            bad += int((P > B + 1e-12).sum())
    return bad


def srw_stay_positive(a_max: int, t_max: int) -> np.ndarray:
    """``P_a[S_j >= 1 for j <= t]`` for simple random walk, ``a = 0..a_max``, ``t = 0..t_max``.

    Backward recursion on ``{0..L}`` with ``L = a_max + t_max + 1``, far
    enough that the cut-off never reaches the starting points.
    """
    L = a_max + t_max + 1
    u = np.ones(L + 2)
    u[0] = 0.0
    out = np.empty((t_max + 1, a_max + 1))
    out[0] = u[: a_max + 1]
    for t in range(1, t_max + 1):
        v = np.empty_like(u)
        v[1:-1] = 0.5 * (u[:-2] + u[2:])
        v[0] = 0.0
        v[-1] = u[-1]
        u = v
        out[t] = u[: a_max + 1]
    return out


@dataclass(frozen=True)
class HittingCheck:
    exact: float
    bound: float
    ok: bool


def srw_hitting_check(a: int, t: int) -> HittingCheck:
    """Staying positive for ``t`` steps from ``a`` against ``min(1, 12 a / sqrt(t))``."""
    if a < 1 or t < 1:
        raise ValueError("need a >= 1 and t >= 1")
    exact = float(srw_stay_positive(a, t)[t, a])
    bound = min(1.0, 12.0 * a / math.sqrt(t))
    return HittingCheck(exact, bound, exact <= bound)


def srw_hitting_grid(a_max: int = 10, t_lo: int = 4, t_hi: int = 4096) -> int:
    """Violations over ``a = 1..a_max`` and every ``t`` in ``[t_lo, t_hi]``."""
    table = srw_stay_positive(a_max, t_hi)
    t = np.arange(t_lo, t_hi + 1)[:, None]
    a = np.arange(1, a_max + 1)[None, :]
    bound = np.minimum(1.0, 12.0 * a / np.sqrt(t))
    return int((table[t_lo:, 1:] > bound).sum())


__all__ = [
    "CarneVaropoulos",
    "ConductanceWalkSpec",
    "CorrelationSurvival",
    "EvenSitesReport",
    "ExponentFit",
    "HittingCheck",
    "WalkSweep",
    "build_conductance_walk",
    "carne_varopoulos",
    "carne_varopoulos_sweep",
    "correlation_vs_survival",
    "even_sites_example",
    "even_sites_graph",
    "fit_exponent",
    "graph_distances",
    "log_grid",
    "positive_side",
    "srw_hitting_check",
    "srw_hitting_grid",
    "srw_stay_positive",
    "survival_exponent",
    "walk_sweep",
    "write_sweep_csv",
]
