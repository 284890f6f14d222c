"""Exit-time tails and the bounds that control them.

Exact quantities (survival in a set, joint probabilities of single-time
events, the intermediate inequalities of the decorrelation argument) are
computed by substochastic matrix products.  Interval events under a
spectral gap are estimated by Monte Carlo.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .chain_core import ChainError, EventSet, GeneratorChain, ReversibleChain
from .seeding import block_rngs
from .spectral import (
    DecorrelationCurve,
    decorrelation_curve,
    heat_operator,
    spectrum,
    variance_series,
)

log = logging.getLogger(__name__)

#: Monte Carlo bound checks allow this many standard errors.
STAT_MARGIN = 3.0
#: Target precision used to size the default ``k_max``.
TARGET_PRECISION = 1e-12


# ---------------------------------------------------------------------------
# exit-time tails


def exit_tail_exact(chain, C: EventSet, t) -> float:
    """``P[w_s in C for all s in [0, t]]`` at stationarity.

    Discrete chains: ``pi_C (K_CC)^t 1``.  Generators: ``pi_C exp(t Q_CC) 1``.
    An empty ``C`` gives 0 (with a logged warning).
    """
    if C.mask.shape != (chain.n,):
        raise ChainError("event mask length does not match the chain")
    if not C.mask.any():
        log.warning("exit_tail_exact called with an empty event; returning 0")
        return 0.0
    if t < 0:
        raise ValueError("exit tail needs t >= 0")
    if isinstance(chain, GeneratorChain):
        pc = chain.pi[C.mask]
        s = np.sqrt(pc)
        Qcc = chain.Q[np.ix_(C.mask, C.mask)]
        S = s[:, None] * Qcc / s[None, :]
        mu, V = np.linalg.eigh(0.5 * (S + S.T))
        c = V.T @ s
        return float(np.dot(c * c, np.exp(t * mu)))
    return float(exit_tail_series(chain, C, int(t))[-1]) if t == int(t) else _bad_time(t)


def _bad_time(t):
    raise ValueError(f"discrete chains need an integer time, got {t!r}")


def restricted_kernel(chain: ReversibleChain, C: EventSet):
    idx = np.flatnonzero(C.mask)
    K = chain.K[idx][:, idx] if chain.is_sparse else chain.K[np.ix_(idx, idx)]
    return K, chain.pi[idx]


def exit_tail_series(chain: ReversibleChain, C: EventSet, t_max: int) -> np.ndarray:
    """``exit_tail_exact`` at ``t = 0..t_max`` by substochastic vector iteration."""
    if not C.mask.any():
        return np.zeros(int(t_max) + 1)
    Kcc, pc = restricted_kernel(chain, C)
    out = np.empty(int(t_max) + 1)
    u = np.ones(pc.shape[0])
    out[0] = pc.sum()
    for t in range(1, int(t_max) + 1):
        u = Kcc @ u
        out[t] = np.dot(pc, u)
    return out


# ---------------------------------------------------------------------------
# the decorrelation bound


@dataclass
class BoundReport:
    """A bound evaluated at one horizon, optionally against a target probability."""

    t: float
    bound: float
    raw_bound: float
    argmin_k: int
    mode: str
    target: float | None = None
    target_ci: float | None = None
    slack: float | None = None
    factors: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        d = {k: self._num(v) for k, v in asdict(self).items() if k != "factors"}
        keys = ("t", "target", "target_ci", "bound", "argmin_k", "slack", "mode")
        return json.dumps({k: d[k] for k in keys})

    @staticmethod
    def _num(v):
        if isinstance(v, float):
            return float(f"{v:.17g}")
        return v

    def holds(self, margin: float = 0.0) -> bool:
        """``target <= bound`` allowing ``margin`` confidence half-widths."""
        if self.target is None:
            raise ValueError("no target to compare against")
        ci = self.target_ci or 0.0
        return self.target - margin * ci <= self.raw_bound


def default_k_max(precision: float = TARGET_PRECISION) -> int:
    return int(max(64, math.ceil(4 * math.log(1.0 / precision))))


def tmain_constant(p: float, constant: str = "published", lam: float | None = None) -> float:
    """Coefficient of ``d(2t/k)``.

    ``published`` is ``16p/(1-p)^2``; ``proof`` is ``4p(3-p)/(1-p)^2`` (the
    general form at ``lambda = (p+1)/2``); an explicit ``lam`` gives the
    general form ``(p - p^2)/(lam - p)^2 * (2 - lam)/(1 - lam)``.
    """
    if lam is not None:
        if not p < lam < 1:
            raise ValueError("lambda must lie in (p, 1)")
        return (p - p * p) / (lam - p) ** 2 * (2.0 - lam) / (1.0 - lam)
    if constant == "published":
        return 16.0 * p / (1.0 - p) ** 2
    if constant == "proof":
        return 4.0 * p * (3.0 - p) / (1.0 - p) ** 2
    raise ValueError(f"unknown constant {constant!r}")


def tmain_bound(p: float, d: DecorrelationCurve, t: float, k_max: int | None = None, *,
                constant: str = "published", lam: float | None = None,
                target: float | None = None, target_ci: float | None = None) -> BoundReport:
    """``min_k lam^k + coef * d(2t/k)`` over the admissible ``k``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if t <= 0:
        raise ValueError("t must be positive")
    k_max = default_k_max() if k_max is None else int(k_max)
    ks = d.admissible_k(t, k_max)
    if not ks:
        raise ValueError(f"no admissible k for t={t!r}, k_max={k_max}")
    base = (p + 1.0) / 2.0 if lam is None else lam
    coef = tmain_constant(p, constant, lam)
    best, best_k = math.inf, ks[0]
    for k in ks:
        val = base ** k + coef * d(2.0 * t / k)
        if val < best:
            best, best_k = val, k
    mode = d.mode if lam is None else f"{d.mode};lambda={lam!r}"
    rep = BoundReport(t=t, bound=min(best, 1.0), raw_bound=best, argmin_k=best_k,
                      mode=f"{mode};{constant}", target=target, target_ci=target_ci)
    if target is not None:
        rep.slack = rep.bound - target
    return rep


@dataclass(frozen=True)
class DecayRegime:
    """Model decorrelation: ``scale * s^-alpha`` or ``scale * exp(-rate * s^alpha)``."""

    kind: str
    alpha: float
    scale: float = 1.0
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "stretched-exponential"):
            raise ValueError(f"unknown regime {self.kind!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def d(self, s: float) -> float:
        if s <= 0:
            return 1.0
        if self.kind == "polynomial":
            return min(1.0, self.scale * s ** -self.alpha)
        return min(1.0, self.scale * math.exp(-self.rate * s ** self.alpha))


def asymptotic_k(p: float, regime: DecayRegime, t: float) -> int:
    """Block count used for the asymptotic forms.

    Polynomial: ``floor(K log t)`` with ``K = alpha / log(1/lambda)`` so that
    ``lambda^k`` is ``t^-alpha``.  Stretched exponential: ``floor(t^(alpha/(1+alpha)))``.
    """
    if t <= 1:
        return 1
    lam = (p + 1.0) / 2.0
    if regime.kind == "polynomial":
        K = regime.alpha / math.log(1.0 / lam)
        return max(1, math.floor(K * math.log(t)))
    return max(1, math.floor(t ** (regime.alpha / (1.0 + regime.alpha))))


def tmain_asymptotic(p: float, regime: DecayRegime, t: float, constant: str = "published") -> float:
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    k = asymptotic_k(p, regime, t)
    lam = (p + 1.0) / 2.0
    return lam ** k + tmain_constant(p, constant) * regime.d(2.0 * t / k)


# ---------------------------------------------------------------------------
# intermediate inequalities of the decorrelation argument


def _hitting_prob(chain, C: EventSet, s) -> np.ndarray:
    """``P[w_s in C | w_0 = i]`` for every state ``i``."""
    f = C.indicator
    if isinstance(chain, GeneratorChain):
        return heat_operator(chain, float(s)) @ f
    if s < 0 or int(s) != s:
        raise ValueError("discrete chains need an integer s >= 0")
    for _ in range(int(s)):
        f = chain.K @ f
    return f


def as_set(chain, C: EventSet, s, lam: float) -> EventSet:
    """``A_s = {i : P[w_s in C | w_0 = i] < lam}``."""
    if not C.p < lam < 1:
        raise ValueError("lambda must lie in (p, 1)")
    return EventSet.of(chain, _hitting_prob(chain, C, s) < lam)


def mass_bound_check(chain, C: EventSet, s, lam: float,
                     d: DecorrelationCurve | None = None) -> tuple[float, float, bool]:
    """``P[A_s^c] <= (p - p^2)/(lam - p)^2 * d(2s)`` with the exact curve by default.

    Returns ``(lhs, rhs, holds)``.
    """
    A = as_set(chain, C, s, lam)
    lhs = float(chain.pi[~A.mask].sum())
    if d is None:
        var = C.p * (1 - C.p)
        if isinstance(chain, GeneratorChain):
            d2s = decorrelation_curve(chain, C, 0)(2.0 * s)
        else:
            d2s = float(variance_series(chain, C, int(s))[-1]) / var
    else:
        d2s = d(2.0 * s)
    rhs = (C.p - C.p ** 2) / (lam - C.p) ** 2 * d2s
    return lhs, rhs, lhs <= rhs


def _power(chain: ReversibleChain, tau: int) -> np.ndarray:
    return np.linalg.matrix_power(chain.dense_kernel(), int(tau))


@dataclass(frozen=True)
class RecursionTerms:
    start_outside: float  # P[w_0 in A^c & C; w_{j tau} in A & C, 1 <= j <= m]
    start_outside_bound: float  # lam^{(m-1) v 0} P[A^c]
    all_inside: float  # P[w_{j tau} in A & C, 0 <= j <= m]
    all_inside_bound: float  # lam^m

    @property
    def holds(self) -> bool:
        return self.start_outside <= self.start_outside_bound and self.all_inside <= self.all_inside_bound


def lambda_recursion_terms(chain: ReversibleChain, C: EventSet, tau: int, lam: float,
                           m: int) -> RecursionTerms:
    if tau < 1 or int(tau) != tau:
        raise ValueError("tau must be a positive integer")
    A = as_set(chain, C, tau, lam)
    M = _power(chain, tau)
    in_mask = (A.mask & C.mask).astype(float)
    out_mask = (~A.mask & C.mask).astype(float)
    w = np.ones(chain.n)
    for _ in range(int(m)):
        w = M @ (in_mask * w)
    pi = chain.pi
    # same summation as the left-hand sides, so ties compare exactly
    p_ac = float(np.dot(pi, (~A.mask).astype(float)))
    return RecursionTerms(
        start_outside=float(np.dot(pi * out_mask, w)),
        start_outside_bound=lam ** max(m - 1, 0) * p_ac,
        all_inside=float(np.dot(pi * in_mask, w)),
        all_inside_bound=lam ** m,
    )


def lambda_recursion_check(chain: ReversibleChain, C: EventSet, tau: int, lam: float, m: int) -> bool:
    return lambda_recursion_terms(chain, C, tau, lam, m).holds


@dataclass(frozen=True)
class TwoTermChain:
    """The chain of inequalities from continual occupancy down to two terms."""

    continual: float  # P[w_s in C, 0 <= s <= t]
    skeleton: float  # P[w_{j tau} in C, 0 <= j <= k]
    two_terms: float  # lam^k + (2 - lam)/(1 - lam) P[A_tau^c]
    final: float  # lam^k + coef(lam) d(2 tau)

    @property
    def holds(self) -> bool:
        return self.continual <= self.skeleton <= self.two_terms <= self.final


def two_term_chain(chain: ReversibleChain, C: EventSet, t: int, k: int, lam: float) -> TwoTermChain:
    """Evaluate every stage for ``tau = t / k`` (``k`` must divide ``t``)."""
    if t % k:
        raise ValueError("k must divide t")
    tau = t // k
    M = _power(chain, tau)
    f = C.indicator
    w = f.copy()
    for _ in range(k):
        w = f * (M @ w)
    skeleton = float(np.dot(chain.pi, w))
    A = as_set(chain, C, tau, lam)
    p_ac = float(chain.pi[~A.mask].sum())
    var = C.p * (1 - C.p)
    d2tau = float(variance_series(chain, C, tau)[-1]) / var
    return TwoTermChain(
        continual=exit_tail_exact(chain, C, t),
        skeleton=skeleton,
        two_terms=lam ** k + (2.0 - lam) / (1.0 - lam) * p_ac,
        final=lam ** k + tmain_constant(C.p, lam=lam) * d2tau,
    )


# ---------------------------------------------------------------------------
# spectral-gap bound for events on disjoint time windows


def aksz_bound(probs: Sequence[float], delta: float, gaps: Sequence[float]) -> float:
    """``sqrt(p_0 p_k) prod_i [r_i + e^{-delta g_i}(1 - r_i)]``, ``r_i = sqrt(p_i p_{i+1})``."""
    probs = [float(x) for x in probs]
    gaps = [float(x) for x in gaps]
    if not probs:
        raise ValueError("need at least one event")
    if len(gaps) != len(probs) - 1:
        raise ValueError("need exactly one gap between consecutive events")
    if delta <= 0:
        raise ValueError("the spectral gap must be positive")
    if any(g < 0 for g in gaps):
        raise ValueError("gaps must be nonnegative")
    if len(probs) == 1:
        return probs[0]
    out = math.sqrt(probs[0]) * math.sqrt(probs[-1])
    for i, g in enumerate(gaps):
        r = math.sqrt(probs[i]) * math.sqrt(probs[i + 1])
        out *= r + math.exp(-delta * g) * (1.0 - r)
    return out


def aksz_bound_equal(p: float, delta: float, gaps: Sequence[float]) -> float:
    """Equal-event form ``p prod_i (p + e^{-delta t_i}(1 - p))``."""
    if any(g < 0 for g in gaps):
        raise ValueError("gaps must be nonnegative")
    out = p
    for g in gaps:
        out *= p + math.exp(-delta * g) * (1.0 - p)
    return out


def aksz_joint_exact(gen: GeneratorChain, events: Sequence[tuple[EventSet, float]]) -> float:
    """``P[w(s_i) in C_i for all i]`` as ``pi D_0 e^{(s_1-s_0)Q} D_1 ... 1``."""
    if not events:
        raise ValueError("need at least one event")
    times = [float(s) for _, s in events]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("event times must be strictly increasing")
    v = events[-1][0].indicator
    for i in range(len(events) - 2, -1, -1):
        v = events[i][0].indicator * (heat_operator(gen, times[i + 1] - times[i]) @ v)
    return float(np.dot(gen.pi, v))


@dataclass(frozen=True, eq=False)
class WindowEvent:
    """``{w(s) in C for s in [a, b]}``, continually or at ``samples`` equally spaced times."""

    C: EventSet
    a: float
    b: float
    samples: int | None = None

    def __post_init__(self):
        if self.b < self.a:
            raise ValueError("window needs a <= b")
        if self.samples is not None and self.samples < 1:
            raise ValueError("need at least one sample time")

    @property
    def sample_times(self) -> np.ndarray:
        if self.samples is None:
            raise ValueError("continual window has no sample times")
        if self.samples == 1:
            return np.array([self.a])
        return np.linspace(self.a, self.b, self.samples)

    def probability(self, gen: GeneratorChain) -> float:
        """Exact stationary probability of the window event."""
        if self.samples is None:
            return exit_tail_exact(gen, self.C, self.b - self.a)
        return aksz_joint_exact(gen, [(self.C, s) for s in self.sample_times])


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    half_width: float
    replicas: int
    seed: int
    bound: float
    consistent: bool


def _simulate_windows(gen: GeneratorChain, windows: Sequence[WindowEvent], n: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Which of ``n`` stationary paths realise every window event."""
    Q = np.asarray(gen.Q)
    q = -np.diag(Q).copy()
    J = np.where(q[:, None] > 0, Q / np.where(q > 0, q, 1.0)[:, None], 0.0)
    np.fill_diagonal(J, 0.0)
    cum = np.cumsum(J, axis=1)
    cum[:, -1] = np.where(q > 0, 1.0, cum[:, -1])
    pcum = np.cumsum(gen.pi)
    pcum[-1] = 1.0
    x = np.searchsorted(pcum, rng.random(n), side="right")
    start, end = windows[0].a, windows[-1].b
    t = np.full(n, float(start))
    ok = np.ones(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    sample_times = [None if w.samples is None else w.sample_times for w in windows]
    while active.any():
        idx = np.flatnonzero(active)
        xs = x[idx]
        rate = q[xs]
        e = rng.exponential(1.0, idx.size)
        with np.errstate(divide="ignore"):
            t1 = t[idx] + np.where(rate > 0, e / np.where(rate > 0, rate, 1.0), np.inf)
        t0 = t[idx]
        for w, st in zip(windows, sample_times):
            bad = ~w.C.mask[xs]
            if st is None:
                hit = (t0 <= w.b) & (t1 > w.a)
            else:
                hit = np.searchsorted(st, t1, "left") > np.searchsorted(st, t0, "left")
            ok[idx[hit & bad]] = False
        u = rng.random(idx.size)
        x[idx] = (cum[xs] < u[:, None]).sum(axis=1)
        t[idx] = t1
        active[idx] = (t1 <= end) & ok[idx]
    return ok


def aksz_interval_mc(gen: GeneratorChain, windows: Sequence[WindowEvent], replicas: int,
                     seed: int, block: int = 1024) -> MCEstimate:
    """Monte Carlo estimate of ``P[all window events]`` against the spectral-gap bound.

    Replicas are simulated in fixed-size blocks; block ``b`` draws from a
    generator derived from ``(seed, b)``, so the estimate does not depend on
    how blocks are scheduled.
    """
    if replicas <= 0:
        raise ValueError("need at least one replica")
    windows = list(windows)
    for w0, w1 in zip(windows, windows[1:]):
        if w1.a < w0.b:
            raise ValueError("windows must be ordered and disjoint")
    hits = 0
    for size, rng in block_rngs(seed, replicas, block):
        hits += int(_simulate_windows(gen, windows, size, rng).sum())
    est = hits / replicas
    se = math.sqrt(max(est * (1 - est), 0.0) / replicas)
    delta = spectrum(gen).generator_gap
    probs = [w.probability(gen) for w in windows]
    gaps = [w1.a - w0.b for w0, w1 in zip(windows, windows[1:])]
    bound = aksz_bound(probs, delta, gaps)
    return MCEstimate(est, se, 1.96 * se, replicas, seed, bound,
                      est - STAT_MARGIN * se <= bound)


# ---------------------------------------------------------------------------
# exponential-decorrelation scan


@dataclass(frozen=True)
class ScanEnsemble:
    instances: int = 50
    min_states: int = 3
    max_states: int = 8
    p_range: tuple[float, float] = (0.05, 0.9)
    t_max: int = 120


@dataclass
class ScanInstance:
    index: int
    n_states: int
    p: float
    decorrelation_rate: float
    exit_rate: float
    ratio: float
    flag: str = ""


@dataclass
class ScanReport:
    seed: int
    instances: list[ScanInstance]
    worst_ratio: float
    worst_index: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "worst_ratio": self.worst_ratio,
                "worst_index": self.worst_index,
                "instances": [asdict(i) for i in self.instances]}


#: Values below this are treated as exact zeros when fitting log-decay rates.
_FIT_FLOOR = 1e-26


def decay_rate(times: np.ndarray, values: np.ndarray) -> float:
    """Exponential rate ``c`` in ``values ~ C exp(-c t)``, fitted on the later half.

    Returns ``inf`` when the values vanish before three usable points remain.
    """
    keep = values > _FIT_FLOOR
    if keep.sum() < 3:
        return math.inf
    t, v = times[keep], values[keep]
    half = t >= t[-1] / 2 if t.size >= 6 else np.ones_like(t, dtype=bool)
    slope = np.polyfit(t[half], np.log(v[half]), 1)[0]
    return float(-slope)


def instance_rates(chain: ReversibleChain, C: EventSet, t_max: int) -> tuple[float, float]:
    """(decorrelation rate, exit-tail rate) of one chain and event."""
    d = decorrelation_curve(chain, C, 2 * (t_max // 2))
    tail = exit_tail_series(chain, C, t_max)
    return decay_rate(d.times, d.values), decay_rate(np.arange(t_max + 1.0), tail)


def counterexample_scan(ensemble: ScanEnsemble, seed: int) -> ScanReport:
    """Compare exit-tail rates with decorrelation rates over random chains.

    The worst (smallest) ``exit_rate / decorrelation_rate`` is reported; a
    small ratio is a chain whose exit tail decays slowly relative to its
    decorrelation.  Nothing is claimed about the limit.
    """
    from .ensembles import random_chain, random_event

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out: list[ScanInstance] = []
    for i in range(ensemble.instances):
        n = int(rng.integers(ensemble.min_states, ensemble.max_states + 1))
        chain = random_chain(rng, n)
        C = random_event(rng, chain, ensemble.p_range)
        flag = ""
        try:
            c, c_exit = instance_rates(chain, C, ensemble.t_max)
        except (ChainError, np.linalg.LinAlgError, ValueError) as exc:
            out.append(ScanInstance(i, n, C.p, math.nan, math.nan, math.nan, f"fit failed: {exc}"))
            continue
        if math.isinf(c):
            flag = "decorrelation vanishes"
        if math.isinf(c_exit):
            flag = (flag + "; " if flag else "") + "exit tail vanishes"
        ratio = c_exit / c if c > 0 else math.inf
        out.append(ScanInstance(i, n, C.p, c, c_exit, ratio, flag))
    finite = [(r.ratio, r.index) for r in out if not math.isnan(r.ratio)]
    worst, widx = min(finite) if finite else (math.nan, -1)
    return ScanReport(seed, out, worst, widx)


__all__ = [
    "BoundReport",
    "DecayRegime",
    "MCEstimate",
    "RecursionTerms",
    "ScanEnsemble",
    "ScanReport",
    "TwoTermChain",
    "WindowEvent",
    "aksz_bound",
    "aksz_bound_equal",
    "aksz_interval_mc",
    "aksz_joint_exact",
    "as_set",
    "asymptotic_k",
    "counterexample_scan",
    "decay_rate",
    "default_k_max",
    "exit_tail_exact",
    "exit_tail_series",
    "lambda_recursion_check",
    "lambda_recursion_terms",
    "mass_bound_check",
    "tmain_asymptotic",
    "tmain_bound",
    "tmain_constant",
    "two_term_chain",
]
