"""Spectra, heat operators and decorrelation curves of reversible chains.

Every routine works with the symmetrisation ``D^{1/2} M D^{-1/2}``
(``D = diag(pi)``), which is real symmetric for a reversible ``M``; the
eigenvectors are mapped back through ``D^{-1/2}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .chain_core import ChainError, EventSet, GeneratorChain, ReversibleChain, balance_violation

#: Imaginary residue (asymmetry of the symmetrised operator) tolerated.
SYMMETRY_TOL = 1e-10
#: Slack allowed when asserting that a curve is nonincreasing.
MONOTONE_TOL = 1e-12

MODES = ("exact-at-integers", "envelope", "continuous")


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues (descending) and the gaps derived from them.

    For kernels ``gap = 1 - lambda_2`` and ``abs_gap = 1 - max(|lambda_2|, |lambda_N|)``;
    for generators ``generator_gap = -mu_2`` and the kernel gaps are ``None``.
    """

    eigenvalues: np.ndarray
    gap: float | None = None
    abs_gap: float | None = None
    generator_gap: float | None = None

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "gap": self.gap,
            "abs_gap": self.abs_gap,
            "generator_gap": self.generator_gap,
        }


def _operator(chain) -> np.ndarray:
    if isinstance(chain, GeneratorChain):
        return np.asarray(chain.Q)
    return chain.dense_kernel()


def symmetric_eigh(chain) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs ``(mu, V)`` of ``D^{1/2} M D^{-1/2}``, cached on the chain.

    ``mu`` is ascending, as returned by :func:`numpy.linalg.eigh`.
    """
    cached = chain.__dict__.get("_eigh")
    if cached is not None:
        return cached
    pi = np.asarray(chain.pi)
    if np.any(pi <= 0):
        raise ChainError("spectral routines need a strictly positive stationary measure")
    M = _operator(chain)
    viol = balance_violation(pi, M)
    if viol > chain.balance_tol:
        raise ChainError(f"detailed balance violated (relative violation {viol:.3g})")
    s = np.sqrt(pi)
    S = s[:, None] * M / s[None, :]
    asym = np.max(np.abs(S - S.T)) if S.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(S))):
        raise ChainError(f"symmetrised operator is not symmetric (residue {asym:.3g})")
    mu, V = np.linalg.eigh(0.5 * (S + S.T))
    chain.__dict__["_eigh"] = (mu, V)
    return mu, V


def spectrum(chain) -> SpectrumReport:
    mu, _ = symmetric_eigh(chain)
    ev = mu[::-1].copy()
    if isinstance(chain, GeneratorChain):
        delta = float(-ev[1]) if ev.size > 1 else math.inf
        return SpectrumReport(ev, generator_gap=delta)
    if ev.size == 1:
        return SpectrumReport(ev, gap=1.0, abs_gap=1.0)
    lam2 = float(ev[1])
    gap = 1.0 - lam2
    abs_gap = 1.0 - max(abs(lam2), abs(float(ev[-1])))
    return SpectrumReport(ev, gap=gap, abs_gap=abs_gap)


def heat_operator(gen: GeneratorChain, t: float) -> np.ndarray:
    """``exp(tQ)`` from the symmetrised eigendecomposition."""
    if t < 0:
        raise ValueError("heat operator needs t >= 0")
    mu, V = symmetric_eigh(gen)
    s = np.sqrt(np.asarray(gen.pi))
    St = (V * np.exp(t * mu)) @ V.T
    return St / s[:, None] * s[None, :]


def symmetric_heat(gen: GeneratorChain, t: float) -> np.ndarray:
    """``D^{1/2} exp(tQ) D^{-1/2}``; its 2-norm is the pi-weighted operator norm."""
    if t < 0:
        raise ValueError("heat operator needs t >= 0")
    mu, V = symmetric_eigh(gen)
    return (V * np.exp(t * mu)) @ V.T


# ---------------------------------------------------------------------------
# correlations of a single event


def _check_event(chain, C: EventSet) -> None:
    if C.mask.shape != (chain.n,):
        raise ChainError("event mask length does not match the chain")


def _check_step(t) -> int:
    if t < 0 or int(t) != t:
        raise ValueError(f"discrete chains need an integer time >= 0, got {t!r}")
    return int(t)


def _evolve(chain, h: np.ndarray, t) -> np.ndarray:
    if isinstance(chain, GeneratorChain):
        return heat_operator(chain, float(t)) @ h
    for _ in range(_check_step(t)):
        h = chain.K @ h
    return h


def pairwise_correlation(chain, C: EventSet, t) -> float:
    """``P[w_0, w_t in C] - p^2`` computed as ``(f - p, T_t (f - p))``."""
    _check_event(chain, C)
    f0 = C.indicator - C.p
    return float(np.dot(chain.pi * f0, _evolve(chain, f0, t)))


def variance_decay(chain, C: EventSet, t) -> float:
    """``Var[T_t f]`` with ``f = 1_C``."""
    _check_event(chain, C)
    h = _evolve(chain, C.indicator - C.p, t)
    return float(np.dot(chain.pi, h * h))


def correlation_series(chain: ReversibleChain, C: EventSet, t_max: int) -> np.ndarray:
    """``pairwise_correlation`` at ``t = 0..t_max`` in one pass."""
    _check_event(chain, C)
    f0 = C.indicator - C.p
    w = chain.pi * f0
    out = np.empty(int(t_max) + 1)
    h = f0
    out[0] = np.dot(w, h)
    for t in range(1, int(t_max) + 1):
        h = chain.K @ h
        out[t] = np.dot(w, h)
    return out


def variance_series(chain: ReversibleChain, C: EventSet, t_max: int) -> np.ndarray:
    """``variance_decay`` at ``t = 0..t_max`` in one pass."""
    _check_event(chain, C)
    h = C.indicator - C.p
    out = np.empty(int(t_max) + 1)
    out[0] = np.dot(chain.pi, h * h)
    for t in range(1, int(t_max) + 1):
        h = chain.K @ h
        out[t] = np.dot(chain.pi, h * h)
    return out


@dataclass(frozen=True, eq=False)
class DecorrelationCurve:
    """A decorrelation function ``d`` with its off-grid evaluation rule.

    ``times``/``values`` hold the samples.  ``discrete_time`` marks curves of
    discrete-time chains, for which a decomposition into ``k`` blocks needs
    whole steps.  ``func`` (mode ``continuous``) evaluates ``d`` anywhere.
    """

    p: float
    times: np.ndarray
    values: np.ndarray
    mode: str = "envelope"
    discrete_time: bool = True
    func: Callable[[float], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown evaluation mode {self.mode!r}")
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.mode == "continuous" and self.func is None:
            raise ValueError("continuous mode needs an evaluation function")
        if self.mode != "continuous" and (times.size == 0 or times[0] != 0):
            raise ValueError("sampled curves must start at t = 0")

    @classmethod
    def from_function(cls, p: float, func: Callable[[float], float],
                      discrete_time: bool = False) -> "DecorrelationCurve":
        """User-supplied analytic majorant, evaluated exactly everywhere."""
        return cls(p, np.zeros(0), np.zeros(0), "continuous", discrete_time, func)

    def __call__(self, s: float) -> float:
        if self.mode == "continuous":
            return float(self.func(s))
        if self.mode == "exact-at-integers":
            i = int(np.searchsorted(self.times, s - 1e-9))
            if i >= self.times.size or abs(self.times[i] - s) > 1e-9:
                raise ValueError(f"d is only known on its grid; {s!r} is off-grid")
            return float(self.values[i])
        i = int(np.searchsorted(self.times, s + 1e-9, side="right")) - 1
        return float(self.values[max(i, 0)])

    def admissible_k(self, t: float, k_max: int) -> list[int]:
        """Block counts ``k`` for which ``d(2t/k)`` may be used at horizon ``t``."""
        if not self.discrete_time:
            return list(range(1, int(k_max) + 1))
        if abs(t - round(t)) > 1e-9:
            raise ValueError("discrete-time curves need an integer horizon")
        t = int(round(t))
        top = min(t, int(k_max))
        if self.mode == "exact-at-integers":
            return [k for k in range(1, top + 1) if t % k == 0]
        return list(range(1, top + 1))

    def is_nonincreasing(self, tol: float = MONOTONE_TOL) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "d"])
            for t, d in zip(self.times, self.values):
                w.writerow([f"{t:.17g}", f"{d:.17g}"])


def decorrelation_curve(chain, C: EventSet, t_max: float, mode: str | None = None
                        ) -> DecorrelationCurve:
    """The tightest ``d`` with ``Var[T_s f] <= d(2s) Var[f]``.

    Discrete chains are sampled at even integers ``0, 2, ..., <= t_max``
    (``d(2s) = Var[K^s f] / Var[f]``).  Generators are sampled at the integers
    and, in ``continuous`` mode (their default), evaluated exactly anywhere.
    """
    _check_event(chain, C)
    var = C.p * (1.0 - C.p)
    if var <= 0:
        raise ValueError("decorrelation is undefined for events of mass 0 or 1")
    if isinstance(chain, GeneratorChain):
        mu, V = symmetric_eigh(chain)
        coef = V.T @ (np.sqrt(chain.pi) * (C.indicator - C.p))
        w = coef * coef

        def d(s: float) -> float:
            return float(np.dot(w, np.exp(s * mu))) / var

        times = np.arange(0, math.floor(t_max) + 1, dtype=float)
        values = np.array([d(s) for s in times])
        curve = DecorrelationCurve(C.p, times, values, mode or "continuous", False, d)
    else:
        steps = int(math.floor(t_max / 2))
        values = variance_series(chain, C, steps) / var
        times = 2.0 * np.arange(steps + 1)
        curve = DecorrelationCurve(C.p, times, values, mode or "envelope", True)
    if not curve.is_nonincreasing():
        raise ChainError("decorrelation samples are not nonincreasing; is the chain reversible?")
    return curve


# ---------------------------------------------------------------------------
# operator-norm facts used for interval events


def projection_product_norm(gen: GeneratorChain, C1: EventSet, C2: EventSet, t: float) -> float:
    """``||P_1 P_2||`` for ``A_1 = {w(a) in C1}``, ``A_2 = {w(a+t) in C2}``.

    Equal to the largest singular value of ``R_1 T_t R_2`` in ``L^2(pi)``,
    i.e. the spectral norm of the symmetrised heat kernel restricted to
    ``C1 x C2``.
    """
    if t < 0:
        raise ValueError("projection product needs t >= 0")
    S = symmetric_heat(gen, t)[np.ix_(C1.mask, C2.mask)]
    if S.size == 0:
        return 0.0
    return float(np.linalg.norm(S, 2))


def projection_product_bound(p1: float, p2: float, delta: float, t: float) -> float:
    r = math.sqrt(p1) * math.sqrt(p2)
    return r + math.exp(-delta * t) * (1.0 - r)


def pi_norm(chain, g: np.ndarray) -> float:
    return float(np.sqrt(np.dot(chain.pi, g * g)))


def easyfact_check(chain: ReversibleChain, g1: np.ndarray, g2: np.ndarray,
                   tol: float = 1e-12) -> bool:
    """Check ``E[g1 M g2] <= E g1 E g2 + (1 - delta)(1 - |E g1 E g2|)``.

    ``delta`` is the absolute spectral gap of the kernel, the contraction
    constant on mean-zero functions.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    for g in (g1, g2):
        if pi_norm(chain, g) > 1.0 + tol:
            raise ValueError("easyfact_check needs functions in the unit ball of L^2(pi)")
    delta = spectrum(chain).abs_gap
    pi = chain.pi
    e1, e2 = float(np.dot(pi, g1)), float(np.dot(pi, g2))
    lhs = float(np.dot(pi * g1, chain.K @ g2))
    rhs = e1 * e2 + (1.0 - delta) * (1.0 - abs(e1 * e2))
    return lhs <= rhs + tol


__all__ = [
    "SpectrumReport",
    "DecorrelationCurve",
    "spectrum",
    "symmetric_eigh",
    "heat_operator",
    "symmetric_heat",
    "pairwise_correlation",
    "variance_decay",
    "correlation_series",
    "variance_series",
    "decorrelation_curve",
    "projection_product_norm",
    "projection_product_bound",
    "easyfact_check",
    "pi_norm",
]
