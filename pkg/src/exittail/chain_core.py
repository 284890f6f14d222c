"""Finite reversible Markov chains: construction, validation and text I/O.

Two chain flavours are supported:

* :class:`ReversibleChain` -- a discrete-time kernel ``K`` with stationary
  measure ``pi``;
* :class:`GeneratorChain` -- a continuous-time generator ``Q`` with
  stationary measure ``pi``.

Kernels with more than :data:`DENSE_MAX` states are stored as
``scipy.sparse.csr_matrix``; everything else is a dense ``ndarray``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

#: Row-sum / normalisation tolerance.
STRUCT_TOL = 1e-12
#: Relative detailed-balance tolerance.
BALANCE_TOL = 1e-10
#: Largest state count stored densely.
DENSE_MAX = 2000


class ChainError(ValueError):
    """A chain, graph or event violates its structural invariants."""


class ChainParseError(ChainError):
    """A chain or conductance file could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}".strip())


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _as_operator(M):
    if sp.issparse(M):
        M = sp.csr_matrix(M, dtype=float, copy=True)
        M.sum_duplicates()
        return M
    return _frozen(np.asarray(M, dtype=float))


def _row_sums(M) -> np.ndarray:
    return np.asarray(M.sum(axis=1)).ravel()


def balance_violation(pi: np.ndarray, M) -> float:
    """Largest relative violation of ``pi_i M_ij = pi_j M_ji``.

    The violation of a pair is ``|F_ij - F_ji| / max(|F_ij|, |F_ji|)`` with
    ``F = diag(pi) M``; pairs with both fluxes zero are skipped.
    """
    if sp.issparse(M):
        F = sp.diags(pi) @ M
        F.setdiag(0)
        F.eliminate_zeros()
        D = abs(F - F.T).tocoo()
        if D.nnz == 0:
            return 0.0
        S = abs(F).maximum(abs(F.T)).tocsr()
        scale = np.asarray(S[D.row, D.col]).ravel()
        ok = scale > 0
        return float(np.max(D.data[ok] / scale[ok])) if ok.any() else 0.0
    F = pi[:, None] * M
    np.fill_diagonal(F, 0.0)
    diff = np.abs(F - F.T)
    scale = np.maximum(np.abs(F), np.abs(F.T))
    mask = scale > 0
    if not mask.any():
        return 0.0
    return float(np.max(diff[mask] / scale[mask]))


@dataclass(frozen=True)
class ConductanceGraph:
    """Undirected weighted graph; self-loops are edges with ``u == v``."""

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        edges = tuple((int(u), int(v), float(c)) for u, v, c in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n < 1:
            raise ChainError("conductance graph needs at least one vertex")
        total = np.zeros(self.n)
        for u, v, c in edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ChainError(f"edge ({u}, {v}) out of range for {self.n} vertices")
            if not math.isfinite(c) or c < 0:
                raise ChainError(f"edge ({u}, {v}) has invalid conductance {c!r}")
            total[u] += c
            if u != v:
                total[v] += c
        if total.sum() <= 0:
            raise ChainError("total conductance must be positive")
        dead = np.flatnonzero(total <= 0)
        if dead.size:
            raise ChainError(f"vertex {int(dead[0])} has zero total conductance")

    def weight_matrix(self, sparse: bool | None = None):
        """Symmetric matrix ``W`` with ``W[u, v] = c_uv`` (loops on the diagonal)."""
        if sparse is None:
            sparse = self.n > DENSE_MAX
        if not self.edges:
            rows = cols = vals = np.zeros(0)
        else:
            u, v, c = (np.array(x) for x in zip(*self.edges))
            off = u != v
            rows = np.concatenate([u, v[off]])
            cols = np.concatenate([v, u[off]])
            vals = np.concatenate([c, c[off]])
        W = sp.csr_matrix((vals, (rows.astype(int), cols.astype(int))), shape=(self.n, self.n))
        return W if sparse else W.toarray()


@dataclass(frozen=True, eq=False)
class ReversibleChain:
    """Discrete-time kernel ``K`` reversible with respect to ``pi``."""

    K: np.ndarray | sp.csr_matrix
    pi: np.ndarray
    balance_tol: float = field(default=BALANCE_TOL, repr=False)

    def __post_init__(self):
        K = _as_operator(self.K)
        pi = _frozen(self.pi)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "pi", pi)
        n = pi.shape[0]
        if K.shape != (n, n):
            raise ChainError(f"kernel shape {K.shape} does not match {n} states")
        entries = K.data if sp.issparse(K) else K
        if entries.size and entries.min() < 0:
            raise ChainError("kernel has negative entries")
        rs = _row_sums(K)
        bad = np.flatnonzero(np.abs(rs - 1.0) > STRUCT_TOL)
        if bad.size:
            raise ChainError(f"row {int(bad[0])} of the kernel sums to {rs[bad[0]]!r}")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > STRUCT_TOL:
            raise ChainError("stationary measure must be a probability vector")
        viol = balance_violation(pi, K)
        if viol > self.balance_tol:
            raise ChainError(f"detailed balance violated (relative violation {viol:.3g})")

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.K)

    def dense_kernel(self) -> np.ndarray:
        return self.K.toarray() if self.is_sparse else np.asarray(self.K)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``K @ v``."""
        return self.K @ v


@dataclass(frozen=True, eq=False)
class GeneratorChain:
    """Continuous-time generator ``Q`` reversible with respect to ``pi``."""

    Q: np.ndarray
    pi: np.ndarray
    balance_tol: float = field(default=BALANCE_TOL, repr=False)

    def __post_init__(self):
        Q = _frozen(np.asarray(self.Q.toarray() if sp.issparse(self.Q) else self.Q))
        pi = _frozen(self.pi)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "pi", pi)
        n = pi.shape[0]
        if Q.shape != (n, n):
            raise ChainError(f"generator shape {Q.shape} does not match {n} states")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise ChainError("generator has negative off-diagonal rates")
        scale = max(1.0, float(np.max(np.abs(Q))))
        rs = Q.sum(axis=1)
        bad = np.flatnonzero(np.abs(rs) > STRUCT_TOL * scale)
        if bad.size:
            raise ChainError(f"row {int(bad[0])} of the generator sums to {rs[bad[0]]!r}")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > STRUCT_TOL:
            raise ChainError("stationary measure must be a probability vector")
        viol = balance_violation(pi, Q)
        if viol > self.balance_tol:
            raise ChainError(f"detailed balance violated (relative violation {viol:.3g})")

    @property
    def n(self) -> int:
        return self.pi.shape[0]


@dataclass(frozen=True, eq=False)
class EventSet:
    """A static event: a subset of states with its stationary mass ``p``."""

    mask: np.ndarray
    p: float

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool, copy=True)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if not -STRUCT_TOL <= self.p <= 1 + STRUCT_TOL:
            raise ChainError(f"event mass {self.p!r} outside [0, 1]")

    @classmethod
    def of(cls, chain, states: Iterable[int] | np.ndarray) -> "EventSet":
        """Build from a boolean mask or an iterable of state indices."""
        arr = np.asarray(list(states) if not isinstance(states, np.ndarray) else states)
        if arr.dtype == bool:
            mask = arr
        else:
            mask = np.zeros(chain.n, dtype=bool)
            mask[arr.astype(int)] = True
        if mask.shape != (chain.n,):
            raise ChainError(f"event mask length {mask.shape[0]} != state count {chain.n}")
        return cls(mask, float(chain.pi[mask].sum()))

    @property
    def indicator(self) -> np.ndarray:
        return self.mask.astype(float)

    def complement(self, chain) -> "EventSet":
        return EventSet.of(chain, ~self.mask)

    def __len__(self) -> int:
        return int(self.mask.sum())


def from_conductances(graph: ConductanceGraph, sparse: bool | None = None) -> ReversibleChain:
    """Random walk on a conductance graph.

    ``K[u, v] = c_uv / c_u`` with ``c_u`` the total incident conductance
    (a self-loop counted once) and ``pi_u = c_u / sum_w c_w``.
    """
    W = graph.weight_matrix(sparse)
    c = _row_sums(W)
    if sp.issparse(W):
        K = sp.diags(1.0 / c) @ W
    else:
        K = W / c[:, None]
    return ReversibleChain(K, c / c.sum())


def check_detailed_balance(chain, tol: float = BALANCE_TOL) -> bool:
    """True iff the largest relative balance violation is at most ``tol``."""
    M = chain.Q if isinstance(chain, GeneratorChain) else chain.K
    return balance_violation(np.asarray(chain.pi), M) <= tol


def stationary_from_kernel(K) -> np.ndarray:
    """Stationary distribution of an irreducible stochastic matrix by a direct solve."""
    n = K.shape[0]
    ncomp, _ = connected_components(sp.csr_matrix(K), directed=True, connection="strong")
    if ncomp > 1:
        raise ChainError(f"kernel is reducible ({ncomp} communicating classes)")
    if sp.issparse(K) or n > DENSE_MAX:
        A = (sp.csr_matrix(K).T - sp.identity(n, format="csr")).tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[-1] = 1.0
        from scipy.sparse.linalg import spsolve

        pi = spsolve(A.tocsc(), b)
    else:
        K = np.asarray(K, dtype=float)
        A = K.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise ChainError(f"stationary solve failed: {exc}") from None
    if not np.all(np.isfinite(pi)) or pi.min() < -STRUCT_TOL:
        raise ChainError("stationary solve did not produce a probability vector")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.max(np.abs(K.T @ pi - pi))
    if resid > STRUCT_TOL:
        raise ChainError(f"stationary residual {resid:.3g} exceeds {STRUCT_TOL}")
    return pi


def event_mass(chain, C: EventSet) -> float:
    if C.mask.shape != (chain.n,):
        raise ChainError("event mask length does not match the chain")
    return float(chain.pi[C.mask].sum())


def embed_discrete(gen: GeneratorChain, t: float) -> ReversibleChain:
    """The time-``t`` skeleton ``exp(tQ)`` as a discrete-time chain."""
    from .spectral import heat_operator

    if t < 0:
        raise ChainError("embedding time must be nonnegative")
    T = heat_operator(gen, t)
    # symmetrise the flux so tiny entries stay exactly balanced
    F = gen.pi[:, None] * T
    F = np.clip(0.5 * (F + F.T), 0.0, None)
    K = F / gen.pi[:, None]
    K /= K.sum(axis=1, keepdims=True)
    return ReversibleChain(K, gen.pi)


def generator_from_rates(W: np.ndarray, pi: np.ndarray) -> GeneratorChain:
    """Reversible generator with off-diagonal rates ``W_ij / pi_i`` for symmetric ``W``."""
    W = np.asarray(W, dtype=float)
    pi = np.asarray(pi, dtype=float)
    S = 0.5 * (W + W.T)
    np.fill_diagonal(S, 0.0)
    Q = S / pi[:, None]
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorChain(Q, pi / pi.sum())


# ---------------------------------------------------------------------------
# text formats


def _lines(text: str):
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def parse_chain(text: str, path: str | None = None) -> ReversibleChain:
    """Parse ``N``, then ``N`` kernel rows, then an optional line of weights."""
    lines = list(_lines(text))
    if not lines:
        raise ChainParseError("empty chain file", 1, path)
    lineno, head = lines[0]
    try:
        n = int(head)
    except ValueError:
        raise ChainParseError(f"expected state count, got {head!r}", lineno, path) from None
    if n < 1:
        raise ChainParseError("state count must be positive", lineno, path)
    if len(lines) - 1 not in (n, n + 1):
        last = lines[-1][0]
        raise ChainParseError(f"expected {n} or {n + 1} rows after the header, got {len(lines) - 1}",
                              last, path)

    def row(lineno, line):
        try:
            vals = [float(x) for x in line.replace(",", " ").split()]
        except ValueError:
            raise ChainParseError(f"non-numeric entry in {line!r}", lineno, path) from None
        if len(vals) != n:
            raise ChainParseError(f"expected {n} entries, got {len(vals)}", lineno, path)
        return vals

    K = np.array([row(*lines[i]) for i in range(1, n + 1)])
    if len(lines) == n + 2:
        pi = np.array(row(*lines[n + 1]))
        pi = pi / pi.sum()
    else:
        pi = stationary_from_kernel(K)
    return ReversibleChain(K, pi)


def read_chain(path: str | Path) -> ReversibleChain:
    return parse_chain(Path(path).read_text(), str(path))


def format_chain(chain: ReversibleChain) -> str:
    K = chain.dense_kernel()
    out = [str(chain.n)]
    out += [" ".join(f"{x:.17g}" for x in row) for row in K]
    out.append(" ".join(f"{x:.17g}" for x in chain.pi))
    return "\n".join(out) + "\n"


def write_chain(chain: ReversibleChain, path: str | Path) -> None:
    Path(path).write_text(format_chain(chain))


def parse_conductance_graph(text: str, n: int | None = None,
                            path: str | None = None) -> ConductanceGraph:
    """Parse ``u v c`` lines; the vertex count is ``n`` or one past the largest label."""
    edges: list[tuple[int, int, float]] = []
    for lineno, line in _lines(text):
        parts = line.split()
        if len(parts) != 3:
            raise ChainParseError(f"expected 'u v c', got {line!r}", lineno, path)
        try:
            u, v, c = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ChainParseError(f"malformed edge {line!r}", lineno, path) from None
        if u < 0 or v < 0:
            raise ChainParseError("vertex labels must be nonnegative", lineno, path)
        edges.append((u, v, c))
    if not edges:
        raise ChainParseError("no edges", None, path)
    if n is None:
        n = 1 + max(max(u, v) for u, v, _ in edges)
    return ConductanceGraph(n, tuple(edges))


def read_conductance_graph(path: str | Path, n: int | None = None) -> ConductanceGraph:
    return parse_conductance_graph(Path(path).read_text(), n, str(path))


def conductance_graph_from_matrix(W: np.ndarray) -> ConductanceGraph:
    """Edge list of the upper triangle (diagonal = loops) of a symmetric matrix."""
    W = np.asarray(W, dtype=float)
    iu, ju = np.triu_indices(W.shape[0])
    keep = W[iu, ju] > 0
    return ConductanceGraph(W.shape[0], tuple(zip(iu[keep].tolist(), ju[keep].tolist(),
                                                  W[iu, ju][keep].tolist())))
