"""Lattice geometries as gated graphs.

A gated graph is a CSR adjacency in which each edge and each vertex may be
tied to one percolation bit.  An edge (or vertex) is usable when its bit is
open, or closed if the graph is ``invert``-ed; this lets the planar dual of a
crossing geometry share the primal bit array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("TriSite", "Z2Bond")

# neighbour offsets on the triangular lattice in axial coordinates
TRI_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


@dataclass(frozen=True, eq=False)
class GatedGraph:
    indptr: np.ndarray
    nbr: np.ndarray
    edge_bit: np.ndarray  # bit gating each CSR entry, -1 if always usable
    vertex_bit: np.ndarray  # bit gating each vertex, -1 if always usable
    sources: np.ndarray  # bool per vertex
    targets: np.ndarray  # bool per vertex
    invert: bool = False
    bit_u: np.ndarray | None = None  # endpoints of each bit (equal for site bits)
    bit_w: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return self.indptr.size - 1

    def arrays(self) -> tuple:
        """Positional arguments for the compiled kernels."""
        return (self.indptr, self.nbr, self.edge_bit, self.vertex_bit,
                self.sources, self.targets, np.uint8(1 if self.invert else 0))

    def bit_arrays(self) -> tuple:
        return self.bit_u, self.bit_w


def _csr(n_vertices: int, edges, edge_bits=None, vertex_bit=None, sources=None,
         targets=None, invert=False) -> GatedGraph:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    eb = np.full(len(edges), -1, np.int64) if edge_bits is None else np.asarray(edge_bits, np.int64)
    u = np.concatenate([edges[:, 0], edges[:, 1]])
    v = np.concatenate([edges[:, 1], edges[:, 0]])
    b = np.concatenate([eb, eb])
    order = np.lexsort((v, u))
    u, v, b = u[order], v[order], b[order]
    indptr = np.zeros(n_vertices + 1, np.int64)
    np.add.at(indptr, u + 1, 1)
    indptr = np.cumsum(indptr)
    vb = np.full(n_vertices, -1, np.int64) if vertex_bit is None else np.asarray(vertex_bit, np.int64)
    src = np.zeros(n_vertices, np.bool_) if sources is None else np.asarray(sources, np.bool_)
    tgt = np.zeros(n_vertices, np.bool_) if targets is None else np.asarray(targets, np.bool_)
    n_bits = int(max(eb.max(initial=-1), vb.max(initial=-1))) + 1
    bu = np.full(n_bits, -1, np.int64)
    bw = np.full(n_bits, -1, np.int64)
    for k, bit in enumerate(eb):
        if bit >= 0:
            bu[bit], bw[bit] = edges[k]
    for x, bit in enumerate(vb):
        if bit >= 0:
            bu[bit] = bw[bit] = x
    return GatedGraph(indptr, v.astype(np.int64), b, vb, src, tgt, invert, bu, bw)


@dataclass(frozen=True, eq=False)
class CrossingGeometry:
    """A rectangle-like region with its primal left-right and dual bottom-top graphs."""

    kind: str
    n: int
    n_bits: int
    primal: GatedGraph
    dual: GatedGraph


def tri_rhombus(n: int) -> CrossingGeometry:
    """``n x n`` rhombus of triangular-lattice sites; site ``(i, j)`` has index ``j*n + i``.

    Crossing runs from ``i = 0`` to ``i = n-1``; the blocking dual path of
    closed sites runs from ``j = 0`` to ``j = n-1`` on the same graph.
    """
    if n < 2:
        raise ValueError("lattice size must be at least 2")
    edges = []
    for j in range(n):
        for i in range(n):
            for di, dj in ((1, 0), (0, 1), (-1, 1)):
                a, b = i + di, j + dj
                if 0 <= a < n and 0 <= b < n:
                    edges.append((j * n + i, b * n + a))
    ii = np.tile(np.arange(n), n)
    jj = np.repeat(np.arange(n), n)
    sites = np.arange(n * n)
    primal = _csr(n * n, edges, vertex_bit=sites, sources=ii == 0, targets=ii == n - 1)
    dual = _csr(n * n, edges, vertex_bit=sites, sources=jj == 0, targets=jj == n - 1, invert=True)
    return CrossingGeometry("TriSite", n, n * n, primal, dual)


def z2_rectangle(n: int) -> CrossingGeometry:
    """Bond percolation on ``{0..n} x {0..n-1}`` with the side columns as terminals.

    Bits ``0..n^2-1`` are horizontal bonds ``h(x, y) = (x,y)-(x+1,y)`` at
    ``y*n + x``; bits from ``n^2`` are vertical bonds ``(x,y)-(x,y+1)`` for
    interior columns ``x = 1..n-1``.  The dual has faces ``(x, r)``,
    ``r = 0..n``, indexed ``r*n + x``, and crosses from ``r = 0`` to ``r = n``.
    The region is self-dual, so the crossing probability is exactly 1/2.
    """
    if n < 2:
        raise ValueError("lattice size must be at least 2")
    W = n + 1

    def pv(x, y):
        return y * W + x

    p_edges, p_bits, d_edges, d_bits = [], [], [], []
    for y in range(n):
        for x in range(n):
            bit = y * n + x
            p_edges.append((pv(x, y), pv(x + 1, y)))
            p_bits.append(bit)
            d_edges.append((y * n + x, (y + 1) * n + x))
            d_bits.append(bit)
    bit = n * n
    for x in range(1, n):
        for y in range(n - 1):
            p_edges.append((pv(x, y), pv(x, y + 1)))
            p_bits.append(bit)
            d_edges.append(((y + 1) * n + x - 1, (y + 1) * n + x))
            d_bits.append(bit)
            bit += 1
    xs = np.tile(np.arange(W), n)
    primal = _csr(W * n, p_edges, p_bits, sources=xs == 0, targets=xs == n)
    rows = np.repeat(np.arange(n + 1), n)
    dual = _csr(n * (n + 1), d_edges, d_bits, sources=rows == 0, targets=rows == n, invert=True)
    return CrossingGeometry("Z2Bond", n, bit, primal, dual)


def crossing_geometry(kind: str, n: int) -> CrossingGeometry:
    if kind == "TriSite":
        return tri_rhombus(n)
    if kind == "Z2Bond":
        return z2_rectangle(n)
    raise ValueError(f"unknown lattice kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class BallGeometry:
    """Ball of radius ``R`` around the origin with the origin as source and the sphere as target."""

    kind: str
    R: int
    n_bits: int
    graph: GatedGraph
    dist: np.ndarray  # lattice distance of each vertex from the origin
    guard_bits: np.ndarray  # bits adjacent to the origin


def tri_ball(R: int) -> BallGeometry:
    if R < 1:
        raise ValueError("radius must be at least 1")
    coords = [(q, r) for q in range(-R, R + 1) for r in range(-R, R + 1)
              if max(abs(q), abs(r), abs(q + r)) <= R]
    index = {c: k for k, c in enumerate(coords)}
    edges = []
    for (q, r), k in index.items():
        for dq, dr in ((1, 0), (0, 1), (1, -1)):
            m = index.get((q + dq, r + dr))
            if m is not None:
                edges.append((k, m))
    dist = np.array([max(abs(q), abs(r), abs(q + r)) for q, r in coords], np.int64)
    n = len(coords)
    g = _csr(n, edges, vertex_bit=np.arange(n), sources=dist == 0, targets=dist == R)
    guard = np.array(sorted(index[(dq, dr)] for dq, dr in TRI_STEPS), np.int64)
    return BallGeometry("TriSite", R, n, g, dist, guard)


def z2_ball(R: int) -> BallGeometry:
    if R < 1:
        raise ValueError("radius must be at least 1")
    side = 2 * R + 1

    def v(x, y):
        return (y + R) * side + (x + R)

    edges, bits = [], []
    guard = []
    for y in range(-R, R + 1):
        for x in range(-R, R + 1):
            for dx, dy in ((1, 0), (0, 1)):
                if x + dx <= R and y + dy <= R:
                    if (x, y) == (0, 0) or (x + dx, y + dy) == (0, 0):
                        guard.append(len(bits))
                    edges.append((v(x, y), v(x + dx, y + dy)))
                    bits.append(len(bits))
    xs = np.tile(np.arange(-R, R + 1), side)
    ys = np.repeat(np.arange(-R, R + 1), side)
    dist = np.maximum(np.abs(xs), np.abs(ys)).astype(np.int64)
    g = _csr(side * side, edges, bits, sources=dist == 0, targets=dist == R)
    return BallGeometry("Z2Bond", R, len(bits), g, dist, np.array(sorted(guard), np.int64))


def ball_geometry(kind: str, R: int) -> BallGeometry:
    if kind == "TriSite":
        return tri_ball(R)
    if kind == "Z2Bond":
        return z2_ball(R)
    raise ValueError(f"unknown lattice kind {kind!r}; expected one of {KINDS}")
