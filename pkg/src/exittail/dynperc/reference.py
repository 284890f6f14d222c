"""Pure-Python replay of the compiled crossing dynamics.

Draws the same uniforms in the same order as the compiled kernel, but
recomputes the crossing from scratch after every flip.  Slow; meant for
auditing small runs and for emitting raw event logs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lattice import GatedGraph
from .simulate import LatticeSpec


def _usable(bit: int, inv: bool, bits) -> bool:
    return bit < 0 or (int(bits[bit]) ^ int(inv)) == 1


def crossing_from_scratch(g: GatedGraph, bits) -> bool:
    seen = set()
    todo = deque()
    for v in np.flatnonzero(g.sources):
        if _usable(g.vertex_bit[v], g.invert, bits):
            seen.add(int(v))
            todo.append(int(v))
    while todo:
        u = todo.popleft()
        if g.targets[u]:
            return True
        for k in range(g.indptr[u], g.indptr[u + 1]):
            w = int(g.nbr[k])
            if w in seen or not _usable(g.edge_bit[k], g.invert, bits):
                continue
            if not _usable(g.vertex_bit[w], g.invert, bits):
                continue
            seen.add(w)
            todo.append(w)
    return False


@dataclass
class ReplayRecord:
    status: list[bool]
    exit_time: float
    changes: int
    events: list[tuple[float, int, int]] = field(default_factory=list)


def replay_crossing(spec: LatticeSpec, rate: float, grid, t_max: float, seed: int,
                    log_events: bool = False) -> ReplayRecord:
    """One replica, bit-for-bit the same trajectory as the compiled kernel."""
    g = spec.geometry()
    rs = np.random.RandomState(int(seed))
    bits = np.array([1 if rs.random_sample() < 0.5 else 0 for _ in range(g.n_bits)], np.uint8)
    S = crossing_from_scratch(g.primal, bits)
    exit_time = math.inf if S else 0.0
    changes = 0
    status = []
    grid = list(grid)
    gi = 0
    t = 0.0
    total = rate * g.n_bits
    events = []
    while True:
        u = rs.random_sample()
        tn = t + (-math.log(1.0 - u) / total if total > 0 else math.inf)
        b = min(int(rs.random_sample() * g.n_bits), g.n_bits - 1)
        new = 1 if rs.random_sample() < 0.5 else 0
        while gi < len(grid) and grid[gi] < tn:
            status.append(S)
            gi += 1
        if tn > t_max:
            break
        t = tn
        if log_events:
            events.append((t, b, new))
        if bits[b] == new:
            continue
        bits[b] = new
        now = crossing_from_scratch(g.primal, bits)
        if now != S:
            changes += 1
            if S and exit_time == math.inf:
                exit_time = t
            S = now
    return ReplayRecord(status, exit_time, changes, events)


def write_event_log(path, records: list[ReplayRecord]) -> None:
    """Newline-delimited ``replica,event_time,bit,new_value`` records."""
    with open(path, "w") as fh:
        fh.write("replica,event_time,bit,new_value\n")
        for r, rec in enumerate(records):
            for t, b, v in rec.events:
                fh.write(f"{r},{t:.17g},{b},{v}\n")
