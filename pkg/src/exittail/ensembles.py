"""Random reversible chains and events for property tests and scans."""

from __future__ import annotations

import numpy as np

from .chain_core import (
    ConductanceGraph,
    EventSet,
    GeneratorChain,
    ReversibleChain,
    from_conductances,
    generator_from_rates,
)


def random_conductance_graph(rng: np.random.Generator, n: int, density: float = 0.6,
                             loops: bool = True) -> ConductanceGraph:
    """Connected random conductances on ``n`` vertices.

    A random spanning path guarantees connectivity; other pairs are added
    with probability ``density``.  Weights are lognormal so that the
    resulting spectra are spread out.
    """
    if n < 1:
        raise ValueError("need at least one vertex")
    edges: dict[tuple[int, int], float] = {}
    order = rng.permutation(n)
    for a, b in zip(order, order[1:]):
        edges[(min(a, b), max(a, b))] = float(rng.lognormal(0.0, 1.0))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < density:
                edges[(i, j)] = float(rng.lognormal(0.0, 1.0))
        if loops and rng.random() < 0.5:
            edges[(i, i)] = float(rng.lognormal(0.0, 1.0))
    if n == 1:
        edges[(0, 0)] = 1.0
    return ConductanceGraph(n, [(int(i), int(j), w) for (i, j), w in edges.items()])


def random_chain(rng: np.random.Generator, n: int, **kw) -> ReversibleChain:
    return from_conductances(random_conductance_graph(rng, n, **kw))


def random_generator(rng: np.random.Generator, n: int, density: float = 0.6) -> GeneratorChain:
    """Reversible generator with ``Q_ij = w_ij / pi_i`` for random symmetric ``w``."""
    g = random_conductance_graph(rng, n, density, loops=False)
    W = g.weight_matrix(sparse=False)
    np.fill_diagonal(W, 0.0)
    pi = rng.dirichlet(np.ones(n))
    return generator_from_rates(W, pi)


def random_event(rng: np.random.Generator, chain, p_range=(0.05, 0.9),
                 attempts: int = 200) -> EventSet:
    """Random nonempty proper subset whose stationary mass lies in ``p_range``.

    Falls back to the subset with mass closest to the range after
    ``attempts`` draws.
    """
    lo, hi = p_range
    n = chain.n
    if n < 2:
        raise ValueError("need at least two states for a proper event")
    best, best_gap = None, np.inf
    for _ in range(attempts):
        mask = rng.random(n) < rng.uniform(0.2, 0.8)
        if not mask.any() or mask.all():
            continue
        p = float(chain.pi[mask].sum())
        if lo <= p <= hi:
            return EventSet.of(chain, mask)
        gap = min(abs(p - lo), abs(p - hi))
        if gap < best_gap:
            best, best_gap = mask, gap
    if best is None:
        best = np.zeros(n, dtype=bool)
        best[0] = True
    return EventSet.of(chain, best)


def random_instance(rng: np.random.Generator, n_min: int, n_max: int, p_range=(0.05, 0.9),
                    generator: bool = False):
    """A random chain (or generator) with an event whose mass lies in ``p_range``."""
    lo, hi = p_range
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        chain = random_generator(rng, n) if generator else random_chain(rng, n)
        C = random_event(rng, chain, p_range)
        if lo <= C.p <= hi:
            return chain, C
