"""Deterministic seed derivation for replicated simulations."""

from __future__ import annotations

from typing import Iterator

import numpy as np


def replica_seed(master: int, replica: int) -> int:
    """32-bit seed for replica ``replica`` of a run seeded with ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(replica),))
    return int(ss.generate_state(1, np.uint32)[0])


def replica_seeds(master: int, replicas: int) -> np.ndarray:
    return np.array([replica_seed(master, r) for r in range(replicas)], dtype=np.int64)


def block_rngs(master: int, total: int, block: int) -> Iterator[tuple[int, np.random.Generator]]:
    """Yield ``(size, rng)`` for fixed-size blocks covering ``total`` draws.

    Block ``b`` uses ``SeedSequence(master, spawn_key=(b,))``, so results do
    not depend on how blocks are later distributed over workers.
    """
    if block <= 0:
        raise ValueError("block size must be positive")
    for b, start in enumerate(range(0, total, block)):
        ss = np.random.SeedSequence(int(master), spawn_key=(b,))
        yield min(block, total - start), np.random.default_rng(ss)
