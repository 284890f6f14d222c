import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exittail.chain_core import check_detailed_balance
from exittail.ensembles import random_chain, random_event, random_generator, random_instance
from exittail.seeding import block_rngs, replica_seed, replica_seeds
from exittail.stats import loglinear_fit, loglog_fit, mean_ci, proportion_ci


def test_proportion_ci():
    p, hw = proportion_ci(50, 100)
    assert p == 0.5
    assert hw == pytest.approx(1.959963984540054 * 0.05)
    assert proportion_ci(0, 10) == (0.0, 0.0)
    with pytest.raises(ValueError):
        proportion_ci(0, 0)


def test_mean_ci():
    m, hw = mean_ci([1.0, 3.0])
    assert m == 2.0
    assert hw == pytest.approx(1.959963984540054 * math.sqrt(2) / math.sqrt(2))
    assert mean_ci([4.0])[1] == math.inf


def test_line_fits():
    t = np.arange(1.0, 50.0)
    f = loglog_fit(t, 2 * t ** -1.5)
    assert f.slope == pytest.approx(-1.5) and f.r2 == pytest.approx(1.0)
    g = loglinear_fit(t, np.exp(-0.3 * t), window=(5, 20))
    assert g.slope == pytest.approx(-0.3)
    assert g.to_dict()["window"] == [5.0, 20.0]


def test_replica_seeds_are_stable():
    assert replica_seed(1, 0) == replica_seed(1, 0)
    assert replica_seed(1, 0) != replica_seed(1, 1)
    s = replica_seeds(7, 5)
    assert s.shape == (5,) and s[3] == replica_seed(7, 3)
    assert np.all((0 <= s) & (s < 2 ** 32))


def test_block_rngs_cover_total_and_depend_only_on_index():
    blocks = list(block_rngs(3, 2500, 1000))
    assert [n for n, _ in blocks] == [1000, 1000, 500]
    first = [rng.random() for _, rng in block_rngs(3, 2500, 1000)]
    again = [rng.random() for _, rng in block_rngs(3, 2500, 1000)]
    assert first == again
    assert len(set(first)) == 3
    with pytest.raises(ValueError):
        next(block_rngs(3, 10, 0))


@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 9))
def test_random_chains_are_reversible(seed, n):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, n)
    assert chain.n == n and check_detailed_balance(chain)
    gen = random_generator(rng, n)
    assert np.allclose(gen.Q.sum(axis=1), 0, atol=1e-12 * np.abs(gen.Q).max())


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_random_instances_respect_mass_range(seed):
    rng = np.random.default_rng(seed)
    chain, C = random_instance(rng, 2, 8, p_range=(0.1, 0.8))
    assert 0.1 <= C.p <= 0.8
    D = random_event(rng, chain)
    assert 0 < D.p < 1
