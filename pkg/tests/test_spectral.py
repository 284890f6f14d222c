import math

import numpy as np
import pytest
from scipy.linalg import expm

from exittail.chain_core import EventSet, ReversibleChain
from exittail.ensembles import random_chain, random_generator
from exittail.spectral import (
    DecorrelationCurve,
    decorrelation_curve,
    easyfact_check,
    heat_operator,
    pairwise_correlation,
    projection_product_bound,
    projection_product_norm,
    spectrum,
    variance_series,
)


def test_two_state_spectrum(two_state):
    rep = spectrum(two_state)
    np.testing.assert_allclose(rep.eigenvalues, [1.0, 0.25], atol=1e-14)
    assert rep.gap == pytest.approx(0.75)
    assert rep.abs_gap == pytest.approx(0.75)
    assert rep.generator_gap is None


def test_abs_gap_sees_negative_eigenvalue():
    # eigenvalues 1 and -0.8
    K = np.array([[0.1, 0.9], [0.9, 0.1]])
    rep = spectrum(ReversibleChain(K, np.array([0.5, 0.5])))
    assert rep.gap == pytest.approx(1.8)
    assert rep.abs_gap == pytest.approx(0.2)


def test_generator_gap(two_state_generator):
    assert spectrum(two_state_generator).generator_gap == pytest.approx(3.0)


def test_heat_operator_matches_expm(two_state_generator):
    np.testing.assert_allclose(heat_operator(two_state_generator, 0.7),
                               expm(0.7 * two_state_generator.Q), atol=1e-12)


def test_two_state_decorrelation_closed_form(two_state):
    # Var[K^s f] / Var f = (1/4)^(2s), so d(u) = 4^(-u) at even u
    C = EventSet.of(two_state, [0])
    d = decorrelation_curve(two_state, C, 10)
    np.testing.assert_allclose(d.times, [0, 2, 4, 6, 8, 10])
    np.testing.assert_allclose(d.values, 4.0 ** -d.times, rtol=1e-10)


def test_decorrelation_matches_matrix_power_oracle():
    rng = np.random.default_rng(5)
    chain = random_chain(rng, 6)
    C = EventSet.of(chain, [0, 2, 3])
    K = chain.dense_kernel()
    f = C.indicator - C.p
    var = C.p * (1 - C.p)
    d = decorrelation_curve(chain, C, 12)
    for s in range(7):
        g = np.linalg.matrix_power(K, s) @ f
        assert d(2 * s) == pytest.approx(np.dot(chain.pi, g * g) / var, rel=1e-9, abs=1e-15)


def test_variance_and_correlation_agree_with_reversibility():
    # Var[K^s f] = Cov(f(w_0), f(w_2s)) for reversible chains
    rng = np.random.default_rng(11)
    chain = random_chain(rng, 5)
    C = EventSet.of(chain, [1, 4])
    v = variance_series(chain, C, 4)
    for s in range(5):
        assert v[s] == pytest.approx(pairwise_correlation(chain, C, 2 * s), abs=1e-14)


def test_envelope_and_exact_modes(two_state):
    C = EventSet.of(two_state, [0])
    env = decorrelation_curve(two_state, C, 10)
    assert env.mode == "envelope"
    # step function: odd arguments use the sample at the even point below
    assert env(3.0) == env(2.0)
    assert env(3.0) >= decorrelation_curve(two_state, C, 10, mode="exact-at-integers")(4.0)
    exact = decorrelation_curve(two_state, C, 10, mode="exact-at-integers")
    with pytest.raises(ValueError, match="off-grid"):
        exact(3.0)
    assert exact.admissible_k(12, 111) == [1, 2, 3, 4, 6, 12]
    assert env.admissible_k(5, 3) == [1, 2, 3]
    with pytest.raises(ValueError, match="integer horizon"):
        env.admissible_k(2.5, 10)


def test_generator_curve_is_continuous(two_state_generator):
    C = EventSet.of(two_state_generator, [0])
    d = decorrelation_curve(two_state_generator, C, 5)
    assert d.mode == "continuous"
    # single nontrivial eigenvalue -3
    assert d(1.3) == pytest.approx(math.exp(-3 * 1.3))
    assert d.admissible_k(2.5, 4) == [1, 2, 3, 4]


def test_curve_validation():
    with pytest.raises(ValueError):
        DecorrelationCurve(0.5, np.array([0.0, 2.0]), np.array([1.0, 0.5]), mode="nope")
    with pytest.raises(ValueError, match="start at t = 0"):
        DecorrelationCurve(0.5, np.array([1.0, 2.0]), np.array([1.0, 0.5]))
    with pytest.raises(ValueError, match="increasing"):
        DecorrelationCurve(0.5, np.array([0.0, 0.0]), np.array([1.0, 0.5]))
    f = DecorrelationCurve.from_function(0.3, lambda s: 1 / (1 + s))
    assert f(3) == 0.25 and not f.discrete_time


def test_decorrelation_rejects_trivial_event(two_state):
    with pytest.raises(ValueError, match="mass 0 or 1"):
        decorrelation_curve(two_state, EventSet.of(two_state, [0, 1]), 4)


def test_curve_csv(tmp_path, two_state):
    d = decorrelation_curve(two_state, EventSet.of(two_state, [0]), 4)
    d.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,d"
    assert float(lines[2].split(",")[1]) == d.values[1]


def test_projection_norm_below_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        gen = random_generator(rng, 5)
        delta = spectrum(gen).generator_gap
        C1 = EventSet.of(gen, [0, 1])
        C2 = EventSet.of(gen, [1, 3])
        for t in (0.0, 0.2 / delta, 1.0 / delta):
            lhs = projection_product_norm(gen, C1, C2, t)
            rhs = projection_product_bound(C1.p, C2.p, delta, t)
            assert lhs <= rhs * (1 + 1e-12)


def test_projection_norm_at_zero_time_is_overlap(two_state_generator):
    C = EventSet.of(two_state_generator, [0])
    assert projection_product_norm(two_state_generator, C, C, 0.0) == pytest.approx(1.0)
    D = EventSet.of(two_state_generator, [1])
    assert projection_product_norm(two_state_generator, C, D, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_easyfact_holds_and_rejects_large_functions():
    rng = np.random.default_rng(9)
    chain = random_chain(rng, 6)
    for _ in range(50):
        g1, g2 = rng.uniform(0, 1, 6), rng.uniform(0, 1, 6)
        g1 /= math.sqrt(np.dot(chain.pi, g1 * g1))
        g2 /= math.sqrt(np.dot(chain.pi, g2 * g2))
        assert easyfact_check(chain, g1, g2)
    with pytest.raises(ValueError, match="unit ball"):
        easyfact_check(chain, np.full(6, 2.0), np.ones(6))
