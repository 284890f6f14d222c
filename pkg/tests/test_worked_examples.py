"""Small worked examples with closed-form or exhaustive answers."""

import math

import numpy as np
import pytest

from exittail import sharp_examples as sx
from exittail.bounds import (
    DecayRegime,
    ScanEnsemble,
    WindowEvent,
    aksz_interval_mc,
    aksz_joint_exact,
    instance_rates,
    mass_bound_check,
    tmain_asymptotic,
    tmain_constant,
    lambda_recursion_terms,
)
from exittail.chain_core import (
    EventSet,
    GeneratorChain,
    ReversibleChain,
    balance_violation,
    from_conductances,
)
from exittail.dynperc import (
    LatticeSpec,
    lattice_from_bits,
    pivotal_flux,
    sample_critical,
    simulate_crossing,
    simulate_fet,
)
from exittail.ensembles import random_generator
from exittail.spectral import (
    decorrelation_curve,
    heat_operator,
    pairwise_correlation,
    spectrum,
    symmetric_heat,
    variance_decay,
)
from exittail.stats import loglog_fit


@pytest.fixture
def sym_two_state():
    return ReversibleChain(np.array([[0.75, 0.25], [0.25, 0.75]]), np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# chains


def test_walk_transition_from_site_two():
    spec = sx.ConductanceWalkSpec(1.5, 10)
    K = sx.build_conductance_walk(spec, sparse=False).dense_kernel()
    c = 2 ** -1.5
    assert K[spec.index(2), spec.index(3)] == pytest.approx(c / (2 * (1 + c)), rel=1e-14)
    # site 1: loop 1/2, edge to -1 of 1/2, edge to 2 of 1
    assert K[spec.index(1), spec.index(1)] == pytest.approx(0.25)


def test_walk_measure_is_mirror_symmetric():
    spec = sx.ConductanceWalkSpec(1.5, 30)
    chain = sx.build_conductance_walk(spec)
    for n in range(1, 31):
        assert chain.pi[spec.index(n)] == pytest.approx(chain.pi[spec.index(-n)], rel=1e-14)
    assert sx.positive_side(spec, chain).p == pytest.approx(0.5, rel=1e-14)


def test_detailed_balance_hand_example():
    K = np.array([[0.9, 0.1], [0.5, 0.5]])
    assert balance_violation(np.array([5 / 6, 1 / 6]), K) < 1e-12
    assert balance_violation(np.array([0.5, 0.5]), K) > 0.1


def test_conductance_measure_cross_check():
    rng = np.random.default_rng(0)
    W = rng.uniform(0, 1, (6, 6))
    W = W + W.T
    from exittail.chain_core import conductance_graph_from_matrix

    chain = from_conductances(conductance_graph_from_matrix(W))
    # a loop contributes its conductance once to the vertex total
    tot = W.sum(axis=1)
    np.testing.assert_allclose(chain.pi, tot / tot.sum(), atol=1e-12)


def test_two_state_heat_kernel():
    gen = GeneratorChain(np.array([[-1.0, 1.0], [1.0, -1.0]]), np.array([0.5, 0.5]))
    assert heat_operator(gen, math.log(2))[0, 1] == pytest.approx(3 / 8, rel=1e-14)
    np.testing.assert_allclose(heat_operator(gen, 0.0), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(heat_operator(gen, 40.0), 0.5, atol=1e-8)


def test_heat_operator_spectral_mapping_and_gap():
    rng = np.random.default_rng(12)
    gen = random_generator(rng, 6)
    rep = spectrum(gen)
    for t in (0.1, 0.5):
        ev = np.sort(np.linalg.eigvalsh(symmetric_heat(gen, t)))[::-1]
        np.testing.assert_allclose(ev, np.exp(t * rep.eigenvalues), atol=1e-9)
        lam = ev[1:]
        assert 1 - np.abs(lam).max() == pytest.approx(1 - math.exp(-rep.generator_gap * t), abs=1e-9)


# ---------------------------------------------------------------------------
# spectral quantities


def test_symmetric_two_state_spectrum_and_correlations(sym_two_state):
    rep = spectrum(sym_two_state)
    np.testing.assert_allclose(rep.eigenvalues, [1.0, 0.5], atol=1e-14)
    assert rep.gap == pytest.approx(0.5) and rep.abs_gap == pytest.approx(0.5)
    C = EventSet.of(sym_two_state, [1])
    assert pairwise_correlation(sym_two_state, C, 0) == pytest.approx(0.25)
    assert pairwise_correlation(sym_two_state, C, 1) == pytest.approx(1 / 8)
    assert variance_decay(sym_two_state, C, 0) == pytest.approx(0.25)
    for t in range(6):
        assert variance_decay(sym_two_state, C, t) == pytest.approx(
            pairwise_correlation(sym_two_state, C, 2 * t), abs=1e-12)
    d = decorrelation_curve(sym_two_state, C, 12)
    np.testing.assert_allclose(d.values, 2.0 ** -d.times, rtol=1e-12)


def test_iid_kernel_decorrelates_in_one_step(iid_half):
    chain, C = iid_half
    assert pairwise_correlation(chain, C, 1) == pytest.approx(0, abs=1e-15)
    assert variance_decay(chain, C, 3) == pytest.approx(0, abs=1e-15)


# ---------------------------------------------------------------------------
# bounds


def test_asymptotic_schedules():
    t = np.logspace(3, 6, 30)
    poly = DecayRegime("polynomial", alpha=2 / 3)
    slope = loglog_fit(t, [tmain_asymptotic(0.5, poly, x) for x in t]).slope
    assert abs(slope + 2 / 3) <= 0.1
    stretched = DecayRegime("stretched-exponential", alpha=1.0)
    expo = loglog_fit(t, [-math.log(tmain_asymptotic(0.5, stretched, x)) for x in t]).slope
    assert 0.4 <= expo <= 0.6
    # t <= 1 uses a single block
    assert tmain_asymptotic(0.5, stretched, 1.0) == pytest.approx(0.75 + tmain_constant(0.5) * stretched.d(2.0))


def test_mass_bound_edge_cases(iid_half, two_state):
    C = EventSet.of(two_state, [0])
    for lam in (0.4, 0.7, 0.95):
        lhs, _, ok = mass_bound_check(two_state, C, 0, lam)
        assert lhs == pytest.approx(C.p) and ok
    chain, D = iid_half
    lhs, rhs, ok = mass_bound_check(chain, D, 2, 0.75)
    assert lhs == 0.0 and ok


def test_recursion_small_m(two_state):
    C = EventSet.of(two_state, [1])
    for m in (0, 1):
        terms = lambda_recursion_terms(two_state, C, 1, 0.9, m)
        assert terms.holds


def test_joint_exact_degenerate_cases(two_state_generator):
    gen = two_state_generator
    C = EventSet.of(gen, [1])
    full = EventSet.of(gen, [0, 1])
    assert aksz_joint_exact(gen, [(C, 0.0)]) == pytest.approx(C.p)
    assert aksz_joint_exact(gen, [(full, 0.0), (full, 1.0), (full, 2.0)]) == pytest.approx(1.0)


def test_window_mc_degenerate_and_far_apart(two_state_generator):
    gen = two_state_generator
    C = EventSet.of(gen, [1])
    points = [WindowEvent(C, 0.0, 0.0), WindowEvent(C, 0.4, 0.4)]
    est = aksz_interval_mc(gen, points, 20000, seed=2)
    exact = aksz_joint_exact(gen, [(C, 0.0), (C, 0.4)])
    assert abs(est.estimate - exact) <= 4 * est.stderr
    far = [WindowEvent(C, 0.0, 0.3), WindowEvent(C, 30.0, 30.3)]
    est = aksz_interval_mc(gen, far, 20000, seed=3)
    single = far[0].probability(gen)
    assert abs(est.estimate - single ** 2) <= 4 * est.stderr


def test_scan_rates_closed_form(sym_two_state, iid_half):
    # exit: (1/2)(3/4)^t, rate log(4/3); decorrelation 2^-t, rate log 2
    C = EventSet.of(sym_two_state, [1])
    c, c_exit = instance_rates(sym_two_state, C, 60)
    assert c == pytest.approx(math.log(2), rel=1e-6)
    assert c_exit == pytest.approx(math.log(4 / 3), rel=1e-6)
    chain, D = iid_half
    c, c_exit = instance_rates(chain, D, 60)
    assert c == math.inf
    assert c_exit == pytest.approx(math.log(2), rel=1e-6)


# ---------------------------------------------------------------------------
# example chains


def test_conductance_walk_static_case():
    spec = sx.ConductanceWalkSpec(1.5, 50)
    chain = sx.build_conductance_walk(spec)
    sw = sx.walk_sweep(chain, sx.positive_side(spec, chain), 3)
    assert sw.corr[0] == pytest.approx(0.25)
    assert sw.survival[0] == pytest.approx(0.5)
    assert sw.ratio[0] == pytest.approx(0.5)


def test_even_sites_event_mass():
    spec = sx.ConductanceWalkSpec(1.5, 60)
    chain = from_conductances(sx.even_sites_graph(spec))
    even = spec.sites % 2 == 0
    assert chain.pi[even].sum() == pytest.approx(0.5)
    C = EventSet.of(chain, (spec.sites > 0) & even)
    assert C.p == pytest.approx(0.25)


def test_carne_varopoulos_diagonal_bound():
    spec = sx.ConductanceWalkSpec(1.5, 8)
    chain = sx.build_conductance_walk(spec, sparse=False)
    r = sx.carne_varopoulos(chain, 3, 3, 4)
    assert r.bound == pytest.approx(2.0) and r.ok


def test_srw_trivially_large_start():
    r = sx.srw_hitting_check(12, 1)
    assert r.bound == 1.0 and r.ok


# ---------------------------------------------------------------------------
# percolation


def test_open_fraction_is_fair():
    spec = LatticeSpec("Z2Bond", 16)
    fr = np.array([sample_critical(spec, s).open_fraction() for s in range(400)])
    sigma = fr.std(ddof=1) / math.sqrt(fr.size)
    assert abs(fr.mean() - 0.5) <= 3 * sigma
    np.testing.assert_array_equal(sample_critical(spec, 7).bits, sample_critical(spec, 7).bits)


@pytest.mark.parametrize("kind, n", [("TriSite", 4), ("Z2Bond", 4), ("TriSite", 6)])
def test_extreme_configurations(kind, n):
    spec = LatticeSpec(kind, n)
    nb = spec.geometry().n_bits
    assert lattice_from_bits(spec, np.ones(nb)).has_crossing()
    assert not lattice_from_bits(spec, np.zeros(nb)).has_crossing()
    assert lattice_from_bits(spec, np.ones(nb)).count_pivotal() == 0


def test_single_path_is_all_pivotal():
    n = 5
    spec = LatticeSpec("TriSite", n)
    bits = np.zeros(n * n, np.uint8)
    row = 2
    bits[row * n: row * n + n] = 1
    lat = lattice_from_bits(spec, bits)
    assert lat.has_crossing()
    # every site on the row is pivotal; opening one closed site cannot block the crossing
    assert lat.count_pivotal() == n


def test_flux_scales_with_rate_and_vanishes_at_zero():
    spec = LatticeSpec("TriSite", 8)
    grid = [0.0, 2.0]
    f1, h1 = pivotal_flux(simulate_crossing(spec, grid, 3000, seed=1, rate=0.2))
    f2, h2 = pivotal_flux(simulate_crossing(spec, grid, 3000, seed=1, rate=0.4))
    assert abs(f2 - 2 * f1) <= 2 * (h2 + 2 * h1)
    f0, _ = pivotal_flux(simulate_crossing(spec, grid, 200, seed=1, rate=0.0))
    assert f0 == 0.0


def test_static_fkg_direction():
    spec = LatticeSpec("TriSite", 10)
    run = simulate_crossing(spec, [0.0, 0.5], 4000, seed=5, rate=1.0)
    cross = run.status[:, 0].astype(bool)
    assert run.density[cross, 0].mean() > 0.5 > run.density[~cross, 0].mean()


def test_fet_zero_exactly_when_initially_connected():
    res = simulate_fet("TriSite", [2], 2.0, 2000, seed=4)
    t = res.times[:, 0]
    from exittail.dynperc import ball_geometry
    from exittail.dynperc.reference import crossing_from_scratch
    from exittail.seeding import replica_seed
    from exittail.dynperc import _kernels as K

    g = ball_geometry("TriSite", 2)
    for r in range(200):
        bits = K.random_bits(np.uint32(replica_seed(4, r)), g.n_bits)
        connected = crossing_from_scratch(g.graph, bits)
        assert (t[r] == 0.0) == connected
    assert np.all(t >= 0)
