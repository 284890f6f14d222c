import itertools
import math

import networkx as nx
import numpy as np
import pytest

from exittail.dynperc import (
    LatticeSpec,
    ball_geometry,
    crossing_geometry,
    estimate_decorrelation,
    estimate_piv,
    exact_piv,
    fkg_report,
    guard_lower_bound,
    half_unit_ratios,
    lattice_from_bits,
    lower_bound_half_units,
    pivotal_flux,
    sample_critical,
    simulate_crossing,
    simulate_fet,
    survival_curve,
)
from exittail.dynperc.reference import crossing_from_scratch, replay_crossing, write_event_log
from exittail.seeding import replica_seed


# ---------------------------------------------------------------------------
# independent crossing oracle built straight from lattice coordinates


def tri_crosses(n, bits):
    G = nx.Graph()
    G.add_nodes_from(["L", "R"])
    open_site = lambda i, j: bits[j * n + i] == 1  # noqa: E731
    for j in range(n):
        for i in range(n):
            if not open_site(i, j):
                continue
            G.add_node((i, j))
            if i == 0:
                G.add_edge("L", (i, j))
            if i == n - 1:
                G.add_edge("R", (i, j))
            for di, dj in ((1, 0), (0, 1), (-1, 1)):
                a, b = i + di, j + dj
                if 0 <= a < n and 0 <= b < n and open_site(a, b):
                    G.add_edge((i, j), (a, b))
    return nx.has_path(G, "L", "R")


def z2_crosses(n, bits):
    G = nx.Graph()
    G.add_nodes_from(["L", "R"])
    for y in range(n):
        G.add_edge("L", (0, y))
        G.add_edge("R", (n, y))
        for x in range(n):
            if bits[y * n + x]:
                G.add_edge((x, y), (x + 1, y))
    b = n * n
    for x in range(1, n):
        for y in range(n - 1):
            if bits[b]:
                G.add_edge((x, y), (x, y + 1))
            b += 1
    return nx.has_path(G, "L", "R")


ORACLE = {"TriSite": tri_crosses, "Z2Bond": z2_crosses}


def oracle_pivotals(kind, n, bits):
    base = ORACLE[kind](n, bits)
    count = 0
    for k in range(bits.size):
        flipped = bits.copy()
        flipped[k] ^= 1
        count += ORACLE[kind](n, flipped) != base
    return count


@pytest.mark.parametrize("kind", ["TriSite", "Z2Bond"])
@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_crossing_and_pivotals_match_networkx(kind, n):
    spec = LatticeSpec(kind, n)
    for seed in range(25):
        lat = sample_critical(spec, seed)
        assert lat.has_crossing() == ORACLE[kind](n, lat.bits)
        assert lat.count_pivotal() == oracle_pivotals(kind, n, lat.bits)


@pytest.mark.parametrize("kind, n", [("TriSite", 3), ("Z2Bond", 2)])
def test_primal_and_dual_are_complementary(kind, n):
    # exactly one of the left-right open crossing and the dual closed crossing occurs
    g = crossing_geometry(kind, n)
    for code in range(2 ** g.n_bits):
        bits = np.array([(code >> k) & 1 for k in range(g.n_bits)], np.uint8)
        assert crossing_from_scratch(g.primal, bits) != crossing_from_scratch(g.dual, bits)


def test_exhaustive_crossing_is_one_half_and_piv_frozen():
    piv, cross = exact_piv(LatticeSpec("TriSite", 4))
    assert cross == 0.5
    assert piv == 2.3486328125
    piv, cross = exact_piv(LatticeSpec("Z2Bond", 3))
    assert cross == 0.5
    assert piv == 2.21728515625
    with pytest.raises(ValueError, match="too many"):
        exact_piv(LatticeSpec("TriSite", 8))


def test_exhaustive_piv_matches_networkx_enumeration():
    n = 3
    total = 0
    for code in range(2 ** 9):
        bits = np.array([(code >> k) & 1 for k in range(9)], np.uint8)
        total += oracle_pivotals("TriSite", n, bits)
    assert exact_piv(LatticeSpec("TriSite", 3))[0] == total / 2 ** 9


def test_piv_estimate_brackets_exact():
    spec = LatticeSpec("TriSite", 4)
    est = estimate_piv(spec, 20000, 5)
    exact, _ = exact_piv(spec)
    assert abs(est.mean - exact) <= 2 * est.half_width
    assert abs(est.crossing - 0.5) <= 2 * est.crossing_half_width


def test_lattice_spec_validation():
    with pytest.raises(ValueError):
        LatticeSpec("Hex", 8)
    with pytest.raises(ValueError):
        LatticeSpec("TriSite", 1)
    with pytest.raises(ValueError, match="wrong length"):
        lattice_from_bits(LatticeSpec("TriSite", 3), np.zeros(4))
    lat = lattice_from_bits(LatticeSpec("TriSite", 3), np.ones(9))
    assert lat.has_crossing() and lat.open_fraction() == 1.0


def test_geometry_sizes():
    assert crossing_geometry("TriSite", 5).n_bits == 25
    # n^2 horizontal bonds and (n-1)^2 interior vertical bonds
    assert crossing_geometry("Z2Bond", 5).n_bits == 25 + 16
    assert ball_geometry("TriSite", 2).n_bits == 19
    assert ball_geometry("TriSite", 1).guard_bits.size == 6
    assert ball_geometry("Z2Bond", 1).guard_bits.size == 4


# ---------------------------------------------------------------------------
# dynamics


@pytest.mark.parametrize("kind", ["TriSite", "Z2Bond"])
def test_kernel_matches_pure_python_replay(kind, tmp_path):
    spec = LatticeSpec(kind, 5)
    grid = np.arange(0.0, 3.01, 0.5)
    run = simulate_crossing(spec, grid, 6, seed=42, rate=1.0)
    records = []
    for r in range(6):
        rec = replay_crossing(spec, 1.0, grid, 3.0, replica_seed(42, r), log_events=True)
        records.append(rec)
        assert list(run.status[r].astype(bool)) == rec.status
        assert run.exit_times[r] == rec.exit_time
        assert run.changes[r] == rec.changes
    write_event_log(tmp_path / "log.csv", records)
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "replica,event_time,bit,new_value"
    assert len(lines) == 1 + sum(len(r.events) for r in records)


def test_runs_are_deterministic_and_tracking_agrees():
    spec = LatticeSpec("TriSite", 8)
    grid = np.arange(0.0, 2.01, 0.25)
    a = simulate_crossing(spec, grid, 200, seed=3, rate=0.5, record_cluster=True)
    b = simulate_crossing(spec, grid, 200, seed=3, rate=0.5, record_cluster=True)
    np.testing.assert_array_equal(a.status, b.status)
    np.testing.assert_array_equal(a.exit_times, b.exit_times)
    np.testing.assert_array_equal(a.cluster, b.cluster)
    c = simulate_crossing(spec, grid, 200, seed=3, rate=0.5, track=False)
    np.testing.assert_array_equal(a.status, c.status)
    # a replica that exits has a non-crossing grid point no earlier than its exit
    for r in range(200):
        bad = np.flatnonzero(~a.status[r].astype(bool))
        if bad.size:
            assert a.exit_times[r] <= grid[bad[0]]


def test_zero_rate_freezes_configuration():
    spec = LatticeSpec("Z2Bond", 6)
    run = simulate_crossing(spec, [0.0, 1.0, 5.0], 100, seed=1, rate=0.0)
    assert np.all(run.status == run.status[:, :1])
    assert np.all(run.changes == 0)


def test_survival_and_half_unit_structure():
    spec = LatticeSpec("TriSite", 8)
    piv = exact_piv(LatticeSpec("TriSite", 4))[0]
    run = simulate_crossing(spec, np.arange(0, 2.01, 0.5), 4000, seed=11, piv=piv)
    surv = survival_curve(run)
    assert np.all(np.diff(surv.survival) <= 0)
    assert abs(surv.survival[0] - 0.5) <= 2 * surv.ci[0]
    for t, s, ci in zip(surv.t[1:], surv.survival[1:], surv.ci[1:]):
        assert s >= lower_bound_half_units(t) - 2 * ci
    steps = half_unit_ratios(run, 4)
    assert len(steps) == 4
    flux, flux_ci = pivotal_flux(run)
    assert 0 < flux < 2
    with pytest.raises(ValueError):
        survival_curve(run, [3.0])


def test_lower_bound_values():
    assert lower_bound_half_units(0.5) == 0.25
    assert lower_bound_half_units(0.6) == 0.0625
    assert lower_bound_half_units(1.0) == 0.0625


def test_decorrelation_estimate_and_envelope():
    spec = LatticeSpec("TriSite", 6)
    run = simulate_crossing(spec, np.arange(0.0, 9.0), 3000, seed=4, rate=0.3, track=False)
    dec = estimate_decorrelation(run, p=0.5, max_lag=6, average_origins=True)
    # covariance of a fair indicator with itself, exact with p = 1/2 centring
    assert dec.corr[0] == 0.25 and dec.ci[0] == 0.0
    assert dec.corr[-1] < dec.corr[1] < 0.25
    curve = dec.upper_curve()
    assert curve.is_nonincreasing()
    assert curve(0) == 1.0
    assert np.all(curve.values >= np.minimum.accumulate(dec.corr / 0.25) - 1e-12)


def test_fkg_report_inconclusive_without_survivors():
    spec = LatticeSpec("TriSite", 6)
    run = simulate_crossing(spec, [0.0, 1.0], 50, seed=2, rate=1.0, record_cluster=True)
    rep = fkg_report(run, 1.0)
    assert rep.inconclusive and not rep.passed
    with pytest.raises(ValueError, match="grid"):
        fkg_report(run, 0.7)


def test_fet_guard_bound_and_coupling():
    res = simulate_fet("TriSite", [1, 2, 4], 3.0, 3000, seed=6)
    assert res.monotone_violations() == 0
    s, ci = res.survival([0.5, 1.0])
    for j, t in enumerate([0.5, 1.0]):
        # every radius needs an open neighbour of the origin
        assert s[0, j] >= guard_lower_bound("TriSite", t) - 2 * ci[0, j]
        assert np.all(np.diff(s[:, j]) >= 0)
    assert guard_lower_bound("TriSite", 0.0) == 0.5 ** 6
    assert guard_lower_bound("Z2Bond", 2.0) == pytest.approx((0.5 * math.exp(-1)) ** 4)
