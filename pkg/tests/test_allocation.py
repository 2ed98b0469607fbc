import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chanbond import allocation as al
from chanbond.scenario import Channel, bundled_scenario, channels_overlap, make_scenario


def test_random_allocation_uniform_single_channel():
    plan = al.random_allocation(100_000, 5, [1], seed=4)
    counts = Counter(ch.low for ch in plan.channels)
    assert set(counts) == {1, 2, 3, 4, 5}
    exp = 100_000 / 5
    chi2 = sum((c - exp) ** 2 / exp for c in counts.values())
    assert chi2 < 18.47  # 0.999 quantile, 4 dof


def test_random_allocation_forced_and_deterministic():
    assert all(ch == Channel(1, 8) for ch in al.random_allocation(5, 8, [8], seed=1).channels)
    assert al.random_allocation(6, 16, [1, 2, 4], 9) == al.random_allocation(6, 16, [1, 2, 4], 9)
    with pytest.raises(al.AllocationError):
        al.random_allocation(2, 4, [8], seed=0)


def test_ac_allocation_blocks():
    plan = al.ac_allocation(20_000, 16, [8], seed=2)
    lows = Counter(ch.low for ch in plan.channels)
    assert set(lows) == {1, 9}
    assert abs(lows[1] / 20_000 - 0.5) < 0.02
    assert plan.is_ac_aligned()
    with pytest.raises(al.AllocationError):
        al.ac_allocation(1, 16, [16], seed=0)


def test_same_width_never_partially_overlaps_under_ac():
    for c in (1, 2, 4, 8):
        blocks = [Channel(c * (z - 1) + 1, c * z) for z in range(1, 16 // c + 1)]
        for a, b in itertools.product(blocks, repeat=2):
            assert a == b or not channels_overlap(a, b)
    rnd = al.random_allocation(200, 16, [4], seed=3)
    assert al.plan_overlaps_partially(rnd)


def test_waterfilling_examples():
    p = al.waterfilling(3, 8, 8)
    assert p.widths == (4, 2, 2)
    assert p.channels == (Channel(1, 4), Channel(5, 6), Channel(7, 8))
    assert sorted(al.waterfilling_widths(3, 19, 8)) == [4, 4, 8]
    assert al.waterfilling(1, 8, 8).channels == (Channel(1, 8),)
    assert al.waterfilling(2, 16, 2).widths == (2, 2)


def test_waterfilling_wraps_when_crowded():
    p = al.waterfilling(5, 3, 8)
    assert p.degraded and p.widths == (1,) * 5 and p.max_overlap() == 2
    assert not al.waterfilling(3, 3, 8).degraded


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.integers(1, 24), st.sampled_from([1, 2, 4, 8]))
def test_waterfilling_structure(m, n, w_max):
    p = al.waterfilling(m, n, w_max)
    ws = set(p.widths)
    assert len(ws) <= 2
    if len(ws) == 2:
        assert max(ws) == 2 * min(ws)
    assert max(ws) <= w_max
    if m <= n:
        assert sum(p.widths) <= n and p.max_overlap() == 1
    assert p.max_overlap() == al.max_overlap_lower_bound(m, n)


def test_waterfilling_rotations_distinct():
    rots = al.waterfilling_rotations(3, 8, 8)
    assert len(rots) == 6 and len({r.channels for r in rots}) == 6
    assert len(al.waterfilling_rotations(3, 3, 8)) == 6
    assert len(al.waterfilling_rotations(2, 16, 8)) == 2


def test_chromatic_coloring_chain_of_cliques():
    s = bundled_scenario("clique_chain")
    classes = al.chromatic_coloring(s.wlan_ids, s.cs_adjacency)
    assert len(classes) == 3
    assert {frozenset(c) for c in classes} == {frozenset("ADF"), frozenset("CE"), frozenset("BGH")}


def test_color_and_waterfill_chain_of_cliques():
    s = bundled_scenario("clique_chain")
    plan, classes = al.color_and_waterfill(s, 8)
    ch = dict(zip(s.wlan_ids, plan.channels))
    assert ch["A"] == ch["D"] == ch["F"] == Channel(1, 8)
    assert ch["C"] == ch["E"] and ch["B"] == ch["G"] == ch["H"]
    # which width-4 class takes the lower block is an ordering choice
    assert {ch["C"], ch["B"]} == {Channel(9, 12), Channel(13, 16)}
    for e in s.cs_adjacency:
        a, b = tuple(e)
        assert not channels_overlap(ch[a], ch[b])


def test_coloring_edge_cases():
    s = make_scenario([Channel(1, 1)] * 4, 8, adjacency=[])
    plan, classes = al.color_and_waterfill(s, 8)
    assert len(classes) == 1 and set(plan.channels) == {Channel(1, 8)}
    full = make_scenario([Channel(1, 1)] * 3, 8)
    assert al.color_and_waterfill(full, 8)[0].channels == al.waterfilling(3, 8, 8).channels
    with pytest.raises(al.AllocationError):
        al.chromatic_coloring([str(i) for i in range(25)], [])


def test_pf_single_candidate():
    s = make_scenario([Channel(1, 1)] * 2, 4)
    sch = al.pf_schedule([al.waterfilling(2, 4, 8)], s)
    assert sch.weights.tolist() == [1.0]


def test_pf_symmetric_rotations_equalise():
    s = make_scenario([Channel(1, 1)] * 3, 8)
    sch = al.pf_schedule(al.waterfilling_rotations(3, 8, 8), s)
    y = sch.wlan_throughput
    assert y.max() / y.min() - 1 < 1e-5
    assert sch.kkt_residual < 1e-6
    assert al.waterfilling_support_check(sch).holds


def test_pf_variational_optimality_and_monotonicity():
    rng = np.random.default_rng(0)
    X = rng.uniform(0.1, 5, size=(3, 12))
    sch = al.pf_schedule([al.AllocationPlan((Channel(1, 1),) * 3, 4)] * 12, throughput=X)
    y = sch.wlan_throughput
    for _ in range(200):
        q = rng.dirichlet(np.ones(sch.throughput.shape[1]))
        assert np.sum((sch.throughput @ q - y) / y) <= 1e-5
    sub = al.pf_schedule([al.AllocationPlan((Channel(1, 1),) * 3, 4)] * 6, throughput=X[:, :6])
    assert sch.objective >= sub.objective - 1e-9


def test_pf_grid_search_agrees():
    rng = np.random.default_rng(5)
    X = rng.uniform(0.1, 3, size=(2, 3))
    plans = [al.AllocationPlan((Channel(1, 1),) * 2, 2)] * 3
    sch = al.pf_schedule(plans, throughput=X)
    best = -np.inf
    for i in range(1001):
        for j in range(1001 - i):
            p = np.array([i, j, 1000 - i - j]) / 1000
            best = max(best, np.log(X @ p).sum())
    assert sch.objective >= best - 1e-9


def test_pf_starvation_error():
    X = np.array([[1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(al.AllocationError):
        al.pf_schedule([al.AllocationPlan((Channel(1, 1),) * 2, 2)] * 2, throughput=X)
    with pytest.raises(al.AllocationError):
        al.pf_schedule([])


def test_pf_handles_per_candidate_starvation():
    # each WLAN starves in one candidate but not in all of them
    X = np.array([[0.0, 2.0, 1.0], [2.0, 0.0, 1.0]])
    sch = al.pf_schedule([al.AllocationPlan((Channel(1, 1),) * 2, 2)] * 3, throughput=X)
    assert sch.wlan_throughput == pytest.approx([1.0, 1.0], rel=1e-6)


def test_conjecture_check_rejects_overlap_plan():
    wf = al.waterfilling(3, 8, 8)
    bad = al.AllocationPlan((Channel(1, 8),) * 3, 8)
    sch = al.Schedule([wf, bad], np.array([0.5, 0.5]), np.ones((3, 2)), 0.0, 0.0, 1, True)
    rep = al.waterfilling_support_check(sch)
    assert not rep.holds and [r[2] for r in rep.support] == [True, False]


def test_conjecture_exhaustive_small_band():
    s = make_scenario([Channel(1, 1)] * 3, 4)
    plans = list(al.exhaustive_plans(3, 4))
    sch = al.pf_schedule(plans, s)
    assert al.waterfilling_support_check(sch, candidates=plans).holds
