import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchnoc.traffic import (
    PLACEMENTS,
    ConnectionSet,
    PatternError,
    Placement,
    PlacementError,
    Protocol,
    Workload,
    WorkloadError,
    build_workload,
    gen_pattern,
    place_nodes,
    qos_rule,
)

POINT_TO_POINT = ("NearestNeighbor", "Shift", "Tornado", "Reverse")


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(POINT_TO_POINT), st.integers(2, 64))
def test_point_to_point_patterns_are_bijections(pattern, n):
    (mapping,) = gen_pattern(pattern, n)
    assert sorted(mapping) == list(range(n))
    assert sorted(mapping.values()) == list(range(n))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 32))
def test_uniform_phases_are_bijections_covering_all_pairs(n):
    phases = gen_pattern("Uniform", n)
    assert len(phases) == n
    pairs = set()
    for m in phases:
        assert sorted(m.values()) == list(range(n))
        pairs.update(m.items())
    assert len(pairs) == n * n


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 32))
def test_hotspot_phase_targets_one_destination(n):
    phases = gen_pattern("Hotspot", n)
    assert [set(m.values()) for m in phases] == [{k} for k in range(n)]


def test_pattern_examples():
    assert gen_pattern("Shift", 4) == [{0: 1, 1: 2, 2: 3, 3: 0}]
    assert gen_pattern("Tornado", 8)[0][0] == 4
    assert gen_pattern("Tornado", 7)[0][0] == 3
    assert gen_pattern("Reverse", 4) == [{0: 3, 1: 2, 2: 1, 3: 0}]
    assert gen_pattern("NearestNeighbor", 1) == [{0: 0}]


def test_random_pattern_is_seeded():
    assert gen_pattern("Random", 8, 3) == gen_pattern("Random", 8, 3)
    assert gen_pattern("Random", 8, 3) != gen_pattern("Random", 8, 4)


def test_pattern_errors():
    with pytest.raises(PatternError):
        gen_pattern("Butterfly", 4)
    with pytest.raises(PatternError):
        gen_pattern("Shift", 1)


@pytest.mark.parametrize("kind", PLACEMENTS)
@pytest.mark.parametrize("n", [1, 4, 7, 8])
def test_placements_are_distinct_and_colocated(graph, kind, n):
    if kind == "Local" and n > 7:
        pytest.skip("Local group holds 7 pairs")
    srcs, dsts = place_nodes(Placement(kind, n), graph)
    assert len(set(srcs)) == n
    assert [(s.column, s.slr, s.index) for s in srcs] == [(d.column, d.slr, d.index) for d in dsts]
    for r in srcs:
        graph.endpoint(r)
    if kind in ("Local", "HNoC"):
        assert len({r.slr for r in srcs}) == 1
    if kind in ("Local", "VNoC"):
        assert len({r.column for r in srcs}) == 1


def test_local_placement_capacity(graph):
    with pytest.raises(PlacementError):
        place_nodes(Placement("Local", 16), graph)
    srcs, _ = place_nodes(Placement("HNoC", 16), graph)
    per_col = [sum(1 for r in srcs if r.column == c) for c in range(4)]
    assert per_col == [4, 4, 4, 4]


def test_spread_four_uses_corners(graph):
    srcs, _ = place_nodes(Placement("Spread", 4), graph)
    assert {(r.column, r.slr) for r in srcs} == {(0, 0), (3, 0), (0, 3), (3, 3)}


def test_qos_rule():
    assert qos_rule(2) == pytest.approx(8.0)
    assert qos_rule(4) == pytest.approx(0.005)
    assert qos_rule(16) == pytest.approx(0.005)


def test_workload_validation():
    with pytest.raises(WorkloadError):
        Workload("Random", Placement("Local", 4), Protocol("Stream")).validate()
    with pytest.raises(WorkloadError):
        Workload("Shift", Placement("Local", 4), txn_size=3000).validate()
    with pytest.raises(PlacementError):
        Placement("Diagonal", 4)
    with pytest.raises(WorkloadError):
        Protocol("ReadWrite")


def test_workload_roundtrip():
    wl = Workload("Uniform", Placement("Spread", 8), Protocol("ReadOnly"), rng_seed=5)
    assert Workload.from_dict(wl.to_dict()) == wl


def test_build_workload_volume(graph):
    wl = Workload("Uniform", Placement("Local", 4), Protocol("WriteOnly"))
    cset, sched = build_workload(wl, graph)
    assert len(cset) == 16
    assert sched.n_phases == 4
    txns = wl.total_bytes_per_pair // wl.txn_size
    assert all(v == txns for v in sched.transactions_per_connection().values())
    cset.validate()


def test_random_volume_matches_uniform(graph):
    wl_r = Workload("Random", Placement("Local", 4), Protocol("WriteOnly"), rng_seed=1)
    wl_u = Workload("Uniform", Placement("Local", 4), Protocol("WriteOnly"))
    _, sr = build_workload(wl_r, graph)
    _, su = build_workload(wl_u, graph)
    assert sum(sr.transactions_per_connection().values()) == sum(su.transactions_per_connection().values())


def test_connection_set_roundtrip(graph):
    cset, _ = build_workload(Workload("Shift", Placement("VNoC", 4)), graph)
    assert ConnectionSet.from_list(cset.to_list()) == cset


def test_hotspot_uses_barrier(graph):
    _, sched = build_workload(Workload("Hotspot", Placement("Local", 4)), graph)
    assert sched.barrier
