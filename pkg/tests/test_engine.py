import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchnoc import engine
from benchnoc.engine import (
    SimConfig,
    SimConfigError,
    calibrated_config,
    effective_capacity,
    link_cycles,
    link_rates,
    measure_latency,
    quantized_path_latency,
    read_law,
    simulate,
    simulate_pair,
)
from benchnoc.routegen import RouteRequest, RouteTable, compile_routes
from benchnoc.topology import DeviceSpec, NodeRef, build_device, default_path, default_rows, reverse_path
from benchnoc.traffic import (
    PATTERNS,
    Connection,
    ConnectionSet,
    Placement,
    PlacementError,
    Protocol,
    Segment,
    TransactionSchedule,
    Workload,
    build_workload,
)

CFG = calibrated_config()
SMALL = build_device(DeviceSpec(name="small", slr_count=2, vnoc_columns=2, nmu_per_column_bottom_slr=3,
                                nmu_per_column_other_slr=3, hnoc_rows=default_rows(2)))
HAVE_COMPILED = engine._ckernel is not None


def _routed(graph, wl):
    cset, sched = build_workload(wl, graph)
    res = compile_routes(RouteRequest(cset, bidirectional=wl.protocol.bidirectional), graph)
    assert res.status == "Feasible"
    return res.routes, sched


def _expected_flits(sched, cfg):
    ppt = sched.txn_size // cfg.packet_payload
    txns = sum(sched.transactions_per_connection().values())
    pkts = txns * ppt
    kind = sched.protocol.kind
    if kind == "Stream":
        return pkts * cfg.packet_flits
    if kind == "WriteOnly":
        return pkts * cfg.packet_flits + txns
    return pkts + pkts * cfg.packet_flits


@st.composite
def small_workloads(draw):
    pattern = draw(st.sampled_from(PATTERNS))
    proto = draw(st.sampled_from(["ReadOnly", "WriteOnly"] if pattern == "Random" else
                                 ["ReadOnly", "WriteOnly", "Stream"]))
    placement = draw(st.sampled_from(["Local", "HNoC", "VNoC", "Spread"]))
    n = draw(st.integers(2, 3 if placement == "Local" else 6))
    return Workload(pattern, Placement(placement, n), Protocol(proto), txn_size=1024,
                    total_bytes_per_pair=draw(st.sampled_from([2048, 4096])), rng_seed=draw(st.integers(0, 9)))


# -- config ------------------------------------------------------------------


def test_config_defaults_and_derived_values():
    cfg = SimConfig()
    assert cfg.raw_link_capacity == pytest.approx(17.28)
    assert cfg.data_flits == 16
    assert cfg.packet_flits == 17
    assert cfg.payload_efficiency == pytest.approx(16 / 17)
    assert cfg.cycles(0.1) == 1
    assert cfg.cycles(10.0) == 11


@pytest.mark.parametrize("change", [
    {"read_window": 0},
    {"packet_payload": 100},
    {"ncrb_effective_capacity": 20.0},
    {"link_latency": {"local": -1.0}},
])
def test_config_validation(change):
    with pytest.raises(SimConfigError):
        SimConfig(**change).validate()


def test_txn_size_must_be_whole_packets():
    with pytest.raises(SimConfigError):
        SimConfig().validate(txn_size=1000)


def test_config_roundtrip(tmp_path):
    cfg = calibrated_config()
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps(cfg.to_dict()))
    assert SimConfig.load(f) == cfg


def test_ncrb_clamp_in_link_rates(graph):
    nums, den = link_rates(graph, CFG)
    for l in graph.links:
        if l.kind == "ncrb":
            assert nums[l.id] / den * CFG.raw_link_capacity == pytest.approx(CFG.ncrb_effective_capacity, rel=1e-3)


def test_ncrb_hop_rounds_as_one_unit(graph):
    # an NCRB row hop costs the rounded sum of both halves, never an extra cycle
    lat = link_cycles(graph, CFG)
    hop = CFG.link_latency["hnoc_hop"] + CFG.link_latency["ncrb"]
    for l in graph.links:
        if l.kind == "ncrb":
            out = [m for m in graph.links if m.src == l.dst and m.dst != l.src and m.channel == l.channel]
            assert len(out) == 1
            assert lat[l.id] + lat[out[0].id] == CFG.cycles(hop)


# -- single pair -------------------------------------------------------------


def test_local_stream_hits_port_rate(graph):
    s, d = NodeRef(0, 0, 0, "source"), NodeRef(0, 0, 0, "sink")
    m = simulate_pair(graph, default_path(graph, s, d), s, d, Protocol("Stream"), CFG)
    assert m.throughput[0] == pytest.approx(16.0, rel=0.01)


def test_stream_is_distance_independent(graph):
    s = NodeRef(0, 0, 0, "source")
    rates = []
    for d in (NodeRef(0, 0, 0, "sink"), NodeRef(0, 3, 5, "sink"), NodeRef(3, 3, 5, "sink")):
        path = default_path(graph, s, d, "memory_row")
        rates.append(simulate_pair(graph, path, s, d, Protocol("Stream"), CFG).throughput[0])
    assert max(rates) - min(rates) < 0.05 * max(rates)


@pytest.mark.parametrize("dst", [(0, 0, 0), (0, 0, 5), (3, 0, 0), (0, 3, 5), (3, 3, 5)])
def test_read_matches_closed_loop_law(graph, dst):
    s, d = NodeRef(0, 0, 0, "source"), NodeRef(*dst, "sink")
    path = default_path(graph, s, d)
    back = reverse_path(graph, path)
    lat = link_cycles(graph, CFG)
    eff = effective_capacity(graph, CFG, Protocol("ReadOnly"))
    bottleneck = min(eff[l] for l in path.links + back.links)
    law = read_law(sum(lat[l] for l in path.links), sum(lat[l] for l in back.links), CFG, bottleneck)
    sim = simulate_pair(graph, path, s, d, Protocol("ReadOnly"), CFG).throughput[0]
    assert sim == pytest.approx(law, rel=0.03)


def test_read_falls_with_distance(graph):
    s = NodeRef(0, 0, 0, "source")
    near = simulate_pair(graph, default_path(graph, s, NodeRef(0, 0, 0, "sink")), s, NodeRef(0, 0, 0, "sink"),
                         Protocol("ReadOnly"), CFG).throughput[0]
    far_d = NodeRef(0, 3, 5, "sink")
    far = simulate_pair(graph, default_path(graph, s, far_d), s, far_d, Protocol("ReadOnly"), CFG).throughput[0]
    assert far < near


# -- latency -----------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2)),
       st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2)),
       st.integers(1, 17))
def test_latency_is_sum_of_link_latencies(a, b, size):
    path = default_path(SMALL, NodeRef(*a, "source"), NodeRef(*b, "sink"))
    lat = measure_latency(SMALL, RouteTable({0: path}), CFG, 0, size)
    base = quantized_path_latency(SMALL, path, CFG)
    if size == 1:
        # head flit pays every link latency plus one ejection cycle
        assert lat == pytest.approx(base + CFG.cycle_ns)
    else:
        # the body streams behind the head at the slowest link's pace
        nums, den = link_rates(SMALL, CFG)
        slowest = den / min(nums[l] for l in path.links)
        assert base + size * CFG.cycle_ns - 1e-9 <= lat <= base + (size * slowest + 1) * CFG.cycle_ns + 1e-9


def test_latency_probe_errors(small_graph):
    with pytest.raises(SimConfigError):
        measure_latency(small_graph, RouteTable({}), CFG, 0)


# -- whole workloads ---------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(small_workloads())
def test_flit_conservation_and_capacity(wl):
    try:
        routes, sched = _routed(SMALL, wl)
    except PlacementError:
        return
    m = simulate(SMALL, routes, sched, CFG)
    agg = m.aggregate
    assert agg["in_flight"] == 0
    assert agg["flits_created"] == agg["flits_ejected"] == _expected_flits(sched, CFG)
    end = agg["end_cycle"] + 1
    nums, den = link_rates(SMALL, CFG, wl.protocol)
    for l, u in m.link_utilization.items():
        # a token bucket may run one flit ahead of its long-run rate
        assert u <= 1.0 + (den / nums[l]) / end + 1e-9
    for v in m.sink_utilization.values():
        assert 0.0 < v <= 1.0 + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["Shift", "Tornado", "Reverse", "NearestNeighbor"]),
       st.sampled_from(["HNoC", "VNoC", "Spread"]), st.integers(2, 6),
       st.sampled_from(["Stream", "WriteOnly"]))
def test_connections_respect_bottleneck_capacity(pattern, placement, n, proto):
    # the steady window is counted in whole packets, so it needs enough of them
    wl = Workload(pattern, Placement(placement, n), Protocol(proto), txn_size=4096, total_bytes_per_pair=65536)
    try:
        routes, sched = _routed(SMALL, wl)
    except PlacementError:
        return
    m = simulate(SMALL, routes, sched, CFG)
    eff = effective_capacity(SMALL, CFG, wl.protocol)
    for cid, path in routes.routes.items():
        if cid in m.steady_throughput:
            assert m.steady_throughput[cid] <= min(eff[l] for l in path.links) * 1.02


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
@settings(max_examples=30, deadline=None)
@given(small_workloads())
def test_kernels_agree(wl):
    try:
        routes, sched = _routed(SMALL, wl)
    except PlacementError:
        return
    a = simulate(SMALL, routes, sched, CFG, kernel="python", record_packets=True)
    b = simulate(SMALL, routes, sched, CFG, kernel="compiled", record_packets=True)
    a.aggregate.pop("kernel")
    b.aggregate.pop("kernel")
    assert a.to_json() == b.to_json()


@settings(max_examples=15, deadline=None)
@given(small_workloads())
def test_simulation_is_deterministic(wl):
    try:
        routes, sched = _routed(SMALL, wl)
    except PlacementError:
        return
    assert simulate(SMALL, routes, sched, CFG).to_json() == simulate(SMALL, routes, sched, CFG).to_json()


def test_unknown_kernel(small_graph):
    routes, sched = _routed(SMALL, Workload("Shift", Placement("Local", 2), txn_size=1024,
                                            total_bytes_per_pair=2048))
    with pytest.raises(SimConfigError):
        simulate(SMALL, routes, sched, CFG, kernel="gpu")


def test_missing_route_rejected():
    conn = Connection(NodeRef(0, 0, 0, "source"), NodeRef(0, 0, 1, "sink"), 1.0)
    sched = TransactionSchedule(Protocol("Stream"), 1024, [[Segment(0, 1, 0)]], connections=ConnectionSet([conn]))
    with pytest.raises(SimConfigError):
        simulate(SMALL, RouteTable({}), sched, CFG)


def test_packet_records(graph):
    wl = Workload("Shift", Placement("Local", 2), Protocol("WriteOnly"), txn_size=1024, total_bytes_per_pair=2048)
    routes, sched = _routed(graph, wl)
    m = simulate(graph, routes, sched, CFG, record_packets=True)
    kinds = {p.kind for p in m.packets}
    assert kinds == {"write_req", "write_resp"}
    assert all(p.eject > p.inject for p in m.packets)
    assert len([p for p in m.packets if p.kind == "write_req"]) == 2 * 2048 // CFG.packet_payload
