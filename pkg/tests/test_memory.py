import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchnoc.bench import device_graph
from benchnoc.memory import (
    DramSpec,
    HbmSpec,
    MemorySpecError,
    attach_memory,
    memory_experiment,
    memory_path,
    memory_spec_from_dict,
    memory_workload,
    nearest_memory_sources,
    run_memory_sweep,
)
from benchnoc.topology import NodeKind, NodeRef, vh1782_spec, vp1802_spec
from benchnoc.traffic import Placement, Protocol


@pytest.fixture(scope="module")
def dram_graph(graph, cfg):
    return attach_memory(graph, DramSpec(), cfg)


@pytest.fixture(scope="module")
def hbm_graph(cfg):
    return attach_memory(device_graph(vh1782_spec(), cfg), HbmSpec(), cfg)


def test_spec_rates():
    assert DramSpec().port_rate == pytest.approx(8.75)
    hbm = HbmSpec()
    assert hbm.nmu_rate == pytest.approx(12.8)
    assert hbm.stack_bandwidth == pytest.approx(409.6)
    assert hbm.port_rate == pytest.approx(12.8 * 0.86)


@pytest.mark.parametrize("spec", [
    DramSpec(noc_links_to_dram=0),
    DramSpec(aggregate_practical_bw=0.0),
    DramSpec(noc_links_to_dram=1, aggregate_practical_bw=50.0),
    HbmSpec(hbm_nmus_per_stack=0),
    HbmSpec(controller_efficiency=1.5),
])
def test_spec_validation(spec):
    with pytest.raises(MemorySpecError):
        spec.validate(16.26)


def test_spec_from_dict():
    assert memory_spec_from_dict(vp1802_spec().memory) == DramSpec()
    assert memory_spec_from_dict(vh1782_spec().memory) == HbmSpec()
    assert memory_spec_from_dict(None) is None
    with pytest.raises(MemorySpecError):
        memory_spec_from_dict({"kind": "sram"})


def test_attach_dram(graph, dram_graph):
    ex = dram_graph.extras
    assert len(ex["mc_ports"]) == 8
    assert dram_graph.count(NodeKind.MC) == 8
    assert len(dram_graph.links) == len(graph.links) + 16
    # two ports per column on a four-column device
    assert ex["mc_port_column"] == [0, 0, 1, 1, 2, 2, 3, 3]


def test_attach_hbm(hbm_graph):
    ex = hbm_graph.extras
    assert len(ex["mc_ports"]) == 32
    assert len(ex["hbm_nmus"]) == 32
    for lid in ex["hbm_direct_in"]:
        assert hbm_graph.nodes[hbm_graph.links[lid].dst].kind == NodeKind.MC


def test_memory_path_reaches_port(dram_graph):
    src = NodeRef(0, 2, 3, "source")
    for port in range(8):
        p = memory_path(dram_graph, src, port)
        assert dram_graph.is_valid_path(p)
        assert dram_graph.path_nodes(p)[-1] == dram_graph.extras["mc_ports"][port]


def test_dram_single_source_is_port_limited(dram_graph, cfg):
    m = memory_experiment("nearest_neighbor", Placement("HNoC", 1, slr=0), DramSpec(), dram_graph, "WriteOnly", cfg)
    assert 0 < m.aggregate["memory_throughput_gbps"] <= 16.0 + 1e-6


def test_dram_saturates_near_practical_bandwidth(dram_graph, cfg):
    m = memory_experiment("nearest_neighbor", Placement("HNoC", 8, slr=0), DramSpec(), dram_graph, "WriteOnly", cfg)
    assert m.aggregate["memory_throughput_gbps"] == pytest.approx(70.0, rel=0.05)


def test_hbm_nmus_scale_with_ports(hbm_graph, cfg):
    spec = HbmSpec()
    m = memory_experiment("nearest_neighbor", 4, spec, hbm_graph, "WriteOnly", cfg, total_bytes=32768)
    assert m.aggregate["memory_throughput_gbps"] == pytest.approx(4 * spec.port_rate, rel=0.05)


def test_hbm_nmu_errors(hbm_graph, cfg):
    with pytest.raises(ValueError):
        memory_workload(hbm_graph, "uniform", 4, Protocol("WriteOnly"))
    with pytest.raises(MemorySpecError):
        memory_workload(hbm_graph, "nearest_neighbor", 33, Protocol("WriteOnly"))
    with pytest.raises(ValueError):
        memory_experiment("nearest_neighbor", 4, HbmSpec(), hbm_graph, "Stream", cfg)
    with pytest.raises(ValueError):
        memory_workload(hbm_graph, "zigzag", 4, Protocol("WriteOnly"))


def test_nearest_sources_fill_bottom_slr_first(dram_graph):
    refs = nearest_memory_sources(dram_graph, 10)
    assert all(r.slr == 0 for r in refs)
    assert len(set(refs)) == 10
    with pytest.raises(MemorySpecError):
        nearest_memory_sources(dram_graph, 1000)


def test_memory_sweep_rows(cfg):
    rows = run_memory_sweep(vp1802_spec(), cfg, {"kinds": ["uniform"], "protocols": ["WriteOnly"],
                                                 "sources": [2], "slrs": [0], "vnoc": False})
    assert [r.metric for r in rows] == ["aggregate_throughput"]
    assert rows[0].units == "GB/s"


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(["nearest_neighbor", "uniform", "random"]), st.integers(1, 8), st.integers(0, 3),
       st.sampled_from(["WriteOnly", "ReadOnly"]), st.integers(0, 5))
def test_aggregate_never_exceeds_controller(dram_graph, cfg, kind, n, slr, proto, seed):
    m = memory_experiment(kind, Placement("HNoC", n, slr=slr), DramSpec(), dram_graph, proto, cfg,
                          total_bytes=32768, seed=seed)
    assert m.aggregate["memory_throughput_gbps"] <= 70.0 * 1.03
    assert m.aggregate["memory_throughput_gbps"] <= n * 16.0 * 1.03
