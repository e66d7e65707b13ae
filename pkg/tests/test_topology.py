import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchnoc.topology import (
    DEFAULT_LINK_LATENCY,
    DeviceSpec,
    DeviceSpecError,
    HnocRow,
    NodeKind,
    NodeRef,
    Path,
    RoutingError,
    build_device,
    default_path,
    default_rows,
    load_device,
    path_latency,
    path_summary,
    reverse_path,
    vh1782_spec,
    vp1802_spec,
)


def test_vp1802_endpoint_counts():
    g = build_device(vp1802_spec())
    assert g.count(NodeKind.NMU) == 100
    assert g.count(NodeKind.NSU) == 100
    # two bridge nodes per column per boundary
    assert g.count(NodeKind.NIDB) == 4 * 3 * 2


def test_vh1782_endpoint_counts():
    g = build_device(vh1782_spec())
    assert g.count(NodeKind.NMU) == 76
    assert g.count(NodeKind.NSU) == 76


def test_minimal_device():
    spec = DeviceSpec(slr_count=1, vnoc_columns=1, nmu_per_column_bottom_slr=1)
    g = build_device(spec)
    assert g.count(NodeKind.NMU) == 1
    assert g.count(NodeKind.NSU) == 1
    assert g.count(NodeKind.NIDB) == 0
    p = default_path(g, NodeRef(0, 0, 0, "source"), NodeRef(0, 0, 0, "sink"))
    assert [g.links[l].kind for l in p.links] == ["local", "local"]


@pytest.mark.parametrize("spec", [vp1802_spec(), vh1782_spec()])
def test_endpoint_formula(spec):
    expected = spec.vnoc_columns * (spec.nmu_per_column_bottom_slr
                                    + (spec.slr_count - 1) * spec.nmu_per_column_other_slr)
    assert spec.endpoint_count == expected
    assert build_device(spec).count(NodeKind.NMU) == expected


def test_raw_link_capacity():
    assert vp1802_spec().raw_link_capacity == pytest.approx(17.28)
    assert all(l.capacity == pytest.approx(17.28) for l in build_device(vp1802_spec()).links)


def test_every_link_has_an_opposite(small_graph):
    g = small_graph
    for link in g.links:
        back = g.links_between(link.dst, link.src)
        assert any(g.links[b].channel == link.channel for b in back), link


def test_build_is_deterministic():
    a, b = build_device(vp1802_spec()), build_device(vp1802_spec())
    assert a.nodes == b.nodes
    assert a.links == b.links


@pytest.mark.parametrize("field,change", [
    ("slr_count", {"slr_count": 0}),
    ("vnoc_columns", {"vnoc_columns": 0}),
    ("link_latency", {"link_latency": {**DEFAULT_LINK_LATENCY, "nidb": 1.0}}),
    ("link_latency", {"link_latency": {**DEFAULT_LINK_LATENCY, "local": 0.0}}),
    ("hnoc_rows", {"hnoc_rows": [HnocRow(1, has_ncrb=False, is_memory_row=True)]}),
])
def test_spec_validation_names_field(field, change):
    data = {**vp1802_spec().to_dict(), "hnoc_rows": vp1802_spec().hnoc_rows, **change}
    with pytest.raises(DeviceSpecError) as exc:
        build_device(DeviceSpec.from_dict(data))
    assert exc.value.field == field


def test_unknown_field_rejected():
    with pytest.raises(DeviceSpecError):
        DeviceSpec.from_dict({"slr_count": 1, "bogus": 3})


def test_load_device_by_name_and_path(tmp_path):
    assert load_device("vp1802") == vp1802_spec()
    assert load_device("vh1782.json") == vh1782_spec()
    f = tmp_path / "dev.json"
    f.write_text(json.dumps(vp1802_spec().to_dict()))
    assert load_device(f) == vp1802_spec()


def test_default_path_shape(small_graph):
    g = small_graph
    src, dst = NodeRef(0, 0, 0, "source"), NodeRef(1, 1, 2, "sink")
    p = default_path(g, src, dst)
    nodes = g.path_nodes(p)
    assert nodes[0] == g.endpoint(src)
    assert nodes[-1] == g.endpoint(dst)
    assert g.is_valid_path(p)
    assert len(set(nodes)) == len(nodes)
    assert path_summary(g, p)["slr_crossings"] == 1


def test_default_path_bad_policy(small_graph):
    with pytest.raises(ValueError):
        default_path(small_graph, NodeRef(0, 0, 0, "source"), NodeRef(1, 0, 0, "sink"), "shortest")


def test_unknown_endpoint(small_graph):
    with pytest.raises(RoutingError):
        small_graph.endpoint(NodeRef(5, 0, 0, "source"))


def test_path_latency_is_sum_of_links(small_graph):
    g = small_graph
    p = default_path(g, NodeRef(0, 0, 0, "source"), NodeRef(1, 1, 1, "sink"))
    assert path_latency(g, p) == pytest.approx(sum(g.links[l].latency for l in p.links))


def _refs(spec):
    return st.tuples(st.integers(0, spec.vnoc_columns - 1), st.integers(0, spec.slr_count - 1)).flatmap(
        lambda cs: st.tuples(st.just(cs[0]), st.just(cs[1]), st.integers(0, spec.endpoints_in(cs[1]) - 1)))


VP = vp1802_spec()
VP_GRAPH = build_device(VP)


@settings(max_examples=150, deadline=None)
@given(_refs(VP), _refs(VP), st.sampled_from(["nearest_row", "memory_row"]))
def test_paths_cross_each_boundary_through_a_bridge(a, b, policy):
    g = VP_GRAPH
    src, dst = NodeRef(*a, "source"), NodeRef(*b, "sink")
    p = default_path(g, src, dst, policy)
    assert g.is_valid_path(p)
    nodes = g.path_nodes(p)
    assert len(set(nodes)) == len(nodes)
    slrs = [g.nodes[n].slr for n in nodes]
    crossings = sum(1 for x, y in zip(slrs, slrs[1:]) if x != y)
    nidb_links = path_summary(g, p)["slr_crossings"]
    assert nidb_links == crossings
    assert nidb_links >= abs(src.slr - dst.slr)
    # latency additivity over concatenated halves
    k = len(p.links) // 2
    assert path_latency(g, Path(p.links[:k])) + path_latency(g, Path(p.links[k:])) == pytest.approx(
        path_latency(g, p))


@settings(max_examples=60, deadline=None)
@given(_refs(VP), _refs(VP))
def test_reverse_path_opposes_every_link(a, b):
    g = VP_GRAPH
    p = default_path(g, NodeRef(*a, "source"), NodeRef(*b, "sink"))
    back = reverse_path(g, p)
    for fwd, rev in zip(p.links, reversed(back.links)):
        assert (g.links[fwd].src, g.links[fwd].dst) == (g.links[rev].dst, g.links[rev].src)
        assert g.links[fwd].channel == g.links[rev].channel
