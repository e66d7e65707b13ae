import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchnoc.routegen import (
    OracleBoundError,
    RouteRequest,
    RouteTable,
    candidate_paths,
    compile_routes,
    oracle_feasibility,
    validate,
)
from benchnoc.topology import DeviceSpec, NodeRef, Path, build_device, default_rows
from benchnoc.traffic import Connection, ConnectionSet

SMALL = build_device(DeviceSpec(name="small", slr_count=2, vnoc_columns=2, nmu_per_column_bottom_slr=3,
                                nmu_per_column_other_slr=3, hnoc_rows=default_rows(2)))


def _conn(a, b, qos):
    return Connection(NodeRef(*a, "source"), NodeRef(*b, "sink"), qos)


def test_single_connection_feasible(small_graph):
    req = RouteRequest(ConnectionSet([_conn((0, 0, 0), (1, 1, 2), 1.0)]))
    res = compile_routes(req, small_graph)
    assert res.status == "Feasible"
    assert validate(res.routes, small_graph, req).ok
    assert res.solve_time < 1.0


def test_oversubscribed_sink_is_infeasible_with_witness(small_graph):
    # three 8 GB/s flows into one NSU exceed its single ejection link
    conns = [_conn((0, 0, i), (1, 0, 0), 8.0) for i in range(3)]
    req = RouteRequest(ConnectionSet(conns))
    res = compile_routes(req, small_graph)
    assert res.status == "Infeasible"
    assert res.witness is not None
    assert not oracle_feasibility(req, small_graph)


def test_two_channels_absorb_parallel_demand(small_graph):
    # two 10 GB/s flows up the same column only fit on separate channels
    conns = [_conn((0, 0, 0), (0, 1, 2), 10.0), _conn((0, 0, 1), (0, 1, 1), 10.0)]
    req = RouteRequest(ConnectionSet(conns))
    res = compile_routes(req, small_graph)
    assert res.status == "Feasible"
    assert validate(res.routes, small_graph, req).ok


def test_bidirectional_reservations_use_opposed_links(small_graph):
    req = RouteRequest(ConnectionSet([_conn((0, 0, 0), (1, 1, 0), 2.0)]), bidirectional=True)
    res = compile_routes(req, small_graph)
    assert res.status == "Feasible"
    fwd = res.routes.routes[0].links
    assert set(res.routes.reserved) > set(fwd)


def test_validate_reports_violations(small_graph):
    req = RouteRequest(ConnectionSet([_conn((0, 0, 0), (1, 1, 2), 1.0), _conn((0, 0, 1), (0, 0, 2), 1.0)]))
    res = compile_routes(req, small_graph)
    broken = RouteTable({0: res.routes.routes[1]})
    kinds = {v["kind"] for v in validate(broken, small_graph, req).violations}
    assert "wrong_endpoints" in kinds
    assert "missing_route" in kinds
    bad = RouteTable({0: Path((0, 50)), 1: res.routes.routes[1]})
    assert "discontiguous_path" in {v["kind"] for v in validate(bad, small_graph, req).violations}


def test_request_validation(small_graph):
    with pytest.raises(ValueError):
        compile_routes(RouteRequest(ConnectionSet([_conn((0, 0, 0), (0, 0, 1), 0.0)])), small_graph)
    with pytest.raises(ValueError):
        compile_routes(RouteRequest(ConnectionSet([]), time_budget=0), small_graph)


def test_oracle_bound(small_graph):
    conns = [_conn((0, 0, 0), (0, 0, 1), 0.1)] * 9
    with pytest.raises(OracleBoundError):
        oracle_feasibility(RouteRequest(ConnectionSet(conns)), small_graph)


def test_candidates_are_simple_and_sorted(small_graph):
    c = _conn((0, 0, 0), (1, 1, 2), 1.0)
    paths = candidate_paths(small_graph, c)
    assert len(paths) > 1
    assert [len(p.links) for p in paths] == sorted(len(p.links) for p in paths)
    for p in paths:
        nodes = small_graph.path_nodes(p)
        assert len(set(nodes)) == len(nodes)


def test_compile_is_deterministic(graph):
    conns = [_conn((c, 1, i), ((c + 1) % 4, 1, i), 0.005) for c in range(4) for i in range(4)]
    req = RouteRequest(ConnectionSet(conns))
    a, b = compile_routes(req, graph), compile_routes(req, graph)
    assert a.routes.to_json() == b.routes.to_json()
    assert RouteTable.from_json(a.routes.to_json()).routes == a.routes.routes


def _endpoint():
    return st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2))


@st.composite
def instances(draw):
    n = draw(st.integers(1, 6))
    conns = [Connection(NodeRef(*draw(_endpoint()), "source"), NodeRef(*draw(_endpoint()), "sink"),
                        draw(st.floats(0.5, 14.0))) for _ in range(n)]
    return RouteRequest(ConnectionSet(conns), time_budget=10.0, bidirectional=draw(st.booleans()))


@settings(max_examples=150, deadline=None)
@given(instances())
def test_router_agrees_with_oracle(req):
    res = compile_routes(req, SMALL)
    assert res.status != "Timeout"
    assert (res.status == "Feasible") == oracle_feasibility(req, SMALL)
    if res.status == "Feasible":
        assert validate(res.routes, SMALL, req).ok
