import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchnoc.refmodel import IDEAL_PORT_RATE, Demand, ideal_crossbar, is_maxmin, maxmin_flow, water_fill


def test_shared_link_splits_evenly():
    alloc = maxmin_flow({"a": [0], "b": [0]}, {0: 10.0})
    assert alloc == {"a": pytest.approx(5.0), "b": pytest.approx(5.0)}


def test_parking_lot():
    # long flow crosses both links; the short ones each take what is left
    routes = {"long": [0, 1], "s0": [0], "s1": [1]}
    alloc = maxmin_flow(routes, {0: 10.0, 1: 4.0})
    assert alloc["long"] == pytest.approx(2.0)
    assert alloc["s1"] == pytest.approx(2.0)
    assert alloc["s0"] == pytest.approx(8.0)
    assert is_maxmin(routes, {0: 10.0, 1: 4.0}, alloc)


def test_demand_bounded_flow_releases_capacity():
    alloc = maxmin_flow({"a": [0], "b": [0]}, {0: 10.0}, demands={"a": 1.0})
    assert alloc["a"] == pytest.approx(1.0)
    assert alloc["b"] == pytest.approx(9.0)


def test_unbounded_flow_rejected():
    with pytest.raises(ValueError):
        water_fill([Demand("x", ())], {})


def test_ideal_crossbar_permutation_and_hotspot():
    perm = ideal_crossbar({i: (i, (i + 1) % 4) for i in range(4)})
    assert all(v == pytest.approx(IDEAL_PORT_RATE) for v in perm.values())
    hot = ideal_crossbar({i: (i, 0) for i in range(4)}, port_rate=16.0)
    assert all(v == pytest.approx(4.0) for v in hot.values())


def test_ideal_port_rate():
    assert IDEAL_PORT_RATE == pytest.approx(16.0)


@st.composite
def networks(draw):
    n_links = draw(st.integers(1, 6))
    caps = {l: draw(st.floats(0.5, 20.0)) for l in range(n_links)}
    n_flows = draw(st.integers(1, 6))
    routes = {f: sorted(draw(st.sets(st.integers(0, n_links - 1), min_size=1, max_size=n_links)))
              for f in range(n_flows)}
    demands = {f: draw(st.floats(0.1, 30.0)) for f in range(n_flows) if draw(st.booleans())}
    return routes, caps, demands


@settings(max_examples=200, deadline=None)
@given(networks())
def test_water_fill_is_maxmin(net):
    routes, caps, demands = net
    alloc = maxmin_flow(routes, caps, demands)
    for l, c in caps.items():
        assert sum(alloc[f] for f, ls in routes.items() if l in ls) <= c + 1e-6
    for f, a in alloc.items():
        assert a <= demands.get(f, math.inf) + 1e-9
    assert is_maxmin(routes, caps, alloc, demands, tol=1e-6)


@settings(max_examples=100, deadline=None)
@given(networks())
def test_no_flow_can_grow_alone(net):
    # an independent check: each unsatisfied flow crosses a full link
    routes, caps, demands = net
    alloc = maxmin_flow(routes, caps, demands)
    for f, ls in routes.items():
        if alloc[f] < demands.get(f, math.inf) - 1e-6:
            slack = min(caps[l] - sum(alloc[g] for g, gl in routes.items() if l in gl) for l in ls)
            assert slack <= 1e-6
