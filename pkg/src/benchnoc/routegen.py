"""QoS-constrained static route compilation.

Each connection picks one route out of a small candidate universe
(dimension-order routes on every channel, via the source row, the
destination row or the memory row). The search is a depth-first assignment
with forward checking on residual link capacity and conflict-directed
backjumping. ``oracle_feasibility`` answers the same question by plain
enumeration and shares nothing with the search except the candidate list.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

from .topology import (
    NocGraph,
    Path,
    RoutingError,
    memory_row_index,
    nearest_row,
    reverse_path,
    route_via_row,
)
from .traffic import ConnectionSet

MIN_RESERVATION = 0.001  # GB/s, one flit-stream minimum
MAX_CANDIDATES = 6
ORACLE_MAX_CONNECTIONS = 8


class OracleBoundError(ValueError):
    pass


@dataclass
class RouteRequest:
    connections: ConnectionSet
    time_budget: float = 60.0
    seed: int = 0
    bidirectional: bool = False  # reserve on the response direction too
    nidb_capacity_multiplier: float = 1.0
    max_candidates: int = MAX_CANDIDATES

    def validate(self) -> None:
        if self.time_budget <= 0:
            raise ValueError("time_budget must be > 0")
        for c in self.connections:
            if c.qos <= 0:
                raise ValueError("all QoS values must be > 0")


@dataclass
class RouteTable:
    routes: dict[int, Path]
    reserved: dict[int, float] = field(default_factory=dict)

    def to_json(self) -> dict[str, list[int]]:
        return {str(k): list(v.links) for k, v in sorted(self.routes.items())}

    @classmethod
    def from_json(cls, data: dict[str, list[int]]) -> "RouteTable":
        return cls({int(k): Path(tuple(v)) for k, v in data.items()})


@dataclass
class CompileResult:
    status: str  # "Feasible" | "Infeasible" | "Timeout"
    solve_time: float
    routes: RouteTable | None = None
    witness: dict[str, Any] | None = None
    decisions: int = 0
    backtracks: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "solve_time": self.solve_time,
            "routes": self.routes.to_json() if self.routes else None,
            "witness": self.witness,
            "decisions": self.decisions,
            "backtracks": self.backtracks,
        }


def reservation(qos: float) -> float:
    return max(qos, MIN_RESERVATION)


def link_capacities(graph: NocGraph, nidb_multiplier: float = 1.0) -> list[float]:
    return [l.capacity * (nidb_multiplier if l.kind == "nidb" else 1.0) for l in graph.links]


def candidate_paths(graph: NocGraph, conn, k: int = MAX_CANDIDATES) -> list[Path]:
    """Up to ``k`` distinct dimension-order routes, shortest first, ties by link ids."""
    spec = graph.spec
    src, dst = conn.src, conn.dst
    seen: set[tuple[int, ...]] = set()
    paths: list[Path] = []

    def add(p: Path) -> None:
        if p.links not in seen:
            seen.add(p.links)
            paths.append(p)

    if src.column == dst.column:
        for v in range(spec.vnoc_channels):
            add(route_via_row(graph, src, dst, None, v, 0))
    rows: list[int] = []
    if spec.hnoc_rows:
        rows = [nearest_row(spec, src.slr), nearest_row(spec, dst.slr)]
        try:
            rows.append(memory_row_index(spec))
        except RoutingError:
            pass
    for r in dict.fromkeys(rows):
        if src.column == dst.column and spec.hnoc_rows[r].slr_index in (src.slr, dst.slr):
            continue  # would revisit the column
        for v in range(spec.vnoc_channels):
            for h in range(spec.hnoc_channels):
                try:
                    add(route_via_row(graph, src, dst, r, v, h))
                except RoutingError:
                    continue
    if not paths:
        raise RoutingError(f"no candidate route for {src} -> {dst}")
    paths.sort(key=lambda p: (len(p.links), p.links))
    return paths[:k]


def _route_links(graph: NocGraph, path: Path, bidirectional: bool) -> tuple[int, ...]:
    if not bidirectional:
        return path.links
    return path.links + reverse_path(graph, path).links


class _Search:
    def __init__(self, graph: NocGraph, req: RouteRequest, candidates: list[list[Path]]):
        self.graph = graph
        self.req = req
        self.cands = candidates
        self.cand_links = [[_route_links(graph, p, req.bidirectional) for p in cs] for cs in candidates]
        self.need = [reservation(c.qos) for c in req.connections]
        self.phase = [getattr(c, "phase", 0) for c in req.connections]
        self.residual = link_capacities(graph, req.nidb_capacity_multiplier)
        self.users: list[list[int]] = [[] for _ in graph.links]  # link -> assigned vars
        self.assign: dict[int, int] = {}
        self.decisions = 0
        self.backtracks = 0
        self.deadline = time.monotonic() + req.time_budget
        self.timed_out = False
        self.fail_witness: dict[str, Any] | None = None
        n = len(candidates)
        # most constrained first: fewest candidates, then biggest demand
        self.order = sorted(range(n), key=lambda i: (len(candidates[i]), -self.need[i], i))
        self.level_of = {v: lvl for lvl, v in enumerate(self.order)}

    def fits(self, var: int, ci: int) -> bool:
        need = self.need[var]
        res = self.residual
        return all(res[l] + 1e-12 >= need for l in self.cand_links[var][ci])

    def place(self, var: int, ci: int) -> None:
        self.assign[var] = ci
        for l in self.cand_links[var][ci]:
            self.residual[l] -= self.need[var]
            self.users[l].append(var)

    def unplace(self, var: int) -> None:
        ci = self.assign.pop(var)
        for l in self.cand_links[var][ci]:
            self.residual[l] += self.need[var]
            self.users[l].pop()

    def culprits(self, var: int, ci: int | None = None) -> set[int]:
        """Assigned vars sharing links with (some candidate of) ``var``."""
        sets = self.cand_links[var] if ci is None else [self.cand_links[var][ci]]
        out: set[int] = set()
        for links in sets:
            for l in links:
                out.update(self.users[l])
        return out

    def value_order(self, var: int) -> list[int]:
        ph = self.phase[var]

        def key(ci: int):
            links = self.cand_links[var][ci]
            # only connections of the same phase are active together; spreading
            # them comes before route length
            rivals = max((sum(self.phase[u] == ph for u in self.users[l]) for l in links), default=0)
            crowd = max((len(self.users[l]) for l in links), default=0)
            return (rivals, len(self.cands[var][ci].links), crowd, self.cands[var][ci].links)

        return sorted(range(len(self.cands[var])), key=key)

    def solve(self, level: int = 0) -> set[int] | None:
        """None on success, else the conflict set explaining the failure."""
        if level == len(self.order):
            return None
        if self.decisions % 256 == 0 and time.monotonic() > self.deadline:
            self.timed_out = True
            return set()
        var = self.order[level]
        conflict: set[int] = set()
        for ci in self.value_order(var):
            if not self.fits(var, ci):
                conflict |= self.culprits(var, ci)
                continue
            self.decisions += 1
            self.place(var, ci)
            wiped = None
            for other in self.order[level + 1:]:
                if not any(self.fits(other, cj) for cj in range(len(self.cands[other]))):
                    wiped = other
                    break
            if wiped is not None:
                conflict |= self.culprits(wiped)
                if level == 0 and self.fail_witness is None:
                    self.fail_witness = self._blocking(wiped)
                self.unplace(var)
                self.backtracks += 1
                continue
            sub = self.solve(level + 1)
            if sub is None:
                return None
            self.unplace(var)
            if self.timed_out:
                return set()
            if var not in sub:
                # nothing this var can do about the failure below: jump over it
                return sub
            conflict |= sub
            self.backtracks += 1
        conflict.discard(var)
        if level == 0 and self.fail_witness is None:
            self.fail_witness = self._blocking(var)
        return conflict

    def _blocking(self, var: int) -> dict[str, Any]:
        links = set()
        for links_ci in self.cand_links[var]:
            for l in links_ci:
                if self.residual[l] + 1e-12 < self.need[var]:
                    links.add(l)
                    break
        return {"kind": "exhausted_search", "connection": var, "links": sorted(links)}


def _saturated_cut(graph: NocGraph, req: RouteRequest, cand_links: list[list[tuple[int, ...]]]) -> dict[str, Any] | None:
    """A link every candidate of several connections must cross, over-subscribed."""
    caps = link_capacities(graph, req.nidb_capacity_multiplier)
    forced: dict[int, float] = {}
    for i, cs in enumerate(cand_links):
        common = set(cs[0])
        for links in cs[1:]:
            common &= set(links)
        for l in common:
            forced[l] = forced.get(l, 0.0) + reservation(req.connections.connections[i].qos)
    for l in sorted(forced):
        if forced[l] > caps[l] + 1e-12:
            return {"kind": "saturated_cut", "links": [l], "demand": forced[l], "capacity": caps[l]}
    return None


def compile_routes(req: RouteRequest, graph: NocGraph) -> CompileResult:
    """Search for a single route per connection that fits every link."""
    req.validate()
    t0 = time.perf_counter()
    conns = req.connections.connections
    candidates = [candidate_paths(graph, c, req.max_candidates) for c in conns]
    search = _Search(graph, req, candidates)
    cut = _saturated_cut(graph, req, search.cand_links)
    if cut is not None:
        return CompileResult("Infeasible", time.perf_counter() - t0, witness=cut)
    failure = search.solve()
    elapsed = time.perf_counter() - t0
    if search.timed_out:
        return CompileResult("Timeout", elapsed, decisions=search.decisions, backtracks=search.backtracks)
    if failure is not None:
        return CompileResult("Infeasible", elapsed, witness=search.fail_witness,
                             decisions=search.decisions, backtracks=search.backtracks)
    routes = {i: candidates[i][ci] for i, ci in sorted(search.assign.items())}
    reserved: dict[int, float] = {}
    for i, ci in search.assign.items():
        for l in search.cand_links[i][ci]:
            reserved[l] = reserved.get(l, 0.0) + search.need[i]
    return CompileResult("Feasible", elapsed, RouteTable(routes, dict(sorted(reserved.items()))),
                         decisions=search.decisions, backtracks=search.backtracks)


# public operation name; shadows the builtin inside this module only
compile = compile_routes  # noqa: A001


def oracle_feasibility(req: RouteRequest, graph: NocGraph) -> bool:
    """Exhaustive enumeration over the candidate cross-product."""
    conns = req.connections.connections
    if len(conns) > ORACLE_MAX_CONNECTIONS:
        raise OracleBoundError(f"{len(conns)} connections exceeds oracle bound {ORACLE_MAX_CONNECTIONS}")
    cands = [candidate_paths(graph, c, req.max_candidates) for c in conns]
    links = [[_route_links(graph, p, req.bidirectional) for p in cs] for cs in cands]
    caps = link_capacities(graph, req.nidb_capacity_multiplier)
    need = [reservation(c.qos) for c in conns]
    load = [0.0] * len(caps)

    def rec(i: int) -> bool:
        if i == len(conns):
            return all(load[l] <= caps[l] + 1e-9 for l in range(len(caps)))
        for ls in links[i]:
            for l in ls:
                load[l] += need[i]
            # partial sums only grow, so an overloaded prefix has no completion
            ok = all(load[l] <= caps[l] + 1e-9 for l in ls) and rec(i + 1)
            for l in ls:
                load[l] -= need[i]
            if ok:
                return True
        return False

    return rec(0)


@dataclass
class ValidationReport:
    violations: list[dict[str, Any]]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(routes: RouteTable, graph: NocGraph, req: RouteRequest) -> ValidationReport:
    """Re-check every RouteTable invariant without trusting the solver."""
    violations: list[dict[str, Any]] = []
    conns = req.connections.connections
    caps = link_capacities(graph, req.nidb_capacity_multiplier)
    load: dict[int, float] = {}
    for i, conn in enumerate(conns):
        path = routes.routes.get(i)
        if path is None:
            violations.append({"kind": "missing_route", "connection": i})
            continue
        if not path.links or any(not 0 <= l < len(graph.links) for l in path.links):
            violations.append({"kind": "bad_link", "connection": i})
            continue
        if not graph.is_valid_path(path):
            violations.append({"kind": "discontiguous_path", "connection": i})
            continue
        nodes = graph.path_nodes(path)
        if nodes[0] != graph.endpoint(conn.src) or nodes[-1] != graph.endpoint(conn.dst):
            violations.append({"kind": "wrong_endpoints", "connection": i})
        if len(set(nodes)) != len(nodes):
            violations.append({"kind": "non-simple path", "connection": i})
        used = list(path.links)
        if req.bidirectional:
            try:
                back = reverse_path(graph, path)
            except RoutingError:
                violations.append({"kind": "no_response_route", "connection": i})
                back = None
            if back is not None:
                for fwd, rev in zip(path.links, reversed(back.links)):
                    a, b = graph.links[fwd], graph.links[rev]
                    if (a.src, a.dst) != (b.dst, b.src):
                        violations.append({"kind": "response_not_opposed", "connection": i})
                        break
                used += list(back.links)
        for l in dict.fromkeys(used):
            load[l] = load.get(l, 0.0) + reservation(conn.qos)
    for l in sorted(load):
        if load[l] > caps[l] + 1e-9:
            violations.append({"kind": "capacity", "link": l, "load": load[l], "capacity": caps[l]})
    return ValidationReport(violations)
