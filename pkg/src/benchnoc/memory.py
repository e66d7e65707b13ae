"""DRAM and HBM endpoints on the memory HNoC row.

Memory controller ports are modeled as fixed-rate servers: the link into a
port (and the link carrying read data out of it) is rate-limited to the
port's share of the practical bandwidth, so the engine's token buckets do the
queueing. HBM additionally exposes hardened HBM-NMUs, each wired straight to
its own controller port.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any

from .engine import SimConfig, SimMetrics, calibrated_config, simulate
from .routegen import RouteTable
from .topology import (Link, Node, NodeKind, NodeRef, NocGraph, Path, RoutingError, _links_for, _vertical_nodes,
                       memory_row_index)
from .traffic import Connection, ConnectionSet, Placement, Protocol, Segment, TransactionSchedule, place_nodes

MEMORY_KINDS = ("nearest_neighbor", "uniform", "random")


class MemorySpecError(ValueError):
    pass


@dataclass(frozen=True)
class DramSpec:
    noc_links_to_dram: int = 8
    aggregate_practical_bw: float = 70.0  # GB/s payload over all ports

    def validate(self, link_payload_capacity: float | None = None) -> None:
        if self.noc_links_to_dram < 1:
            raise MemorySpecError("noc_links_to_dram must be >= 1")
        if self.aggregate_practical_bw <= 0:
            raise MemorySpecError("aggregate_practical_bw must be positive")
        if link_payload_capacity is not None and \
                self.aggregate_practical_bw > self.noc_links_to_dram * link_payload_capacity + 1e-9:
            raise MemorySpecError("aggregate bandwidth exceeds the NoC links to DRAM")

    @property
    def port_rate(self) -> float:
        return self.aggregate_practical_bw / self.noc_links_to_dram

    @property
    def port_count(self) -> int:
        return self.noc_links_to_dram


@dataclass(frozen=True)
class HbmSpec:
    stacks: int = 1
    hbm_nmus_per_stack: int = 32
    hbm_nmu_width: int = 256  # bits
    hbm_nmu_clock: float = 400.0  # MHz
    controller_efficiency: float = 0.86

    def validate(self, link_payload_capacity: float | None = None) -> None:
        if self.stacks < 0 or self.hbm_nmus_per_stack < 1:
            raise MemorySpecError("stacks must be >= 0 and hbm_nmus_per_stack >= 1")
        if not 0 < self.controller_efficiency <= 1:
            raise MemorySpecError("controller_efficiency must be in (0, 1]")

    @property
    def nmu_rate(self) -> float:
        """Raw HBM-NMU rate in GB/s (width x clock)."""
        return self.hbm_nmu_width / 8 * self.hbm_nmu_clock / 1000.0

    @property
    def stack_bandwidth(self) -> float:
        return self.hbm_nmus_per_stack * self.nmu_rate

    @property
    def port_rate(self) -> float:
        return self.nmu_rate * self.controller_efficiency

    @property
    def port_count(self) -> int:
        return self.stacks * self.hbm_nmus_per_stack


def memory_spec_from_dict(data: dict[str, Any] | None) -> DramSpec | HbmSpec | None:
    if not data:
        return None
    data = dict(data)
    kind = data.pop("kind", "dram")
    if kind == "dram":
        return DramSpec(**data)
    if kind == "hbm":
        return HbmSpec(**data)
    raise MemorySpecError(f"unknown memory kind {kind!r}")


def attach_memory(graph: NocGraph, spec: DramSpec | HbmSpec, cfg: SimConfig | None = None) -> NocGraph:
    """Append controller ports (and HBM-NMUs) to the memory row.

    Port ``p`` hangs off the memory-row switch of column ``p * C // P``.
    Port links are limited to the port's payload share, expressed as a raw
    link rate so the engine's packet overhead is accounted for.
    """
    cfg = cfg or calibrated_config()
    spec.validate(graph.spec.raw_link_capacity * cfg.payload_efficiency)
    if isinstance(spec, HbmSpec) and spec.stacks == 0:
        return graph
    row = memory_row_index(graph.spec)  # raises when the device has no memory row
    mem_row = graph.spec.hnoc_rows[row]
    cols = graph.spec.vnoc_columns
    n_ports = spec.port_count
    lat = cfg.link_latency.get("local", graph.spec.link_latency["local"])
    raw_port = min(graph.spec.raw_link_capacity, spec.port_rate / cfg.payload_efficiency)
    nodes: list[Node] = []
    links: list[Link] = []

    def node(kind: NodeKind, column: int, name: str) -> int:
        nid = len(graph.nodes) + len(nodes)
        nodes.append(Node(nid, kind, column, -1, mem_row.slr_index, name))
        return nid

    def link(a: int, b: int, cap: float) -> int:
        lid = len(graph.links) + len(links)
        links.append(Link(lid, a, b, "local", cap, lat, 0))
        return lid

    ports, port_col, port_in, port_out = [], [], [], []
    for p in range(n_ports):
        c = p * cols // n_ports
        m = node(NodeKind.MC, c, f"mc_{p}")
        sw = graph.row_switch(row, c)
        ports.append(m)
        port_col.append(c)
        port_in.append(link(sw, m, raw_port))
        port_out.append(link(m, sw, raw_port))
    extras: dict[str, Any] = {
        "memory_kind": "hbm" if isinstance(spec, HbmSpec) else "dram",
        "mc_ports": ports, "mc_port_column": port_col, "mc_port_in": port_in, "mc_port_out": port_out,
    }
    if isinstance(spec, HbmSpec):
        hbm_raw = min(graph.spec.raw_link_capacity, spec.nmu_rate / cfg.payload_efficiency)
        nmus, direct_in, direct_out = [], [], []
        for p in range(n_ports):
            u = node(NodeKind.NMU, port_col[p], f"hbm_nmu_{p}")
            nmus.append(u)
            # the controller port, not the HBM-NMU, sets the sustained rate
            direct_in.append(link(u, ports[p], min(hbm_raw, raw_port)))
            direct_out.append(link(ports[p], u, min(hbm_raw, raw_port)))
        extras.update({"hbm_nmus": nmus, "hbm_direct_in": direct_in, "hbm_direct_out": direct_out})
    return graph.extend(nodes, links, extras)


def port_ref(p: int, graph: NocGraph) -> NodeRef:
    """Pseudo endpoint reference for controller port ``p`` (slr = -1)."""
    return NodeRef(graph.extras["mc_port_column"][p], -1, p, "sink")


def memory_path(graph: NocGraph, src: NodeRef, port: int, channel: int = 0) -> Path:
    """NMU -> down its column -> memory row -> along the row -> controller port."""
    if "mc_ports" not in graph.extras:
        raise RoutingError("graph has no memory attached")
    row = memory_row_index(graph.spec)
    seq = [graph.endpoint(src)] + _vertical_nodes(graph, src.column, (src.slr, src.index), (0, 0))
    seq.append(graph.row_switch(row, src.column))
    dst_col = graph.extras["mc_port_column"][port]
    step = 1 if dst_col >= src.column else -1
    for c in range(src.column, dst_col, step):
        seq.append(graph.row_switch(row, c + step))
    seq.append(graph.extras["mc_ports"][port])
    return Path(tuple(_links_for(graph, seq, channel, channel)))


def _port_sequence(kind: str, j: int, local_ports: list[int], n_ports: int, n_txn: int, rng: random.Random) -> list[int]:
    if kind == "nearest_neighbor":
        # strided over the column's ports, offset by the source's rank in the column
        return [local_ports[(j + k) % len(local_ports)] for k in range(n_txn)]
    if kind == "uniform":
        return [(j + k) % n_ports for k in range(n_txn)]
    return [rng.randrange(n_ports) for _ in range(n_txn)]


def memory_workload(graph: NocGraph, kind: str, sources: Placement | int, protocol: Protocol,
                    total_bytes: int = 131072, txn_size: int = 4096, seed: int = 0
                    ) -> tuple[RouteTable, TransactionSchedule]:
    """Routes and schedule for sources streaming into the controller ports.

    ``sources`` is a PL placement, an explicit list of NMU refs, or an int
    for that many HBM-NMUs.
    """
    if kind not in MEMORY_KINDS:
        raise ValueError(f"unknown memory pattern {kind!r}")
    ports = graph.extras.get("mc_ports")
    if not ports:
        raise RoutingError("graph has no memory attached")
    n_ports = len(ports)
    n_txn = total_bytes // txn_size
    rng = random.Random(seed)
    conns: list[Connection] = []
    routes: dict[int, Path] = {}
    index: dict[tuple[int, int], int] = {}
    per_source: list[list[Segment]] = []
    if isinstance(sources, int):
        nmus = graph.extras.get("hbm_nmus")
        if not nmus:
            raise MemorySpecError("device has no HBM-NMUs")
        if sources > len(nmus):
            raise MemorySpecError(f"only {len(nmus)} HBM-NMUs available, asked for {sources}")
        src_refs = [NodeRef(graph.extras["mc_port_column"][p], -1, p, "source") for p in range(sources)]
        port_lists = [[p] for p in range(sources)]

        def path_for(i: int, p: int) -> Path:
            if p != i:
                raise RoutingError("HBM-NMUs reach only their own controller port")
            return Path((graph.extras["hbm_direct_in"][p],))
        if kind != "nearest_neighbor":
            raise ValueError("HBM-NMUs are hard-wired to one port; only nearest_neighbor applies")
    else:
        src_refs = list(sources) if isinstance(sources, (list, tuple)) else place_nodes(sources, graph)[0]
        cols = graph.extras["mc_port_column"]
        port_lists = [[p for p in range(n_ports) if cols[p] == r.column] for r in src_refs]

        def path_for(i: int, p: int) -> Path:
            return memory_path(graph, src_refs[i], p, channel=ranks[i] % 2)
    ranks: list[int] = []
    col_rank: dict[int, int] = {}
    for ref in src_refs:
        ranks.append(col_rank.get(ref.column, 0))
        col_rank[ref.column] = ranks[-1] + 1
    for i, ref in enumerate(src_refs):
        j = ranks[i] if not isinstance(sources, int) else 0
        seq = _port_sequence(kind, j if kind == "nearest_neighbor" else i, port_lists[i], n_ports, n_txn, rng)
        segs: list[Segment] = []
        for p in seq:
            key = (i, p)
            if key not in index:
                index[key] = len(conns)
                conns.append(Connection(ref, port_ref(p, graph), protocol.port_rate, 0))
                routes[index[key]] = path_for(i, p)
            cid = index[key]
            if segs and segs[-1].connection == cid:
                segs[-1] = Segment(cid, segs[-1].transactions + 1, 0)
            else:
                segs.append(Segment(cid, 1, 0))
        per_source.append(segs)
    schedule = TransactionSchedule(protocol, txn_size, per_source, connections=ConnectionSet(conns))
    return RouteTable(routes), schedule


def nearest_memory_sources(graph: NocGraph, n: int) -> list[NodeRef]:
    """``n`` PL-NMUs closest to the memory row: fill SLR0 tap by tap across
    the columns, then continue in the next SLR."""
    spec = graph.spec
    out: list[NodeRef] = []
    for s in range(spec.slr_count):
        for i in range(spec.endpoints_in(s)):
            for c in range(spec.vnoc_columns):
                if len(out) == n:
                    return out
                out.append(NodeRef(c, s, i, "source"))
    if len(out) < n:
        raise MemorySpecError(f"device has only {len(out)} PL-NMUs")
    return out


def memory_experiment(kind: str, sources: Placement | int | list[NodeRef], spec: DramSpec | HbmSpec, graph: NocGraph,
                      protocol: Protocol | str = "WriteOnly", cfg: SimConfig | None = None,
                      total_bytes: int = 131072, seed: int = 0) -> SimMetrics:
    """Run a memory traffic pattern; aggregate["memory_throughput_gbps"] sums the sources."""
    cfg = cfg or calibrated_config()
    if isinstance(protocol, str):
        protocol = Protocol(protocol)
    if protocol.kind == "Stream":
        raise ValueError("memory experiments use ReadOnly or WriteOnly")
    mem_graph = graph if "mc_ports" in graph.extras else attach_memory(graph, spec, cfg)
    if isinstance(sources, int) and isinstance(spec, HbmSpec):
        # hardened HBM-NMU ports run at their own width and clock
        protocol = Protocol(protocol.kind, spec.hbm_nmu_width, spec.hbm_nmu_clock)
    routes, schedule = memory_workload(mem_graph, kind, sources, protocol, total_bytes, seed=seed)
    m = simulate(mem_graph, routes, schedule, cfg)
    m.aggregate["memory_throughput_gbps"] = sum(m.source_throughput.values())
    m.aggregate["sources"] = len(schedule.per_source)
    return m


def run_memory_sweep(device, cfg: SimConfig | None = None, grid: dict[str, Any] | None = None, seed: int = 0):
    """Aggregate memory throughput over source counts, SLRs and patterns."""
    from .bench import ResultRow, device_graph
    from .traffic import PlacementError

    cfg = cfg or calibrated_config()
    grid = grid or {}
    mem = memory_spec_from_dict(device.memory)
    if mem is None:
        raise MemorySpecError(f"device {device.name} declares no memory")
    graph = attach_memory(device_graph(device, cfg), mem, cfg)
    rows = []
    kinds = grid.get("kinds", list(MEMORY_KINDS))
    protos = grid.get("protocols", ["WriteOnly", "ReadOnly"])
    for proto in protos:
        for kind in kinds:
            cases: list[tuple[str, Any]] = []
            for n in grid.get("sources", [4, 8]):
                for slr in grid.get("slrs", list(range(device.slr_count))):
                    cases.append((f"HNoC;slr={slr}", Placement("HNoC", n, slr=slr)))
                if grid.get("vnoc", True):
                    cases.append(("VNoC", Placement("VNoC", n)))
            if isinstance(mem, HbmSpec):
                n_hbm = grid.get("hbm_sources", mem.port_count)
                if kind == "nearest_neighbor":
                    cases.append(("HBM-NMU", n_hbm))
                cases.append(("PL-nearest", nearest_memory_sources(graph, n_hbm)))
            for label, src in cases:
                n = src if isinstance(src, int) else (len(src) if isinstance(src, list) else src.n_pairs)
                base = dict(experiment="memory_sweep", pattern=kind, placement=label.split(";")[0], size=n,
                            protocol=proto, params=label)
                try:
                    m = memory_experiment(kind, src, mem, graph, proto, cfg, seed=seed)
                except (PlacementError, MemorySpecError) as exc:
                    rows.append(ResultRow(metric="skipped", value=1, units="count", **{**base, "params": f"{label};reason={exc}"}))
                    continue
                rows.append(ResultRow(metric="aggregate_throughput", value=m.aggregate["memory_throughput_gbps"],
                                      units="GB/s", **base))
    return rows
