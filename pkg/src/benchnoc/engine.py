"""Flit-level simulation of compiled routes.

Every (connection, direction) pair becomes a *flow* with its own buffer at
each hop, so request and response traffic never block each other. Links
forward at most one flit per NoC cycle, arbitrate with smooth weighted
round-robin (weights from the reserved QoS) and use credit-based flow
control. Rate-limited links (NCRB crossings, user-side ports, memory ports)
pace flits with an integer token bucket.

The hot loop lives in ``_kernel`` (compiled) with ``_kernel_py`` as the
pure-Python fallback; both produce identical integers.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import _kernel_py
from .routegen import RouteTable, reservation
from .topology import NocGraph, NodeKind, NodeRef, Path as LinkPath, reverse_path
from .traffic import Connection, ConnectionSet, TransactionSchedule

try:  # compiled kernel; absent when the extension was not built
    from . import _kernel as _ckernel
except ImportError:  # pragma: no cover - depends on the build
    _ckernel = None

KERNELS = ("compiled", "python")
DEFAULT_KERNEL = "compiled" if _ckernel is not None and os.environ.get("BENCHNOC_KERNEL") != "python" else "python"

KIND_DATA = _kernel_py.KIND_DATA
KIND_READ_REQ = _kernel_py.KIND_READ_REQ
KIND_READ_RESP = _kernel_py.KIND_READ_RESP
KIND_WRITE_RESP = _kernel_py.KIND_WRITE_RESP


class SimConfigError(ValueError):
    """Invalid configuration or an unroutable scheduled connection."""


@dataclass
class SimConfig:
    flit_width: int = 128  # bits
    noc_clock: float = 1080.0  # MHz
    packet_payload: int = 256  # bytes
    header_flits_per_packet: int = 1
    read_window: int = 4  # outstanding read packets per NMU
    ncrb_effective_capacity: float = 13.0  # GB/s served by NCRB links
    subordinate_latency_ns: float = 30.0  # NSU turnaround before a response leaves
    link_latency: dict[str, float] = field(default_factory=dict)  # per-kind ns overrides
    warmup_bytes: int = 6656  # per connection, excluded from throughput (~10% of 64 KB)
    buffer_slack: int = 2  # credits beyond the link round trip
    max_cycles: int = 200_000_000
    seed: int = 0  # recorded only; the kernel makes no random choices

    @property
    def raw_link_capacity(self) -> float:
        return self.flit_width / 8 * self.noc_clock / 1000.0

    @property
    def data_flits(self) -> int:
        return self.packet_payload * 8 // self.flit_width

    @property
    def packet_flits(self) -> int:
        return self.data_flits + self.header_flits_per_packet

    @property
    def payload_efficiency(self) -> float:
        return self.data_flits / self.packet_flits

    @property
    def cycle_ns(self) -> float:
        return 1000.0 / self.noc_clock

    def cycles(self, ns: float) -> int:
        return max(1, int(math.floor(ns * self.noc_clock / 1000.0 + 0.5)))

    def validate(self, txn_size: int | None = None) -> None:
        if self.flit_width <= 0 or self.noc_clock <= 0:
            raise SimConfigError("flit_width and noc_clock must be positive")
        if self.packet_payload <= 0 or (self.packet_payload * 8) % self.flit_width:
            raise SimConfigError("packet_payload must be a whole number of flits")
        if txn_size is not None and txn_size % self.packet_payload:
            raise SimConfigError("packet_payload must divide txn_size")
        if self.read_window < 1:
            raise SimConfigError("read_window must be >= 1")
        if not 0 < self.ncrb_effective_capacity <= self.raw_link_capacity + 1e-9:
            raise SimConfigError("ncrb_effective_capacity must be in (0, raw link capacity]")
        if self.header_flits_per_packet < 0 or self.warmup_bytes < 0:
            raise SimConfigError("negative header flits or warmup")
        for k, v in self.link_latency.items():
            if v <= 0:
                raise SimConfigError(f"latency for {k} must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def calibrated_config() -> SimConfig:
    """The fitted configuration shipped with the package (defaults if absent)."""
    from importlib import resources

    try:
        text = resources.files("benchnoc.data").joinpath("calibrated.json").read_text()
    except FileNotFoundError:
        return SimConfig()
    data = json.loads(text)
    return SimConfig.from_dict(data.get("config", data))


@dataclass(frozen=True)
class PacketEvent:
    connection: int
    packet: int
    kind: str  # read_req, read_resp, write_req, write_resp, stream
    size_flits: int
    inject: float  # ns, head flit leaves the source
    eject: float  # ns, tail flit reaches the destination


@dataclass
class SimMetrics:
    throughput: dict[int, float]  # per connection, GB/s payload
    latency: dict[int, float]  # per connection, mean one-way ns of data packets
    link_utilization: dict[int, float]  # used links only
    source_throughput: dict[int, float]
    steady_throughput: dict[int, float]  # all-sources-active window
    sink_utilization: dict[str, float]  # "phase:column/slr/index" -> ejection link busy fraction
    aggregate: dict[str, Any]
    packets: list[PacketEvent] = field(default_factory=list)

    def mean_source_throughput(self) -> float:
        vals = list(self.source_throughput.values())
        return sum(vals) / len(vals) if vals else 0.0

    def to_dict(self) -> dict[str, Any]:
        def keyed(d):
            return {str(k): v for k, v in sorted(d.items())}

        out = {
            "throughput": keyed(self.throughput),
            "latency": keyed(self.latency),
            "link_utilization": keyed(self.link_utilization),
            "source_throughput": keyed(self.source_throughput),
            "steady_throughput": keyed(self.steady_throughput),
            "sink_utilization": dict(sorted(self.sink_utilization.items())),
            "aggregate": self.aggregate,
        }
        if self.packets:
            out["packets"] = [asdict(p) for p in self.packets]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# -- array construction ------------------------------------------------------


@dataclass
class _Flow:
    connection: int
    kind: int
    links: tuple[int, ...]
    pkt_flits: int
    weight: int
    src: int
    partner: int = -1
    npkts: int = 0
    segs: list[int] = field(default_factory=list)


def link_rates(graph: NocGraph, cfg: SimConfig, protocol=None) -> tuple[list[int], int]:
    """Integer service rates: ``num[l] / den`` flits per cycle."""
    den = int(round(cfg.raw_link_capacity * 1000))
    port_raw = None
    if protocol is not None:
        port_raw = protocol.port_rate * cfg.packet_flits / cfg.data_flits
    nums = []
    for link in graph.links:
        cap = link.capacity
        if link.kind == "ncrb":
            cap = min(cap, cfg.ncrb_effective_capacity)
        if port_raw is not None and (graph.nodes[link.src].kind == NodeKind.NMU
                                     or graph.nodes[link.dst].kind == NodeKind.NMU):
            cap = min(cap, port_raw)
        nums.append(max(1, min(den, int(round(cap * 1000)))))
    return nums, den


def effective_capacity(graph: NocGraph, cfg: SimConfig, protocol=None) -> dict[int, float]:
    """Per-link payload GB/s the engine can sustain, for analytic comparison."""
    nums, den = link_rates(graph, cfg, protocol)
    raw = cfg.raw_link_capacity
    return {l: raw * nums[l] / den * cfg.payload_efficiency for l in range(len(nums))}


def link_cycles(graph: NocGraph, cfg: SimConfig) -> list[int]:
    """Whole-cycle latency per link.

    A row hop through an NCRB is two links. They are rounded as one unit: the
    buffer stage takes one cycle and the outgoing half the rest, so the NCRB
    adds its own latency but no extra rounding cycle.
    """
    ncrb = cfg.link_latency.get("ncrb", graph.spec.link_latency["ncrb"])
    out = []
    for l in graph.links:
        ns = cfg.link_latency.get(l.kind, l.latency)
        if l.kind == "ncrb":
            out.append(1)
        elif l.kind == "hnoc_hop" and graph.nodes[l.src].kind == NodeKind.NCRB:
            out.append(max(1, cfg.cycles(ns + ncrb) - 1))
        else:
            out.append(cfg.cycles(ns))
    return out


def _build_flows(graph: NocGraph, routes: RouteTable, schedule: TransactionSchedule,
                 connections: ConnectionSet, cfg: SimConfig) -> tuple[list[_Flow], list[list[tuple[int, int, int]]], dict[int, tuple[int, int]]]:
    """Flows plus per-source segment lists ``(flow, end_packet, phase)``."""
    kind = schedule.protocol.kind
    ppt = schedule.txn_size // cfg.packet_payload
    flows: list[_Flow] = []
    conn_flows: dict[int, tuple[int, int]] = {}  # connection -> (data-carrying flow, segment flow)
    src_of: dict[int, int] = {}
    for s, segs in enumerate(schedule.per_source):
        for seg in segs:
            prev = src_of.setdefault(seg.connection, s)
            if prev != s:
                raise SimConfigError(f"connection {seg.connection} scheduled from two sources")
    for cid in sorted(src_of):
        if cid not in routes.routes:
            raise SimConfigError(f"scheduled connection {cid} has no route")
        if cid >= len(connections.connections):
            raise SimConfigError(f"scheduled connection {cid} not in the connection set")
        path = routes.routes[cid]
        if not path.links:
            raise SimConfigError(f"connection {cid} has an empty route")
        conn = connections.connections[cid]
        w = max(1, int(round(reservation(conn.qos) * 1000)))
        s = src_of[cid]
        fwd = tuple(path.links)
        if kind == "Stream":
            flows.append(_Flow(cid, KIND_DATA, fwd, cfg.packet_flits, w, s))
            conn_flows[cid] = (len(flows) - 1, len(flows) - 1)
        else:
            back = tuple(reverse_path(graph, path).links)
            a, b = len(flows), len(flows) + 1
            if kind == "WriteOnly":
                flows.append(_Flow(cid, KIND_DATA, fwd, cfg.packet_flits, w, s, partner=b))
                flows.append(_Flow(cid, KIND_WRITE_RESP, back, 1, w, s, partner=a))
                conn_flows[cid] = (a, a)
            else:
                flows.append(_Flow(cid, KIND_READ_REQ, fwd, 1, w, s, partner=b))
                flows.append(_Flow(cid, KIND_READ_RESP, back, cfg.packet_flits, w, s, partner=a))
                conn_flows[cid] = (b, a)
    per_source: list[list[tuple[int, int, int]]] = []
    for s, segs in enumerate(schedule.per_source):
        out = []
        for seg in segs:
            f = conn_flows[seg.connection][1]
            flows[f].npkts += seg.transactions * ppt
            out.append((f, flows[f].npkts, seg.phase))
        per_source.append(out)
    for f in flows:
        if f.kind == KIND_READ_RESP:
            f.npkts = flows[f.partner].npkts
        elif f.kind == KIND_WRITE_RESP:
            f.npkts = flows[f.partner].npkts // ppt
    return flows, per_source, conn_flows


class _Arrays:
    """Flat integer arrays handed to the kernel."""

    def __init__(self, graph: NocGraph, flows: list[_Flow], per_source, cfg: SimConfig,
                 protocol, barrier: bool, ppt: int):
        n_links = len(graph.links)
        lat = link_cycles(graph, cfg)
        nums, den = link_rates(graph, cfg, protocol)
        hop_off = [0]
        hop_link: list[int] = []
        hop_flow: list[int] = []
        hop_depth: list[int] = []
        for fi, f in enumerate(flows):
            for l in f.links:
                hop_link.append(l)
                hop_flow.append(fi)
                hop_depth.append(2 * lat[l] + cfg.buffer_slack)
            hop_off.append(len(hop_link))
        ent: list[list[int]] = [[] for _ in range(n_links)]
        for gh, l in enumerate(hop_link):
            ent[l].append(gh)
        ent_off = [0]
        ent_gh: list[int] = []
        for l in range(n_links):
            ent_gh.extend(ent[l])
            ent_off.append(len(ent_gh))
        base = [0]
        for f in flows:
            base.append(base[-1] + f.npkts)
        src_off = [0]
        seg_flow: list[int] = []
        seg_end: list[int] = []
        seg_phase: list[int] = []
        for segs in per_source:
            for f, end, ph in segs:
                flows[f].segs.append(len(seg_flow))
                seg_flow.append(f)
                seg_end.append(end)
                seg_phase.append(ph)
            src_off.append(len(seg_flow))
        n_phase = 1 + max(seg_phase, default=-1)
        phase_total = [0] * max(n_phase, 1)
        for ph in seg_phase:
            phase_total[ph] += 1
        fseg_off = [0]
        fseg_list: list[int] = []
        for f in flows:
            fseg_list.extend(f.segs)
            fseg_off.append(len(fseg_list))

        i64 = lambda xs: np.asarray(xs, dtype=np.int64)  # noqa: E731
        self.inputs = dict(
            link_lat=i64(lat), link_num=i64(nums), link_den=den,
            link_ent_off=i64(ent_off), link_ent_gh=i64(ent_gh),
            hop_off=i64(hop_off), hop_link=i64(hop_link), hop_depth=i64(hop_depth), hop_flow=i64(hop_flow),
            flow_pkt=i64([f.pkt_flits for f in flows]), flow_weight=i64([f.weight for f in flows]),
            flow_kind=i64([f.kind for f in flows]), flow_partner=i64([f.partner for f in flows]),
            flow_src=i64([f.src for f in flows]), flow_base=i64(base[:-1]),
            flow_seg_off=i64(fseg_off), flow_seg_list=i64(fseg_list),
            src_seg_off=i64(src_off), seg_flow=i64(seg_flow), seg_end=i64(seg_end),
            seg_phase=i64(seg_phase), phase_total=i64(phase_total),
            read_window=cfg.read_window, turnaround=cfg.cycles(cfg.subordinate_latency_ns),
            pkts_per_txn=ppt, barrier=int(barrier), max_cycles=cfg.max_cycles,
        )
        total_pkts = base[-1]
        self.outputs = dict(
            head_t=np.full(total_pkts, -1, dtype=np.int64),
            tail_t=np.full(total_pkts, -1, dtype=np.int64),
            link_flits=np.zeros(n_links, dtype=np.int64),
            first_ej=np.full(len(flows), -1, dtype=np.int64),
            last_ej=np.full(len(flows), -1, dtype=np.int64),
        )
        self.base = base


def _run_kernel(arrays: _Arrays, kernel: str | None) -> dict[str, int]:
    name = kernel or DEFAULT_KERNEL
    if name not in KERNELS:
        raise SimConfigError(f"unknown kernel {name!r}")
    if name == "compiled":
        if _ckernel is None:
            raise SimConfigError("compiled kernel not available")
        return _ckernel.run(**arrays.inputs, **arrays.outputs)
    args = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in arrays.inputs.items()}
    outs = {k: v.tolist() for k, v in arrays.outputs.items()}
    info = _kernel_py.run(**args, **outs)
    for k, v in outs.items():
        arrays.outputs[k][:] = v
    return info


# -- metrics -----------------------------------------------------------------


def _rate(tails: np.ndarray, heads: np.ndarray, payload: int, warm: int, period: float) -> float:
    n = len(tails)
    if n == 0:
        return 0.0
    if n == 1:
        return payload / ((tails[0] - heads[0] + 1) * period)
    w = max(1, min(warm, n // 2))
    span = int(tails[-1] - tails[w - 1])
    if span <= 0:
        return (n - w) * payload / period
    return (n - w) * payload / (span * period)


def _flow_times(arrays: _Arrays, fi: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = arrays.base[fi], arrays.base[fi + 1]
    return arrays.outputs["head_t"][a:b], arrays.outputs["tail_t"][a:b]


def simulate(graph: NocGraph, routes: RouteTable, schedule: TransactionSchedule, cfg: SimConfig,
             connections: ConnectionSet | None = None, *, kernel: str | None = None,
             record_packets: bool = False) -> SimMetrics:
    """Run ``schedule`` over ``routes`` and collect throughput/latency metrics.

    ``connections`` defaults to ``schedule.connections`` when the schedule was
    produced by ``build_workload``.
    """
    cfg.validate(schedule.txn_size)
    if connections is None:
        connections = getattr(schedule, "connections", None)
        if connections is None:
            raise SimConfigError("connection set required")
    ppt = schedule.txn_size // cfg.packet_payload
    flows, per_source, conn_flows = _build_flows(graph, routes, schedule, connections, cfg)
    arrays = _Arrays(graph, flows, per_source, cfg, schedule.protocol, schedule.barrier, ppt)
    info = _run_kernel(arrays, kernel)
    if not info["completed"]:
        raise RuntimeError(f"simulation did not drain within {cfg.max_cycles} cycles")
    period = cfg.cycle_ns
    payload = cfg.packet_payload
    warm = cfg.warmup_bytes // payload

    throughput: dict[int, float] = {}
    latency: dict[int, float] = {}
    per_src_tails: dict[int, list[np.ndarray]] = {}
    per_src_heads: dict[int, list[np.ndarray]] = {}
    windows: dict[int, tuple[int, int]] = {}
    for cid, (df, _) in sorted(conn_flows.items()):
        heads, tails = _flow_times(arrays, df)
        throughput[cid] = _rate(tails, heads, payload, warm, period)
        latency[cid] = float(np.mean(tails - heads + 1) * period) if len(tails) else 0.0
        s = flows[df].src
        per_src_tails.setdefault(s, []).append(tails)
        per_src_heads.setdefault(s, []).append(heads)
        if len(tails) >= 2:
            w = max(1, min(warm, len(tails) // 2))
            windows[cid] = (int(tails[w - 1]), int(tails[-1]))

    source_throughput = {}
    for s in sorted(per_src_tails):
        tails = np.sort(np.concatenate(per_src_tails[s]))
        heads = np.sort(np.concatenate(per_src_heads[s]))
        source_throughput[s] = _rate(tails, heads, payload, warm, period)

    steady = dict(throughput)
    if windows:
        t0 = max(a for a, _ in windows.values())
        t1 = min(b for _, b in windows.values())
        if t1 - t0 >= 8 * cfg.packet_flits:
            for cid, (df, _) in conn_flows.items():
                _, tails = _flow_times(arrays, df)
                cnt = int(np.count_nonzero((tails > t0) & (tails <= t1)))
                steady[cid] = cnt * payload / ((t1 - t0) * period)

    end = max(info["end_cycle"], 0) + 1
    link_flits = arrays.outputs["link_flits"]
    nums, den = link_rates(graph, cfg, schedule.protocol)
    util = {}
    for l in np.nonzero(link_flits)[0].tolist():
        util[l] = float(link_flits[l]) / end * den / nums[l]

    # ejection utilization of each destination within each phase
    groups: dict[tuple[int, NodeRef], list[int]] = {}
    phase_of: dict[int, int] = {}
    for segs in schedule.per_source:
        for seg in segs:
            phase_of.setdefault(seg.connection, seg.phase)
    for cid, (df, _) in conn_flows.items():
        conn = connections.connections[cid]
        groups.setdefault((phase_of[cid], conn.dst), []).append(df)
    sink_util: dict[str, float] = {}
    for (ph, dst), dfs in groups.items():
        firsts = [int(arrays.outputs["first_ej"][f]) for f in dfs if arrays.outputs["first_ej"][f] >= 0]
        if not firsts:
            continue
        lo = min(firsts)
        hi = max(int(arrays.outputs["last_ej"][f]) for f in dfs)
        flits = sum(flows[f].npkts * flows[f].pkt_flits for f in dfs)
        sink_util[f"{ph}:{dst.column}/{dst.slr}/{dst.index}"] = flits / (hi - lo + 1)

    data_pkts = sum(flows[df].npkts for df, _ in conn_flows.values())
    aggregate = {
        "kernel": kernel or DEFAULT_KERNEL,
        "flits_created": int(info["created"]),
        "flits_ejected": int(info["ejected"]),
        "in_flight": int(info["in_queues"]),
        "end_cycle": int(info["end_cycle"]),
        "elapsed_ns": end * period,
        "payload_bytes": data_pkts * payload,
        "throughput_gbps": data_pkts * payload / (end * period) if end else 0.0,
        "mean_source_throughput_gbps": (sum(source_throughput.values()) / len(source_throughput)
                                        if source_throughput else 0.0),
        "seed": cfg.seed,
    }
    packets: list[PacketEvent] = []
    if record_packets:
        names = {KIND_READ_REQ: "read_req", KIND_READ_RESP: "read_resp", KIND_WRITE_RESP: "write_resp"}
        for fi, f in enumerate(flows):
            kname = names.get(f.kind, "stream" if schedule.protocol.kind == "Stream" else "write_req")
            heads, tails = _flow_times(arrays, fi)
            for p in range(f.npkts):
                packets.append(PacketEvent(f.connection, p, kname, f.pkt_flits,
                                           float(heads[p]) * period, float(tails[p] + 1) * period))
    return SimMetrics(throughput, latency, util, source_throughput, steady, sink_util, aggregate, packets)


def measure_latency(graph: NocGraph, routes: RouteTable, cfg: SimConfig, probe: int,
                    size_flits: int = 1, *, kernel: str | None = None) -> float:
    """One-way latency (ns) of a lone packet on the route of connection ``probe``."""
    if probe not in routes.routes:
        raise SimConfigError(f"probe connection {probe} has no route")
    if size_flits < 1:
        raise SimConfigError("size_flits must be >= 1")
    flow = _Flow(probe, KIND_DATA, tuple(routes.routes[probe].links), size_flits, 1, 0, npkts=1)
    arrays = _Arrays(graph, [flow], [[(0, 1, 0)]], cfg, None, False, 1)
    _run_kernel(arrays, kernel)
    head = int(arrays.outputs["head_t"][0])
    tail = int(arrays.outputs["tail_t"][0])
    return (tail - head + 1) * cfg.cycle_ns


def quantized_path_latency(graph: NocGraph, path: LinkPath, cfg: SimConfig) -> float:
    """Path latency after rounding every link to whole NoC cycles (ns)."""
    lat = link_cycles(graph, cfg)
    return sum(lat[l] for l in path.links) * cfg.cycle_ns


def read_law(path_cycles_fwd: int, path_cycles_back: int, cfg: SimConfig, bottleneck_payload_gbps: float) -> float:
    """Closed-loop read ceiling: ``min(capacity, window * payload / RTT)``.

    The round trip counts the request flit, the NSU turnaround and the
    response packet serialized at the bottleneck rate.
    """
    raw = cfg.raw_link_capacity
    resp_cycles = cfg.packet_flits * raw / (bottleneck_payload_gbps / cfg.payload_efficiency)
    rtt = (path_cycles_fwd + cfg.cycles(cfg.subordinate_latency_ns) + path_cycles_back + resp_cycles - 1) * cfg.cycle_ns
    return min(bottleneck_payload_gbps, cfg.read_window * cfg.packet_payload / rtt)


def simulate_pair(graph: NocGraph, path: LinkPath, src: NodeRef, dst: NodeRef, protocol, cfg: SimConfig,
                  total_bytes: int = 65536, txn_size: int = 4096, *, kernel: str | None = None) -> SimMetrics:
    """Isolated single-connection run over a fixed path."""
    from .traffic import Connection, single_pair_schedule

    conn = Connection(src, dst, protocol.port_rate)
    schedule = single_pair_schedule(conn, protocol, total_bytes, txn_size)
    return simulate(graph, RouteTable({0: path}), schedule, cfg, kernel=kernel)
