"""Placements, traffic patterns and transaction schedules."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .topology import NocGraph, NodeRef

PATTERNS = ("NearestNeighbor", "Shift", "Tornado", "Reverse", "Uniform", "Hotspot", "Random")
PLACEMENTS = ("Local", "HNoC", "VNoC", "Spread")
PROTOCOLS = ("ReadOnly", "WriteOnly", "Stream")

SMALL_NETWORK_PORT_RATE = 16.0  # GB/s shared among sources of small networks
ROUTABILITY_QOS = 0.005  # GB/s (5 MB/s) for larger networks


class PlacementError(ValueError):
    pass


class PatternError(ValueError):
    pass


class WorkloadError(ValueError):
    pass


class ProtocolKind(str, Enum):
    READ = "ReadOnly"
    WRITE = "WriteOnly"
    STREAM = "Stream"


@dataclass(frozen=True)
class Placement:
    kind: str
    n_pairs: int
    column: int = 0
    slr: int | None = None  # HNoC row SLR / Local group SLR; defaults per kind

    def __post_init__(self):
        if self.kind not in PLACEMENTS:
            raise PlacementError(f"unknown placement {self.kind!r}")
        if self.n_pairs < 1:
            raise PlacementError("n_pairs must be >= 1")


@dataclass(frozen=True)
class Protocol:
    kind: str = "Stream"
    data_width: int = 512  # bits
    user_clock: float = 250.0  # MHz

    def __post_init__(self):
        if self.kind not in PROTOCOLS:
            raise WorkloadError(f"unknown protocol {self.kind!r}")

    @property
    def port_rate(self) -> float:
        """User-side port rate in GB/s."""
        return self.data_width / 8 * self.user_clock / 1000.0

    @property
    def bidirectional(self) -> bool:
        return self.kind != "Stream"


@dataclass
class Workload:
    pattern: str
    placement: Placement
    protocol: Protocol = field(default_factory=Protocol)
    txn_size: int = 4096
    total_bytes_per_pair: int = 65536
    qos_per_connection: float | None = None  # GB/s; None applies the size rule
    rng_seed: int = 0

    def validate(self) -> None:
        if self.pattern not in PATTERNS:
            raise PatternError(f"unknown pattern {self.pattern!r}")
        if self.txn_size <= 0 or self.total_bytes_per_pair % self.txn_size:
            raise WorkloadError("txn_size must divide total_bytes_per_pair")
        if self.pattern == "Random" and self.protocol.kind == "Stream":
            raise WorkloadError("Random pattern is defined for AXI-MM only (ReadOnly/WriteOnly)")
        if self.qos_per_connection is not None and self.qos_per_connection <= 0:
            raise WorkloadError("qos_per_connection must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Workload":
        data = dict(data)
        data["placement"] = Placement(**data["placement"])
        data["protocol"] = Protocol(**data.get("protocol", {}))
        return cls(**data)


def load_workload(path: str | Path) -> Workload:
    return Workload.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Connection:
    src: NodeRef
    dst: NodeRef
    qos: float  # GB/s
    phase: int = 0


@dataclass
class ConnectionSet:
    connections: list[Connection]

    def __len__(self) -> int:
        return len(self.connections)

    def __iter__(self):
        return iter(self.connections)

    def validate(self) -> None:
        by_phase: dict[int, list[Connection]] = {}
        for c in self.connections:
            if c.qos <= 0:
                raise WorkloadError("qos must be > 0")
            by_phase.setdefault(c.phase, []).append(c)
        for phase, conns in by_phase.items():
            pairs = {(c.src, c.dst) for c in conns}
            if len(pairs) != len(conns):
                raise WorkloadError(f"duplicate connection in phase {phase}")

    def to_list(self) -> list[dict[str, Any]]:
        return [
            {"src": c.src.as_dict(), "dst": c.dst.as_dict(), "qos": c.qos, "phase": c.phase}
            for c in self.connections
        ]

    @classmethod
    def from_list(cls, items: list[dict[str, Any]]) -> "ConnectionSet":
        return cls([
            Connection(NodeRef(**d["src"]), NodeRef(**d["dst"]), float(d["qos"]), int(d.get("phase", 0)))
            for d in items
        ])


@dataclass(frozen=True)
class Segment:
    """A run of transactions one source sends over one connection."""

    connection: int
    transactions: int
    phase: int


@dataclass
class TransactionSchedule:
    protocol: Protocol
    txn_size: int
    per_source: list[list[Segment]]
    barrier: bool = False  # all sources finish a phase before the next starts
    connections: ConnectionSet | None = None

    @property
    def n_phases(self) -> int:
        return 1 + max((s.phase for segs in self.per_source for s in segs), default=-1)

    def transactions_per_connection(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for segs in self.per_source:
            for s in segs:
                out[s.connection] = out.get(s.connection, 0) + s.transactions
        return out


# -- placements --------------------------------------------------------------


def _spread_cells(graph: NocGraph, n: int) -> list[tuple[int, int, int]]:
    spec = graph.spec
    top = spec.slr_count - 1
    if n == 4 and spec.vnoc_columns > 1:
        last_col = spec.vnoc_columns - 1
        top_idx = spec.endpoints_in(top) - 1
        return [(0, 0, 0), (last_col, 0, 0), (0, top, top_idx), (last_col, top, top_idx)]
    cells = [(c, s) for s in range(spec.slr_count) for c in range(spec.vnoc_columns)]
    per_cell = -(-n // len(cells))
    out = []
    for k in range(n):
        cell = cells[(k * len(cells) // n) % len(cells)] if n <= len(cells) else cells[k % len(cells)]
        c, s = cell
        # stack extra endpoints on the same cell going inward from the die edge
        depth = 0 if n <= len(cells) else k // len(cells)
        if depth >= min(per_cell, spec.endpoints_in(s)):
            raise PlacementError(f"Spread cannot fit {n} pairs")
        idx = depth if s < spec.slr_count / 2 else spec.endpoints_in(s) - 1 - depth
        out.append((c, s, idx))
    return out


def place_nodes(placement: Placement, graph: NocGraph) -> tuple[list[NodeRef], list[NodeRef]]:
    """Map pair indices 0..n-1 to co-located NMU/NSU endpoints."""
    spec = graph.spec
    n = placement.n_pairs
    kind = placement.kind
    if not 0 <= placement.column < spec.vnoc_columns:
        raise PlacementError(f"column {placement.column} out of range")
    cells: list[tuple[int, int, int]]
    if kind == "Local":
        slr = placement.slr if placement.slr is not None else 0
        cap = spec.endpoints_in(slr)
        if n > cap:
            raise PlacementError(f"Local group holds at most {cap} pairs, asked for {n}")
        cells = [(placement.column, slr, i) for i in range(n)]
    elif kind == "HNoC":
        slr = placement.slr if placement.slr is not None else min(1, spec.slr_count - 1)
        per_col = spec.endpoints_in(slr)
        if n > per_col * spec.vnoc_columns:
            raise PlacementError(f"HNoC placement in SLR{slr} holds at most {per_col * spec.vnoc_columns} pairs")
        counts = [0] * spec.vnoc_columns
        for i in range(n):
            counts[i * spec.vnoc_columns // n] += 1
        if max(counts) > per_col:
            raise PlacementError("HNoC column over capacity")
        top_row = slr >= spec.slr_count / 2
        cells = []
        for c, cnt in enumerate(counts):
            for j in range(cnt):
                idx = per_col - 1 - j if top_row else j
                cells.append((c, slr, idx))
    elif kind == "VNoC":
        cap = sum(spec.endpoints_in(s) for s in range(spec.slr_count))
        if n > cap:
            raise PlacementError(f"VNoC column holds at most {cap} pairs")
        counts = [0] * spec.slr_count
        for i in range(n):
            counts[i * spec.slr_count // n] += 1
        cells = []
        for s, cnt in enumerate(counts):
            if cnt > spec.endpoints_in(s):
                raise PlacementError(f"VNoC SLR{s} over capacity")
            for j in range(cnt):
                cells.append((placement.column, s, j))
    else:
        if n > spec.endpoint_count:
            raise PlacementError("Spread exceeds device endpoints")
        cells = _spread_cells(graph, n)
    sources = [NodeRef(c, s, i, "source") for c, s, i in cells]
    sinks = [NodeRef(c, s, i, "sink") for c, s, i in cells]
    return sources, sinks


# -- patterns ----------------------------------------------------------------


def gen_pattern(pattern: str, n: int, rng_seed: int = 0, draws: int | None = None) -> list[dict[int, int]]:
    """Phase list of source->destination index maps.

    Point-to-point patterns yield one phase. Uniform and Hotspot yield ``n``
    phases. Random yields ``draws`` phases (default ``n``), each an
    independent uniform draw per source.
    """
    if pattern not in PATTERNS:
        raise PatternError(f"unknown pattern {pattern!r}")
    min_n = 1 if pattern == "NearestNeighbor" else 2
    if n < min_n:
        raise PatternError(f"{pattern} needs n >= {min_n}")
    if pattern == "NearestNeighbor":
        return [{i: i for i in range(n)}]
    if pattern == "Shift":
        return [{i: (i + 1) % n for i in range(n)}]
    if pattern == "Tornado":
        return [{i: (i + n // 2) % n for i in range(n)}]
    if pattern == "Reverse":
        return [{i: n - 1 - i for i in range(n)}]
    if pattern == "Uniform":
        return [{i: (i + k) % n for i in range(n)} for k in range(n)]
    if pattern == "Hotspot":
        return [{i: k for i in range(n)} for k in range(n)]
    rng = random.Random(rng_seed)
    return [{i: rng.randrange(n) for i in range(n)} for _ in range(draws if draws is not None else n)]


def qos_rule(n_pairs: int) -> float:
    """Per-connection QoS request in GB/s for a network of ``n_pairs``."""
    if n_pairs < 4:
        return SMALL_NETWORK_PORT_RATE / n_pairs
    return ROUTABILITY_QOS


def build_workload(workload: Workload, graph: NocGraph) -> tuple[ConnectionSet, TransactionSchedule]:
    workload.validate()
    sources, sinks = place_nodes(workload.placement, graph)
    n = len(sources)
    qos = workload.qos_per_connection if workload.qos_per_connection is not None else qos_rule(n)
    txns = workload.total_bytes_per_pair // workload.txn_size
    if workload.pattern == "Random":
        # one draw per transaction; same traffic volume as Uniform
        phases = gen_pattern("Random", n, workload.rng_seed, draws=n * txns)
        per_phase_txns = 1
    else:
        phases = gen_pattern(workload.pattern, n)
        per_phase_txns = txns
    index: dict[tuple[int, int], int] = {}
    conns: list[Connection] = []
    per_source: list[list[Segment]] = [[] for _ in range(n)]
    for k, mapping in enumerate(phases):
        for i in range(n):
            j = mapping[i]
            key = (i, j)
            if key not in index:
                index[key] = len(conns)
                conns.append(Connection(sources[i], sinks[j], qos, k if workload.pattern != "Random" else 0))
            segs = per_source[i]
            cid = index[key]
            if workload.pattern == "Random" and segs and segs[-1].connection == cid:
                segs[-1] = Segment(cid, segs[-1].transactions + per_phase_txns, segs[-1].phase)
            else:
                segs.append(Segment(cid, per_phase_txns, k))
    schedule = TransactionSchedule(
        protocol=workload.protocol,
        txn_size=workload.txn_size,
        per_source=per_source,
        barrier=workload.pattern == "Hotspot",
    )
    cset = ConnectionSet(conns)
    schedule.connections = cset
    return cset, schedule


def single_pair_schedule(connection: Connection, protocol: Protocol, total_bytes: int = 65536,
                         txn_size: int = 4096) -> TransactionSchedule:
    """Schedule for one isolated connection (id 0)."""
    return TransactionSchedule(protocol, txn_size, [[Segment(0, total_bytes // txn_size, 0)]],
                               connections=ConnectionSet([connection]))
