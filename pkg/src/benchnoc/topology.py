"""Device model for chiplet-partitioned hard NoCs.

A device is a stack of SLRs. Every SLR holds ``vnoc_columns`` vertical
columns; each column offers a number of endpoint taps, and every tap has one
packet switch (NPS) with one NMU (injection) and one NSU (ejection) attached.
Columns are stitched across die boundaries through NIDB bridges, and HNoC
rows connect the columns of one SLR horizontally. Rows flagged ``has_ncrb``
route every horizontal hop through a clock re-convergent buffer.

Node ids are assigned column-major, bottom-up, so identical specs always
produce identical graphs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
import pathlib
from typing import Any, Iterable, Sequence

LINK_KINDS = ("local", "vnoc_hop", "hnoc_hop", "nidb", "ncrb")

DEFAULT_LINK_LATENCY = {
    "local": 5.0,
    "vnoc_hop": 8.0,
    "hnoc_hop": 4.0,
    "nidb": 25.0,
    "ncrb": 10.0,
}


class DeviceSpecError(ValueError):
    """Raised for an inconsistent device description.

    ``field`` names the offending DeviceSpec field.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class RoutingError(RuntimeError):
    pass


class NodeKind(str, Enum):
    NMU = "NMU"
    NSU = "NSU"
    NPS = "NPS"
    NIDB = "NIDB"
    NCRB = "NCRB"
    MC = "MC"  # memory controller port, appended by the memory module


@dataclass(frozen=True)
class HnocRow:
    slr_index: int
    has_ncrb: bool = True
    is_memory_row: bool = False
    # which end of the SLR the row hugs: "bottom" attaches to tap 0,
    # "top" to the highest tap; the memory row always sits below tap 0
    position: str = "bottom"


@dataclass
class DeviceSpec:
    name: str = "device"
    slr_count: int = 1
    vnoc_columns: int = 1
    nmu_per_column_bottom_slr: int = 7
    nmu_per_column_other_slr: int = 6
    noc_clock: float = 1080.0  # MHz
    flit_width: int = 128  # bits
    hnoc_rows: list[HnocRow] = field(default_factory=list)
    link_latency: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_LINK_LATENCY)
    )
    vnoc_channels: int = 2
    hnoc_channels: int = 2
    memory: dict[str, Any] | None = None

    @property
    def raw_link_capacity(self) -> float:
        """Raw link capacity in GB/s (flit width x NoC clock)."""
        return self.flit_width / 8 * self.noc_clock / 1000.0

    def endpoints_in(self, slr: int) -> int:
        return self.nmu_per_column_bottom_slr if slr == 0 else self.nmu_per_column_other_slr

    @property
    def endpoint_count(self) -> int:
        return self.vnoc_columns * (
            self.nmu_per_column_bottom_slr
            + (self.slr_count - 1) * self.nmu_per_column_other_slr
        )

    def memory_row(self) -> HnocRow | None:
        for row in self.hnoc_rows:
            if row.is_memory_row:
                return row
        return None

    def validate(self) -> None:
        if self.slr_count < 1:
            raise DeviceSpecError("slr_count", "must be >= 1")
        if self.vnoc_columns < 1:
            raise DeviceSpecError("vnoc_columns", "must be >= 1")
        if self.nmu_per_column_bottom_slr < 1:
            raise DeviceSpecError("nmu_per_column_bottom_slr", "must be >= 1")
        if self.slr_count > 1 and self.nmu_per_column_other_slr < 1:
            raise DeviceSpecError("nmu_per_column_other_slr", "must be >= 1")
        if self.vnoc_channels < 1:
            raise DeviceSpecError("vnoc_channels", "must be >= 1")
        if self.hnoc_channels < 1:
            raise DeviceSpecError("hnoc_channels", "must be >= 1")
        if self.noc_clock <= 0 or self.flit_width <= 0:
            raise DeviceSpecError("noc_clock", "clock and flit width must be positive")
        missing = set(LINK_KINDS) - set(self.link_latency)
        if missing:
            raise DeviceSpecError("link_latency", f"missing kinds {sorted(missing)}")
        for kind, value in self.link_latency.items():
            if kind not in LINK_KINDS:
                raise DeviceSpecError("link_latency", f"unknown kind {kind!r}")
            if value <= 0:
                raise DeviceSpecError("link_latency", f"{kind} latency must be > 0")
        if self.link_latency["nidb"] < self.link_latency["vnoc_hop"]:
            raise DeviceSpecError("link_latency", "nidb latency must be >= vnoc_hop latency")
        memory_rows = [r for r in self.hnoc_rows if r.is_memory_row]
        for row in self.hnoc_rows:
            if not 0 <= row.slr_index < self.slr_count:
                raise DeviceSpecError("hnoc_rows", f"row slr_index {row.slr_index} out of range")
            if row.position not in ("bottom", "top"):
                raise DeviceSpecError("hnoc_rows", f"bad position {row.position!r}")
        if len(memory_rows) > 1:
            raise DeviceSpecError("hnoc_rows", "at most one memory row")
        if memory_rows and memory_rows[0].slr_index != 0:
            raise DeviceSpecError("hnoc_rows", "memory row must be on the bottom SLR")
        if self.memory is not None and not memory_rows:
            raise DeviceSpecError("hnoc_rows", "memory attached but no memory row declared")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["hnoc_rows"] = [asdict(r) for r in self.hnoc_rows]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DeviceSpec":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DeviceSpecError(sorted(unknown)[0], "unknown DeviceSpec field")
        rows = [r if isinstance(r, HnocRow) else HnocRow(**r) for r in data.pop("hnoc_rows", [])]
        latency = dict(DEFAULT_LINK_LATENCY)
        latency.update(data.pop("link_latency", {}) or {})
        return cls(hnoc_rows=rows, link_latency=latency, **data)


def load_device(path: str | pathlib.Path) -> DeviceSpec:
    """Load a device JSON file; bare names resolve to shipped defaults."""
    p = pathlib.Path(path)
    if not p.exists():
        name = p.name if p.suffix == ".json" else f"{p.name}.json"
        text = resources.files("benchnoc.data").joinpath(name).read_text()
    else:
        text = p.read_text()
    return DeviceSpec.from_dict(json.loads(text))


def default_rows(slr_count: int, memory: bool = True) -> list[HnocRow]:
    """One HNoC row per SLR; the bottom one is the NCRB-free memory row."""
    rows = []
    for s in range(slr_count):
        if s == 0 and memory:
            rows.append(HnocRow(0, has_ncrb=False, is_memory_row=True, position="bottom"))
        else:
            # rows in the upper half hug the top edge so corner routes mirror
            pos = "top" if s >= slr_count / 2 else "bottom"
            rows.append(HnocRow(s, has_ncrb=True, position=pos))
    return rows


def vp1802_spec() -> DeviceSpec:
    return DeviceSpec(
        name="vp1802",
        slr_count=4,
        vnoc_columns=4,
        nmu_per_column_bottom_slr=7,
        nmu_per_column_other_slr=6,
        hnoc_rows=default_rows(4),
        memory={"kind": "dram", "noc_links_to_dram": 8, "aggregate_practical_bw": 70.0},
    )


def vh1782_spec() -> DeviceSpec:
    return DeviceSpec(
        name="vh1782",
        slr_count=3,
        vnoc_columns=4,
        nmu_per_column_bottom_slr=7,
        nmu_per_column_other_slr=6,
        hnoc_rows=default_rows(3),
        memory={
            "kind": "hbm",
            "stacks": 1,
            "hbm_nmus_per_stack": 32,
            "hbm_nmu_width": 256,
            "hbm_nmu_clock": 400.0,
            "controller_efficiency": 0.86,
        },
    )


# -- graph ---------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    column: int
    row: int  # global tap row (taps counted bottom-up over all SLRs); -1 for row switches
    slr: int
    name: str


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    kind: str
    capacity: float  # GB/s raw
    latency: float  # ns
    channel: int = 0


@dataclass(frozen=True)
class NodeRef:
    column: int
    slr: int
    index: int
    role: str  # "source" (NMU) or "sink" (NSU)

    def __post_init__(self):
        if self.role not in ("source", "sink"):
            raise ValueError(f"bad role {self.role!r}")

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Path:
    """Ordered link ids from an NMU to an NSU."""

    links: tuple[int, ...]

    def __add__(self, other: "Path") -> "Path":
        return Path(self.links + other.links)

    def __len__(self) -> int:
        return len(self.links)


class NocGraph:
    """Immutable, capacity/latency-annotated directed multigraph."""

    def __init__(self, spec: DeviceSpec, nodes: Sequence[Node], links: Sequence[Link],
                 endpoints: dict[tuple[str, int, int, int], int],
                 taps: dict[tuple[int, int, int], int],
                 row_switches: dict[tuple[int, int], int],
                 nidbs: dict[tuple[int, int, str], int] | None = None,
                 ncrbs: dict[tuple[int, int], int] | None = None,
                 extras: dict[str, Any] | None = None):
        self.spec = spec
        self.nodes = tuple(nodes)
        self.links = tuple(links)
        self._endpoints = dict(endpoints)
        self._taps = dict(taps)
        self._row_switches = dict(row_switches)
        self._nidbs = dict(nidbs or {})
        self._ncrbs = dict(ncrbs or {})
        self.extras = dict(extras or {})
        out: list[list[int]] = [[] for _ in self.nodes]
        between: dict[tuple[int, int], list[int]] = {}
        for link in self.links:
            out[link.src].append(link.id)
            between.setdefault((link.src, link.dst), []).append(link.id)
        self.out_links = tuple(tuple(x) for x in out)
        self._between = {k: tuple(v) for k, v in between.items()}

    def extend(self, nodes: Sequence[Node], links: Sequence[Link], extras: dict[str, Any] | None = None) -> "NocGraph":
        """A new graph with extra nodes/links appended (ids must continue the sequence)."""
        for k, n in enumerate(nodes):
            if n.id != len(self.nodes) + k:
                raise ValueError("appended node ids must be contiguous")
        for k, l in enumerate(links):
            if l.id != len(self.links) + k:
                raise ValueError("appended link ids must be contiguous")
        merged = dict(self.extras)
        merged.update(extras or {})
        return NocGraph(self.spec, self.nodes + tuple(nodes), self.links + tuple(links), self._endpoints,
                        self._taps, self._row_switches, self._nidbs, self._ncrbs, merged)

    # -- lookups -----------------------------------------------------------

    def endpoint(self, ref: NodeRef) -> int:
        key = ("NMU" if ref.role == "source" else "NSU", ref.column, ref.slr, ref.index)
        try:
            return self._endpoints[key]
        except KeyError:
            raise RoutingError(f"no endpoint {ref}") from None

    def tap(self, column: int, slr: int, index: int) -> int:
        return self._taps[(column, slr, index)]

    def row_switch(self, row: int, column: int) -> int:
        return self._row_switches[(row, column)]

    def nidb(self, column: int, lower_slr: int, side: str) -> int:
        return self._nidbs[(column, lower_slr, side)]

    def ncrb(self, row: int, left_column: int) -> int:
        return self._ncrbs[(row, left_column)]

    def links_between(self, src: int, dst: int) -> tuple[int, ...]:
        return self._between.get((src, dst), ())

    def link(self, link_id: int) -> Link:
        return self.links[link_id]

    def count(self, kind: NodeKind) -> int:
        return sum(1 for n in self.nodes if n.kind == kind)

    def endpoint_refs(self, role: str = "source") -> list[NodeRef]:
        spec = self.spec
        refs = []
        for c in range(spec.vnoc_columns):
            for s in range(spec.slr_count):
                for i in range(spec.endpoints_in(s)):
                    refs.append(NodeRef(c, s, i, role))
        return refs

    def path_nodes(self, path: Path) -> list[int]:
        if not path.links:
            return []
        nodes = [self.links[path.links[0]].src]
        for lid in path.links:
            nodes.append(self.links[lid].dst)
        return nodes

    def is_valid_path(self, path: Path) -> bool:
        for a, b in zip(path.links, path.links[1:]):
            if self.links[a].dst != self.links[b].src:
                return False
        return True

    def kind_counts(self, path: Path) -> dict[str, int]:
        counts = {k: 0 for k in LINK_KINDS}
        for lid in path.links:
            counts[self.links[lid].kind] += 1
        return counts


def _node_name(kind: str, *parts: int) -> str:
    return kind.lower() + "_" + "_".join(str(p) for p in parts)


def build_device(spec: DeviceSpec) -> NocGraph:
    """Construct the NoC graph for ``spec``."""
    spec.validate()
    nodes: list[Node] = []
    links: list[Link] = []
    endpoints: dict[tuple[str, int, int, int], int] = {}
    taps: dict[tuple[int, int, int], int] = {}
    nidb: dict[tuple[int, int, str], int] = {}
    row_switches: dict[tuple[int, int], int] = {}
    ncrbs: dict[tuple[int, int], int] = {}
    lat = spec.link_latency
    cap = spec.raw_link_capacity
    slr_base = [0]
    for s in range(spec.slr_count):
        slr_base.append(slr_base[-1] + spec.endpoints_in(s))

    def add_node(kind: NodeKind, column: int, row: int, slr: int, name: str) -> int:
        nid = len(nodes)
        nodes.append(Node(nid, kind, column, row, slr, name))
        return nid

    def add_link(src: int, dst: int, kind: str, channel: int = 0) -> None:
        links.append(Link(len(links), src, dst, kind, cap, lat[kind], channel))

    def add_pair(a: int, b: int, kind: str, channels: int) -> None:
        for ch in range(channels):
            add_link(a, b, kind, ch)
            add_link(b, a, kind, ch)

    # nodes, column-major and bottom-up
    for c in range(spec.vnoc_columns):
        for s in range(spec.slr_count):
            for i in range(spec.endpoints_in(s)):
                g = slr_base[s] + i
                taps[(c, s, i)] = add_node(NodeKind.NPS, c, g, s, _node_name("nps", c, s, i))
                endpoints[("NMU", c, s, i)] = add_node(NodeKind.NMU, c, g, s, _node_name("nmu", c, s, i))
                endpoints[("NSU", c, s, i)] = add_node(NodeKind.NSU, c, g, s, _node_name("nsu", c, s, i))
            if s < spec.slr_count - 1:
                top = slr_base[s + 1] - 1
                nidb[(c, s, "lo")] = add_node(NodeKind.NIDB, c, top, s, _node_name("nidb_lo", c, s))
                nidb[(c, s, "hi")] = add_node(NodeKind.NIDB, c, top + 1, s + 1, _node_name("nidb_hi", c, s))
    for r, row in enumerate(spec.hnoc_rows):
        for c in range(spec.vnoc_columns):
            row_switches[(r, c)] = add_node(NodeKind.NPS, c, -1, row.slr_index, _node_name("hnps", r, c))
        if row.has_ncrb:
            for c in range(spec.vnoc_columns - 1):
                ncrbs[(r, c)] = add_node(NodeKind.NCRB, c, -1, row.slr_index, _node_name("ncrb", r, c))

    # links
    for c in range(spec.vnoc_columns):
        for s in range(spec.slr_count):
            k = spec.endpoints_in(s)
            for i in range(k):
                t = taps[(c, s, i)]
                nmu, nsu = endpoints[("NMU", c, s, i)], endpoints[("NSU", c, s, i)]
                add_link(nmu, t, "local")
                add_link(t, nmu, "local")  # read data / write response back to the manager
                add_link(t, nsu, "local")
                add_link(nsu, t, "local")
                if i + 1 < k:
                    add_pair(t, taps[(c, s, i + 1)], "vnoc_hop", spec.vnoc_channels)
            if s < spec.slr_count - 1:
                lo, hi = nidb[(c, s, "lo")], nidb[(c, s, "hi")]
                add_pair(taps[(c, s, k - 1)], lo, "vnoc_hop", spec.vnoc_channels)
                add_pair(lo, hi, "nidb", spec.vnoc_channels)
                add_pair(hi, taps[(c, s + 1, 0)], "vnoc_hop", spec.vnoc_channels)
    for r, row in enumerate(spec.hnoc_rows):
        s = row.slr_index
        attach = spec.endpoints_in(s) - 1 if row.position == "top" and not row.is_memory_row else 0
        for c in range(spec.vnoc_columns):
            add_pair(row_switches[(r, c)], taps[(c, s, attach)], "vnoc_hop", spec.vnoc_channels)
        for c in range(spec.vnoc_columns - 1):
            a, b = row_switches[(r, c)], row_switches[(r, c + 1)]
            if row.has_ncrb:
                n = ncrbs[(r, c)]
                for ch in range(spec.hnoc_channels):
                    add_link(a, n, "ncrb", ch)
                    add_link(n, b, "hnoc_hop", ch)
                    add_link(b, n, "ncrb", ch)
                    add_link(n, a, "hnoc_hop", ch)
            else:
                add_pair(a, b, "hnoc_hop", spec.hnoc_channels)

    return NocGraph(spec, nodes, links, endpoints, taps, row_switches, nidb, ncrbs)


# -- routing helpers ---------------------------------------------------------


def _row_attach(spec: DeviceSpec, row: HnocRow) -> int:
    if row.position == "top" and not row.is_memory_row:
        return spec.endpoints_in(row.slr_index) - 1
    return 0


def _vertical_nodes(graph: NocGraph, column: int, a: tuple[int, int], b: tuple[int, int]) -> list[int]:
    """Node sequence along a column from tap ``a`` to tap ``b`` (each (slr, idx))."""
    spec = graph.spec

    def linear(slr: int, idx: int) -> int:
        return sum(spec.endpoints_in(s) for s in range(slr)) + idx

    seq: list[int] = []
    ga, gb = linear(*a), linear(*b)
    step = 1 if gb >= ga else -1
    slr, idx = a
    seq.append(graph.tap(column, slr, idx))
    g = ga
    while g != gb:
        if step > 0:
            if idx + 1 < spec.endpoints_in(slr):
                idx += 1
            else:
                seq.append(graph.nidb(column, slr, "lo"))
                seq.append(graph.nidb(column, slr, "hi"))
                slr, idx = slr + 1, 0
        else:
            if idx > 0:
                idx -= 1
            else:
                seq.append(graph.nidb(column, slr - 1, "hi"))
                seq.append(graph.nidb(column, slr - 1, "lo"))
                slr, idx = slr - 1, spec.endpoints_in(slr - 1) - 1
        g += step
        seq.append(graph.tap(column, slr, idx))
    return seq


def _links_for(graph: NocGraph, node_seq: Sequence[int], vchan: int, hchan: int) -> list[int]:
    out = []
    for a, b in zip(node_seq, node_seq[1:]):
        options = graph.links_between(a, b)
        if not options:
            raise RoutingError(f"no link {graph.nodes[a].name} -> {graph.nodes[b].name}")
        kind = graph.links[options[0]].kind
        want = hchan if kind in ("hnoc_hop", "ncrb") else vchan
        chosen = options[0]
        for lid in options:
            if graph.links[lid].channel == want:
                chosen = lid
                break
        out.append(chosen)
    return out


def route_via_row(graph: NocGraph, src: NodeRef, dst: NodeRef, row: int | None,
                  vchan: int = 0, hchan: int = 0) -> Path:
    """Dimension-order route: vertical, along ``row``, vertical again.

    ``row=None`` forces a pure vertical route (same column only).
    """
    if src.role != "source" or dst.role != "sink":
        raise RoutingError("routes run from an NMU (source) to an NSU (sink)")
    spec = graph.spec
    nmu, nsu = graph.endpoint(src), graph.endpoint(dst)
    if row is None:
        if src.column != dst.column:
            raise RoutingError("pure vertical route needs a shared column")
        seq = [nmu] + _vertical_nodes(graph, src.column, (src.slr, src.index), (dst.slr, dst.index)) + [nsu]
        return Path(tuple(_links_for(graph, seq, vchan, hchan)))
    hrow = spec.hnoc_rows[row]
    attach = (hrow.slr_index, _row_attach(spec, hrow))
    seq = [nmu] + _vertical_nodes(graph, src.column, (src.slr, src.index), attach)
    seq.append(graph.row_switch(row, src.column))
    step = 1 if dst.column >= src.column else -1
    for c in range(src.column, dst.column, step):
        if hrow.has_ncrb:
            seq.append(graph.ncrb(row, c if step > 0 else c - 1))
        seq.append(graph.row_switch(row, c + step))
    seq += _vertical_nodes(graph, dst.column, attach, (dst.slr, dst.index))
    seq.append(nsu)
    if len(set(seq)) != len(seq):
        raise RoutingError("route revisits a node")
    return Path(tuple(_links_for(graph, seq, vchan, hchan)))


def nearest_row(spec: DeviceSpec, slr: int) -> int:
    """Index of the HNoC row closest to ``slr`` (own-SLR PL rows first)."""
    best = None
    for r, row in enumerate(spec.hnoc_rows):
        key = (abs(row.slr_index - slr), row.is_memory_row, r)
        if best is None or key < best[0]:
            best = (key, r)
    if best is None:
        raise RoutingError("device declares no HNoC rows")
    return best[1]


def memory_row_index(spec: DeviceSpec) -> int:
    for r, row in enumerate(spec.hnoc_rows):
        if row.is_memory_row:
            return r
    raise RoutingError("device declares no memory row")


def default_path(graph: NocGraph, src: NodeRef, dst: NodeRef, row_choice: str = "nearest_row") -> Path:
    """Vertical-then-horizontal-then-vertical route on channel 0."""
    if row_choice not in ("nearest_row", "memory_row"):
        raise ValueError(f"unknown row_choice {row_choice!r}")
    if src.column == dst.column:
        return route_via_row(graph, src, dst, None)
    if row_choice == "memory_row":
        row = memory_row_index(graph.spec)
    else:
        row = nearest_row(graph.spec, src.slr)
    return route_via_row(graph, src, dst, row)


def reverse_path(graph: NocGraph, path: Path) -> Path:
    """The response route: same nodes backwards, same channels."""
    out = []
    for lid in reversed(path.links):
        link = graph.links[lid]
        options = graph.links_between(link.dst, link.src)
        if not options:
            raise RoutingError(f"link {lid} has no opposite")
        chosen = options[0]
        for o in options:
            if graph.links[o].channel == link.channel:
                chosen = o
                break
        out.append(chosen)
    return Path(tuple(out))


def path_latency(graph: NocGraph, path: Path) -> float:
    """Sum of per-link latencies in ns."""
    return sum(graph.links[lid].latency for lid in path.links)


def path_summary(graph: NocGraph, path: Path) -> dict[str, int]:
    counts = graph.kind_counts(path)
    hops_h = sum(1 for lid in path.links if graph.links[lid].kind == "hnoc_hop")
    return {
        "hops_h": hops_h,
        "hops_v": counts["vnoc_hop"],
        "slr_crossings": counts["nidb"],
        "ncrb_crossings": counts["ncrb"],
    }


def with_latencies(spec: DeviceSpec, latency: dict[str, float]) -> DeviceSpec:
    new = DeviceSpec.from_dict(spec.to_dict())
    new.link_latency.update(latency)
    return new


def endpoint_formula(spec: DeviceSpec) -> int:
    return spec.endpoint_count


def iter_links(graph: NocGraph, kinds: Iterable[str]) -> list[Link]:
    ks = set(kinds)
    return [l for l in graph.links if l.kind in ks]
