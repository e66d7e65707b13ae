"""Experiment harness: heat maps, pattern sweeps, compiler sweeps, reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import refmodel
from .engine import SimConfig, calibrated_config, effective_capacity, measure_latency, simulate, simulate_pair
from .routegen import RouteRequest, RouteTable, compile_routes
from .topology import DeviceSpec, NocGraph, NodeRef, RoutingError, build_device, default_path, path_summary, with_latencies
from .traffic import (PLACEMENTS, PlacementError, Placement, Protocol, Workload, build_workload, place_nodes,
                      qos_rule)

CORNERS = ("BL", "BR", "TL", "TR")
HEATMAP_COLUMNS = ("dst_column", "dst_slr", "dst_index", "hops_h", "hops_v", "slr_crossings",
                   "throughput_gbps", "latency_ns")
ROW_COLUMNS = ("experiment", "pattern", "placement", "size", "protocol", "params", "metric", "value", "units")
UNITS = ("GB/s", "ns", "s", "count", "fraction")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    metric: str
    value: float | str
    units: str
    pattern: str = ""
    placement: str = ""
    size: int = 0
    protocol: str = ""
    params: str = ""  # any further swept parameters, "k=v;k=v"

    def __post_init__(self):
        if self.units not in UNITS:
            raise ValueError(f"unknown unit {self.units!r}")

    def as_list(self) -> list[Any]:
        return [self.experiment, self.pattern, self.placement, self.size, self.protocol, self.params,
                self.metric, _fmt(self.value), self.units]


def _fmt(v: Any) -> Any:
    if isinstance(v, float):
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    return v


@dataclass
class ExperimentPlan:
    kind: str  # heatmap, pattern_sweep, latency_map, memory_sweep, compile_sweep, calibrate
    device: str = "vp1802"
    grid: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "results"
    seed: int = 0

    KINDS = ("heatmap", "pattern_sweep", "latency_map", "memory_sweep", "compile_sweep", "calibrate")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown plan kind {self.kind!r}")
        if self.kind != "calibrate" and not self.grid:
            raise ValueError("parameter grid must not be empty")


def device_graph(spec: DeviceSpec, cfg: SimConfig | None = None) -> NocGraph:
    """Graph whose link latencies follow ``cfg`` (calibrated values by default)."""
    cfg = cfg or calibrated_config()
    if cfg.link_latency:
        spec = with_latencies(spec, cfg.link_latency)
    return build_device(spec)


# -- heat maps ---------------------------------------------------------------


def corner_ref(spec: DeviceSpec, corner: str, role: str = "source") -> NodeRef:
    if corner not in CORNERS:
        raise ValueError(f"unknown corner {corner!r}")
    col = 0 if corner[1] == "L" else spec.vnoc_columns - 1
    slr = 0 if corner[0] == "B" else spec.slr_count - 1
    idx = 0 if corner[0] == "B" else spec.endpoints_in(slr) - 1
    return NodeRef(col, slr, idx, role)


def candidate_routes(graph: NocGraph, src: NodeRef, dst: NodeRef) -> list:
    out = []
    for policy in ("nearest_row", "memory_row"):
        try:
            p = default_path(graph, src, dst, policy)
        except (RoutingError, ValueError):
            continue
        if p not in out:
            out.append(p)
    return out


def heatmap_cell(graph: NocGraph, src: NodeRef, dst: NodeRef, protocol: Protocol | None,
                 cfg: SimConfig, total_bytes: int = 65536) -> dict[str, Any]:
    """Best of the default routes for one destination (throughput, then latency)."""
    best = None
    for path in candidate_routes(graph, src, dst):
        lat = measure_latency(graph, RouteTable({0: path}), cfg, 0)
        thr = 0.0
        if protocol is not None:
            thr = simulate_pair(graph, path, src, dst, protocol, cfg, total_bytes).throughput[0]
        key = (-round(thr, 9), lat)
        if best is None or key < best[0]:
            best = (key, path, thr, lat)
    _, path, thr, lat = best
    summary = path_summary(graph, path)
    return {
        "dst_column": dst.column, "dst_slr": dst.slr, "dst_index": dst.index,
        "hops_h": summary["hops_h"], "hops_v": summary["hops_v"], "slr_crossings": summary["slr_crossings"],
        "throughput_gbps": thr, "latency_ns": lat,
    }


def run_heatmap(graph: NocGraph, corner: str, protocol: Protocol | None, cfg: SimConfig | None = None,
                destinations: Iterable[NodeRef] | None = None, total_bytes: int = 65536) -> list[dict[str, Any]]:
    """One isolated source at ``corner`` against every destination (or a subset).

    ``protocol=None`` produces a latency-only map.
    """
    cfg = cfg or calibrated_config()
    src = corner_ref(graph.spec, corner)
    dsts = list(destinations) if destinations is not None else graph.endpoint_refs("sink")
    return [heatmap_cell(graph, src, d, protocol, cfg, total_bytes) for d in dsts]


def _cell_map(rows: Sequence[dict[str, Any]], key: str) -> dict[tuple[int, int, int], float]:
    return {(r["dst_column"], r["dst_slr"], r["dst_index"]): r[key] for r in rows}


def hop_increments(spec: DeviceSpec, corner: str, rows: Sequence[dict[str, Any]], key: str) -> dict[str, float]:
    """Mean change of ``key`` per added HNoC hop and per added SLR crossing.

    Horizontal steps compare destinations ``k`` and ``k+1`` columns away
    (k >= 1, same SLR and tap). Vertical steps compare destinations one SLR
    apart in the same column at the same tap distance from the source's die
    edge.
    """
    cells = _cell_map(rows, key)
    src = corner_ref(spec, corner)
    right = src.column == 0
    up = src.slr == 0
    h_steps, v_steps = [], []
    for (c, s, i), v in cells.items():
        c2 = c + 1 if right else c - 1
        if c != src.column and (c2, s, i) in cells:
            h_steps.append(cells[(c2, s, i)] - v)
        s2 = s + 1 if up else s - 1
        if 0 <= s2 < spec.slr_count:
            i2 = i if up else spec.endpoints_in(s2) - spec.endpoints_in(s) + i
            if (c, s2, i2) in cells:
                v_steps.append(cells[(c, s2, i2)] - v)
    return {
        "per_hnoc_hop": sum(h_steps) / len(h_steps) if h_steps else float("nan"),
        "per_slr_crossing": sum(v_steps) / len(v_steps) if v_steps else float("nan"),
        "n_hnoc_steps": len(h_steps),
        "n_slr_steps": len(v_steps),
    }


def reflect(spec: DeviceSpec, corner: str, cell: tuple[int, int, int]) -> tuple[int, int, int] | None:
    """Map a destination seen from ``corner`` onto the equivalent cell seen from BL."""
    c, s, i = cell
    if corner[1] == "R":
        c = spec.vnoc_columns - 1 - c
    if corner[0] == "T":
        s2 = spec.slr_count - 1 - s
        depth = spec.endpoints_in(s) - 1 - i  # taps from the top of its SLR
        if depth >= spec.endpoints_in(s2):
            return None
        return (c, s2, depth)
    return (c, s, i)


def map_asymmetry(spec: DeviceSpec, maps: dict[str, Sequence[dict[str, Any]]], key: str = "latency_ns") -> dict[str, float]:
    """Mean relative difference of each corner map from the BL map after reflection."""
    base = _cell_map(maps["BL"], key)
    out = {}
    for corner, rows in maps.items():
        if corner == "BL":
            continue
        diffs = []
        for cell, v in _cell_map(rows, key).items():
            ref = reflect(spec, corner, cell)
            if ref is None or ref not in base or base[ref] == 0:
                continue
            diffs.append(abs(v - base[ref]) / base[ref])
        out[corner] = sum(diffs) / len(diffs) if diffs else float("nan")
    return out


def heatmap_rows(rows: Sequence[dict[str, Any]], corner: str, protocol: str) -> list[ResultRow]:
    out = []
    for r in rows:
        params = f"corner={corner};dst={r['dst_column']}/{r['dst_slr']}/{r['dst_index']}"
        out.append(ResultRow("heatmap", "throughput", r["throughput_gbps"], "GB/s", protocol=protocol, params=params))
        out.append(ResultRow("heatmap", "latency", r["latency_ns"], "ns", protocol=protocol, params=params))
    return out


# -- pattern sweeps ----------------------------------------------------------


def ideal_source_throughput(workload: Workload, graph: NocGraph, port_rate: float | None = None) -> float:
    """Mean per-source throughput of the ideal crossbar for ``workload``.

    Multi-phase patterns run their phases back to back, so a source's rate is
    the harmonic mean of its per-phase allocations.
    """
    sources, _ = place_nodes(workload.placement, graph)
    n = len(sources)
    rate = port_rate if port_rate is not None else workload.protocol.port_rate
    from .traffic import gen_pattern

    if workload.pattern == "Random":
        txns = workload.total_bytes_per_pair // workload.txn_size
        phases = gen_pattern("Random", n, workload.rng_seed, draws=n * txns)
    else:
        phases = gen_pattern(workload.pattern, n)
    inv = [0.0] * n
    for mapping in phases:
        alloc = refmodel.ideal_crossbar({i: (i, mapping[i]) for i in range(n)}, rate)
        for i in range(n):
            inv[i] += 1.0 / alloc[i]
    return sum(len(phases) / v for v in inv) / n


def run_cell(graph: NocGraph, workload: Workload, cfg: SimConfig, budget: float = 60.0):
    """Compile and simulate one workload; returns (CompileResult, SimMetrics | None)."""
    cset, schedule = build_workload(workload, graph)
    req = RouteRequest(cset, time_budget=budget, seed=workload.rng_seed,
                       bidirectional=workload.protocol.bidirectional)
    res = compile_routes(req, graph)
    if res.status != "Feasible":
        return res, None
    return res, simulate(graph, res.routes, schedule, cfg)


def run_pattern_sweep(graph: NocGraph, patterns: Sequence[str], placements: Sequence[str],
                      sizes: Sequence[int] = (4, 7, 8, 16), protocols: Sequence[str] = ("Stream",),
                      cfg: SimConfig | None = None, seed: int = 0, budget: float = 60.0) -> list[ResultRow]:
    """Average source throughput per (pattern, placement, size, protocol) with
    the ideal-crossbar reference next to it."""
    cfg = cfg or calibrated_config()
    rows: list[ResultRow] = []
    for pattern in patterns:
        for placement in placements:
            for n in sizes:
                for proto in protocols:
                    base = dict(experiment="pattern_sweep", pattern=pattern, placement=placement, size=n,
                                protocol=proto)
                    if pattern == "Random" and proto == "Stream":
                        continue
                    wl = Workload(pattern, Placement(placement, n), Protocol(proto), rng_seed=seed)
                    try:
                        res, m = run_cell(graph, wl, cfg, budget)
                    except PlacementError as exc:
                        rows.append(ResultRow(metric="skipped", value=1, units="count",
                                              params=f"reason={exc}", **base))
                        continue
                    if m is None:
                        rows.append(ResultRow(metric="unroutable", value=1, units="count",
                                              params=f"status={res.status}", **base))
                        continue
                    ideal = ideal_source_throughput(wl, graph)
                    avg = m.mean_source_throughput()
                    rows.append(ResultRow(metric="avg_source_throughput", value=avg, units="GB/s", **base))
                    rows.append(ResultRow(metric="ideal_crossbar", value=ideal, units="GB/s", **base))
                    rows.append(ResultRow(metric="fraction_of_ideal", value=avg / ideal, units="fraction", **base))
    return rows


def steady_vs_oracle(graph: NocGraph, workload: Workload, cfg: SimConfig, budget: float = 60.0) -> dict[int, tuple[float, float]]:
    """Engine steady-state throughput and max-min oracle per connection
    (single-phase open-loop workloads)."""
    cset, schedule = build_workload(workload, graph)
    if schedule.n_phases != 1:
        raise ValueError("oracle comparison needs a single-phase workload")
    res = compile_routes(RouteRequest(cset, time_budget=budget, bidirectional=workload.protocol.bidirectional), graph)
    if res.status != "Feasible":
        raise RuntimeError(f"workload not routable: {res.status}")
    m = simulate(graph, res.routes, schedule, cfg)
    cap = effective_capacity(graph, cfg, workload.protocol)
    oracle = refmodel.maxmin_flow({cid: p.links for cid, p in res.routes.routes.items()}, cap)
    return {cid: (m.steady_throughput[cid], oracle[cid]) for cid in sorted(oracle)}


# -- compiler sweep ----------------------------------------------------------


def compile_cell(graph: NocGraph, placement: str, n_nmu: int, n_nsu: int, qos: float = 0.005,
                 budget: float = 60.0, seed: int = 0):
    """All-to-all connections between ``n_nmu`` sources and ``n_nsu`` sinks.

    Returns ``(status, CompileResult | None)``; status is ``not enough #NMU``
    or ``not enough #NSU`` when the placement cannot host the endpoints.
    """
    from .traffic import Connection, ConnectionSet

    try:
        srcs, _ = place_nodes(Placement(placement, n_nmu), graph)
    except PlacementError:
        return "not enough #NMU", None
    try:
        _, dsts = place_nodes(Placement(placement, n_nsu), graph)
    except PlacementError:
        return "not enough #NSU", None
    cset = ConnectionSet([Connection(s, d, qos) for s in srcs for d in dsts])
    res = compile_routes(RouteRequest(cset, time_budget=budget, seed=seed), graph)
    return res.status, res


def run_compile_sweep(graph: NocGraph, nmu_range: Sequence[int], nsu_range: Sequence[int],
                      placements: Sequence[str] = ("HNoC", "Spread"), qos: float = 0.005, budget: float = 60.0,
                      seed: int = 0, timing: bool = False) -> list[ResultRow]:
    """Status and search effort per cell. Wall-clock solve time is only
    reported with ``timing=True`` because it is not reproducible."""
    rows = []
    for placement in placements:
        for a in nmu_range:
            for b in nsu_range:
                base = dict(experiment="compile_sweep", placement=placement, size=a * b,
                            params=f"nmu={a};nsu={b}")
                status, res = compile_cell(graph, placement, a, b, qos, budget, seed)
                rows.append(ResultRow(metric="status", value=status, units="count", **base))
                if res is not None:
                    rows.append(ResultRow(metric="decisions", value=res.decisions, units="count", **base))
                    rows.append(ResultRow(metric="backtracks", value=res.backtracks, units="count", **base))
                    if timing:
                        rows.append(ResultRow(metric="solve_time", value=res.solve_time, units="s", **base))
    return rows


# -- reports -----------------------------------------------------------------


def _sort_key(r: ResultRow):
    return (r.experiment, r.pattern, r.placement, r.size, r.protocol, r.params, r.metric)


def emit_report(rows: Sequence[ResultRow], fmt: str, path: str | Path) -> Path:
    """Write rows as CSV or JSON in canonical order."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    ordered = sorted(rows, key=_sort_key)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(ROW_COLUMNS)
            for r in ordered:
                w.writerow(r.as_list())
            path.write_text(buf.getvalue())
        else:
            data = [dict(zip(ROW_COLUMNS, r.as_list())) for r in ordered]
            path.write_text(json.dumps(data, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path


def write_grid_csv(rows: Sequence[dict[str, Any]], path: str | Path, columns: Sequence[str] = HEATMAP_COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in sorted(rows, key=lambda r: tuple(r[c] for c in columns[:3])):
        w.writerow([_fmt(r[c]) for c in columns])
    path.write_text(buf.getvalue())
    return path


# -- plans -------------------------------------------------------------------


def load_plan(path: str | Path) -> ExperimentPlan:
    data = json.loads(Path(path).read_text())
    return ExperimentPlan(**data)


def run_plan(plan: ExperimentPlan, cfg: SimConfig | None = None) -> list[Path]:
    """Execute ``plan`` and write its files into ``plan.output_dir``."""
    from .topology import load_device

    plan.validate()
    cfg = cfg or calibrated_config()
    spec = load_device(plan.device)
    graph = device_graph(spec, cfg)
    out = Path(plan.output_dir)
    g = plan.grid
    written: list[Path] = []
    if plan.kind in ("heatmap", "latency_map"):
        protos = [None] if plan.kind == "latency_map" else g.get("protocols", ["Stream"])
        for corner in g.get("corners", list(CORNERS)):
            for proto in protos:
                rows = run_heatmap(graph, corner, Protocol(proto) if proto else None, cfg)
                name = f"{plan.kind}_{corner}" + (f"_{proto}" if proto else "") + ".csv"
                written.append(write_grid_csv(rows, out / name))
    elif plan.kind == "pattern_sweep":
        rows = run_pattern_sweep(graph, g.get("patterns", ["NearestNeighbor"]), g.get("placements", list(PLACEMENTS)),
                                 g.get("sizes", [4, 7, 8, 16]), g.get("protocols", ["Stream"]), cfg, plan.seed)
        written.append(emit_report(rows, "csv", out / "pattern_sweep.csv"))
    elif plan.kind == "compile_sweep":
        rows = run_compile_sweep(graph, g.get("nmu_range", [1, 2, 4, 8]), g.get("nsu_range", [1, 2, 4, 8]),
                                 g.get("placements", ["HNoC", "Spread"]), g.get("qos", 0.005), g.get("budget", 60.0),
                                 plan.seed, timing=g.get("timing", False))
        written.append(emit_report(rows, "csv", out / "compile_sweep.csv"))
    elif plan.kind == "memory_sweep":
        from .memory import run_memory_sweep

        rows = run_memory_sweep(spec, cfg, g, plan.seed)
        written.append(emit_report(rows, "csv", out / "memory_sweep.csv"))
    else:
        from .calibrate import CalibrationTargets, calibrate, default_targets, save_result

        targets = CalibrationTargets.from_list(g["anchors"]) if "anchors" in g else default_targets()
        result = calibrate(targets, cfg, spec)
        path = out / "calibrated.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_result(result, path)
        written.append(path)
    return written
