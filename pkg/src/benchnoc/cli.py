"""Command line entry point: ``benchnoc <command> [options]``.

Every command writes JSON or CSV either to ``--out`` or to stdout. The exit
status is 0 when every requested cell produced a result row (skipped or
infeasible cells count as results) and 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import bench, refmodel, routegen
from .engine import KERNELS, SimConfig, calibrated_config, effective_capacity, simulate
from .topology import build_device, load_device
from .traffic import (
    PATTERNS,
    PLACEMENTS,
    PROTOCOLS,
    ConnectionSet,
    Placement,
    Protocol,
    Workload,
    build_workload,
    load_workload,
)


def _emit(text: str, out: str | None) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _dump(data: Any, out: str | None) -> None:
    _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", out)


def _config(args) -> SimConfig:
    path = getattr(args, "config", None)
    cfg = SimConfig.load(path) if path else calibrated_config()
    return cfg


def _graph(args, cfg: SimConfig):
    return bench.device_graph(load_device(args.device), cfg)


def _workload(args) -> Workload:
    if getattr(args, "workload", None):
        return load_workload(args.workload)
    if not args.pattern:
        raise SystemExit("either --workload or --pattern is required")
    return Workload(
        pattern=args.pattern,
        placement=Placement(args.placement, args.pairs),
        protocol=Protocol(args.protocol),
        txn_size=args.txn_size,
        total_bytes_per_pair=args.total_bytes,
        rng_seed=args.seed,
    )


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", help="workload JSON file")
    p.add_argument("--pattern", choices=PATTERNS)
    p.add_argument("--placement", choices=PLACEMENTS, default="Local")
    p.add_argument("--pairs", type=int, default=4)
    p.add_argument("--protocol", choices=PROTOCOLS, default="Stream")
    p.add_argument("--txn-size", type=int, default=4096)
    p.add_argument("--total-bytes", type=int, default=65536, help="bytes per source/destination pair")


# -- commands ----------------------------------------------------------------


def cmd_device(args) -> int:
    spec = load_device(args.device)
    graph = build_device(spec)
    data = spec.to_dict()
    data["summary"] = {
        "nodes": len(graph.nodes),
        "links": len(graph.links),
        "endpoints": spec.endpoint_count,
        "node_kinds": {k.value: graph.count(k) for k in sorted(set(n.kind for n in graph.nodes), key=str)},
    }
    _dump(data, args.out)
    return 0


def cmd_compile(args) -> int:
    cfg = _config(args)
    graph = _graph(args, cfg)
    bidir = False
    if args.connections:
        cset = ConnectionSet.from_list(json.loads(Path(args.connections).read_text()))
        bidir = args.bidirectional
    else:
        wl = _workload(args)
        cset, _ = build_workload(wl, graph)
        bidir = wl.protocol.bidirectional
    req = routegen.RouteRequest(cset, time_budget=args.budget, seed=args.seed, bidirectional=bidir)
    res = routegen.compile_routes(req, graph)
    _dump(res.to_json(), args.out)
    return 0


def _routes_for(args, graph, wl: Workload):
    cset, schedule = build_workload(wl, graph)
    if getattr(args, "routes", None):
        data = json.loads(Path(args.routes).read_text())
        routes = routegen.RouteTable.from_json(data.get("routes", data) if "status" in data else data)
        return cset, schedule, routes
    res = routegen.compile_routes(routegen.RouteRequest(cset, time_budget=args.budget, seed=wl.rng_seed,
                                                        bidirectional=wl.protocol.bidirectional), graph)
    if res.status != "Feasible":
        raise RuntimeError(f"workload not routable: {res.status}")
    return cset, schedule, res.routes


def cmd_sim(args) -> int:
    cfg = _config(args)
    graph = _graph(args, cfg)
    wl = _workload(args)
    _, schedule, routes = _routes_for(args, graph, wl)
    m = simulate(graph, routes, schedule, cfg, kernel=args.kernel)
    _emit(m.to_json(), args.out)
    return 0


def cmd_oracle(args) -> int:
    cfg = _config(args)
    graph = _graph(args, cfg)
    wl = _workload(args)
    cset, _, routes = _routes_for(args, graph, wl)
    if args.model == "ideal":
        pairs = {i: (c.src, c.dst) for i, c in enumerate(cset.connections)}
        alloc = refmodel.ideal_crossbar(pairs, wl.protocol.port_rate)
    else:
        cap = effective_capacity(graph, cfg, wl.protocol)
        alloc = refmodel.maxmin_flow({cid: p.links for cid, p in routes.routes.items()}, cap)
    _dump({"model": args.model, "allocation": {str(k): v for k, v in sorted(alloc.items())}}, args.out)
    return 0


def cmd_heatmap(args) -> int:
    cfg = _config(args)
    graph = _graph(args, cfg)
    proto = None if args.protocol == "latency" else Protocol(args.protocol)
    rows = bench.run_heatmap(graph, args.corner, proto, cfg)
    out = args.out or f"heatmap_{args.corner}_{args.protocol}.csv"
    bench.write_grid_csv(rows, out)
    print(out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.plan:
        plan = bench.load_plan(args.plan)
        if args.out:
            plan.output_dir = args.out
        for path in bench.run_plan(plan, cfg):
            print(path)
        return 0
    graph = _graph(args, cfg)
    rows = bench.run_pattern_sweep(graph, args.patterns, args.placements, args.sizes, args.protocols, cfg,
                                   args.seed, args.budget)
    out = args.out or "pattern_sweep.csv"
    bench.emit_report(rows, args.format, out)
    print(out)
    return 0


def cmd_mem(args) -> int:
    from .memory import DramSpec, HbmSpec, attach_memory, memory_experiment, memory_spec_from_dict, nearest_memory_sources

    cfg = _config(args)
    device = args.device or ("vh1782" if args.kind == "hbm" else "vp1802")
    spec = load_device(device)
    mem = memory_spec_from_dict(spec.memory)
    want = HbmSpec if args.kind == "hbm" else DramSpec
    if not isinstance(mem, want):
        raise ValueError(f"device {spec.name} has no {args.kind} memory")
    graph = attach_memory(bench.device_graph(spec, cfg), mem, cfg)
    if args.source_kind == "hbm-nmu":
        sources: Any = args.sources
    elif args.slr is None and args.kind == "hbm":
        sources = nearest_memory_sources(graph, args.sources)
    else:
        sources = Placement("HNoC", args.sources, slr=args.slr or 0)
    m = memory_experiment(args.pattern, sources, mem, graph, args.protocol, cfg, seed=args.seed)
    _dump({"aggregate_throughput_gbps": m.aggregate["memory_throughput_gbps"],
           "source_throughput": {str(k): v for k, v in sorted(m.source_throughput.items())}}, args.out)
    return 0


def cmd_calibrate(args) -> int:
    from .calibrate import CalibrationError, CalibrationTargets, calibrate, default_targets, save_result

    spec = load_device(args.device)
    targets = (CalibrationTargets.from_list(json.loads(Path(args.targets).read_text()))
               if args.targets else default_targets())
    base = SimConfig.load(args.config) if args.config else SimConfig()
    try:
        result = calibrate(targets, base, spec)
    except CalibrationError as exc:
        print(exc, file=sys.stderr)
        _dump(exc.result.to_dict(), args.out)
        return 1
    out = args.out or "calibrated.json"
    save_result(result, out)
    for k, r in result.residuals.items():
        print(f"{k}: measured {r['measured']:.4g} target {r['target']:.4g} rel {r['rel_error']:+.3f}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--device", default=None, help="device JSON file or shipped name (vp1802, vh1782)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--config", default=None, help="SimConfig JSON (default: shipped calibration)")

    parser = argparse.ArgumentParser(prog="benchnoc", description="Hard NoC simulator and benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("device", parents=[common], help="build a device and print its description")
    p.set_defaults(func=cmd_device)

    p = sub.add_parser("compile", parents=[common], help="compile QoS routes")
    p.add_argument("--connections", help="JSON list of connections")
    p.add_argument("--bidirectional", action="store_true", help="reserve response direction too")
    p.add_argument("--budget", type=float, default=60.0, help="search time budget in seconds")
    _add_workload_flags(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("sim", parents=[common], help="simulate a workload")
    p.add_argument("--routes", help="RouteTable or CompileResult JSON (compiled on the fly if absent)")
    p.add_argument("--budget", type=float, default=60.0)
    p.add_argument("--kernel", choices=KERNELS, default=None)
    _add_workload_flags(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("oracle", parents=[common], help="analytic allocation for a workload")
    p.add_argument("--model", choices=("maxmin", "ideal"), default="maxmin")
    p.add_argument("--routes")
    p.add_argument("--budget", type=float, default=60.0)
    _add_workload_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("heatmap", parents=[common], help="single-source map to every destination")
    p.add_argument("--corner", choices=bench.CORNERS, default="BL")
    p.add_argument("--protocol", choices=PROTOCOLS + ("latency",), default="Stream")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("sweep", parents=[common], help="pattern sweep or experiment plan")
    p.add_argument("--plan", help="ExperimentPlan JSON; overrides the flags below")
    p.add_argument("--patterns", nargs="+", choices=PATTERNS, default=list(PATTERNS))
    p.add_argument("--placements", nargs="+", choices=PLACEMENTS, default=list(PLACEMENTS))
    p.add_argument("--sizes", nargs="+", type=int, default=[4, 7, 8, 16])
    p.add_argument("--protocols", nargs="+", choices=PROTOCOLS, default=["Stream"])
    p.add_argument("--budget", type=float, default=60.0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mem", parents=[common], help="external memory bandwidth")
    p.add_argument("--kind", choices=("dram", "hbm"), default="dram")
    p.add_argument("--sources", type=int, default=8)
    p.add_argument("--slr", type=int, default=None)
    p.add_argument("--source-kind", choices=("pl", "hbm-nmu"), default="pl")
    p.add_argument("--pattern", choices=("nearest_neighbor", "uniform", "random"), default="nearest_neighbor")
    p.add_argument("--protocol", choices=("WriteOnly", "ReadOnly"), default="WriteOnly")
    p.set_defaults(func=cmd_mem)

    p = sub.add_parser("calibrate", parents=[common], help="fit SimConfig to anchor targets")
    p.add_argument("--targets", help="JSON list of {metric, value, tolerance}")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.device is None and args.command != "mem":
        args.device = "vp1802"
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"benchnoc {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
