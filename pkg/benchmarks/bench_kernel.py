"""Time the compiled simulation kernel against the pure-Python fallback.

Usage: python benchmarks/bench_kernel.py [--repeat N]

Each case is simulated once per kernel to confirm identical metrics (apart
from the kernel label), then timed ``--repeat`` times; the best wall time is
reported.
"""

from __future__ import annotations

import argparse
import time

from benchnoc.bench import device_graph, run_cell
from benchnoc.engine import DEFAULT_KERNEL, calibrated_config, simulate
from benchnoc.routegen import RouteRequest, compile_routes
from benchnoc.topology import vp1802_spec
from benchnoc.traffic import Placement, Protocol, Workload, build_workload

CASES = [
    ("NearestNeighbor", "Local", 4, "Stream"),
    ("Tornado", "VNoC", 8, "WriteOnly"),
    ("Uniform", "Spread", 8, "ReadOnly"),
    ("Hotspot", "HNoC", 8, "Stream"),
]


def _prepare(graph, pattern, placement, n, proto):
    wl = Workload(pattern, Placement(placement, n), Protocol(proto))
    cset, schedule = build_workload(wl, graph)
    res = compile_routes(RouteRequest(cset, bidirectional=wl.protocol.bidirectional), graph)
    return res.routes, schedule


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if DEFAULT_KERNEL != "compiled":
        raise SystemExit("compiled kernel not available; build the extension first")
    cfg = calibrated_config()
    graph = device_graph(vp1802_spec(), cfg)
    print(f"{'case':<36} {'python s':>9} {'compiled s':>11} {'speedup':>8}  match")
    for case in CASES:
        routes, schedule = _prepare(graph, *case)
        a = simulate(graph, routes, schedule, cfg, kernel="python")
        b = simulate(graph, routes, schedule, cfg, kernel="compiled")
        a.aggregate.pop("kernel")
        b.aggregate.pop("kernel")
        same = a.to_json() == b.to_json()
        tp = _best(lambda: simulate(graph, routes, schedule, cfg, kernel="python"), args.repeat)
        tc = _best(lambda: simulate(graph, routes, schedule, cfg, kernel="compiled"), args.repeat)
        label = "/".join(str(x) for x in case)
        print(f"{label:<36} {tp:>9.3f} {tc:>11.4f} {tp / tc:>7.1f}x  {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
