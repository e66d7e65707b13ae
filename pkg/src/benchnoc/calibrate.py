"""Fit SimConfig knobs to measured anchor values.

Each anchor names a scalar metric measured on the VP1802 model, the value it
should take and a relative tolerance. The search is a deterministic
coordinate descent over discrete candidate values and minimizes the largest
tolerance-normalized residual.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .engine import SimConfig, measure_latency, simulate_pair
from .routegen import RouteTable
from .topology import DEFAULT_LINK_LATENCY, DeviceSpec, NodeRef, default_path, vp1802_spec
from .traffic import Protocol


class CalibrationError(RuntimeError):
    """No configuration met every anchor; ``result`` holds the best attempt."""

    def __init__(self, result: "CalibrationResult"):
        worst = sorted(result.residuals.items(), key=lambda kv: -abs(kv[1]["normalized"]))
        lines = [f"{k}: measured {v['measured']:.4g}, target {v['target']:.4g}, rel err {v['rel_error']:.3f}"
                 for k, v in worst]
        super().__init__("calibration failed; worst residuals:\n  " + "\n  ".join(lines))
        self.result = result


@dataclass(frozen=True)
class Anchor:
    metric: str
    value: float
    tolerance: float  # relative


@dataclass
class CalibrationTargets:
    anchors: list[Anchor] = field(default_factory=list)

    @classmethod
    def from_list(cls, items: list[dict[str, Any]]) -> "CalibrationTargets":
        return cls([Anchor(d["metric"], float(d["value"]), float(d["tolerance"])) for d in items])


@dataclass
class CalibrationResult:
    config: SimConfig
    residuals: dict[str, dict[str, float]]
    evaluations: int = 0

    @property
    def worst(self) -> float:
        return max((abs(r["normalized"]) for r in self.residuals.values()), default=0.0)

    @property
    def ok(self) -> bool:
        return self.worst <= 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"config": self.config.to_dict(), "residuals": self.residuals, "evaluations": self.evaluations}


def default_targets() -> CalibrationTargets:
    """Anchor set used for the shipped configuration."""
    return CalibrationTargets([
        Anchor("local_read_gbps", 8.0, 0.15),
        Anchor("local_stream_gbps", 16.0, 0.05),
        Anchor("intra_slr_latency_ns", 40.0, 0.2),
        Anchor("ncrb_write_gbps", 13.0, 1.0 / 13.0),
        Anchor("latency_ratio", 2.5, 0.2),
        Anchor("read_hop_loss_gbps", 0.5, 0.6),
        Anchor("read_crossing_loss_gbps", 1.5, 1.0 / 3.0),
        Anchor("vertical_read_fraction", 0.5, 0.2),
    ])


# -- anchor measurements -----------------------------------------------------


class _Probe:
    """Lazily evaluated anchor metrics for one configuration."""

    def __init__(self, spec: DeviceSpec, cfg: SimConfig):
        from .bench import device_graph

        self.spec = spec
        self.cfg = cfg
        self.graph = device_graph(spec, cfg)
        self._cache: dict[str, Any] = {}

    def _pair(self, src: NodeRef, dst: NodeRef, proto: str, row_choice: str = "nearest_row") -> float:
        path = default_path(self.graph, src, dst, row_choice)
        return simulate_pair(self.graph, path, src, dst, Protocol(proto), self.cfg).throughput[0]

    def _map(self, proto: str | None):
        key = f"map:{proto}"
        if key not in self._cache:
            from .bench import run_heatmap

            self._cache[key] = run_heatmap(self.graph, "BL", Protocol(proto) if proto else None, self.cfg)
        return self._cache[key]

    def _increments(self, proto: str | None, field_name: str):
        from .bench import hop_increments

        return hop_increments(self.spec, "BL", self._map(proto), field_name)

    def local_read_gbps(self) -> float:
        ref = NodeRef(0, 0, 0, "source")
        return self._pair(ref, NodeRef(0, 0, 0, "sink"), "ReadOnly")

    def local_stream_gbps(self) -> float:
        return self._pair(NodeRef(0, 0, 0, "source"), NodeRef(0, 0, 0, "sink"), "Stream")

    def intra_slr_latency_ns(self) -> float:
        path = default_path(self.graph, NodeRef(0, 0, 0, "source"), NodeRef(0, 0, 1, "sink"))
        return measure_latency(self.graph, RouteTable({0: path}), self.cfg, 0)

    def ncrb_write_gbps(self) -> float:
        slr = ncrb_slr(self.spec)
        idx = self.spec.endpoints_in(slr) - 1 if slr >= self.spec.slr_count / 2 else 0
        return self._pair(NodeRef(0, slr, idx, "source"), NodeRef(1, slr, idx, "sink"), "WriteOnly")

    def latency_ratio(self) -> float:
        inc = self._increments(None, "latency_ns")
        return inc["per_slr_crossing"] / inc["per_hnoc_hop"]

    def read_hop_loss_gbps(self) -> float:
        return -self._increments("ReadOnly", "throughput_gbps")["per_hnoc_hop"]

    def read_crossing_loss_gbps(self) -> float:
        return -self._increments("ReadOnly", "throughput_gbps")["per_slr_crossing"]

    def vertical_read_fraction(self) -> float:
        top = self.spec.slr_count - 1
        far = self._pair(NodeRef(0, 0, 0, "source"), NodeRef(0, top, self.spec.endpoints_in(top) - 1, "sink"),
                         "ReadOnly")
        return far / self.local_read_gbps()

    def measure(self, metric: str) -> float:
        if metric not in self._cache:
            fn: Callable[[], float] | None = getattr(self, metric, None)
            if fn is None or metric.startswith("_") or metric == "measure":
                raise ValueError(f"unknown calibration metric {metric!r}")
            self._cache[metric] = float(fn())
        return self._cache[metric]


ANCHOR_METRICS = ("local_read_gbps", "local_stream_gbps", "intra_slr_latency_ns", "ncrb_write_gbps",
                  "latency_ratio", "read_hop_loss_gbps", "read_crossing_loss_gbps", "vertical_read_fraction")


def ncrb_slr(spec: DeviceSpec) -> int:
    for row in spec.hnoc_rows:
        if row.has_ncrb:
            return row.slr_index
    raise ValueError("device has no NCRB row")


def evaluate(cfg: SimConfig, targets: CalibrationTargets, spec: DeviceSpec | None = None) -> dict[str, dict[str, float]]:
    """Residuals of ``cfg`` against every anchor (keyed ``metric`` or ``metric#k``)."""
    probe = _Probe(spec or vp1802_spec(), cfg)
    out: dict[str, dict[str, float]] = {}
    for k, a in enumerate(targets.anchors):
        m = probe.measure(a.metric)
        rel = (m - a.value) / a.value if a.value else m
        key = a.metric if a.metric not in out else f"{a.metric}#{k}"
        out[key] = {"measured": m, "target": a.value, "rel_error": rel,
                    "normalized": rel / a.tolerance if a.tolerance > 0 else math.inf * (rel != 0)}
    return out


# -- search ------------------------------------------------------------------


def _latency_grid(base: float) -> list[float]:
    return sorted({round(base * f, 3) for f in (0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0)})


def _knobs(cfg: SimConfig) -> list[tuple[str, list[Any]]]:
    lat = {**DEFAULT_LINK_LATENCY, **cfg.link_latency}
    knobs: list[tuple[str, list[Any]]] = [("read_window", [2, 3, 4, 5, 6, 8])]
    for kind in sorted(lat):
        knobs.append((f"lat:{kind}", _latency_grid(lat[kind])))
    knobs.append(("subordinate_latency_ns", _latency_grid(cfg.subordinate_latency_ns)))
    knobs.append(("ncrb_effective_capacity", [12.5, 13.0, 13.5, 13.81, 14.0, 14.5]))
    return knobs


def _with(cfg: SimConfig, knob: str, value: Any) -> SimConfig:
    if knob.startswith("lat:"):
        lat = dict(cfg.link_latency)
        lat[knob[4:]] = value
        return replace(cfg, link_latency=lat)
    return replace(cfg, **{knob: value})


def _score(res: dict[str, dict[str, float]]) -> tuple[float, float]:
    norm = [abs(r["normalized"]) for r in res.values()]
    return (max(norm, default=0.0), sum(x * x for x in norm))


def calibrate(targets: CalibrationTargets, base: SimConfig | None = None, spec: DeviceSpec | None = None,
              max_sweeps: int = 4) -> CalibrationResult:
    """Coordinate search over read window, per-kind latencies, NSU turnaround
    and the NCRB clamp. Raises CalibrationError when an anchor stays out of
    tolerance."""
    base = base or SimConfig()
    spec = spec or vp1802_spec()
    if not targets.anchors:
        return CalibrationResult(base, {}, 0)
    for a in targets.anchors:
        if a.metric not in ANCHOR_METRICS:
            raise ValueError(f"unknown calibration metric {a.metric!r}")
    cur = replace(base, link_latency={**DEFAULT_LINK_LATENCY, **base.link_latency})
    cur_res = evaluate(cur, targets, spec)
    cur_score = _score(cur_res)
    evals = 1
    for _ in range(max_sweeps):
        improved = False
        for knob, _values in _knobs(cur):
            for value in _values:
                cand = _with(cur, knob, value)
                try:
                    cand.validate()
                    # the device model rejects some latency mixes too
                    res = evaluate(cand, targets, spec)
                except ValueError:
                    continue
                evals += 1
                sc = _score(res)
                if sc < cur_score:
                    cur, cur_res, cur_score, improved = cand, res, sc, True
        if not improved or cur_score[0] == 0.0:
            break
    result = CalibrationResult(cur, cur_res, evals)
    if not result.ok:
        raise CalibrationError(result)
    return result


def save_result(result: CalibrationResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
