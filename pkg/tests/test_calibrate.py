import json

import pytest

from benchnoc.calibrate import (
    Anchor,
    CalibrationError,
    CalibrationTargets,
    calibrate,
    default_targets,
    evaluate,
    save_result,
)
from benchnoc.engine import SimConfig, calibrated_config

CHEAP = ("local_read_gbps", "local_stream_gbps", "intra_slr_latency_ns", "ncrb_write_gbps", "vertical_read_fraction")


def test_shipped_config_meets_cheap_anchors():
    targets = CalibrationTargets([a for a in default_targets().anchors if a.metric in CHEAP])
    res = evaluate(calibrated_config(), targets)
    assert set(res) == set(CHEAP)
    for metric, r in res.items():
        assert abs(r["normalized"]) <= 1.0, (metric, r)


def test_empty_targets_return_base():
    base = SimConfig(read_window=3)
    res = calibrate(CalibrationTargets([]), base)
    assert res.config == base
    assert res.ok


def test_unknown_metric_rejected():
    with pytest.raises(ValueError):
        calibrate(CalibrationTargets([Anchor("power_watts", 1.0, 0.1)]))
    with pytest.raises(ValueError):
        evaluate(SimConfig(), CalibrationTargets([Anchor("measure", 1.0, 0.1)]))


def test_unreachable_anchor_raises_with_best_attempt():
    with pytest.raises(CalibrationError) as exc:
        calibrate(CalibrationTargets([Anchor("local_stream_gbps", 100.0, 0.05)]), max_sweeps=1)
    assert not exc.value.result.ok
    assert "local_stream_gbps" in str(exc.value)


def test_search_moves_latency_toward_target(tmp_path):
    targets = CalibrationTargets([Anchor("intra_slr_latency_ns", 40.0, 0.1)])
    before = evaluate(SimConfig(), targets)["intra_slr_latency_ns"]
    res = calibrate(targets, SimConfig())
    assert res.ok
    assert abs(res.residuals["intra_slr_latency_ns"]["rel_error"]) <= abs(before["rel_error"])
    out = tmp_path / "cal.json"
    save_result(res, out)
    data = json.loads(out.read_text())
    assert SimConfig.from_dict(data["config"]) == res.config


def test_targets_from_list():
    t = CalibrationTargets.from_list([{"metric": "local_read_gbps", "value": 8, "tolerance": 0.1}])
    assert t.anchors == [Anchor("local_read_gbps", 8.0, 0.1)]
