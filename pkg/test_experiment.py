"""
Experiment Runner and CLI Test Script
Run artifacts, manifest hashes, paired sweeps, reduction arithmetic and CLI error output
"""

import json
import os
import sys

import pandas as pd
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from cli import error_payload, main, parse_seeds, parse_sweep
from engine.experiment import SweepSpec, build_report, compare, run
from engine.metrics import EVENT_COLUMNS, METRIC_COLUMNS, TRAJECTORY_COLUMNS, sha256_of
from models.domain import build_config
from models.errors import ScenarioParseError, ScenarioRangeError
from utils.error_logger import log_run_error
from utils.logger import get_logger


def config(**changes):
    return build_config({"duration": 120, "warmup": 0, **changes})


def header(path):
    return path.read_text(encoding="utf-8").splitlines()[0]


def last_json_line(text):
    lines = [line for line in text.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_run_writes_artifacts_and_manifest(tmp_path):
    """Test 1: fixed headers, manifest hashes match the files"""
    artifacts = run(config(), tmp_path / "run")

    assert header(artifacts.trajectory) == ",".join(TRAJECTORY_COLUMNS)
    assert header(artifacts.metrics) == ",".join(METRIC_COLUMNS)
    assert header(artifacts.events) == ",".join(EVENT_COLUMNS)

    manifest = json.loads(artifacts.manifest.read_text(encoding="utf-8"))
    for name in ("trajectory.csv", "metrics.csv", "events.csv"):
        assert manifest["artifacts"][name] == sha256_of(tmp_path / "run" / name)
    assert manifest["config"]["duration"] == 120.0
    assert len(artifacts.aggregates) == 15

    metrics = pd.read_csv(artifacts.metrics)
    vehicles = metrics[metrics["record"] == "vehicle"]
    assert (vehicles["travel_time"] > 0).all()
    assert list(vehicles["vehicle_id"]) == sorted(vehicles["vehicle_id"])


def test_zero_duration_writes_headers_only(tmp_path):
    """Test 2: an empty run still produces well-formed files"""
    artifacts = run(config(duration=0), tmp_path / "empty")
    assert artifacts.trajectory.read_text(encoding="utf-8") == ",".join(TRAJECTORY_COLUMNS) + "\n"
    assert artifacts.events.read_text(encoding="utf-8") == ",".join(EVENT_COLUMNS) + "\n"


def test_identical_runs_hash_identically(tmp_path):
    """Test 3: same (config, seed, strategy) gives byte-identical artifacts"""
    cfg = config(mpr=0.4, strategy="DBPL")
    first = json.loads(run(cfg, tmp_path / "a").manifest.read_text(encoding="utf-8"))
    second = json.loads(run(cfg, tmp_path / "b").manifest.read_text(encoding="utf-8"))
    assert first["artifacts"] == second["artifacts"]


def test_zero_penetration_artifacts_match(tmp_path):
    """Test 4: at mpr 0 both strategies write the same trajectory and metrics"""
    ebl = run(config(strategy="EBL"), tmp_path / "ebl")
    dbpl = run(config(strategy="DBPL"), tmp_path / "dbpl")
    assert ebl.trajectory.read_bytes() == dbpl.trajectory.read_bytes()
    assert ebl.metrics.read_bytes() == dbpl.metrics.read_bytes()


def test_lane_extracts(tmp_path):
    """Test 5: per-lane time-space files are written and hashed"""
    artifacts = run(config(), tmp_path / "lanes", emit_trajectories=True)
    assert "General" in artifacts.lanes
    manifest = json.loads(artifacts.manifest.read_text(encoding="utf-8"))
    assert "trajectory_general.csv" in manifest["artifacts"]


def test_compare_at_zero_penetration(tmp_path):
    """Test 6: paired sweep at mpr 0 shows no reduction anywhere"""
    sweep = SweepSpec(base=config(), axis="mpr", values=(0.0,), seeds=(1,))
    report = compare(sweep, tmp_path, jobs=1)

    assert not report.reduction.empty
    assert (report.reduction["mean"].abs() < 1e-12).all()
    for path in report.paths.values():
        assert path.exists()
    assert (tmp_path / "mpr=0" / "seed_1" / "dbpl" / "manifest.json").exists()


def test_reduction_arithmetic():
    """Test 7: reduction = (EBL - DBPL) / EBL · 100, averaged over seeds"""
    rows = []
    for seed, ebl, dbpl in [(1, 100.0, 80.0), (2, 100.0, 90.0)]:
        for strategy, value in (("EBL", ebl), ("DBPL", dbpl)):
            rows.append({"axis": "mpr", "value": 0.2, "seed": seed, "strategy": strategy,
                         "class": "CAR", "movement": "ALL", "travel_time": value, "count": 10})
    report = build_report(pd.DataFrame(rows))

    row = report.reduction.iloc[0]
    assert row["mean"] == pytest.approx(15.0)
    assert row["std"] == pytest.approx(7.0710678, rel=1e-6)
    dbpl = report.travel_time[report.travel_time["strategy"] == "DBPL"].iloc[0]
    assert dbpl["mean"] == pytest.approx(85.0)


def test_sweep_validation():
    """Test 8: unknown axis and out-of-range values are rejected"""
    with pytest.raises(ValueError):
        SweepSpec(base=config(), axis="lane_width", values=(3.5,))
    with pytest.raises(ScenarioRangeError) as info:
        SweepSpec(base=config(), axis="mpr", values=(0.2, 1.5)).cells()
    assert info.value.key == "mpr"


def test_cli_parsers():
    """Test 9: sweep and seed arguments"""
    assert parse_sweep("mpr=0.2,0.4") == ("mpr", (0.2, 0.4))
    assert parse_seeds("1,2,3") == (1, 2, 3)
    assert parse_seeds(None) == (1, 2, 3, 4, 5)
    with pytest.raises(ValueError):
        parse_sweep("mpr")


def test_error_payload_fields():
    """Test 10: parse errors carry the line, range errors the key"""
    assert error_payload(ScenarioParseError("unknown key 'x'", 3))["line"] == 3
    assert error_payload(ScenarioRangeError("mpr", "too large"))["key"] == "mpr"


def test_cli_single_run(tmp_path):
    """Test 11: successful run exits 0 and writes a manifest"""
    scenario = tmp_path / "short.cfg"
    scenario.write_text("duration=60, warmup=0\nmpr=0.3\n", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["--scenario", str(scenario), "--strategy", "dbpl", "--seed", "2", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["strategy"] == "DBPL"
    assert manifest["config"]["seed"] == 2


def test_cli_reports_parse_error(tmp_path, capsys):
    """Test 12: malformed scenario exits 1 with a JSON line naming the line"""
    scenario = tmp_path / "bad.cfg"
    scenario.write_text("mpr=0.2\nthis line has no equals sign\n", encoding="utf-8")
    assert main(["--scenario", str(scenario), "--out", str(tmp_path / "out")]) == 1
    payload = last_json_line(capsys.readouterr().err)
    assert payload["error"] == "ScenarioParseError"
    assert payload["line"] == 2


def test_cli_reports_range_error(tmp_path, capsys):
    """Test 13: out-of-range value exits 1 with a JSON line naming the key"""
    scenario = tmp_path / "range.cfg"
    scenario.write_text("mpr=1.5\n", encoding="utf-8")
    assert main(["--scenario", str(scenario), "--out", str(tmp_path / "out")]) == 1
    payload = last_json_line(capsys.readouterr().err)
    assert payload["error"] == "ScenarioRangeError"
    assert payload["key"] == "mpr"


def test_cli_show_config(tmp_path):
    """Test 14: --show-config logs settings and still runs"""
    scenario = tmp_path / "short.cfg"
    scenario.write_text("duration=30, warmup=0\n", encoding="utf-8")
    assert main(["--scenario", str(scenario), "--show-config", "--out", str(tmp_path / "out")]) == 0


def test_error_log_appends_trace(tmp_path):
    """Test 15: failures land in the error log with type and traceback"""
    path = tmp_path / "dbpl_error.log"
    try:
        raise ScenarioRangeError("x_s", "must lie below x_w")
    except ScenarioRangeError as exc:
        log_run_error("cli --scenario bad.cfg", exc, log_path=path)
    text = path.read_text(encoding="utf-8")
    assert "| cli --scenario bad.cfg | ScenarioRangeError | x_s: must lie below x_w" in text
    assert "Traceback" in text


def test_bound_logger_tags_messages():
    """Test 16: bound views prefix key=value run fields"""
    bound = get_logger("test.bound").bind(seed=3, strategy="DBPL")
    assert bound._tagged("run end") == "[seed=3 strategy=DBPL] run end"
    assert get_logger("test.bound").bind()._tagged("plain") == "plain"
