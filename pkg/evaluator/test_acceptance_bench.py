"""
Acceptance Bench Test Script
Short-form checks of the evaluator plus the full benchmark cases (slow)
"""

import json

import pandas as pd
import pytest

from evaluator.acceptance_bench import (
    AcceptanceEvaluator, EstimatorOracle, OptimizerOracle, SafetyAuditor, load_cases, scenario_of,
)
from engine.experiment import run
from models.domain import Lane, Strategy, VehicleClass, VehicleState

CASES = load_cases()


def short(case, **changes):
    """Copy of a case cut down to desk-test size"""
    return {**case, "overrides": {**case.get("overrides", {}), "duration": 240, "warmup": 0}, **changes}


def test_cases_file_is_well_formed():
    """Test 1: every category has a handler and every scenario file loads"""
    categories = {case["category"] for case in CASES}
    assert categories == {"optimizer", "estimator", "equivalence", "reduction", "demand", "determinism"}
    for case in CASES:
        if "scenario" in case:
            assert scenario_of(case).duration > 0


def test_oracle_on_short_run():
    """Test 2: pruned and exhaustive solvers agree on snapshots from a live plant"""
    config = scenario_of(short(CASES[0], scenario="scenarios/benchmark_a.cfg"))
    result = OptimizerOracle().check(config.with_values(mpr=0.5), instances=20, tick_every=5)
    assert result["checked"] > 0
    assert result["mismatches"] == []


def test_safety_audit_of_clean_run(tmp_path):
    """Test 3: a short EBL run has no violations"""
    config = scenario_of(short(CASES[1])).with_values(mpr=0.3, strategy=Strategy.EBL)
    run(config, tmp_path)
    assert SafetyAuditor().audit(config, tmp_path) == {"passed": True, "violations": []}


def test_safety_audit_flags_overlap():
    """Test 4: two cars occupying the same stretch of lane are reported"""
    trajectory = pd.DataFrame([
        {"t": 1.0, "vehicle_id": 1, "class": "HDV", "movement": "Through", "lane": "General", "x": 100.0, "v": 5.0},
        {"t": 1.0, "vehicle_id": 2, "class": "HDV", "movement": "Through", "lane": "General", "x": 98.0, "v": 5.0},
        {"t": 1.0, "vehicle_id": 3, "class": "CAB", "movement": "Through", "lane": "Bus", "x": 98.0, "v": 5.0},
    ])
    problems = SafetyAuditor._overlaps(trajectory)
    assert len(problems) == 1 and problems[0].startswith("1 overlapping")


def test_equivalence_case_short(tmp_path):
    """Test 5: zero-penetration equivalence on a shortened case"""
    evaluator = AcceptanceEvaluator(out_dir=tmp_path, jobs=1)
    outcome = evaluator.test_equivalence(short(CASES[1], seeds=[1, 2]))
    assert outcome == {"passed": True, "differing_seeds": []}


def test_determinism_case_short(tmp_path):
    """Test 6: repeated run of a shortened Scenario B case"""
    evaluator = AcceptanceEvaluator(out_dir=tmp_path, jobs=1)
    assert evaluator.test_determinism(short(CASES[4]))["passed"]


def test_safety_audit_flags_hard_braking(tmp_path):
    """Test 7: braking past a_max in the manifest fails the audit"""
    config = scenario_of(short(CASES[1])).with_values(mpr=0.3, strategy=Strategy.EBL)
    run(config, tmp_path)
    path = tmp_path / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8"))
    manifest["incidents"]["hard_brake"] = 2
    path.write_text(json.dumps(manifest), encoding="utf-8")

    audit = SafetyAuditor().audit(config, tmp_path)
    assert not audit["passed"]
    assert "braking past a_max: 2 steps" in audit["violations"]


def test_estimator_case_short():
    """Test 8: estimator agreement on a few snapshots of each benchmark geometry"""
    case = next(c for c in CASES if c["category"] == "estimator")
    outcome = AcceptanceEvaluator(jobs=1).test_estimator({**case, "instances": 40})
    assert outcome["passed"], outcome["mismatches"]
    assert outcome["snapshots"] == 40


def test_estimator_oracle_holds_a_lone_cav_until_green():
    """Test 9: a lone CAV reaching the bar in red is released at green onset"""
    config = scenario_of(CASES[1])
    oracle = EstimatorOracle(config.corridor, config.signal)
    cav = VehicleState(id=1, vclass=VehicleClass.CAV, lane=Lane.GENERAL, x=390.0, v=10.0, length=4.0)
    stop_bar, entrance = oracle.rollout([cav], k=5.0)
    assert stop_bar[1] == pytest.approx(30.0, abs=0.06)
    assert entrance == {}


@pytest.mark.slow
@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_benchmark_case(case, tmp_path):
    """Test 10: full-length acceptance cases"""
    evaluator = AcceptanceEvaluator(out_dir=tmp_path)
    outcome = evaluator.run_case(case)
    assert outcome["passed"], json.dumps(outcome, indent=2, default=str)
