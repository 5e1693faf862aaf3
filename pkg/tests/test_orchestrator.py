import json
import math

import numpy as np
import pytest

from harvestbot.kinematics import DEFAULT_GEOMETRY, JointState, forward_kinematics
from harvestbot.orchestrator import (
    OUTCOMES,
    PICKED,
    UNREACHABLE,
    HarvestScenario,
    ScenarioError,
    batch_run,
    run_cycle,
    scenario_from_dict,
    truth_consistent_sequences,
)
from harvestbot.planning import DroppingRegion, baseline_plan, plan_sequence, PlanningInstance
from harvestbot.synthetic import CYCLE_REGION, cycle_scenario
from harvestbot.trajectory import duration_for_speed

HOME = forward_kinematics(DEFAULT_GEOMETRY, JointState(0.0, math.radians(20.0), 0.02))


def scenario(apples, **kw):
    return HarvestScenario(home=HOME, region=CYCLE_REGION, apples=tuple(apples), **kw)


def test_single_apple_timing_is_additive():
    apple = forward_kinematics(DEFAULT_GEOMETRY, JointState(0.0, math.radians(19.0), 0.04))
    report = run_cycle(scenario([apple]))
    rec = report.apples[0]
    assert rec.outcome == PICKED
    leg = duration_for_speed(math.dist(HOME, apple))
    assert rec.approach_s == pytest.approx(leg) and rec.return_s == pytest.approx(leg)
    assert rec.cycle_time_s == pytest.approx(leg + 1.0 + leg + 0.5, abs=1e-12)
    assert report.mean_cycle_time_s == rec.cycle_time_s
    assert report.execution_time_s == pytest.approx(math.fsum(p.duration for p in report.phases), abs=1e-12)


def test_unreachable_apple_skips_control():
    report = run_cycle(scenario([(3.0, 0.0, 0.5)]))
    assert report.apples[0].outcome == UNREACHABLE
    assert report.phases == []
    assert report.mean_cycle_time_s is None


def test_mixed_outcomes_each_apple_has_one_state():
    rng = np.random.default_rng(3)
    data = cycle_scenario(rng, 5, 3)
    data["apples"].append([3.0, 0.0, 0.5])
    report = run_cycle(scenario_from_dict(data))
    assert len(report.apples) == 6
    assert all(a.outcome in OUTCOMES for a in report.apples)
    assert report.count(PICKED) == 5 and report.count(UNREACHABLE) == 1
    orders = sorted(a.order for a in report.apples if a.order is not None)
    assert orders == [1, 2, 3, 4, 5]


def test_timing_adds_up_per_apple_and_phase():
    report = run_cycle(scenario_from_dict(cycle_scenario(np.random.default_rng(5), 6, 5)))
    for a in report.apples:
        mine = [p.duration for p in report.phases if p.apple == a.apple]
        assert a.cycle_time_s == pytest.approx(math.fsum(mine), abs=1e-9)
    assert report.execution_time_s == pytest.approx(
        math.fsum(a.cycle_time_s for a in report.apples), abs=1e-9)


def test_nine_apple_plan_beats_home_release():
    report = run_cycle(scenario_from_dict(cycle_scenario(np.random.default_rng(11), 9, 11)))
    assert report.count(PICKED) == 9
    assert report.planned_distance_m < report.baseline_distance_m


def test_missed_when_tolerance_tiny():
    data = cycle_scenario(np.random.default_rng(2), 2, 2)
    data["attachment_tolerance"] = 1e-18
    data["dt"] = 0.01
    report = run_cycle(scenario_from_dict(data))
    assert {a.outcome for a in report.apples} <= {PICKED, "miss_out_of_tolerance"}


def test_reports_are_byte_identical():
    data = cycle_scenario(np.random.default_rng(8), 4, 8)
    a = run_cycle(scenario_from_dict(data)).to_json()
    b = run_cycle(scenario_from_dict(json.loads(json.dumps(data)))).to_json()
    assert a == b


def test_perception_path_matches_truth_plan():
    for seed in range(5):
        data = cycle_scenario(np.random.default_rng(seed), 5, seed, with_detections=True)
        sc = scenario_from_dict(data)
        fused_seq, truth_seq = truth_consistent_sequences(sc)
        assert fused_seq == truth_seq
        report = run_cycle(sc)
        assert report.detection["f1"] == 1.0
        assert report.count(PICKED) == 5


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        HarvestScenario(home=HOME, region=CYCLE_REGION)
    with pytest.raises(ScenarioError):
        scenario([HOME], attachment_tolerance=0.0)
    with pytest.raises(ScenarioError):
        scenario_from_dict({"home": [0, 0, 0]})
    with pytest.raises(ScenarioError):
        scenario_from_dict({"home": list(HOME), "region": CYCLE_REGION.to_dict(),
                            "apples": [], "gains": {"k_q": 1}})


def test_unreachable_home_is_scenario_error():
    with pytest.raises(ScenarioError):
        run_cycle(HarvestScenario(home=(5.0, 0, 0), region=CYCLE_REGION, apples=((1.2, 0, 0.5),)))


def test_config_defaults_fill_missing_sections():
    data = cycle_scenario(np.random.default_rng(1), 2, 1)
    sc = scenario_from_dict(data, {"timing": {"detach_s": 2.0}})
    assert sc.timing.detach_s == 2.0
    report = run_cycle(sc)
    assert all(a.detach_s == 2.0 for a in report.picked)


def test_batch_empty_directory(tmp_path):
    out = tmp_path / "out"
    assert batch_run(tmp_path, out) == 0
    assert (out / "summary.csv").read_text().count("\n") == 1


def test_batch_with_malformed_file(tmp_path, caplog):
    src = tmp_path / "in"
    src.mkdir()
    (src / "a.json").write_text(json.dumps(cycle_scenario(np.random.default_rng(0), 2, 0)))
    (src / "b.json").write_text("{not json")
    out = tmp_path / "out"
    assert batch_run(src, out) != 0
    assert (out / "a.report.json").exists()
    assert not (out / "b.report.json").exists()
    assert (out / "summary.csv").read_text().count("\n") == 2
    assert any("b.json" in r.message for r in caplog.records)
