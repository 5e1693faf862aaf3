"""One harvesting cycle, end to end.

perceive (optional) -> reachability gate -> plan -> for each apple:
approach, attach check, detach dwell, move to release spot, release dwell.
The last apple is carried home.  Every apple ends in exactly one outcome.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .control import (
    ActuatorLimits,
    ControllerGains,
    TrackingLog,
    simulate_tracking,
)
from .kinematics import (
    DEFAULT_GEOMETRY,
    JointState,
    ManipulatorGeometry,
    Position3,
    UnreachableError,
    _fk,
    inverse_kinematics,
)
from .perception import Scene, evaluate_detection, fuse_scene
from .planning import (
    DroppingRegion,
    PickPlan,
    PlanningInstance,
    baseline_plan,
    plan_sequence,
)
from .trajectory import duration_for_speed, generate_trajectory

log = logging.getLogger(__name__)

PICKED = "picked"
MISSED = "miss_out_of_tolerance"
UNREACHABLE = "unreachable"
SINGULARITY = "singularity"
OUTCOMES = (PICKED, MISSED, UNREACHABLE, SINGULARITY)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TimingParams:
    detach_s: float = 1.0
    release_s: float = 0.5
    speed_limit: float = 1.0
    min_duration_s: float = 0.75
    max_duration_s: float = 1.4
    # modelled perception latency, reported apart from cycle times
    perception_s: float = 0.0

    def duration(self, distance: float) -> float:
        return duration_for_speed(distance, self.speed_limit, self.min_duration_s, self.max_duration_s)


@dataclass(frozen=True)
class HarvestScenario:
    home: Position3
    region: DroppingRegion
    apples: Optional[Tuple[Position3, ...]] = None
    scene: Optional[Scene] = None
    geometry: ManipulatorGeometry = DEFAULT_GEOMETRY
    gains: ControllerGains = ControllerGains()
    limits: ActuatorLimits = ActuatorLimits()
    timing: TimingParams = TimingParams()
    attachment_tolerance: float = 0.015
    localization_tolerance: float = 0.02
    dt: float = 1e-3
    iou_threshold: float = 0.3
    accept_threshold: float = 0.5
    seed: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        if (self.apples is None) == (self.scene is None):
            raise ScenarioError("scenario needs exactly one of 'apples' or 'detections'")
        if not self.attachment_tolerance > 0:
            raise ScenarioError("attachment_tolerance must be positive")
        if not 0 < self.dt <= 0.01:
            raise ScenarioError("dt must lie in (0, 0.01]")


def _section(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ScenarioError(f"'{key}' must be an object")
    return value


def _dataclass_from(cls, data: dict, key: str):
    try:
        return cls(**{k: float(v) for k, v in data.items()})
    except TypeError as exc:
        raise ScenarioError(f"bad '{key}' section: {exc}") from None


def scenario_from_dict(data: dict, defaults: Optional[dict] = None, name: str = "") -> HarvestScenario:
    """Parse the on-disk scenario format; ``defaults`` (a config mapping) fills
    any section the scenario leaves out."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    merged = dict(defaults or {})
    merged.update(data)
    try:
        geometry = ManipulatorGeometry.from_dict(_section(merged, "geometry"))
        region = DroppingRegion.from_dict(merged["region"])
        home = Position3(*map(float, merged["home"]))
        apples = merged.get("apples")
        dets = merged.get("detections")
        if apples is not None:
            apples = tuple(Position3(*map(float, p)) for p in apples)
        scene = Scene.from_dict(dets) if dets is not None else None
        return HarvestScenario(
            home=home,
            region=region,
            apples=apples,
            scene=scene,
            geometry=geometry,
            gains=_dataclass_from(ControllerGains, _section(merged, "gains"), "gains"),
            limits=_dataclass_from(ActuatorLimits, _section(merged, "actuator_limits"), "actuator_limits"),
            timing=_dataclass_from(TimingParams, _section(merged, "timing"), "timing"),
            attachment_tolerance=float(merged.get("attachment_tolerance", 0.015)),
            localization_tolerance=float(merged.get("localization_tolerance", 0.02)),
            dt=float(merged.get("dt", 1e-3)),
            iou_threshold=float(merged.get("iou_threshold", 0.3)),
            accept_threshold=float(merged.get("accept_threshold", 0.5)),
            seed=None if merged.get("seed") is None else int(merged["seed"]),
            name=name or str(merged.get("name", "")),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc!r}") from exc


def load_scenario(path, defaults: Optional[dict] = None) -> HarvestScenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(data, defaults, name=path.stem)


@dataclass
class Phase:
    kind: str  # approach | detach | return | release | home
    apple: Optional[int]
    duration: float
    target: Optional[Position3] = None
    final_error_m: Optional[float] = None
    event: Optional[str] = None
    log: Optional[TrackingLog] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "apple": self.apple, "duration_s": self.duration}
        if self.target is not None:
            out["target"] = list(self.target)
        if self.final_error_m is not None:
            out["final_error_m"] = self.final_error_m
        if self.event is not None:
            out["event"] = self.event
        return out


@dataclass
class AppleRecord:
    apple: int  # 1-based input index
    position: Position3
    outcome: str
    order: Optional[int] = None  # 1-based position in the picking sequence
    approach_s: float = 0.0
    detach_s: float = 0.0
    return_s: float = 0.0
    release_s: float = 0.0
    final_error_m: Optional[float] = None
    event: Optional[str] = None

    @property
    def cycle_time_s(self) -> float:
        return self.approach_s + self.detach_s + self.return_s + self.release_s

    def to_dict(self) -> dict:
        return {
            "apple": self.apple, "position": list(self.position), "outcome": self.outcome,
            "order": self.order, "approach_s": self.approach_s, "detach_s": self.detach_s,
            "return_s": self.return_s, "release_s": self.release_s,
            "cycle_time_s": self.cycle_time_s, "final_error_m": self.final_error_m,
            "event": self.event,
        }


@dataclass
class CycleReport:
    name: str
    seed: Optional[int]
    apples: List[AppleRecord]
    phases: List[Phase]
    plan: Optional[PickPlan]
    baseline_distance_m: Optional[float]
    perception_s: float = 0.0
    detection: Optional[dict] = None

    def count(self, outcome: str) -> int:
        return sum(1 for a in self.apples if a.outcome == outcome)

    @property
    def picked(self) -> List[AppleRecord]:
        return [a for a in self.apples if a.outcome == PICKED]

    @property
    def mean_cycle_time_s(self) -> Optional[float]:
        picked = self.picked
        if not picked:
            return None
        return math.fsum(a.cycle_time_s for a in picked) / len(picked)

    @property
    def execution_time_s(self) -> float:
        return math.fsum(p.duration for p in self.phases)

    @property
    def planned_distance_m(self) -> Optional[float]:
        return None if self.plan is None else self.plan.total_cost

    def summary(self) -> dict:
        return {
            "scenario": self.name,
            "seed": self.seed,
            "n_apples": len(self.apples),
            **{outcome: self.count(outcome) for outcome in OUTCOMES},
            "mean_cycle_time_s": self.mean_cycle_time_s,
            "execution_time_s": self.execution_time_s,
            "perception_s": self.perception_s,
            "planned_distance_m": self.planned_distance_m,
            "baseline_distance_m": self.baseline_distance_m,
        }

    def to_dict(self) -> dict:
        return {
            "summary": self.summary(),
            "apples": [a.to_dict() for a in self.apples],
            "phases": [p.to_dict() for p in self.phases],
            "plan": None if self.plan is None else self.plan.to_dict(),
            "detection": self.detection,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _perceive(scenario: HarvestScenario):
    fused = fuse_scene(scenario.scene, scenario.iou_threshold, scenario.accept_threshold)
    positions = tuple(f.position for f in fused)
    detection = None
    truth = scenario.scene.ground_truth
    if truth is not None:
        score = evaluate_detection(fused, truth, scenario.localization_tolerance)
        detection = {"tp": score.tp, "fp": score.fp, "fn": score.fn, "precision": score.precision,
                     "recall": score.recall, "f1": score.f1, "n_fused": len(fused)}
    return positions, detection


def truth_consistent_sequences(scenario: HarvestScenario) -> Optional[Tuple[List[int], List[int]]]:
    """Picking orders planned from fused positions and from ground truth,
    both expressed as ground-truth indices (None without ground truth)."""
    if scenario.scene is None or scenario.scene.ground_truth is None:
        return None
    truth = list(scenario.scene.ground_truth)
    fused, _ = _perceive(scenario)
    mapping = []
    for p in fused:
        dists = [math.dist(p, g) for g in truth]
        mapping.append(int(np.argmin(dists)))
    fused_plan = plan_sequence(PlanningInstance(scenario.home, fused, scenario.region))
    truth_plan = plan_sequence(PlanningInstance(scenario.home, tuple(truth), scenario.region))
    return [mapping[i] for i in fused_plan.sequence], list(truth_plan.sequence)


def run_cycle(scenario: HarvestScenario, keep_logs: bool = False) -> CycleReport:
    """Simulate a full harvesting cycle and account for its time.

    Raises ScenarioError if the home position itself is unreachable; every
    per-apple failure is recorded in the report instead.
    """
    geom = scenario.geometry
    try:
        q = inverse_kinematics(geom, scenario.home)
    except UnreachableError as exc:
        raise ScenarioError(f"home position unreachable: {exc}") from exc

    detection = None
    if scenario.scene is not None:
        positions, detection = _perceive(scenario)
    else:
        positions = scenario.apples

    records = [AppleRecord(i + 1, p, UNREACHABLE) for i, p in enumerate(positions)]
    reachable = []
    for i, p in enumerate(positions):
        try:
            inverse_kinematics(geom, p)
        except UnreachableError as exc:
            records[i].event = f"ik:{exc.constraint}"
        else:
            reachable.append(i)

    phases: List[Phase] = []
    plan = None
    baseline = None
    if reachable:
        instance = PlanningInstance(scenario.home, tuple(positions[i] for i in reachable), scenario.region)
        plan = plan_sequence(instance)
        baseline = baseline_plan(instance).total_cost

    def move(kind, apple, target) -> Phase:
        nonlocal q
        start = _fk(geom, q.phi, q.theta, q.d)
        duration = scenario.timing.duration(math.dist(start, target))
        traj = generate_trajectory(start, target, duration)
        run = simulate_tracking(geom, q, traj, scenario.gains, scenario.dt, duration, scenario.limits)
        q = run.final_state
        err = math.dist(run.final_position, target)
        phase = Phase(kind, apple, duration, Position3(*target), err, run.event,
                      run if keep_logs else None)
        phases.append(phase)
        return phase

    def dwell(kind, apple, seconds) -> Phase:
        phase = Phase(kind, apple, seconds)
        phases.append(phase)
        return phase

    if plan is not None:
        n = len(plan.sequence)
        for k, local in enumerate(plan.sequence):
            rec = records[reachable[local]]
            rec.order = k + 1
            approach = move("approach", rec.apple, rec.position)
            rec.approach_s = approach.duration
            rec.final_error_m = approach.final_error_m
            if approach.event is not None:
                rec.outcome = SINGULARITY if approach.event.startswith("singularity") else UNREACHABLE
                rec.event = approach.event
                continue
            if approach.final_error_m > scenario.attachment_tolerance:
                rec.outcome = MISSED
                continue
            rec.outcome = PICKED
            rec.detach_s = dwell("detach", rec.apple, scenario.timing.detach_s).duration
            target = plan.drop_spots[k] if k < n - 1 else scenario.home
            back = move("return", rec.apple, target)
            rec.return_s = back.duration
            if back.event is not None:
                rec.event = back.event
            rec.release_s = dwell("release", rec.apple, scenario.timing.release_s).duration

        last = records[reachable[plan.sequence[-1]]]
        if last.outcome != PICKED or last.event is not None:
            move("home", None, scenario.home)

    return CycleReport(
        name=scenario.name,
        seed=scenario.seed,
        apples=records,
        phases=phases,
        plan=plan,
        baseline_distance_m=baseline,
        perception_s=scenario.timing.perception_s if scenario.scene is not None else 0.0,
        detection=detection,
    )


SUMMARY_COLUMNS = (
    "scenario", "seed", "n_apples", *OUTCOMES, "mean_cycle_time_s", "execution_time_s",
    "perception_s", "planned_distance_m", "baseline_distance_m",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_summary(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def batch_run(scenario_dir, output_dir, defaults: Optional[dict] = None) -> int:
    """Run every ``*.json`` scenario in ``scenario_dir`` (filename order).

    Writes ``<stem>.report.json`` per scenario and ``summary.csv``.  Returns
    0 when every file ran, 1 if any file failed to parse or validate.
    """
    scenario_dir, output_dir = Path(scenario_dir), Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    rows, failures = [], 0
    for path in sorted(scenario_dir.glob("*.json")):
        try:
            scenario = load_scenario(path, defaults)
            report = run_cycle(scenario)
        except ScenarioError as exc:
            log.error("skipping %s: %s", path.name, exc)
            failures += 1
            continue
        (output_dir / f"{path.stem}.report.json").write_text(report.to_json() + "\n")
        rows.append(report.summary())
    write_summary(output_dir / "summary.csv", rows)
    return 1 if failures else 0
