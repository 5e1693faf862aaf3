"""Command line entry point: ``harvestbot <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import orchestrator, planning, synthetic
from .kinematics import KinematicsError
from .perception import PerceptionError, Scene, evaluate_detection, fuse_scene
from .trajectory import generate_trajectory, sample_grid

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
INVALID_INPUT = (orchestrator.ScenarioError, planning.PlanningError, PerceptionError,
                 KinematicsError, json.JSONDecodeError, KeyError, FileNotFoundError)

log = logging.getLogger("harvestbot")


def _load_json(path):
    return json.loads(Path(path).read_text())


def _emit(args, filename: str, text: str) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text)
        log.info("wrote %s", out / filename)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_plan(args, config) -> int:
    instance = planning.PlanningInstance.from_dict(_load_json(args.instance))
    timing = orchestrator._dataclass_from(orchestrator.TimingParams, config.get("timing", {}), "timing")
    plan = planning.plan_sequence(instance)
    baseline = planning.baseline_plan(instance)
    report = plan.to_dict(timing.speed_limit, timing.detach_s, timing.release_s)
    report["baseline_cost_m"] = baseline.total_cost
    report["baseline_travel_time_s"] = planning.estimated_travel_time(
        baseline, timing.speed_limit, timing.detach_s, timing.release_s)
    _emit(args, "plan.json", json.dumps(report, indent=2) + "\n")
    if args.out:
        _emit(args, "plan.csv", _csv_text(
            ("instance", "n_apples", "total_cost_m", "baseline_cost_m", "est_travel_time_s"),
            [(Path(args.instance).stem, instance.n, repr(plan.total_cost), repr(baseline.total_cost),
              repr(report["est_travel_time_s"]))]))
    return EXIT_OK


def cmd_simulate(args, config) -> int:
    scenario = orchestrator.load_scenario(args.scenario, config)
    report = orchestrator.run_cycle(scenario, keep_logs=bool(args.out))
    _emit(args, "report.json", report.to_json() + "\n")
    if args.out:
        track_dir = Path(args.out) / "tracking"
        track_dir.mkdir(parents=True, exist_ok=True)
        for k, phase in enumerate(report.phases):
            if phase.log is not None:
                suffix = "" if phase.apple is None else f"_apple{phase.apple}"
                phase.log.write_csv(track_dir / f"{k:03d}_{phase.kind}{suffix}.csv")
    return EXIT_OK


def _scenes(data):
    items = data if isinstance(data, list) else [data]
    return [Scene.from_dict(item, index=k) for k, item in enumerate(items)]


def cmd_fuse(args, config) -> int:
    scenes = _scenes(_load_json(args.detections))
    iou_thr = float(config.get("iou_threshold", 0.3))
    accept = float(config.get("accept_threshold", 0.5))
    radius = float(config.get("match_radius", args.match_radius))
    fused_out, metric_rows = [], []
    for scene in scenes:
        fused = fuse_scene(scene, iou_thr, accept)
        fused_out.append({
            "scene_id": scene.scene_id,
            "apples": [{"position": list(f.position), "confidence": f.confidence,
                        "provenance": f.provenance} for f in fused],
        })
        if scene.ground_truth is not None:
            s = evaluate_detection(fused, scene.ground_truth, radius)
            metric_rows.append((scene.scene_id, s.tp, s.fp, s.fn, repr(s.precision), repr(s.recall), repr(s.f1)))
    _emit(args, "fused.json", json.dumps(fused_out, indent=2) + "\n")
    if metric_rows:
        _emit(args, "metrics.csv", _csv_text(
            ("scene_id", "TP", "FP", "FN", "precision", "recall", "f1"), metric_rows))
    return EXIT_OK


def _positions(data):
    if isinstance(data, dict) and "apples" in data:
        data = data["apples"]
    return [item["position"] if isinstance(item, dict) else item for item in data]


def cmd_evaluate(args, config) -> int:
    pred = _positions(_load_json(args.predicted))
    truth = _positions(_load_json(args.truth))
    s = evaluate_detection(pred, truth, float(config.get("match_radius", args.match_radius)))
    _emit(args, "evaluation.json", json.dumps(s._asdict(), indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args, config) -> int:
    timing = orchestrator._dataclass_from(orchestrator.TimingParams, config.get("timing", {}), "timing")
    rng = np.random.default_rng(args.seed)
    rows = []
    for trial in range(args.trials):
        instance = synthetic.bench_instance(rng, args.n_apples)
        costs = planning.cost_matrix(instance)
        plan = planning.plan_sequence(instance, costs)
        base = planning.baseline_plan(instance)
        optimal = (planning.exact_plan(instance, costs).total_cost
                   if instance.n <= 9 else None)
        times = [planning.estimated_travel_time(p, timing.speed_limit, timing.detach_s, timing.release_s)
                 for p in (base, plan)]
        rows.append((trial, args.n_apples, repr(base.total_cost), repr(plan.total_cost),
                     "" if optimal is None else repr(optimal),
                     repr(1.0 - plan.total_cost / base.total_cost), repr(times[0]), repr(times[1])))
    _emit(args, "bench.csv", _csv_text(
        ("trial", "n_apples", "baseline_m", "planned_m", "optimal_m", "reduction",
         "baseline_time_s", "planned_time_s"), rows))
    return EXIT_OK


def cmd_generate(args, config) -> int:
    if not args.out:
        raise orchestrator.ScenarioError("generate needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        rng = np.random.default_rng(seed)
        scenario = synthetic.cycle_scenario(rng, args.n_apples, seed, with_detections=args.detections)
        (out / f"scenario_{k:04d}.json").write_text(json.dumps(scenario, indent=1) + "\n")
    return EXIT_OK


def cmd_batch(args, config) -> int:
    return orchestrator.batch_run(args.scenario_dir, args.out or "batch_out", config)


def cmd_trajectory(args, config) -> int:
    traj = generate_trajectory(args.start, args.target, args.duration)
    rows = [[repr(float(v)) for v in row] for row in sample_grid(traj, args.dt)]
    _emit(args, "trajectory.csv", _csv_text(("t", "x", "y", "z", "vx", "vy", "vz"), rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of default settings")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="harvestbot", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="JSON file of default settings")
    parser.add_argument("--out", default=None, help="output directory (default: stdout)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="plan picking order and drop spots")
    p.add_argument("instance")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common], help="simulate one harvesting cycle")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", parents=[common], help="fuse two-camera detections")
    p.add_argument("detections")
    p.add_argument("--match-radius", type=float, default=0.05)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", parents=[common], help="precision / recall / F1")
    p.add_argument("predicted")
    p.add_argument("truth")
    p.add_argument("--match-radius", type=float, default=0.05)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", parents=[common], help="planned vs. home-release comparison")
    p.add_argument("--n-apples", type=int, default=5)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("generate", parents=[common], help="write random scenario files")
    p.add_argument("--n-apples", type=int, default=5)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--detections", action="store_true", help="emit camera detections instead of positions")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("batch", parents=[common], help="run every scenario in a directory")
    p.add_argument("scenario_dir")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("trajectory", parents=[common], help="dump a sampled quintic as CSV")
    p.add_argument("--start", type=float, nargs=3, required=True)
    p.add_argument("--target", type=float, nargs=3, required=True)
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.set_defaults(func=cmd_trajectory)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_json(args.config) if args.config else {}
        return args.func(args, config)
    except INVALID_INPUT as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except (ValueError, TypeError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except Exception:
        log.exception("runtime failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
