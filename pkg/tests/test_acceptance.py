"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL ...`` line (shown even
without ``-s``) and then asserts.  Run just these with
``pytest tests/test_acceptance.py -v``.
"""
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from harvestbot.control import ControllerGains, FixedReference, simulate_tracking, velocity_command
from harvestbot.kinematics import (
    DEFAULT_GEOMETRY,
    JointState,
    forward_kinematics,
    inverse_kinematics,
    velocity_map,
)
from harvestbot.orchestrator import PICKED, run_cycle, scenario_from_dict
from harvestbot.perception import (
    MAIN,
    SIDE,
    evaluate_detection,
    f1_score,
    fuse_scene,
    fuzzy_fuse,
    localize_apple,
    Detection,
    single_view_apples,
)
from harvestbot.planning import (
    DroppingRegion,
    baseline_plan,
    cost_matrix,
    optimal_drop_spot,
    plan_sequence,
)
from harvestbot.synthetic import (
    DEFAULT_CAMERA,
    bench_instance,
    cycle_scenario,
    default_rig,
    occlusion_scene,
)
from harvestbot.trajectory import duration_for_speed, generate_trajectory, sample

from conftest import random_states
from oracles import best_sequence_cost, box_distance, drop_spot_grid

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail} "
                  f"[{elapsed:.2f} s, limit {limit:g} s]")
        return ok
    return report


def test_ac1_controller_closure(verdict, rng):
    t0 = time.perf_counter()
    g = DEFAULT_GEOMETRY
    worst = 0.0
    for q in random_states(g, rng, 1000):
        ref_pos = np.array(forward_kinematics(g, q)) + rng.uniform(-0.05, 0.05, 3)
        ref_vel = rng.uniform(-0.5, 0.5, 3)
        gains = ControllerGains(*rng.uniform(0.5, 5.0, 3))
        cmd = velocity_command(g, q, ref_pos, ref_vel, gains, limits=None)
        xdot = np.array(velocity_map(g, q, cmd[:3]))
        e = np.array(forward_kinematics(g, q)) - ref_pos
        k = np.array([gains.k_x, gains.k_y, gains.k_z])
        worst = max(worst, float(np.max(np.abs(xdot - (-k * e + ref_vel)))))
    elapsed = time.perf_counter() - t0
    assert verdict(1, worst <= 1e-9, f"max closure residual {worst:.2e} (<= 1e-9)", elapsed, 1.0)


def test_ac2_lyapunov_monotonicity(verdict, rng):
    t0 = time.perf_counter()
    g = DEFAULT_GEOMETRY
    worst_rise, worst_final = -math.inf, 0.0
    for q in random_states(g, rng, 50, margin=0.12):
        offset = rng.normal(size=3)
        offset *= rng.uniform(0.01, 0.05) / np.linalg.norm(offset)
        target = np.array(forward_kinematics(g, q))
        q0 = inverse_kinematics(g, target + offset)
        run = simulate_tracking(g, q0, FixedReference(tuple(target)), dt=1e-3, horizon=10.0)
        assert run.completed
        worst_rise = max(worst_rise, float(np.max(np.diff(run.V))))
        worst_final = max(worst_final, float(run.error_norm[-1]))
    elapsed = time.perf_counter() - t0
    ok = worst_rise <= 1e-10 and worst_final < 1e-6
    assert verdict(2, ok, f"max V increase {worst_rise:.2e} (<= 1e-10), "
                          f"max final |e| {worst_final:.2e} m (< 1e-6)", elapsed, 30.0)


def test_ac3_experiment_grid_tracking(verdict):
    t0 = time.perf_counter()
    g = DEFAULT_GEOMETRY
    home = JointState(0.0, 0.0, 0.3)
    start = forward_kinematics(g, home)
    errors = []
    for phi, theta in itertools.product((-20.0, -10.0, 10.0, 20.0), repeat=2):
        for d in (0.1, 0.3, 0.5):
            target = forward_kinematics(g, JointState(math.radians(phi), math.radians(theta), d))
            traj = generate_trajectory(start, target, duration_for_speed(math.dist(start, target)))
            run = simulate_tracking(g, home, traj)
            assert run.completed
            errors.append(math.dist(run.final_position, target))
    mean_cm = 100.0 * float(np.mean(errors))
    elapsed = time.perf_counter() - t0
    assert len(errors) == 48
    assert verdict(3, mean_cm < 0.6566 and mean_cm < 0.01,
                   f"mean distance error {mean_cm:.3e} cm over 48 targets (< 0.6566, expected < 0.01)",
                   elapsed, 60.0)


def _segment_meets_box(a, b, region):
    """Independent intersection test: minimise box distance along the segment."""
    a, b = np.asarray(a), np.asarray(b)
    res = minimize_scalar(lambda t: box_distance(a + t * (b - a), region.lower, region.upper),
                          bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
    return min(res.fun, box_distance(a, region.lower, region.upper),
               box_distance(b, region.lower, region.upper)) <= 1e-9


def test_ac4_drop_spot_optimality(verdict, rng):
    t0 = time.perf_counter()
    worst_gap, iff_failures, crossing = -math.inf, 0, 0
    for k in range(100):
        lo = rng.uniform(-1, 1, 3)
        region = DroppingRegion(tuple(lo), tuple(lo + rng.uniform(0.05, 0.8, 3)))
        a = rng.uniform(-2, 2, 3)
        if k % 2:
            # aim through a point inside the box so about half the segments cross it
            inside = rng.uniform(region.lower, region.upper)
            b = inside + rng.uniform(0.2, 1.5) * (inside - a) / np.linalg.norm(inside - a)
        else:
            b = rng.uniform(-2, 2, 3)
        spot, cost = optimal_drop_spot(a, b, region)
        _, ref = drop_spot_grid(a, b, region.lower, region.upper)
        worst_gap = max(worst_gap, cost - ref)
        straight = float(np.linalg.norm(b - a))
        assert region.contains(spot, 1e-12) and cost >= straight - 1e-12
        meets = _segment_meets_box(a, b, region)
        crossing += meets
        iff_failures += meets != (abs(cost - straight) <= 1e-9)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-4 and iff_failures == 0
    assert verdict(4, ok, f"max solver - oracle {worst_gap:.2e} m (<= 1e-4), lower-bound iff "
                          f"violations {iff_failures}, {crossing}/100 crossing", elapsed, 60.0)


def test_ac5_heuristic_vs_exhaustive(verdict, rng):
    t0 = time.perf_counter()
    ratios, below = [], 0
    for k in range(50):
        inst = bench_instance(rng, (5, 6, 7)[k % 3])
        g = cost_matrix(inst)
        best = best_sequence_cost(inst.home, inst.apples, g)
        nn = plan_sequence(inst, g).total_cost
        below += nn < best - 1e-12
        ratios.append(nn / best)
    mean_ratio = float(np.mean(ratios))
    elapsed = time.perf_counter() - t0
    assert verdict(5, below == 0 and mean_ratio <= 1.25,
                   f"mean NN/optimal {mean_ratio:.4f} (<= 1.25), max {max(ratios):.4f}, "
                   f"NN below optimum {below} times", elapsed, 120.0)


def test_ac6_planned_vs_home_release(verdict, rng):
    t0 = time.perf_counter()
    planned, baseline = [], []
    for k in range(200):
        inst = bench_instance(rng, (5, 7, 9)[k % 3])
        assert inst.region.contains(inst.home)
        planned.append(plan_sequence(inst).total_cost)
        baseline.append(baseline_plan(inst).total_cost)
    reduction = 1.0 - np.mean(planned) / np.mean(baseline)
    elapsed = time.perf_counter() - t0
    assert verdict(6, reduction >= 0.15,
                   f"mean planned {np.mean(planned):.3f} m vs baseline {np.mean(baseline):.3f} m, "
                   f"reduction {100 * reduction:.1f}% (>= 15%)", elapsed, 120.0)


@pytest.mark.slow
def test_ac7_cycle_time_campaign(verdict):
    t0 = time.perf_counter()
    times, failed = [], 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        data = cycle_scenario(rng, int(rng.integers(3, 8)), seed)
        report = run_cycle(scenario_from_dict(data))
        times.extend(a.cycle_time_s for a in report.picked)
        failed += len(report.apples) - report.count(PICKED)
    mean = float(np.mean(times))
    elapsed = time.perf_counter() - t0
    assert verdict(7, 3.1 <= mean <= 4.3,
                   f"mean cycle time {mean:.3f} s over {len(times)} picks in [3.1, 4.3] s, "
                   f"{failed} unpicked", elapsed, 120.0)


def test_ac8_fusion_properties(verdict, rng):
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 21)
    table = np.empty((21,) * 4)
    for idx in itertools.product(range(21), repeat=4):
        table[idx] = fuzzy_fuse(*grid[list(idx)])
    symmetric = np.array_equal(table, table.transpose(2, 3, 0, 1))
    monotone = bool(np.all(np.diff(table, axis=0) >= 0) and np.all(np.diff(table, axis=2) >= 0))

    _, to_base = default_rig()
    worst_loc = 0.0
    for _ in range(1000):
        p = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.4, 0.4), rng.uniform(0.5, 2.5)])
        u, v = DEFAULT_CAMERA.project(p)
        det = Detection(MAIN, (u - 4, v - 4, u + 4, v + 4), 0.9, 0.8, depth_mean=float(p[2]))
        got = localize_apple(det, DEFAULT_CAMERA, to_base)
        worst_loc = max(worst_loc, float(np.linalg.norm(np.array(got) - to_base.apply(p))))

    harmonic = True
    for tp, fp, fn in rng.integers(0, 200, (1000, 3)):
        if tp == 0:
            continue
        p, r = Fraction(int(tp), int(tp + fp)), Fraction(int(tp), int(tp + fn))
        harmonic &= f1_score(p, r) * (p + r) == 2 * p * r

    dominated = 0
    for seed in range(30):
        scene = occlusion_scene(np.random.default_rng(1000 + seed))
        fused = evaluate_detection(fuse_scene(scene), scene.ground_truth).f1
        single = max(evaluate_detection(single_view_apples(scene, view), scene.ground_truth).f1
                     for view in (MAIN, SIDE))
        dominated += fused >= single
    elapsed = time.perf_counter() - t0
    ok = symmetric and monotone and worst_loc <= 1e-6 and harmonic and dominated == 30
    assert verdict(8, ok, f"symmetric={symmetric} monotone={monotone} "
                          f"localization {worst_loc:.1e} m (<= 1e-6) harmonic={harmonic} "
                          f"fused F1 >= single-view F1 in {dominated}/30 scenes", elapsed, 60.0)


def test_ac9_trajectory_contract(verdict, rng):
    t0 = time.perf_counter()
    worst_bc, monotone, worst_order = 0.0, True, math.inf
    for _ in range(200):
        start, target = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        T = rng.uniform(0.5, 3.0)
        traj = generate_trajectory(start, target, T)
        a, b = sample(traj, 0.0), sample(traj, T)
        worst_bc = max(worst_bc, *np.abs(np.array(a.position) - start),
                       *np.abs(np.array(b.position) - target),
                       *np.abs(a.velocity), *np.abs(a.acceleration),
                       *np.abs(b.velocity), *np.abs(b.acceleration))
        pos = np.array([sample(traj, t).position for t in np.linspace(0, T, 1001)])
        monotone &= bool(np.all(np.diff(pos, axis=0) * np.sign(target - start) >= -1e-15))

        times = np.linspace(0.1 * T, 0.9 * T, 9)

        def fd_error(h):
            return max(np.max(np.abs((np.array(sample(traj, t + h).position)
                                      - np.array(sample(traj, t - h).position)) / (2 * h)
                                     - np.array(sample(traj, t).velocity))) for t in times)

        worst_order = min(worst_order, math.log2(fd_error(1e-2 * T) / fd_error(5e-3 * T)))
    elapsed = time.perf_counter() - t0
    ok = worst_bc <= 1e-12 and monotone and worst_order > 1.9
    assert verdict(9, ok, f"max boundary residual {worst_bc:.1e} (<= 1e-12), monotone={monotone}, "
                          f"min observed finite-difference order {worst_order:.3f} (~2)", elapsed, 10.0)
