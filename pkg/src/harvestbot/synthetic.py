"""Seeded generators for planning instances, two-camera scenes and cycle
scenarios.  Everything takes a ``numpy.random.Generator`` so campaigns are
reproducible from a single seed."""
from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kinematics import DEFAULT_GEOMETRY, ManipulatorGeometry, Position3, is_reachable
from .perception import (
    MAIN,
    SIDE,
    CameraModel,
    Detection,
    Extrinsics,
    Scene,
)
from .planning import DroppingRegion, PlanningInstance

# benchmark layout: thin release plate with home on its back edge, fruit in a
# 1 m cube directly in front of it
BENCH_REGION = DroppingRegion((0.0, -0.2, -0.05), (0.3, 0.2, 0.05))
BENCH_HOME = Position3(0.0, 0.0, 0.0)
BENCH_APPLE_BOX = ((0.3, -0.5, -0.5), (1.3, 0.5, 0.5))

DEFAULT_CAMERA = CameraModel(fx=615.0, fy=615.0, cx=320.0, cy=240.0, width=640, height=480)
APPLE_RADIUS = 0.04


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# optical frame (x right, y down, z forward) -> arm frame (x forward, y left, z up)
OPTICAL_TO_ARM = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def uniform_points(rng: np.random.Generator, n: int, box) -> List[Position3]:
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    pts = rng.uniform(lo, hi, size=(n, 3))
    return [Position3(*map(float, p)) for p in pts]


def bench_instance(rng: np.random.Generator, n: int) -> PlanningInstance:
    return PlanningInstance(BENCH_HOME, tuple(uniform_points(rng, n, BENCH_APPLE_BOX)), BENCH_REGION)


def separated_points(rng, n, box, min_sep, max_tries=10000, accept=None) -> List[Position3]:
    """Rejection-sample ``n`` points in ``box`` at least ``min_sep`` apart."""
    pts: List[Position3] = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {n} separated points")
        p = uniform_points(rng, 1, box)[0]
        if accept is not None and not accept(p):
            continue
        if all(math.dist(p, o) >= min_sep for o in pts):
            pts.append(p)
    return pts


def default_rig(main_position=(0.0, 0.06, 0.5), baseline: float = 0.3,
                toe_in_deg: float = 14.0) -> Tuple[Extrinsics, Extrinsics]:
    """(side_to_main, main_to_base) for a forward-looking stereo-ish pair.

    The side camera sits ``baseline`` meters to the right of the main one
    and is turned inward by ``toe_in_deg``.
    """
    side_to_main = Extrinsics(rot_y(-math.radians(toe_in_deg)), np.array([baseline, 0.0, 0.0]))
    main_to_base = Extrinsics(OPTICAL_TO_ARM, np.array(main_position, dtype=float))
    return side_to_main, main_to_base


def render_detection(point_cam, cam: CameraModel, view: str, score: float, ratio: float,
                     radius: float = APPLE_RADIUS, patch: bool = False,
                     rng: Optional[np.random.Generator] = None,
                     missing_fraction: float = 0.0) -> Optional[Detection]:
    """Detector-style box for a sphere centred at ``point_cam`` (camera frame)."""
    pixel = cam.project(point_cam)
    if pixel is None:
        return None
    z = float(point_cam[2])
    half_u, half_v = cam.fx * radius / z, cam.fy * radius / z
    u, v = pixel
    bbox = (u - half_u, v - half_v, u + half_u, v + half_v)
    if bbox[2] <= 0 or bbox[3] <= 0 or bbox[0] >= cam.width or bbox[1] >= cam.height:
        return None
    if patch:
        values = np.full((5, 5), z)
        if rng is not None and missing_fraction > 0:
            values[rng.random((5, 5)) < missing_fraction] = np.nan
            if not np.isfinite(values).any():
                values[2, 2] = z
        return Detection(view, bbox, score, ratio, depth_patch=values)
    return Detection(view, bbox, score, ratio, depth_mean=z)


def occlusion_scene(rng: np.random.Generator, n_apples: int = 20, drop_fraction: float = 0.2,
                    n_false: int = 2, scene_id: str = "0",
                    cam: CameraModel = DEFAULT_CAMERA) -> Scene:
    """Scene where each camera misses a disjoint ``drop_fraction`` of apples.

    Apples are placed in the main optical frame in front of both cameras;
    each view also reports ``n_false`` low-score spurious boxes.
    """
    side_to_main, main_to_base = default_rig()
    main_to_side = side_to_main.inverse()
    box = ((-0.35, -0.25, 0.8), (0.35, 0.25, 1.5))

    def visible_in_both(p):
        for q, c in ((np.asarray(p), cam), (main_to_side.apply(p), cam)):
            px = c.project(q)
            margin = c.fx * APPLE_RADIUS / q[2]
            if px is None or not (margin <= px[0] <= c.width - margin and margin <= px[1] <= c.height - margin):
                return False
        return True

    apples = separated_points(rng, n_apples, box, 4 * APPLE_RADIUS, accept=visible_in_both)
    n_drop = int(round(drop_fraction * n_apples))
    order = rng.permutation(n_apples)
    hidden_main = set(order[:n_drop].tolist())
    hidden_side = set(order[n_drop:2 * n_drop].tolist())

    main_dets, side_dets = [], []
    for k, p in enumerate(apples):
        p = np.asarray(p)
        if k not in hidden_main:
            main_dets.append(render_detection(p, cam, MAIN, rng.uniform(0.6, 0.98), rng.uniform(0.55, 0.95)))
        if k not in hidden_side:
            side_dets.append(render_detection(main_to_side.apply(p), cam, SIDE,
                                              rng.uniform(0.6, 0.98), rng.uniform(0.55, 0.95)))
    for dets, view in ((main_dets, MAIN), (side_dets, SIDE)):
        for _ in range(n_false):
            fake = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(0.8, 1.5)])
            dets.append(render_detection(fake, cam, view, rng.uniform(0.05, 0.4), rng.uniform(0.0, 0.4)))

    truth = [Position3(*map(float, main_to_base.apply(p))) for p in apples]
    return Scene(scene_id, cam, cam, side_to_main, main_to_base,
                 [d for d in main_dets if d is not None], [d for d in side_dets if d is not None], truth)


# --- cycle scenarios -----------------------------------------------------

# Workspace layout for the placeholder arm: home pose (tilted 20 deg down,
# slide nearly retracted) sits inside a low release volume; fruit hangs in front of
# and above it, 0.3 to 0.7 m away.
CYCLE_HOME_JOINTS = (0.0, math.radians(20.0), 0.02)
CYCLE_REGION = DroppingRegion((0.83, -0.10, 0.15), (0.93, 0.22, 0.25))
CYCLE_APPLE_BOX = ((1.25, -0.15, 0.45), (1.5, 0.30, 0.70))


def cycle_scenario(rng: np.random.Generator, n_apples: int, seed: int,
                   geometry: ManipulatorGeometry = DEFAULT_GEOMETRY,
                   with_detections: bool = False) -> dict:
    """Scenario mapping (the on-disk format) with reachable random apples."""
    from .kinematics import _fk

    home = _fk(geometry, *CYCLE_HOME_JOINTS)
    apples = separated_points(rng, n_apples, CYCLE_APPLE_BOX, 2.5 * APPLE_RADIUS,
                              accept=lambda p: is_reachable(geometry, p))
    scenario = {
        "seed": int(seed),
        "home": list(home),
        "region": CYCLE_REGION.to_dict(),
        "geometry": geometry.to_dict(),
    }
    if not with_detections:
        scenario["apples"] = [list(p) for p in apples]
        return scenario

    side_to_main, main_to_base = default_rig()
    base_to_main = main_to_base.inverse()
    main_to_side = side_to_main.inverse()
    dets = []
    for p in apples:
        pm = base_to_main.apply(p)
        for point, view in ((pm, MAIN), (main_to_side.apply(pm), SIDE)):
            det = render_detection(point, DEFAULT_CAMERA, view, float(rng.uniform(0.6, 0.98)),
                                   float(rng.uniform(0.55, 0.95)))
            if det is not None:
                dets.append(det)
    scene = Scene(str(seed), DEFAULT_CAMERA, DEFAULT_CAMERA, side_to_main, main_to_base,
                  [d for d in dets if d.view == MAIN], [d for d in dets if d.view == SIDE], apples)
    scenario["detections"] = scene.to_dict()
    return scenario
