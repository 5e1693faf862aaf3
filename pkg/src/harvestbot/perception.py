"""Two-camera detection fusion and fruit localization.

Detections come from an upstream detector (one list per camera).  Side-camera
boxes are carried into the main image through the camera extrinsics, paired
with main-camera boxes by IoU, scored by a small Mamdani fuzzy unit, and
localized by back-projecting the box centre at the mean patch depth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .kinematics import Position3

MAIN = "main"
SIDE = "side"


class PerceptionError(ValueError):
    pass


class LocalizationError(PerceptionError):
    pass


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise PerceptionError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise PerceptionError("principal point must lie inside the image")

    @classmethod
    def from_dict(cls, data: dict) -> "CameraModel":
        return cls(float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"]),
                   int(data["width"]), int(data["height"]))

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    def project(self, p) -> Optional[Tuple[float, float]]:
        """Pixel of a camera-frame point, or None when ``Z <= 0``."""
        x, y, z = p
        if z <= 0:
            return None
        return (self.fx * x / z + self.cx, self.fy * y / z + self.cy)

    def back_project(self, u: float, v: float, depth: float) -> np.ndarray:
        return np.array([(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth])


@dataclass(frozen=True)
class Extrinsics:
    """Rigid transform ``p -> rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0, atol=1e-9):
            raise PerceptionError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise PerceptionError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_dict(cls, data: dict) -> "Extrinsics":
        return cls(np.array(data["rotation"], dtype=float).reshape(3, 3),
                   np.array(data["translation"], dtype=float))

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.reshape(-1).tolist(),
                "translation": self.translation.tolist()}

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def inverse(self) -> "Extrinsics":
        rt = self.rotation.T
        return Extrinsics(rt, -rt @ self.translation)

    def then(self, other: "Extrinsics") -> "Extrinsics":
        """Transform applying ``self`` first, then ``other``."""
        return Extrinsics(other.rotation @ self.rotation,
                          other.rotation @ self.translation + other.translation)


@dataclass(frozen=True)
class Detection:
    """One detector box.

    Depth is either a patch of range samples (NaN marks a missing sample) or
    a precomputed ``depth_mean``.
    """

    view: str
    bbox: Tuple[float, float, float, float]
    score: float
    pixel_ratio: float
    depth_patch: Optional[np.ndarray] = None
    depth_mean: Optional[float] = None

    def __post_init__(self):
        if self.view not in (MAIN, SIDE):
            raise PerceptionError(f"unknown view {self.view!r}")
        bbox = tuple(float(v) for v in self.bbox)
        if len(bbox) != 4 or not (bbox[0] < bbox[2] and bbox[1] < bbox[3]):
            raise PerceptionError(f"malformed bbox {self.bbox!r}")
        object.__setattr__(self, "bbox", bbox)
        for name in ("score", "pixel_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise PerceptionError(f"{name} must lie in [0, 1]")
        if self.depth_patch is not None:
            object.__setattr__(self, "depth_patch", np.asarray(self.depth_patch, dtype=float))

    @property
    def center(self) -> Tuple[float, float]:
        u0, v0, u1, v1 = self.bbox
        return (0.5 * (u0 + u1), 0.5 * (v0 + v1))

    @property
    def depth(self) -> Optional[float]:
        """Mean of the valid depth samples, or None if there are none."""
        if self.depth_patch is not None:
            valid = self.depth_patch[np.isfinite(self.depth_patch)]
            return float(valid.mean()) if valid.size else None
        if self.depth_mean is not None and math.isfinite(self.depth_mean):
            return float(self.depth_mean)
        return None

    @classmethod
    def from_dict(cls, data: dict) -> "Detection":
        patch = data.get("depth_patch")
        if patch is not None:
            patch = np.array([[math.nan if v is None else v for v in row] for row in patch], dtype=float)
        mean = data.get("depth_mean")
        return cls(data["view"], tuple(data["bbox"]), float(data["score"]),
                   float(data["pixel_ratio"]), patch, None if mean is None else float(mean))

    def to_dict(self) -> dict:
        out = {"view": self.view, "bbox": list(self.bbox), "score": self.score,
               "pixel_ratio": self.pixel_ratio}
        if self.depth_patch is not None:
            out["depth_patch"] = [[None if not math.isfinite(v) else float(v) for v in row]
                                  for row in np.atleast_2d(self.depth_patch)]
        if self.depth_mean is not None:
            out["depth_mean"] = self.depth_mean
        return out


@dataclass(frozen=True)
class TransformedDetection:
    """A side detection expressed in the main image.

    ``bbox`` is None when the box cannot be projected (no depth, or behind
    the main camera); such detections never take part in matching.
    """

    source: Detection
    bbox: Optional[Tuple[float, float, float, float]]
    point: Optional[np.ndarray]
    in_view: bool

    @property
    def localized(self) -> bool:
        return self.point is not None


class FusedApple(NamedTuple):
    position: Position3
    confidence: float
    provenance: str  # "matched" | "main_only" | "side_only"
    main_index: Optional[int] = None
    side_index: Optional[int] = None


def localize_apple(det: Detection, cam: CameraModel,
                   cam_to_base: Extrinsics = Extrinsics.identity()) -> Position3:
    """Back-project the box centre at the mean valid patch depth."""
    depth = det.depth
    if depth is None:
        raise LocalizationError("detection has no valid depth sample")
    if depth <= 0:
        raise LocalizationError(f"invalid depth {depth!r}")
    point = cam_to_base.apply(cam.back_project(*det.center, depth))
    return Position3(*(float(v) for v in point))


def _box_in_image(bbox, cam: CameraModel) -> bool:
    u0, v0, u1, v1 = bbox
    return u1 > 0 and v1 > 0 and u0 < cam.width and v0 < cam.height


def transform_detections(side_dets: Sequence[Detection], side_cam: CameraModel,
                         side_to_main: Extrinsics, main_cam: CameraModel) -> List[TransformedDetection]:
    """Carry side-camera boxes into the main image.

    The four box corners are back-projected at the detection's mean depth,
    moved into the main camera frame and re-projected; the output box is
    their axis-aligned hull.
    """
    out = []
    for det in side_dets:
        depth = det.depth
        if depth is None or depth <= 0:
            out.append(TransformedDetection(det, None, None, False))
            continue
        u0, v0, u1, v1 = det.bbox
        center = side_to_main.apply(side_cam.back_project(*det.center, depth))
        pixels = []
        for u, v in ((u0, v0), (u1, v0), (u1, v1), (u0, v1)):
            pixel = main_cam.project(side_to_main.apply(side_cam.back_project(u, v, depth)))
            if pixel is None:
                break
            pixels.append(pixel)
        if len(pixels) < 4:
            out.append(TransformedDetection(det, None, center, False))
            continue
        us, vs = zip(*pixels)
        bbox = (min(us), min(vs), max(us), max(vs))
        out.append(TransformedDetection(det, bbox, center, _box_in_image(bbox, main_cam)))
    return out


def iou(box_a, box_b) -> float:
    """Intersection over union of two ``(u_min, v_min, u_max, v_max)`` boxes."""
    iw = min(box_a[2], box_b[2]) - max(box_a[0], box_b[0])
    ih = min(box_a[3], box_b[3]) - max(box_a[1], box_b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (box_a[2] - box_a[0]) * (box_a[3] - box_a[1])
    area_b = (box_b[2] - box_b[0]) * (box_b[3] - box_b[1])
    return inter / (area_a + area_b - inter)


def _bbox_of(item):
    return getattr(item, "bbox", item)


class BoxMatches(NamedTuple):
    matched: List[Tuple[int, int]]
    unmatched_main: List[int]
    unmatched_side: List[int]


def match_boxes(main_dets: Sequence, side_dets: Sequence, iou_threshold: float = 0.3) -> BoxMatches:
    """Greedy one-to-one pairing in descending IoU order.

    Items may be detections or raw boxes; side items whose ``bbox`` is None
    stay unmatched.  Equal IoUs are resolved by the lower ``(main, side)``
    index pair.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise PerceptionError("iou_threshold must lie in (0, 1)")
    pairs = []
    for i, m in enumerate(main_dets):
        mb = _bbox_of(m)
        for j, s in enumerate(side_dets):
            sb = _bbox_of(s)
            if mb is None or sb is None:
                continue
            overlap = iou(mb, sb)
            if overlap >= iou_threshold:
                pairs.append((-overlap, i, j))
    pairs.sort()
    used_main, used_side, matched = set(), set(), []
    for _, i, j in pairs:
        if i in used_main or j in used_side:
            continue
        used_main.add(i)
        used_side.add(j)
        matched.append((i, j))
    return BoxMatches(
        matched,
        [i for i in range(len(main_dets)) if i not in used_main],
        [j for j in range(len(side_dets)) if j not in used_side],
    )


# --- fuzzy unit ------------------------------------------------------------

def low(x: float) -> float:
    return max(0.0, 1.0 - 2.0 * x)


def medium(x: float) -> float:
    return max(0.0, 1.0 - 2.0 * abs(x - 0.5))


def high(x: float) -> float:
    return max(0.0, 2.0 * x - 1.0)


# Output universe as exact offsets from its midpoint, so view-symmetric and
# mirror-symmetric aggregates defuzzify to exactly 0.5.
_OFFSETS = np.arange(-500, 501) / 1000.0
_OUT_LOW = np.maximum(0.0, -2.0 * _OFFSETS)
_OUT_MED = np.maximum(0.0, 1.0 - 2.0 * np.abs(_OFFSETS))
_OUT_HIGH = np.maximum(0.0, 2.0 * _OFFSETS)
# value returned when no rule fires
NO_EVIDENCE_CONFIDENCE = 0.5


def rule_strengths(d1: float, c1: float, d2: float, c2: float) -> Tuple[float, float, float]:
    """Firing degrees of the (high, medium, low) confidence rules."""
    r_high = min(high(d1), high(d2))
    r_med = min(max(medium(d1), medium(d2)), max(high(c1), high(c2)))
    r_low = min(low(d1), low(d2))
    return r_high, r_med, r_low


def defuzzify(r_high: float, r_med: float, r_low: float) -> float:
    agg = np.maximum(np.maximum(np.minimum(_OUT_LOW, r_low), np.minimum(_OUT_MED, r_med)),
                     np.minimum(_OUT_HIGH, r_high))
    den = agg.sum()
    if den == 0.0:
        return NO_EVIDENCE_CONFIDENCE
    # pair +k with -k so symmetric aggregates contribute exactly zero
    num = np.dot(_OFFSETS[501:], agg[501:] - agg[499::-1])
    return float(min(max(0.5 + num / den, 0.0), 1.0))


def fuzzy_fuse(d1: float, c1: float, d2: float, c2: float) -> float:
    """Fused detection confidence from per-view scores ``d`` and pixel ratios ``c``.

    Triangular Low/Medium/High memberships, three rules (AND=min, OR=max),
    min-clipping, max aggregation and centroid defuzzification on a 1001
    point grid.  A missing view is passed as ``d = c = 0``.
    """
    for name, v in (("d1", d1), ("c1", c1), ("d2", d2), ("c2", c2)):
        if not 0.0 <= v <= 1.0:
            raise PerceptionError(f"{name}={v!r} outside [0, 1]")
    return defuzzify(*rule_strengths(d1, c1, d2, c2))


# --- scene fusion ------------------------------------------------------------

@dataclass
class Scene:
    scene_id: str
    main_cam: CameraModel
    side_cam: CameraModel
    side_to_main: Extrinsics
    main_to_base: Extrinsics
    main_dets: List[Detection]
    side_dets: List[Detection]
    ground_truth: Optional[List[Position3]] = None

    @classmethod
    def from_dict(cls, data: dict, index: int = 0) -> "Scene":
        cams = data["cameras"]
        main_cam = CameraModel.from_dict(cams[MAIN])
        side_cam = CameraModel.from_dict(cams.get(SIDE, cams[MAIN]))
        ext = data.get("extrinsics", {})
        side_to_main = Extrinsics.from_dict(ext["side_to_main"]) if "side_to_main" in ext else Extrinsics.identity()
        main_to_base = Extrinsics.from_dict(ext["main_to_base"]) if "main_to_base" in ext else Extrinsics.identity()
        dets = [Detection.from_dict(d) for d in data.get("detections", [])]
        truth = data.get("ground_truth")
        return cls(
            str(data.get("scene_id", index)), main_cam, side_cam, side_to_main, main_to_base,
            [d for d in dets if d.view == MAIN], [d for d in dets if d.view == SIDE],
            None if truth is None else [Position3(*map(float, p)) for p in truth],
        )

    def to_dict(self) -> dict:
        out = {
            "scene_id": self.scene_id,
            "cameras": {MAIN: self.main_cam.to_dict(), SIDE: self.side_cam.to_dict()},
            "extrinsics": {"side_to_main": self.side_to_main.to_dict(),
                           "main_to_base": self.main_to_base.to_dict()},
            "detections": [d.to_dict() for d in self.main_dets + self.side_dets],
        }
        if self.ground_truth is not None:
            out["ground_truth"] = [list(p) for p in self.ground_truth]
        return out


def _try_localize(det, cam, to_base):
    try:
        return np.array(localize_apple(det, cam, to_base))
    except LocalizationError:
        return None


def fuse_scene(scene: Scene, iou_threshold: float = 0.3,
               accept_threshold: float = 0.5) -> List[FusedApple]:
    """Fused, localized apples in the base frame, main-camera order first."""
    side_to_base = scene.side_to_main.then(scene.main_to_base)
    transformed = transform_detections(scene.side_dets, scene.side_cam, scene.side_to_main,
                                       scene.main_cam)
    matches = match_boxes(scene.main_dets, transformed, iou_threshold)

    fused = []

    def emit(position, conf, provenance, i=None, j=None):
        if position is not None and conf >= accept_threshold:
            fused.append(FusedApple(Position3(*(float(v) for v in position)), conf, provenance, i, j))

    for i, j in matches.matched:
        m, s = scene.main_dets[i], scene.side_dets[j]
        conf = fuzzy_fuse(m.score, m.pixel_ratio, s.score, s.pixel_ratio)
        points = [p for p in (_try_localize(m, scene.main_cam, scene.main_to_base),
                              _try_localize(s, scene.side_cam, side_to_base)) if p is not None]
        position = np.mean(points, axis=0) if points else None
        emit(position, conf, "matched", i, j)
    for i in matches.unmatched_main:
        m = scene.main_dets[i]
        conf = fuzzy_fuse(m.score, m.pixel_ratio, 0.0, 0.0)
        emit(_try_localize(m, scene.main_cam, scene.main_to_base), conf, "main_only", i)
    for j in matches.unmatched_side:
        s = scene.side_dets[j]
        conf = fuzzy_fuse(0.0, 0.0, s.score, s.pixel_ratio)
        emit(_try_localize(s, scene.side_cam, side_to_base), conf, "side_only", None, j)
    return fused


def single_view_apples(scene: Scene, view: str = MAIN,
                       accept_threshold: float = 0.5) -> List[FusedApple]:
    """Detections of one camera alone, scored as if the other view saw nothing."""
    if view == MAIN:
        dets, cam, to_base = scene.main_dets, scene.main_cam, scene.main_to_base
    else:
        dets, cam, to_base = scene.side_dets, scene.side_cam, scene.side_to_main.then(scene.main_to_base)
    out = []
    for k, det in enumerate(dets):
        conf = fuzzy_fuse(det.score, det.pixel_ratio, 0.0, 0.0)
        p = _try_localize(det, cam, to_base)
        if p is not None and conf >= accept_threshold:
            out.append(FusedApple(Position3(*(float(v) for v in p)), conf, f"{view}_only",
                                  k if view == MAIN else None, k if view == SIDE else None))
    return out


# --- scoring ----------------------------------------------------------------

class DetectionScore(NamedTuple):
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def scores_from_counts(tp: int, fp: int, fn: int) -> DetectionScore:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return DetectionScore(precision, recall, f1_score(precision, recall), tp, fp, fn)


def evaluate_detection(predicted: Sequence, ground_truth: Sequence,
                       match_radius: float = 0.05) -> DetectionScore:
    """Precision, recall and F1 with greedy nearest-first matching.

    A prediction counts as a true positive when it is paired with a distinct
    ground-truth apple no farther than ``match_radius``.
    """
    if not match_radius > 0:
        raise PerceptionError("match_radius must be positive")
    preds = [tuple(getattr(p, "position", p)) for p in predicted]
    truth = [tuple(p) for p in ground_truth]
    pairs = []
    for i, p in enumerate(preds):
        for j, g in enumerate(truth):
            dist = math.dist(p, g)
            if dist <= match_radius:
                pairs.append((dist, i, j))
    pairs.sort()
    used_p, used_g = set(), set()
    for _, i, j in pairs:
        if i not in used_p and j not in used_g:
            used_p.add(i)
            used_g.add(j)
    tp = len(used_p)
    return scores_from_counts(tp, len(preds) - tp, len(truth) - tp)
