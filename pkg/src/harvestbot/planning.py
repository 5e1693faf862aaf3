"""Joint picking-sequence and dropping-spot planning.

After each pick (except the last) the arm releases the fruit somewhere in a
box-shaped dropping region before heading to the next apple; after the last
pick it returns home.  The cheapest release point between two apples is a
small convex problem (:func:`optimal_drop_spot`); with those pairwise costs
the sequence problem is a path-TSP anchored at home, solved with a
nearest-neighbour heuristic (:func:`plan_sequence`) or exhaustively for small
instances (:func:`exact_plan`).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .kinematics import Position3

EXACT_PLAN_MAX_N = 10


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class DroppingRegion:
    """Axis-aligned box ``lower <= p <= upper`` (inclusive) in the arm frame."""

    lower: Tuple[float, float, float]
    upper: Tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 3 or len(hi) != 3:
            raise PlanningError("region bounds must be 3-vectors")
        if not all(math.isfinite(v) for v in lo + hi):
            raise PlanningError("region bounds must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise PlanningError(f"empty region: lower {lo} > upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_dict(cls, data: dict) -> "DroppingRegion":
        return cls(tuple(data["min"]), tuple(data["max"]))

    def to_dict(self) -> dict:
        return {"min": list(self.lower), "max": list(self.upper)}

    def contains(self, p, tol: float = 0.0) -> bool:
        return all(lo - tol <= v <= hi + tol for v, lo, hi in zip(p, self.lower, self.upper))

    def project(self, p) -> Position3:
        return Position3(*(min(max(v, lo), hi) for v, lo, hi in zip(p, self.lower, self.upper)))

    def distance(self, p) -> float:
        return math.dist(p, self.project(p))

    @property
    def center(self) -> Position3:
        return Position3(*(0.5 * (a + b) for a, b in zip(self.lower, self.upper)))


@dataclass(frozen=True)
class PlanningInstance:
    home: Position3
    apples: Tuple[Position3, ...]
    region: DroppingRegion

    def __post_init__(self):
        object.__setattr__(self, "home", Position3(*map(float, self.home)))
        object.__setattr__(self, "apples", tuple(Position3(*map(float, p)) for p in self.apples))
        for p in (self.home, *self.apples):
            if not all(math.isfinite(v) for v in p):
                raise PlanningError("positions must be finite")

    @property
    def n(self) -> int:
        return len(self.apples)

    @classmethod
    def from_dict(cls, data: dict) -> "PlanningInstance":
        return cls(tuple(data["home"]), tuple(tuple(p) for p in data["apples"]),
                   DroppingRegion.from_dict(data["region"]))

    def to_dict(self) -> dict:
        return {"home": list(self.home), "apples": [list(p) for p in self.apples],
                "region": self.region.to_dict()}


@dataclass(frozen=True)
class PickPlan:
    """Picking order (0-based apple indices), release spots and costs.

    ``leg_costs`` has ``N + 1`` entries: home to first apple, one drop-and-go
    cost per consecutive pair, last apple back home.
    """

    sequence: Tuple[int, ...]
    drop_spots: Tuple[Position3, ...]
    leg_costs: Tuple[float, ...]
    total_cost: float

    def to_dict(self, speed: Optional[float] = None, detach_s: float = 1.0,
                release_s: float = 0.5) -> dict:
        out = {
            "sequence": [i + 1 for i in self.sequence],
            "drop_spots": [list(p) for p in self.drop_spots],
            "leg_costs": list(self.leg_costs),
            "total_cost_m": self.total_cost,
        }
        if speed is not None:
            out["est_travel_time_s"] = estimated_travel_time(self, speed, detach_s, release_s)
        return out


def estimated_travel_time(plan: PickPlan, speed: float, detach_s: float = 1.0,
                          release_s: float = 0.5) -> float:
    """Path length over mean end-effector speed plus one detach and one
    release dwell per apple."""
    if speed <= 0:
        raise PlanningError("speed must be positive")
    n = len(plan.sequence)
    return plan.total_cost / speed + n * (detach_s + release_s)


def _segment_box_interval(a, b, lower, upper) -> Optional[Tuple[float, float]]:
    """Parameter interval of ``a + t (b - a), t in [0, 1]`` inside the box."""
    t0, t1 = 0.0, 1.0
    for k in range(3):
        delta = b[k] - a[k]
        if delta == 0.0:
            if a[k] < lower[k] or a[k] > upper[k]:
                return None
            continue
        ta = (lower[k] - a[k]) / delta
        tb = (upper[k] - a[k]) / delta
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def _two_leg(p, a, b) -> float:
    return math.dist(p, a) + math.dist(b, p)


def _face_candidates(a, b, lower, upper):
    # Stationary point on each face plane: straight line from a to the
    # mirror image of b (same side) or to b itself (opposite sides).
    for k in range(3):
        for level in (lower[k], upper[k]):
            da, db = a[k] - level, b[k] - level
            if da * db > 0:
                db = -db
            if da == db:
                continue
            t = da / (da - db)
            p = [a[i] + t * (b[i] - a[i]) for i in range(3)]
            p[k] = level
            if all(lower[i] <= p[i] <= upper[i] for i in range(3) if i != k):
                yield p


def _edge_candidates(a, b, lower, upper):
    # Minimiser along each box edge by unfolding: the axial position splits
    # the axial gap in the ratio of radial distances.
    for k in range(3):
        i, j = [m for m in range(3) if m != k]
        for ci in (lower[i], upper[i]):
            for cj in (lower[j], upper[j]):
                ra = math.hypot(a[i] - ci, a[j] - cj)
                rb = math.hypot(b[i] - ci, b[j] - cj)
                if ra + rb == 0.0:
                    s = 0.5 * (a[k] + b[k])
                else:
                    s = a[k] + (b[k] - a[k]) * ra / (ra + rb)
                p = [0.0, 0.0, 0.0]
                p[i], p[j] = ci, cj
                p[k] = min(max(s, lower[k]), upper[k])
                yield p


def optimal_drop_spot(a, b, region: DroppingRegion) -> Tuple[Position3, float]:
    """Release point in ``region`` minimising ``|p - a| + |b - p|``.

    If the segment ``a -> b`` crosses the box the cost is ``|b - a|`` and the
    spot is the middle of the crossing.  Otherwise the minimiser lies on the
    box surface and is found exactly by checking every face interior (mirror
    construction) and every edge (unfolding), keeping the cheapest.
    """
    a = tuple(map(float, a))
    b = tuple(map(float, b))
    lower, upper = region.lower, region.upper
    interval = _segment_box_interval(a, b, lower, upper)
    if interval is not None:
        t = 0.5 * (interval[0] + interval[1])
        p = region.project([a[k] + t * (b[k] - a[k]) for k in range(3)])
        return p, math.dist(a, b)

    best = region.project([0.5 * (a[k] + b[k]) for k in range(3)])
    best_cost = _two_leg(best, a, b)
    for p in itertools.chain(_face_candidates(a, b, lower, upper),
                             _edge_candidates(a, b, lower, upper)):
        cost = _two_leg(p, a, b)
        if cost < best_cost:
            best, best_cost = p, cost
    best = region.project(best)
    return best, _two_leg(best, a, b)


def segment_hits_region(a, b, region: DroppingRegion) -> bool:
    return _segment_box_interval(tuple(a), tuple(b), region.lower, region.upper) is not None


def cost_matrix(instance: PlanningInstance) -> np.ndarray:
    """Symmetric matrix of optimal drop-and-go costs between apples."""
    n = instance.n
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            g[i, j] = g[j, i] = optimal_drop_spot(instance.apples[i], instance.apples[j],
                                                  instance.region)[1]
    return g


def _assemble(instance: PlanningInstance, sequence: Sequence[int]) -> PickPlan:
    apples, home = instance.apples, instance.home
    spots: List[Position3] = []
    legs = [math.dist(apples[sequence[0]], home)]
    for i, j in zip(sequence[:-1], sequence[1:]):
        spot, cost = optimal_drop_spot(apples[i], apples[j], instance.region)
        spots.append(spot)
        legs.append(cost)
    legs.append(math.dist(home, apples[sequence[-1]]))
    return PickPlan(tuple(int(s) for s in sequence), tuple(spots), tuple(legs), math.fsum(legs))


def travel_cost(instance: PlanningInstance, sequence: Sequence[int],
                drop_spots: Sequence) -> float:
    """Path length of home -> apple -> spot -> ... -> apple -> home."""
    apples, home = instance.apples, instance.home
    if len(drop_spots) != len(sequence) - 1:
        raise PlanningError("need exactly one drop spot between consecutive apples")
    legs = [math.dist(apples[sequence[0]], home)]
    for k, spot in enumerate(drop_spots):
        legs.append(math.dist(spot, apples[sequence[k]]) + math.dist(apples[sequence[k + 1]], spot))
    legs.append(math.dist(home, apples[sequence[-1]]))
    return math.fsum(legs)


def plan_sequence(instance: PlanningInstance, costs: Optional[np.ndarray] = None) -> PickPlan:
    """Nearest-neighbour picking order from home; ties go to the lower index."""
    n = instance.n
    if n == 0:
        raise PlanningError("empty instance: no apples to plan")
    if costs is None:
        costs = cost_matrix(instance) if n > 1 else np.zeros((1, 1))
    from_home = [math.dist(p, instance.home) for p in instance.apples]
    current = min(range(n), key=lambda i: (from_home[i], i))
    sequence = [current]
    remaining = set(range(n)) - {current}
    while remaining:
        current = min(remaining, key=lambda j: (costs[current, j], j))
        sequence.append(current)
        remaining.remove(current)
    return _assemble(instance, sequence)


def baseline_plan(instance: PlanningInstance, order: Optional[Sequence[int]] = None) -> PickPlan:
    """No-planning policy: every fruit is released at home.

    ``order`` is a 0-based permutation; defaults to input order.
    """
    n = instance.n
    if n == 0:
        raise PlanningError("empty instance: no apples to plan")
    if order is None:
        order = range(n)
    order = [int(i) for i in order]
    if sorted(order) != list(range(n)):
        raise PlanningError(f"order is not a permutation of 0..{n - 1}: {order}")
    home = instance.home
    legs = [math.dist(instance.apples[order[0]], home)]
    for i, j in zip(order[:-1], order[1:]):
        legs.append(math.dist(home, instance.apples[i]) + math.dist(instance.apples[j], home))
    legs.append(math.dist(home, instance.apples[order[-1]]))
    spots = tuple(home for _ in order[1:])
    return PickPlan(tuple(order), spots, tuple(legs), math.fsum(legs))


def exact_plan(instance: PlanningInstance, costs: Optional[np.ndarray] = None) -> PickPlan:
    """Exhaustive minimum over all picking orders (``N <= 10``).

    Permutations are scanned in lexicographic order and the first minimum
    wins.
    """
    n = instance.n
    if n == 0:
        raise PlanningError("empty instance: no apples to plan")
    if n > EXACT_PLAN_MAX_N:
        raise PlanningError(f"exact_plan refuses N={n}: limit is {EXACT_PLAN_MAX_N}")
    if n == 1:
        return _assemble(instance, [0])
    if costs is None:
        costs = cost_matrix(instance)
    from_home = np.array([math.dist(p, instance.home) for p in instance.apples])
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    total = from_home[perms[:, 0]] + from_home[perms[:, -1]]
    for k in range(n - 1):
        total += costs[perms[:, k], perms[:, k + 1]]
    best = int(np.argmin(total))
    return _assemble(instance, [int(i) for i in perms[best]])
