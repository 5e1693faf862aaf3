"""Quintic point-to-point reference trajectories.

Every trajectory is a straight line traversed with the minimum-jerk time
scaling ``s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5``, so position, velocity and
acceleration match the endpoints with zero velocity and acceleration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .kinematics import Position3

# peak of s'(tau) at tau = 1/2
PEAK_SPEED_FACTOR = 15.0 / 8.0


class TrajectorySample(NamedTuple):
    position: Position3
    velocity: Tuple[float, float, float]
    acceleration: Tuple[float, float, float]


@dataclass(frozen=True)
class QuinticTrajectory:
    start: Position3
    target: Position3
    duration: float

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"duration must be positive, got {self.duration!r}")
        object.__setattr__(self, "start", Position3(*map(float, self.start)))
        object.__setattr__(self, "target", Position3(*map(float, self.target)))

    @property
    def coefficients(self) -> np.ndarray:
        """Per-axis polynomial coefficients, shape (3, 6), lowest power first."""
        T = self.duration
        delta = np.subtract(self.target, self.start)
        c = np.zeros((3, 6))
        c[:, 0] = self.start
        c[:, 3] = 10.0 * delta / T**3
        c[:, 4] = -15.0 * delta / T**4
        c[:, 5] = 6.0 * delta / T**5
        return c

    @property
    def length(self) -> float:
        return math.dist(self.start, self.target)

    @property
    def peak_speed(self) -> float:
        return PEAK_SPEED_FACTOR * self.length / self.duration

    def sample(self, t: float) -> TrajectorySample:
        return sample(self, t)


def generate_trajectory(start, target, duration: float) -> QuinticTrajectory:
    """Rest-to-rest quintic from ``start`` to ``target`` lasting ``duration`` seconds."""
    return QuinticTrajectory(Position3(*start), Position3(*target), float(duration))


def sample(traj: QuinticTrajectory, t: float) -> TrajectorySample:
    """Position, velocity and acceleration at time ``t``.

    ``t`` is clamped to ``[0, T]``; past the end the target is held at rest.
    """
    T = traj.duration
    tau = min(max(t / T, 0.0), 1.0)
    tau2 = tau * tau
    tau3 = tau2 * tau
    s = tau3 * (10.0 + tau * (-15.0 + 6.0 * tau))
    ds = 30.0 * tau2 * (1.0 - tau) ** 2 / T
    dds = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / (T * T)
    p0, p1 = traj.start, traj.target
    deltas = (p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2])
    if tau >= 1.0:
        position = p1
    else:
        position = Position3(*(a + dl * s for a, dl in zip(p0, deltas)))
    return TrajectorySample(
        position,
        tuple(dl * ds for dl in deltas),
        tuple(dl * dds for dl in deltas),
    )


def duration_for_speed(distance: float, speed_limit: float = 1.0,
                       min_duration: float = 0.75, max_duration: float = 1.4) -> float:
    """Shortest duration keeping the peak speed under ``speed_limit``, clipped
    to ``[min_duration, max_duration]``."""
    if speed_limit <= 0:
        raise ValueError("speed_limit must be positive")
    if not 0 < min_duration <= max_duration:
        raise ValueError("need 0 < min_duration <= max_duration")
    return min(max(PEAK_SPEED_FACTOR * distance / speed_limit, min_duration), max_duration)


def sample_grid(traj: QuinticTrajectory, dt: float) -> np.ndarray:
    """Rows ``(t, x, y, z, vx, vy, vz)`` on a uniform grid including both ends."""
    n = int(round(traj.duration / dt))
    times = np.linspace(0.0, n * dt, n + 1)
    rows = []
    for t in times:
        smp = sample(traj, float(t))
        rows.append((t, *smp.position, *smp.velocity))
    return np.array(rows)
