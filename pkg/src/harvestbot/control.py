"""Lyapunov velocity controller and a fixed-step closed-loop simulator.

The controller inverts the arm's velocity map channel by channel (pan from
y, tilt from z, extension from x) so that the Cartesian error obeys
``e' = -K e`` whenever no actuator limit is hit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .kinematics import (
    JointState,
    ManipulatorGeometry,
    Position3,
    _fk,
    _velocity,
)
from .trajectory import QuinticTrajectory, sample

DENOMINATOR_EPS = 1e-6
# round-off allowance when a run converges onto a joint limit
LIMIT_SLACK = 1e-9


class ControlError(ValueError):
    pass


class SingularityError(ControlError):
    def __init__(self, channel: str, value: float):
        self.channel = channel
        self.value = value
        super().__init__(f"{channel} denominator {value:.3e} below {DENOMINATOR_EPS:g}")


@dataclass(frozen=True)
class ControllerGains:
    k_x: float = 2.0
    k_y: float = 2.0
    k_z: float = 2.0

    def __post_init__(self):
        for name in ("k_x", "k_y", "k_z"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ControlError(f"gain {name} must be positive, got {value!r}")

    @property
    def k_min(self) -> float:
        return min(self.k_x, self.k_y, self.k_z)


@dataclass(frozen=True)
class ActuatorLimits:
    omega_max: float = 2.0
    v_d_max: float = 1.0

    def __post_init__(self):
        if not (self.omega_max > 0 and self.v_d_max > 0):
            raise ControlError("actuator limits must be positive")


class VelocityCommand(NamedTuple):
    omega_phi: float
    omega_theta: float
    v_d: float
    saturated: bool = False


def _command(geom, phi, theta, d, ref_pos, ref_vel, gains, limits):
    cp, sp = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    x, y, z = _fk(geom, phi, theta, d)
    ex, ey, ez = x - ref_pos[0], y - ref_pos[1], z - ref_pos[2]
    xr_dot, yr_dot, zr_dot = ref_vel

    den_phi = geom.d_x3 * cp
    if abs(den_phi) < DENOMINATOR_EPS:
        raise SingularityError("phi", den_phi)
    den_theta = geom.d_x3 * ct * cp + geom.d_x2 * ct + geom.d_z2 * st
    if abs(den_theta) < DENOMINATOR_EPS:
        raise SingularityError("theta", den_theta)

    w_phi = (-gains.k_y * ey + yr_dot) / den_phi
    w_theta = (gains.k_z * ez + geom.d_x3 * st * sp * w_phi - zr_dot) / den_theta
    v_d = (
        -gains.k_x * ex
        + geom.d_x3 * (st * cp * w_theta + ct * sp * w_phi)
        + geom.d_x2 * st * w_theta
        - geom.d_z2 * ct * w_theta
        + xr_dot
    )
    if limits is None:
        return VelocityCommand(w_phi, w_theta, v_d, False)
    om, vm = limits.omega_max, limits.v_d_max
    saturated = abs(w_phi) > om or abs(w_theta) > om or abs(v_d) > vm
    if saturated:
        w_phi = min(max(w_phi, -om), om)
        w_theta = min(max(w_theta, -om), om)
        v_d = min(max(v_d, -vm), vm)
    return VelocityCommand(w_phi, w_theta, v_d, saturated)


def velocity_command(
    geom: ManipulatorGeometry,
    q: JointState,
    ref_pos,
    ref_vel,
    gains: ControllerGains,
    limits: Optional[ActuatorLimits] = ActuatorLimits(),
) -> VelocityCommand:
    """Joint-rate command driving the end-effector onto the reference.

    Pass ``limits=None`` to get the unclamped control law.

    Raises
    ------
    JointLimitError
        If ``q`` is outside the joint limits.
    SingularityError
        If either controller denominator falls below ``DENOMINATOR_EPS``.
    """
    geom.check(q)
    return _command(geom, q.phi, q.theta, q.d, ref_pos, ref_vel, gains, limits)


def tracking_errors(geom, q: JointState, ref_pos) -> Tuple[float, float, float]:
    p = _fk(geom, q.phi, q.theta, q.d)
    return (p[0] - ref_pos[0], p[1] - ref_pos[1], p[2] - ref_pos[2])


def lyapunov(errors) -> float:
    return 0.5 * (errors[0] ** 2 + errors[1] ** 2 + errors[2] ** 2)


@dataclass(frozen=True)
class FixedReference:
    """Constant set-point usable wherever a trajectory is expected."""

    position: Position3
    duration: float = 0.0

    def sample(self, t: float):
        return (Position3(*self.position), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


LOG_COLUMNS = (
    "t", "phi", "theta", "d", "x", "y", "z", "ex", "ey", "ez", "V",
    "omega_phi", "omega_theta", "v_d", "saturated", "event",
)


@dataclass
class TrackingLog:
    """Per-step record of a closed-loop run.

    ``data`` holds the numeric columns of ``LOG_COLUMNS`` (without ``event``);
    ``event`` is ``None`` for a run that reached its horizon.
    """

    data: np.ndarray
    event: Optional[str] = None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, LOG_COLUMNS.index(name)]

    @property
    def t(self):
        return self.column("t")

    @property
    def V(self):
        return self.column("V")

    @property
    def error_norm(self) -> np.ndarray:
        return np.sqrt(2.0 * self.V)

    @property
    def final_state(self) -> JointState:
        phi, theta, d = self.data[-1, 1:4]
        return JointState(float(phi), float(theta), float(d))

    @property
    def final_position(self) -> Position3:
        return Position3(*(float(v) for v in self.data[-1, 4:7]))

    @property
    def completed(self) -> bool:
        return self.event is None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            last = len(self.data) - 1
            for i, row in enumerate(self.data):
                values = [repr(float(v)) for v in row[:-1]]
                values.append(int(row[-1]))
                values.append(self.event if (i == last and self.event) else "")
                writer.writerow(values)


def simulate_tracking(
    geom: ManipulatorGeometry,
    q0: JointState,
    traj,
    gains: ControllerGains = ControllerGains(),
    dt: float = 1e-3,
    horizon: Optional[float] = None,
    limits: Optional[ActuatorLimits] = ActuatorLimits(),
) -> TrackingLog:
    """Integrate ``q' = velocity_command(q, ref(t))`` with classical RK4.

    ``traj`` is anything with a ``sample(t) -> (pos, vel, acc)`` method and a
    ``duration`` attribute; ``horizon`` defaults to that duration.  The run
    stops early, with ``log.event`` set, on a controller singularity or when
    the next step would leave the joint limits by more than ``LIMIT_SLACK``
    (smaller overshoots are clamped); the log then ends at the last
    admissible state.  Commands logged at each row are the ones evaluated at
    that row's state.
    """
    if not 0 < dt <= 0.01:
        raise ValueError("dt must lie in (0, 0.01]")
    geom.check(q0)
    if horizon is None:
        horizon = traj.duration
    n_steps = int(math.ceil(horizon / dt - 1e-9))

    rows: List[tuple] = []
    phi, theta, d = q0.phi, q0.theta, q0.d
    event = None

    def record(t, ref_pos, cmd):
        x, y, z = _fk(geom, phi, theta, d)
        ex, ey, ez = x - ref_pos[0], y - ref_pos[1], z - ref_pos[2]
        w_phi, w_theta, v_d, sat = cmd if cmd is not None else (math.nan, math.nan, math.nan, False)
        rows.append((t, phi, theta, d, x, y, z, ex, ey, ez,
                     0.5 * (ex * ex + ey * ey + ez * ez), w_phi, w_theta, v_d, int(sat)))

    h = dt
    ref_now = traj.sample(0.0)
    for k in range(n_steps + 1):
        t = k * h
        try:
            k1 = _command(geom, phi, theta, d, ref_now[0], ref_now[1], gains, limits)
        except SingularityError as exc:
            record(t, ref_now[0], None)
            event = f"singularity:{exc.channel}"
            break
        record(t, ref_now[0], k1)
        if k == n_steps:
            break
        ref_mid = traj.sample(t + 0.5 * h)
        ref_next = traj.sample((k + 1) * h)
        try:
            k2 = _command(geom, phi + 0.5 * h * k1[0], theta + 0.5 * h * k1[1], d + 0.5 * h * k1[2],
                          ref_mid[0], ref_mid[1], gains, limits)
            k3 = _command(geom, phi + 0.5 * h * k2[0], theta + 0.5 * h * k2[1], d + 0.5 * h * k2[2],
                          ref_mid[0], ref_mid[1], gains, limits)
            k4 = _command(geom, phi + h * k3[0], theta + h * k3[1], d + h * k3[2],
                          ref_next[0], ref_next[1], gains, limits)
        except SingularityError as exc:
            event = f"singularity:{exc.channel}"
            break
        nphi = phi + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        ntheta = theta + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        nd = d + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        joint = geom.violated_joint(nphi, ntheta, nd, LIMIT_SLACK)
        if joint is not None:
            # stop at the last admissible state
            event = f"joint_limit:{joint}"
            break
        phi = min(max(nphi, geom.phi_limits[0]), geom.phi_limits[1])
        theta = min(max(ntheta, geom.theta_limits[0]), geom.theta_limits[1])
        d = min(max(nd, geom.d_limits[0]), geom.d_limits[1])
        ref_now = ref_next

    return TrackingLog(np.array(rows, dtype=float), event)
