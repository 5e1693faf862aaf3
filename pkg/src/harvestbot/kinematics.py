"""Kinematics of the 3-DOF pan/tilt/extension harvesting arm.

Joint order is ``(phi, theta, d)``: pan angle, tilt angle and prismatic
extension.  The end-effector position in the base frame is::

    x = dx3 cos(theta) cos(phi) + dx2 cos(theta) + dz2 sin(theta) + dx1 + d
    y = dx3 sin(phi) + dy2 + dy1
    z = -dx3 sin(theta) cos(phi) - dx2 sin(theta) + dz2 cos(theta) + dz1

Angles are radians everywhere in this module; degrees only appear in the
config parsers (:meth:`ManipulatorGeometry.from_dict`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

HALF_PI = 0.5 * math.pi
# slack used only when checking IK output against the limits
_IK_LIMIT_SLACK = 1e-12


class KinematicsError(ValueError):
    """Base class for kinematics domain errors."""


class JointLimitError(KinematicsError):
    def __init__(self, joint: str, value: float, limits: Tuple[float, float]):
        self.joint = joint
        self.value = value
        self.limits = limits
        super().__init__(f"joint {joint}={value!r} outside limits [{limits[0]!r}, {limits[1]!r}]")


class UnreachableError(KinematicsError):
    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        msg = f"target unreachable: {constraint}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Position3(NamedTuple):
    x: float
    y: float
    z: float


class JointVelocity(NamedTuple):
    omega_phi: float
    omega_theta: float
    v_d: float


@dataclass(frozen=True)
class JointState:
    """Joint configuration with optional joint velocities.

    Limits live on :class:`ManipulatorGeometry`; build validated states with
    :meth:`ManipulatorGeometry.joint_state`.
    """

    phi: float
    theta: float
    d: float
    omega_phi: float = 0.0
    omega_theta: float = 0.0
    v_d: float = 0.0

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.phi, self.theta, self.d)


def _check_interval(name, interval, lo_bound=None, hi_bound=None):
    lo, hi = interval
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValueError(f"{name} must be a finite closed interval, got {interval!r}")
    if lo_bound is not None and not lo > lo_bound:
        raise ValueError(f"{name} lower bound must exceed {lo_bound}")
    if hi_bound is not None and not hi < hi_bound:
        raise ValueError(f"{name} upper bound must stay below {hi_bound}")


@dataclass(frozen=True)
class ManipulatorGeometry:
    """Link lengths (meters) and joint limits of the arm.

    The defaults are a placeholder profile for a ~0.7 m tube arm; they are not
    measured values of any physical robot.
    """

    d_x1: float = 0.10
    d_x2: float = 0.09
    d_x3: float = 0.70
    d_y1: float = 0.03
    d_y2: float = 0.03
    d_z1: float = 0.40
    d_z2: float = 0.06
    phi_limits: Tuple[float, float] = (math.radians(-25.0), math.radians(25.0))
    theta_limits: Tuple[float, float] = (math.radians(-25.0), math.radians(25.0))
    d_limits: Tuple[float, float] = (0.0, 0.61)

    def __post_init__(self):
        for name in ("d_x1", "d_x2", "d_x3", "d_y1", "d_y2", "d_z1", "d_z2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.d_x3 > 0:
            raise ValueError("d_x3 must be positive")
        object.__setattr__(self, "phi_limits", tuple(float(v) for v in self.phi_limits))
        object.__setattr__(self, "theta_limits", tuple(float(v) for v in self.theta_limits))
        object.__setattr__(self, "d_limits", tuple(float(v) for v in self.d_limits))
        _check_interval("phi_limits", self.phi_limits, -HALF_PI, HALF_PI)
        _check_interval("theta_limits", self.theta_limits, -HALF_PI, HALF_PI)
        _check_interval("d_limits", self.d_limits)
        if self.d_limits[0] < 0:
            raise ValueError("d_limits lower bound must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "ManipulatorGeometry":
        """Build from a config mapping; angle limits are given in degrees."""
        kwargs = {}
        for name in ("d_x1", "d_x2", "d_x3", "d_y1", "d_y2", "d_z1", "d_z2"):
            if name in data:
                kwargs[name] = float(data[name])
        for name in ("phi_limits_deg", "theta_limits_deg"):
            if name in data:
                lo, hi = data[name]
                kwargs[name[:-4]] = (math.radians(lo), math.radians(hi))
        if "d_limits" in data:
            kwargs["d_limits"] = tuple(data["d_limits"])
        unknown = set(data) - {*kwargs, "phi_limits_deg", "theta_limits_deg", "d_limits"}
        if unknown:
            raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "d_x1": self.d_x1, "d_x2": self.d_x2, "d_x3": self.d_x3,
            "d_y1": self.d_y1, "d_y2": self.d_y2, "d_z1": self.d_z1, "d_z2": self.d_z2,
            "phi_limits_deg": [math.degrees(v) for v in self.phi_limits],
            "theta_limits_deg": [math.degrees(v) for v in self.theta_limits],
            "d_limits": list(self.d_limits),
        }

    def violated_joint(self, phi: float, theta: float, d: float, slack: float = 0.0) -> Optional[str]:
        """Name of the first joint outside its limits, or None."""
        for name, value, (lo, hi) in (
            ("phi", phi, self.phi_limits),
            ("theta", theta, self.theta_limits),
            ("d", d, self.d_limits),
        ):
            if not (lo - slack <= value <= hi + slack):
                return name
        return None

    def check(self, q: JointState) -> None:
        name = self.violated_joint(q.phi, q.theta, q.d)
        if name is not None:
            raise JointLimitError(name, getattr(q, name), getattr(self, f"{name}_limits"))

    def joint_state(self, phi: float, theta: float, d: float, **velocities) -> JointState:
        q = JointState(float(phi), float(theta), float(d), **velocities)
        self.check(q)
        return q


DEFAULT_GEOMETRY = ManipulatorGeometry()


def _fk(geom: ManipulatorGeometry, phi: float, theta: float, d: float) -> Position3:
    cp, sp = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    x = geom.d_x3 * ct * cp + geom.d_x2 * ct + geom.d_z2 * st + geom.d_x1 + d
    y = geom.d_x3 * sp + geom.d_y2 + geom.d_y1
    z = -geom.d_x3 * st * cp - geom.d_x2 * st + geom.d_z2 * ct + geom.d_z1
    return Position3(x, y, z)


def forward_kinematics(geom: ManipulatorGeometry, q: JointState) -> Position3:
    """End-effector position for joint state ``q``.

    Raises
    ------
    JointLimitError
        If any joint of ``q`` lies outside the geometry's limits.
    """
    geom.check(q)
    return _fk(geom, q.phi, q.theta, q.d)


def _velocity(geom, phi, theta, omega_phi, omega_theta, v_d):
    cp, sp = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    xd = (
        -geom.d_x3 * (st * cp * omega_theta + ct * sp * omega_phi)
        - geom.d_x2 * st * omega_theta
        + geom.d_z2 * ct * omega_theta
        + v_d
    )
    yd = geom.d_x3 * cp * omega_phi
    zd = (
        -geom.d_x3 * (ct * cp * omega_theta - st * sp * omega_phi)
        - geom.d_x2 * ct * omega_theta
        - geom.d_z2 * st * omega_theta
    )
    return (xd, yd, zd)


def velocity_map(geom: ManipulatorGeometry, q: JointState, qdot) -> Tuple[float, float, float]:
    """Cartesian end-effector velocity for joint rates ``qdot = (w_phi, w_theta, v_d)``."""
    geom.check(q)
    omega_phi, omega_theta, v_d = qdot
    return _velocity(geom, q.phi, q.theta, omega_phi, omega_theta, v_d)


def inverse_kinematics(geom: ManipulatorGeometry, target) -> JointState:
    """Closed-form inverse: pan from y, tilt from z, extension from x.

    When both tilt roots are admissible the one with the smaller magnitude is
    returned.
    """
    x, y, z = (float(v) for v in target)
    if not all(math.isfinite(v) for v in (x, y, z)):
        raise ValueError("target must be finite")

    s = (y - geom.d_y1 - geom.d_y2) / geom.d_x3
    if abs(s) > 1.0:
        raise UnreachableError("|y - d_y1 - d_y2| > d_x3", f"sin(phi)={s:.6g}")
    phi = math.asin(s)
    lo, hi = geom.phi_limits
    if not (lo - _IK_LIMIT_SLACK <= phi <= hi + _IK_LIMIT_SLACK):
        raise UnreachableError("phi outside limits", f"phi={math.degrees(phi):.4f} deg")
    phi = min(max(phi, lo), hi)

    # z - d_z1 = B cos(theta) - A sin(theta) = R cos(theta + alpha)
    a_coef = geom.d_x3 * math.cos(phi) + geom.d_x2
    b_coef = geom.d_z2
    r = math.hypot(a_coef, b_coef)
    w = z - geom.d_z1
    if r == 0.0 or abs(w) > r:
        raise UnreachableError("z outside tilt circle", f"|z - d_z1|={abs(w):.6g} > {r:.6g}")
    alpha = math.atan2(a_coef, b_coef)
    base = math.acos(max(-1.0, min(1.0, w / r)))
    lo, hi = geom.theta_limits
    candidates = []
    for root in (-alpha + base, -alpha - base):
        root = math.remainder(root, 2.0 * math.pi)
        if lo - _IK_LIMIT_SLACK <= root <= hi + _IK_LIMIT_SLACK:
            candidates.append(min(max(root, lo), hi))
    if not candidates:
        raise UnreachableError("theta outside limits")
    theta = min(candidates, key=abs)

    base_x = _fk(geom, phi, theta, 0.0).x
    d = x - base_x
    lo, hi = geom.d_limits
    if not (lo - _IK_LIMIT_SLACK <= d <= hi + _IK_LIMIT_SLACK):
        raise UnreachableError("d outside limits", f"d={d:.6g}")
    d = min(max(d, lo), hi)
    return JointState(phi, theta, d)


def is_reachable(geom: ManipulatorGeometry, target) -> bool:
    try:
        inverse_kinematics(geom, target)
    except UnreachableError:
        return False
    return True
