"""Simulation stack for a 3-DOF apple-harvesting arm: two-camera detection
fusion, joint picking/dropping planning, quintic references and Lyapunov
velocity control."""
from .control import (
    ActuatorLimits,
    ControllerGains,
    FixedReference,
    SingularityError,
    TrackingLog,
    VelocityCommand,
    simulate_tracking,
    velocity_command,
)
from .kinematics import (
    DEFAULT_GEOMETRY,
    JointLimitError,
    JointState,
    ManipulatorGeometry,
    Position3,
    UnreachableError,
    forward_kinematics,
    inverse_kinematics,
    velocity_map,
)
from .orchestrator import CycleReport, HarvestScenario, batch_run, run_cycle
from .perception import (
    CameraModel,
    Detection,
    Extrinsics,
    FusedApple,
    evaluate_detection,
    fuse_scene,
    fuzzy_fuse,
    localize_apple,
    match_boxes,
    transform_detections,
)
from .planning import (
    DroppingRegion,
    PickPlan,
    PlanningInstance,
    baseline_plan,
    cost_matrix,
    exact_plan,
    optimal_drop_spot,
    plan_sequence,
)
from .trajectory import QuinticTrajectory, generate_trajectory, sample

__version__ = "0.1.0"
