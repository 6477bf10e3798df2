"""Keypoint-pairwise speed and separation monitoring between a robot and a human."""

from .body_model import (
    MEASURED_HUMAN_COMPENSATION,
    MEASURED_ROBOT_COMPENSATION,
    BodyModel,
    Capsule,
    CompensationTable,
    Sphere,
    assign_nearest,
    compute_compensation,
    verify_coverage,
)
from .config import ScenarioConfig, load_config, load_preset
from .geometry import (
    AffineTransform,
    DistanceMatrix,
    KeypointFrame,
    Point3,
    apply_transform,
    fit_transform,
    pairwise_distances,
)
from .kinematics import JointChain, JointState, KeypointAttachment, forward_kinematics, robot_keypoints
from .monitor import (
    MissingMode,
    MissingPolicy,
    SafetyDecision,
    SafetyMonitor,
    SafetyState,
    evaluate_frame,
    evaluate_with_hysteresis,
    min_separation_report,
)
from .policy import SeparationPolicy, ThresholdMatrices, compile_thresholds, guaranteed_distance, keypoint_separation
from .simulation import run_scenario, robot_motion_step, synthetic_human_at

__version__ = "0.1.0"
