"""Serial-chain forward kinematics and link-attached robot keypoints.

Chains use an axis-angle parameterisation: each joint has a fixed
parent-to-joint transform followed by a motion (rotation about, or
translation along, the joint axis). An optional ``tip`` transform adds one
more rigid link after the last joint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import BadLinkIndex, JointCountMismatch
from .geometry import AffineTransform, KeypointFrame, Point3, axis_angle_matrix

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


@dataclass(frozen=True, eq=False)
class Joint:
    axis: Tuple[float, float, float]
    type: str = REVOLUTE
    fixed: AffineTransform = AffineTransform.identity()

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError(f"joint axis must be unit-norm, got {axis.tolist()}")
        if self.type not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"joint type must be revolute or prismatic, got {self.type!r}")
        if not self.fixed.rigid:
            raise ValueError("joint fixed transform must be rigid")
        object.__setattr__(self, "axis", tuple(float(a) for a in axis))

    def motion(self, value: float) -> AffineTransform:
        if self.type == REVOLUTE:
            lin = axis_angle_matrix(self.axis, value)
            return AffineTransform(lin, np.zeros(3), rigid=True)
        return AffineTransform.translation_only(np.multiply(self.axis, value))


@dataclass(frozen=True, eq=False)
class JointChain:
    joints: Tuple[Joint, ...]
    base: AffineTransform = AffineTransform.identity()
    tip: Optional[AffineTransform] = None

    def __post_init__(self):
        joints = tuple(self.joints)
        if not joints:
            raise ValueError("a chain needs at least one joint")
        if not self.base.rigid or (self.tip is not None and not self.tip.rigid):
            raise ValueError("base and tip transforms must be rigid")
        object.__setattr__(self, "joints", joints)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def n_links(self) -> int:
        """Number of link frames: the base, one per joint, and the tip if any."""
        return self.dof + 1 + (self.tip is not None)

    def reach(self) -> float:
        """Sum of fixed link lengths; bounds how far any link origin sits from the base."""
        total = sum(float(np.linalg.norm(j.fixed.translation)) for j in self.joints)
        if self.tip is not None:
            total += float(np.linalg.norm(self.tip.translation))
        return total


@dataclass(frozen=True)
class KeypointAttachment:
    name: str
    link: int
    offset: Point3 = Point3(0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class JointState:
    values: Tuple[float, ...]
    timestamp: float = 0.0

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("joint values must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


def forward_kinematics(chain: JointChain, q: JointState) -> List[AffineTransform]:
    """Link frames in the base frame of reference.

    Frame 0 is ``chain.base``; frame ``k`` (1-based joint index) is
    ``base ∘ fixed_1 ∘ motion_1(q_1) ∘ ... ∘ fixed_k ∘ motion_k(q_k)``; the
    tip, when defined, is appended last.
    """
    if len(q) != chain.dof:
        raise JointCountMismatch(f"chain has {chain.dof} joints, state has {len(q)} values")
    frames = [chain.base]
    current = chain.base
    for joint, value in zip(chain.joints, q.values):
        current = current.compose(joint.fixed).compose(joint.motion(value))
        frames.append(current)
    if chain.tip is not None:
        frames.append(current.compose(chain.tip))
    return frames


def robot_keypoints(
    chain: JointChain, q: JointState, attachments: Sequence[KeypointAttachment]
) -> KeypointFrame:
    frames = forward_kinematics(chain, q)
    names, pos = [], np.empty((len(attachments), 3))
    for i, att in enumerate(attachments):
        if not 0 <= att.link < len(frames):
            raise BadLinkIndex(f"attachment {att.name!r} refers to link {att.link}, chain has {len(frames)}")
        f = frames[att.link]
        pos[i] = f.linear @ np.array(tuple(att.offset)) + f.translation
        names.append(att.name)
    n = len(names)
    return KeypointFrame(tuple(names), pos, np.ones(n, dtype=bool), np.ones(n), q.timestamp)


def nao_left_arm_approx() -> Tuple[JointChain, Tuple[KeypointAttachment, ...]]:
    """Illustrative four-joint left arm with elbow, forearm and end-effector keypoints.

    Shoulder pitch (y), shoulder roll (z), elbow yaw (x), elbow roll (z).
    The lengths are rough humanoid-arm proportions, not calibrated values.
    At the zero pose the arm points straight along +x from the left shoulder.
    """
    joints = (
        Joint((0.0, 1.0, 0.0), REVOLUTE, AffineTransform.translation_only((0.0, 0.098, 0.100))),
        Joint((0.0, 0.0, 1.0), REVOLUTE),
        Joint((1.0, 0.0, 0.0), REVOLUTE, AffineTransform.translation_only((0.105, 0.0, 0.0))),
        Joint((0.0, 0.0, 1.0), REVOLUTE),
    )
    attachments = (
        KeypointAttachment("elbow", 3),
        KeypointAttachment("forearm", 4, Point3(0.050, 0.0, 0.0)),
        KeypointAttachment("end_effector", 4, Point3(0.113, 0.0, 0.0)),
    )
    return JointChain(joints), attachments
