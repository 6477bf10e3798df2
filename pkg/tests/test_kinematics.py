import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepmon.errors import BadLinkIndex, JointCountMismatch
from sepmon.geometry import AffineTransform, Point3
from sepmon.kinematics import (
    PRISMATIC,
    Joint,
    JointChain,
    JointState,
    KeypointAttachment,
    forward_kinematics,
    nao_left_arm_approx,
    robot_keypoints,
)

Z = (0.0, 0.0, 1.0)


def planar_arm():
    return JointChain(
        (Joint(Z), Joint(Z, fixed=AffineTransform.translation_only((0.3, 0, 0)))),
        tip=AffineTransform.translation_only((0.2, 0, 0)),
    )


def test_home_pose_is_cumulative_fixed_transforms():
    chain = planar_arm()
    frames = forward_kinematics(chain, JointState((0.0, 0.0)))
    assert [f.translation.tolist() for f in frames] == [[0, 0, 0], [0, 0, 0], [0.3, 0, 0], [0.5, 0, 0]]
    for f in frames:
        assert np.array_equal(f.linear, np.eye(3))


def test_single_revolute_joint():
    chain = JointChain((Joint(Z),))
    kp = robot_keypoints(chain, JointState((math.pi / 2,)), [KeypointAttachment("p", 1, Point3(1, 0, 0))])
    assert np.allclose(kp.positions[0], (0, 1, 0), atol=1e-12)


def test_planar_end_frame_home():
    frames = forward_kinematics(planar_arm(), JointState((0.0, 0.0)))
    assert np.allclose(frames[-1].translation, (0.5, 0, 0), atol=1e-15)


@pytest.mark.parametrize("q1, q2", [(0.0, 0.0), (math.pi / 2, 0.0), (0.4, -1.1), (2.5, 0.9)])
def test_planar_keypoint_matches_trigonometry(q1, q2):
    kp = robot_keypoints(planar_arm(), JointState((q1, q2), 1.5), [KeypointAttachment("ee", 3)])
    expected = (0.3 * math.cos(q1) + 0.2 * math.cos(q1 + q2), 0.3 * math.sin(q1) + 0.2 * math.sin(q1 + q2), 0.0)
    assert np.allclose(kp.positions[0], expected, atol=1e-12)
    assert kp.timestamp == 1.5


def test_base_link_offset_zero_is_base_origin():
    base = AffineTransform.from_rotation_vector((0.1, 0.2, 0.3), (1.0, -2.0, 0.5))
    chain = JointChain((Joint(Z),), base=base)
    kp = robot_keypoints(chain, JointState((0.7,)), [KeypointAttachment("b", 0)])
    assert np.allclose(kp.positions[0], (1.0, -2.0, 0.5))


def test_prismatic_joint():
    chain = JointChain((Joint((1.0, 0.0, 0.0), PRISMATIC),))
    kp = robot_keypoints(chain, JointState((0.25,)), [KeypointAttachment("p", 1)])
    assert np.allclose(kp.positions[0], (0.25, 0, 0))


def test_errors():
    chain = planar_arm()
    with pytest.raises(JointCountMismatch):
        forward_kinematics(chain, JointState((0.0,)))
    with pytest.raises(BadLinkIndex):
        robot_keypoints(chain, JointState((0.0, 0.0)), [KeypointAttachment("x", 9)])
    with pytest.raises(ValueError):
        Joint((0.0, 0.0, 2.0))
    with pytest.raises(ValueError):
        JointChain(())
    with pytest.raises(ValueError):
        JointState((math.inf,))


def random_chain(rng, n):
    joints = []
    for _ in range(n):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        fixed = AffineTransform.from_rotation_vector(rng.normal(size=3), rng.uniform(-0.2, 0.2, size=3))
        joints.append(Joint(tuple(axis), fixed=fixed))
    return JointChain(tuple(joints))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_deep_chain_frames_stay_rigid(seed):
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, 30)
    for f in forward_kinematics(chain, JointState(rng.uniform(-math.pi, math.pi, 30))):
        assert np.abs(f.linear.T @ f.linear - np.eye(3)).max() < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_keypoints_lipschitz_in_q(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    chain = random_chain(rng, n)
    att = [KeypointAttachment("k", n, Point3(0.1, 0, 0))]
    reach = chain.reach() + 0.1
    q = rng.uniform(-3, 3, n)
    dq = rng.normal(scale=1e-3, size=n)
    a = robot_keypoints(chain, JointState(q), att).positions[0]
    b = robot_keypoints(chain, JointState(q + dq), att).positions[0]
    # each joint moves the point at most reach*|dq_i|; sum <= reach*sqrt(n)*|dq|
    assert np.linalg.norm(a - b) <= reach * math.sqrt(n) * np.linalg.norm(dq) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_keypoints_match_manual_composition(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    chain = random_chain(rng, n)
    q = rng.uniform(-3, 3, n)
    offset = rng.normal(size=3) * 0.1
    # independent 4x4 homogeneous product
    M = np.eye(4)
    for joint, v in zip(chain.joints, q):
        x, y, z = joint.axis
        K = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
        motion = np.eye(4)
        motion[:3, :3] = np.eye(3) + math.sin(v) * K + (1 - math.cos(v)) * K @ K
        M = M @ joint.fixed.matrix() @ motion
    expected = (M @ np.append(offset, 1.0))[:3]
    kp = robot_keypoints(chain, JointState(q), [KeypointAttachment("k", n, Point3.of(offset))])
    assert np.allclose(kp.positions[0], expected, atol=1e-12)


def test_nao_example_chain():
    chain, atts = nao_left_arm_approx()
    assert chain.dof == 4
    assert [a.name for a in atts] == ["elbow", "forearm", "end_effector"]
    kp = robot_keypoints(chain, JointState((0.0,) * 4), atts)
    assert np.allclose(kp.position("end_effector").as_array(), (0.218, 0.098, 0.100))
