"""Deterministic closed-loop scenarios.

Each frame: sample the human, advance the robot with the speed factor of
an earlier decision, evaluate, log. The robot swings its arm periodically;
a stop freezes the motion phase and a resume continues from it.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ReplayExhausted
from .geometry import KeypointFrame, Point3
from .kinematics import JointChain, JointState, KeypointAttachment, robot_keypoints
from .monitor import EVENTS, MissingPolicy, SafetyDecision, SafetyMonitor
from .policy import ThresholdMatrices


@dataclass
class RobotMotionProfile:
    """Sinusoidal joint motion ``q = center + amplitude * sin(2*pi*phase)``.

    ``phase`` advances by ``speed_factor * dt / period`` per step.
    """

    amplitude: Tuple[float, ...]
    center: Tuple[float, ...]
    period: float
    phase: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be > 0")
        if len(self.amplitude) != len(self.center):
            raise ValueError("amplitude and center lengths differ")
        self.amplitude = tuple(float(a) for a in self.amplitude)
        self.center = tuple(float(c) for c in self.center)

    def joint_state(self) -> JointState:
        s = math.sin(2.0 * math.pi * self.phase)
        return JointState(tuple(c + a * s for c, a in zip(self.center, self.amplitude)), self.time)


def robot_motion_step(profile: RobotMotionProfile, dt: float, speed_factor: float) -> JointState:
    """Advance ``profile`` in place by ``dt`` seconds and return the new joint state."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not 0.0 <= speed_factor <= 1.0:
        raise ValueError(f"speed_factor must lie in [0, 1], got {speed_factor}")
    profile.phase += speed_factor * dt / profile.period
    profile.time += dt
    return profile.joint_state()


@dataclass(frozen=True)
class SyntheticTrajectory:
    """One lead keypoint travels start -> target -> start; the rest of the body follows rigidly.

    ``offsets`` give every other keypoint's fixed displacement from the lead.
    """

    lead: str
    offsets: Mapping[str, Point3]
    start: Point3
    target: Point3
    approach_start: float
    approach_speed: float
    dwell: float
    retreat_speed: float
    order: Tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.approach_speed > 0 and self.retreat_speed > 0):
            raise ValueError("approach and retreat speeds must be > 0")
        if self.approach_start < 0 or self.dwell < 0:
            raise ValueError("approach_start and dwell must be >= 0")
        object.__setattr__(self, "start", Point3.of(self.start))
        object.__setattr__(self, "target", Point3.of(self.target))
        object.__setattr__(self, "offsets", {k: Point3.of(v) for k, v in dict(self.offsets).items()})
        if not self.order:
            object.__setattr__(self, "order", (self.lead,) + tuple(self.offsets))

    @property
    def path_length(self) -> float:
        return self.start.distance_to(self.target)

    def phase_times(self) -> Tuple[float, float, float, float]:
        t0 = self.approach_start
        t1 = t0 + self.path_length / self.approach_speed
        t2 = t1 + self.dwell
        t3 = t2 + self.path_length / self.retreat_speed
        return t0, t1, t2, t3

    def lead_position(self, t: float) -> np.ndarray:
        s, g = self.start.as_array(), self.target.as_array()
        L = self.path_length
        if L == 0.0:
            return s
        u = (g - s) / L
        t0, t1, t2, t3 = self.phase_times()
        if t <= t0 or t >= t3:
            return s
        if t < t1:
            return s + u * (self.approach_speed * (t - t0))
        if t < t2:
            return g
        return g - u * (self.retreat_speed * (t - t2))


def synthetic_human_at(traj: SyntheticTrajectory, t: float) -> KeypointFrame:
    if t < 0:
        raise ValueError("t must be >= 0")
    lead = traj.lead_position(t)
    pos = np.empty((len(traj.order), 3))
    for i, name in enumerate(traj.order):
        pos[i] = lead if name == traj.lead else lead + traj.offsets[name].as_array()
    n = len(traj.order)
    return KeypointFrame(traj.order, pos, np.ones(n, dtype=bool), np.ones(n), t)


class ReplayTrajectory:
    """Human frames from a recorded trace, sample-and-hold between records."""

    def __init__(self, frames: Sequence[KeypointFrame]):
        self.frames = list(frames)
        self.times = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("replay frame timestamps must be strictly increasing")

    @classmethod
    def from_records(cls, records, keypoints: Sequence[str]) -> "ReplayTrajectory":
        """Group human records by timestamp; model keypoints without a record are absent."""
        groups: Dict[float, dict] = {}
        for r in records:
            if r.agent != "human":
                continue
            g = groups.setdefault(r.time_s, {})
            g[r.keypoint] = r
        frames = []
        names = tuple(keypoints)
        for t in sorted(groups):
            g = groups[t]
            extra = tuple(k for k in g if k not in names)
            order = names + extra
            pos = np.full((len(order), 3), np.nan)
            present = np.zeros(len(order), dtype=bool)
            conf = np.zeros(len(order))
            for i, k in enumerate(order):
                r = g.get(k)
                if r is not None and r.present:
                    pos[i] = (r.x, r.y, r.z)
                    present[i] = True
                    conf[i] = r.confidence
            frames.append(KeypointFrame(order, pos, present, conf, t))
        return cls(frames)

    @property
    def end_time(self) -> float:
        return self.times[-1] if self.times else -math.inf

    def at(self, t: float, keypoints: Sequence[str]) -> KeypointFrame:
        k = bisect.bisect_right(self.times, t + 1e-12) - 1
        if k < 0:
            names = tuple(keypoints)
            n = len(names)
            return KeypointFrame(names, np.full((n, 3), np.nan), np.zeros(n, dtype=bool), np.zeros(n), t)
        f = self.frames[k]
        return KeypointFrame(f.names, f.positions, f.present, f.confidence, t)


@dataclass(frozen=True)
class PairSample:
    time_s: float
    human: str
    robot: str
    distance: float


@dataclass
class ScenarioSummary:
    frames: int
    event_counts: Dict[str, int]
    min_distance: Dict[Tuple[str, str], float]


@dataclass
class ScenarioResult:
    decisions: List[SafetyDecision]
    pair_samples: List[PairSample]
    summary: ScenarioSummary
    robot_frames: List[KeypointFrame] = field(default_factory=list, repr=False)
    human_frames: List[KeypointFrame] = field(default_factory=list, repr=False)

    def events(self) -> List[Tuple[float, str]]:
        return [(d.timestamp, d.event) for d in self.decisions if d.event != "none"]

    def pair_distances(self, human: str, robot: str) -> List[Tuple[float, float]]:
        return [(s.time_s, s.distance) for s in self.pair_samples if s.human == human and s.robot == robot]


def frame_count(duration: float, frame_rate: float) -> int:
    n = duration * frame_rate
    return int(math.floor(n + 1e-9))


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a run needs, already validated and compiled."""

    chain: JointChain
    attachments: Tuple[KeypointAttachment, ...]
    motion: RobotMotionProfile
    matrices: ThresholdMatrices
    trajectory: object  # SyntheticTrajectory or ReplayTrajectory
    human_keypoints: Tuple[str, ...]
    missing: MissingPolicy = MissingPolicy()
    frame_rate: float = 30.0
    duration: float = 30.0
    actuation_delay: int = 1
    hysteresis: float = 0.0
    reduced_speed: float = 0.5
    tracked_pairs: Optional[Tuple[Tuple[str, str], ...]] = None
    seed: int = 0
    noise: float = 0.0  # std-dev (m) of Gaussian jitter on human keypoints


def run_scenario(scenario) -> ScenarioResult:
    """Run a scenario closed-loop at a fixed frame rate.

    Accepts a :class:`Scenario` or anything with a ``scenario()`` method
    returning one (such as a loaded configuration). The robot step into
    frame ``k`` uses the speed factor decided at frame ``k - actuation_delay``.

    Raises:
        ReplayExhausted: a replay trace ends before the last frame time.
    """
    if not isinstance(scenario, Scenario):
        scenario = scenario.scenario()
    sc = scenario
    if sc.actuation_delay < 1:
        raise ValueError("actuation_delay must be >= 1 frame")
    dt = 1.0 / sc.frame_rate
    n = frame_count(sc.duration, sc.frame_rate)
    traj = sc.trajectory
    if isinstance(traj, ReplayTrajectory) and n > 0 and traj.end_time < (n - 1) * dt - 1e-9:
        raise ReplayExhausted(f"trace ends at {traj.end_time:g} s, run needs {(n - 1) * dt:g} s")

    motion = RobotMotionProfile(sc.motion.amplitude, sc.motion.center, sc.motion.period, sc.motion.phase, 0.0)
    monitor = SafetyMonitor(sc.matrices, sc.missing, sc.hysteresis, sc.reduced_speed)
    m = sc.matrices
    tracked = sc.tracked_pairs
    if tracked is None:
        tracked = tuple((h, r) for h in m.human for r in m.robot)
    tracked_idx = [(h, r, m.human_index[h], m.robot_index[r]) for h, r in tracked]

    decisions: List[SafetyDecision] = []
    samples: List[PairSample] = []
    robots: List[KeypointFrame] = []
    humans: List[KeypointFrame] = []
    min_d: Dict[Tuple[str, str], float] = {}
    factors: List[float] = []
    rng = np.random.default_rng(sc.seed)

    q = motion.joint_state()
    for k in range(n):
        t = k * dt
        if k > 0:
            src = k - sc.actuation_delay
            factor = factors[src] if src >= 0 else 1.0
            q = robot_motion_step(motion, dt, factor)
        q = JointState(q.values, t)
        robot = robot_keypoints(sc.chain, q, sc.attachments)
        if isinstance(traj, ReplayTrajectory):
            human = traj.at(t, sc.human_keypoints)
        else:
            human = synthetic_human_at(traj, t)
        if sc.noise > 0:
            jitter = rng.normal(0.0, sc.noise, human.positions.shape)
            human = KeypointFrame(human.names, human.positions + jitter, human.present, human.confidence, t)
        decision = monitor.update(human, robot)
        decisions.append(decision)
        factors.append(decision.speed_factor)
        robots.append(robot)
        humans.append(human)

        H = _positions_by_name(human, m.human_index, len(m.human))
        R = _positions_by_name(robot, m.robot_index, len(m.robot))
        for h, r, i, j in tracked_idx:
            if H[1][i] and R[1][j]:
                d = float(np.linalg.norm(H[0][i] - R[0][j]))
                samples.append(PairSample(t, h, r, d))
                if d < min_d.get((h, r), math.inf):
                    min_d[(h, r)] = d

    counts = {e: 0 for e in EVENTS if e != "none"}
    for d in decisions:
        if d.event != "none":
            counts[d.event] += 1
    summary = ScenarioSummary(n, counts, min_d)
    return ScenarioResult(decisions, samples, summary, robots, humans)


def _positions_by_name(frame: KeypointFrame, index: Dict[str, int], size: int):
    pos = np.full((size, 3), np.nan)
    ok = np.zeros(size, dtype=bool)
    for k, name in enumerate(frame.names):
        i = index.get(name)
        if i is not None and frame.present[k]:
            pos[i] = frame.positions[k]
            ok[i] = True
    return pos, ok


# Reference poses for synthetic approaches: displacement of every other
# keypoint from the lead, in the robot base frame. The human faces -x, so
# their right-hand side is +y.

REACH_RIGHT = {
    "lead": "right_wrist",
    "offsets": {
        "nose": (0.55, -0.20, 0.30),
        "neck": (0.60, -0.20, 0.10),
        "left_eye": (0.53, -0.23, 0.33),
        "right_eye": (0.53, -0.17, 0.33),
        "left_ear": (0.60, -0.27, 0.30),
        "right_ear": (0.60, -0.13, 0.30),
        "left_shoulder": (0.60, -0.38, 0.08),
        "right_shoulder": (0.50, -0.02, 0.08),
        "left_elbow": (0.55, -0.40, -0.20),
        "right_elbow": (0.25, 0.00, 0.03),
        "left_wrist": (0.50, -0.40, -0.45),
        "left_hip": (0.65, -0.30, -0.40),
        "right_hip": (0.65, -0.10, -0.40),
        "left_knee": (0.65, -0.30, -0.85),
        "right_knee": (0.65, -0.10, -0.85),
        "left_ankle": (0.65, -0.30, -1.30),
        "right_ankle": (0.65, -0.10, -1.30),
    },
}

LEAN_IN = {
    "lead": "nose",
    "offsets": {
        "neck": (0.22, 0.00, -0.12),
        "left_eye": (0.03, -0.03, 0.03),
        "right_eye": (0.03, 0.03, 0.03),
        "left_ear": (0.09, -0.07, 0.00),
        "right_ear": (0.09, 0.07, 0.00),
        "left_shoulder": (0.25, -0.18, -0.15),
        "right_shoulder": (0.25, 0.18, -0.15),
        "left_elbow": (0.30, -0.25, -0.42),
        "right_elbow": (0.30, 0.25, -0.42),
        "left_wrist": (0.30, -0.20, -0.67),
        "right_wrist": (0.30, 0.20, -0.67),
        "left_hip": (0.35, -0.10, -0.70),
        "right_hip": (0.35, 0.10, -0.70),
        "left_knee": (0.35, -0.10, -1.15),
        "right_knee": (0.35, 0.10, -1.15),
        "left_ankle": (0.35, -0.10, -1.60),
        "right_ankle": (0.35, 0.10, -1.60),
    },
}

POSES = {"reach-right": REACH_RIGHT, "lean-in": LEAN_IN}
