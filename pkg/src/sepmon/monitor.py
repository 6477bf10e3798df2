"""Per-frame safety evaluation and the Normal/Reduced/Stopped state machine.

A pair (human keypoint i, robot keypoint j) at distance ``D`` violates the
stop threshold when ``D < S_d[i][j]`` and the reduced-speed threshold when
``D < S_d_reduced[i][j]``. The frame's state is the worst over all pairs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import UnknownKeypoint
from .geometry import KeypointFrame
from .policy import ThresholdMatrices

DEFAULT_REDUCED_SPEED = 0.5


class SafetyState(enum.IntEnum):
    NORMAL = 0
    REDUCED = 1
    STOPPED = 2

    @property
    def label(self) -> str:
        return self.name.lower()


class MissingMode(str, enum.Enum):
    CONSERVATIVE = "conservative"
    HOLD_LAST = "hold_last"
    IGNORE = "ignore"


@dataclass(frozen=True)
class MissingPolicy:
    """How absent or low-confidence keypoints are treated.

    ``conservative`` stops the robot whenever a keypoint covered by the
    threshold matrices is not admitted; ``hold_last`` substitutes the last
    admitted position for up to ``t_hold`` seconds first (only a stateful
    :class:`SafetyMonitor` can do this; stateless evaluation treats it as
    conservative); ``ignore`` drops such keypoints.
    """

    mode: MissingMode = MissingMode.CONSERVATIVE
    t_hold: float = 0.0
    confidence_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", MissingMode(self.mode))
        if not self.t_hold >= 0:
            raise ValueError("t_hold must be >= 0")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ValueError("confidence_floor must lie in [0, 1]")


EVENTS = ("none", "enter_reduced", "enter_stopped", "resume_reduced", "resume_normal")


def transition_event(prev: SafetyState, new: SafetyState) -> str:
    if new == prev:
        return "none"
    if new == SafetyState.STOPPED:
        return "enter_stopped"
    if new == SafetyState.REDUCED:
        return "enter_reduced" if prev == SafetyState.NORMAL else "resume_reduced"
    return "resume_normal"


@dataclass(frozen=True)
class PairViolation:
    human: str
    robot: str
    severity: SafetyState
    distance: Optional[float]  # None when a keypoint of the pair is missing


@dataclass(frozen=True)
class SafetyDecision:
    timestamp: float
    state: SafetyState
    speed_factor: float
    stop_margin: Optional[float]
    reduced_margin: Optional[float]
    worst_pair: Optional[Tuple[str, str]]
    worst_distance: Optional[float]
    worst_stop_threshold: Optional[Decimal]
    worst_reduced_threshold: Optional[Decimal]
    violations: Tuple[PairViolation, ...] = ()
    missing: Tuple[str, ...] = ()
    event: str = "none"


def speed_factor_for(state: SafetyState, reduced_speed: float = DEFAULT_REDUCED_SPEED) -> float:
    return (1.0, reduced_speed, 0.0)[state]


def _indices(index: Dict[str, int], names, where: str) -> np.ndarray:
    try:
        return np.fromiter((index[n] for n in names), dtype=np.intp, count=len(names))
    except KeyError as exc:
        raise UnknownKeypoint(exc.args[0], where) from None


def _scatter(frame: KeypointFrame, idx: np.ndarray, size: int, floor: float):
    pos = np.full((size, 3), np.nan)
    pos[idx] = frame.positions
    ok = np.zeros(size, dtype=bool)
    ok[idx] = frame.present & (frame.confidence >= floor)
    return pos, ok


class _Assessment:
    """Distances of one frame pair laid out on the threshold matrix grid."""

    def __init__(self, matrices: ThresholdMatrices, human: KeypointFrame, robot: KeypointFrame, missing: MissingPolicy):
        self.m = matrices
        hi = _indices(matrices.human_index, human.names, "threshold matrix rows")
        ri = _indices(matrices.robot_index, robot.names, "threshold matrix columns")
        H, h_ok = _scatter(human, hi, len(matrices.human), missing.confidence_floor)
        R, r_ok = _scatter(robot, ri, len(matrices.robot), missing.confidence_floor)
        diff = H[:, None, :] - R[None, :, :]
        self.D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        self.valid = h_ok[:, None] & r_ok[None, :]
        self.h_ok, self.r_ok = h_ok, r_ok
        self.blind = missing.mode != MissingMode.IGNORE and not (h_ok.all() and r_ok.all())

    def severity(self, widen: float = 0.0) -> SafetyState:
        if self.blind:
            return SafetyState.STOPPED
        D, v = self.D, self.valid
        if np.any(v & (D < self.m.stop_array + widen)):
            return SafetyState.STOPPED
        if np.any(v & (D < self.m.reduced_array + widen)):
            return SafetyState.REDUCED
        return SafetyState.NORMAL

    def decision(self, state: SafetyState, prev: SafetyState, timestamp: float, reduced_speed: float) -> SafetyDecision:
        m, D, v = self.m, self.D, self.valid
        stop_m = np.where(v, D - m.stop_array, np.inf)
        worst = best_margin = red_margin = None
        wd = ws = wr = None
        if v.any():
            best_margin = float(stop_m.min())
            red_margin = float(np.where(v, D - m.reduced_array, np.inf).min())
            ties = np.argwhere(stop_m == best_margin)
            i, j = min(ties.tolist(), key=lambda ij: (m.human[ij[0]], m.robot[ij[1]]))
            worst = (m.human[i], m.robot[j])
            wd, ws, wr = float(D[i, j]), m.stop[i][j], m.reduced[i][j]

        violations: List[PairViolation] = []
        below = v & (D < m.reduced_array)
        if below.any() or self.blind:
            stop_hit = v & (D < m.stop_array)
            gone = ~(self.h_ok[:, None] & self.r_ok[None, :]) if self.blind else np.zeros_like(v)
            for i, j in np.argwhere(below | gone).tolist():
                if gone[i, j]:
                    violations.append(PairViolation(m.human[i], m.robot[j], SafetyState.STOPPED, None))
                else:
                    sev = SafetyState.STOPPED if stop_hit[i, j] else SafetyState.REDUCED
                    violations.append(PairViolation(m.human[i], m.robot[j], sev, float(D[i, j])))
        missing = tuple(n for n, ok in zip(m.human, self.h_ok) if not ok) + tuple(
            n for n, ok in zip(m.robot, self.r_ok) if not ok
        )
        return SafetyDecision(
            timestamp=timestamp,
            state=state,
            speed_factor=speed_factor_for(state, reduced_speed),
            stop_margin=best_margin,
            reduced_margin=red_margin,
            worst_pair=worst,
            worst_distance=wd,
            worst_stop_threshold=ws,
            worst_reduced_threshold=wr,
            violations=tuple(violations),
            missing=missing,
            event=transition_event(prev, state),
        )


def evaluate_frame(
    matrices: ThresholdMatrices,
    human: KeypointFrame,
    robot: KeypointFrame,
    prev: SafetyState = SafetyState.NORMAL,
    missing: Optional[MissingPolicy] = None,
    reduced_speed: float = DEFAULT_REDUCED_SPEED,
) -> SafetyDecision:
    """Classify one frame pair.

    The state depends only on the current frames; ``prev`` is used solely to
    label the transition event.

    Raises:
        UnknownKeypoint: a frame carries a keypoint the matrices do not cover.
    """
    a = _Assessment(matrices, human, robot, missing or MissingPolicy())
    return a.decision(a.severity(), SafetyState(prev), human.timestamp, reduced_speed)


def evaluate_with_hysteresis(
    matrices: ThresholdMatrices,
    human: KeypointFrame,
    robot: KeypointFrame,
    prev: SafetyState = SafetyState.NORMAL,
    missing: Optional[MissingPolicy] = None,
    hysteresis: float = 0.0,
    reduced_speed: float = DEFAULT_REDUCED_SPEED,
) -> SafetyDecision:
    """Like :func:`evaluate_frame`, but relaxing to a less severe state needs extra clearance.

    Escalation uses the thresholds as they are. De-escalation from ``prev``
    only goes as far as the thresholds widened by ``hysteresis`` allow.
    """
    if not hysteresis >= 0:
        raise ValueError("hysteresis must be >= 0")
    prev = SafetyState(prev)
    a = _Assessment(matrices, human, robot, missing or MissingPolicy())
    plain = a.severity()
    state = plain
    if plain < prev and hysteresis > 0:
        state = max(plain, min(prev, a.severity(hysteresis)))
    return a.decision(state, prev, human.timestamp, reduced_speed)


@dataclass(frozen=True)
class PairReport:
    human: str
    robot: str
    distance: float
    stop_threshold: Decimal
    reduced_threshold: Decimal
    stop_margin: float
    reduced_margin: float


def min_separation_report(
    matrices: ThresholdMatrices,
    human: KeypointFrame,
    robot: KeypointFrame,
    missing: Optional[MissingPolicy] = None,
) -> List[PairReport]:
    """Every evaluable pair, closest-to-stopping first; pairs with a missing keypoint are left out."""
    a = _Assessment(matrices, human, robot, missing or MissingPolicy())
    m = matrices
    rows = []
    for i, j in np.argwhere(a.valid).tolist():
        d = float(a.D[i, j])
        rows.append(
            PairReport(
                m.human[i],
                m.robot[j],
                d,
                m.stop[i][j],
                m.reduced[i][j],
                d - float(m.stop_array[i, j]),
                d - float(m.reduced_array[i, j]),
            )
        )
    rows.sort(key=lambda r: (r.stop_margin, r.human, r.robot))
    return rows


class SafetyMonitor:
    """Stateful wrapper: remembers the previous state and, for ``hold_last``, recent positions.

    One monitor serves one evaluation stream; calls to :meth:`update` must
    not be interleaved from several threads.
    """

    def __init__(
        self,
        matrices: ThresholdMatrices,
        missing: Optional[MissingPolicy] = None,
        hysteresis: float = 0.0,
        reduced_speed: float = DEFAULT_REDUCED_SPEED,
    ):
        self.matrices = matrices
        self.missing = missing or MissingPolicy()
        self.hysteresis = hysteresis
        self.reduced_speed = reduced_speed
        self.state = SafetyState.NORMAL
        self._last_seen: Dict[Tuple[str, str], Tuple[np.ndarray, float]] = {}

    def reset(self):
        self.state = SafetyState.NORMAL
        self._last_seen.clear()

    def _hold(self, agent: str, frame: KeypointFrame, universe: Tuple[str, ...]) -> KeypointFrame:
        floor, t = self.missing.confidence_floor, frame.timestamp
        names = list(frame.names) + [n for n in universe if n not in frame]
        pos = np.full((len(names), 3), np.nan)
        present = np.zeros(len(names), dtype=bool)
        conf = np.zeros(len(names))
        for k, name in enumerate(names):
            if name in frame:
                i = frame.index(name)
                if frame.present[i] and frame.confidence[i] >= floor:
                    pos[k], present[k], conf[k] = frame.positions[i], True, frame.confidence[i]
                    self._last_seen[(agent, name)] = (frame.positions[i].copy(), t)
                    continue
            seen = self._last_seen.get((agent, name))
            if seen is not None and t - seen[1] <= self.missing.t_hold:
                pos[k], present[k], conf[k] = seen[0], True, 1.0
        return KeypointFrame(tuple(names), pos, present, conf, t)

    def update(self, human: KeypointFrame, robot: KeypointFrame) -> SafetyDecision:
        missing = self.missing
        if missing.mode == MissingMode.HOLD_LAST:
            human = self._hold("human", human, self.matrices.human)
            robot = self._hold("robot", robot, self.matrices.robot)
        if self.hysteresis > 0:
            d = evaluate_with_hysteresis(
                self.matrices, human, robot, self.state, missing, self.hysteresis, self.reduced_speed
            )
        else:
            d = evaluate_frame(self.matrices, human, robot, self.state, missing, self.reduced_speed)
        self.state = d.state
        return d
