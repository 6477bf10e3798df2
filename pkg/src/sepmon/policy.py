"""Separation policy and its compilation into keypoint-pair threshold matrices.

For human keypoint ``i`` and robot keypoint ``j``::

    guaranteed(i, j) = h_s[i] + baseline + r_s[j]
    separation(i, j) = h_compen[i] + guaranteed(i, j) + r_compen[j]

The stop matrix uses the protective baseline ``s_p``; the reduced-speed
matrix uses ``s_p_reduced``. All arithmetic is on exact decimals so the
compiled values compare equal to hand-written tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import naming
from .body_model import CompensationTable
from .errors import UnknownKeypoint

ZERO = Decimal("0")


def _dec(v) -> Decimal:
    if isinstance(v, Decimal):
        return v
    if isinstance(v, float):
        return Decimal(repr(v))
    return Decimal(v)


@dataclass(frozen=True)
class VelocityTerm:
    """Distance increment ``v_max * (t_react + t_stop)`` added to both baselines."""

    v_max: Decimal
    t_react: Decimal
    t_stop: Decimal

    def __post_init__(self):
        for name in ("v_max", "t_react", "t_stop"):
            v = _dec(getattr(self, name))
            if v < 0:
                raise ValueError(f"velocity term {name} must be >= 0")
            object.__setattr__(self, name, v)

    @property
    def increment(self) -> Decimal:
        return self.v_max * (self.t_react + self.t_stop)


@dataclass(frozen=True, eq=False)
class SeparationPolicy:
    s_p: Decimal
    s_p_reduced: Decimal
    h_compen: CompensationTable
    r_compen: CompensationTable
    h_s: Mapping[str, Decimal] = field(default_factory=dict)
    r_s: Mapping[str, Decimal] = field(default_factory=dict)
    velocity: Optional[VelocityTerm] = None

    def __post_init__(self):
        s_p, s_pr = _dec(self.s_p), _dec(self.s_p_reduced)
        if not (ZERO <= s_p <= s_pr):
            raise ValueError(f"need 0 <= s_p <= s_p_reduced, got {s_p} and {s_pr}")
        h_s = {k: _dec(v) for k, v in dict(self.h_s).items()}
        r_s = {k: _dec(v) for k, v in dict(self.r_s).items()}
        for k, v in list(h_s.items()) + list(r_s.items()):
            if v < 0:
                raise ValueError(f"offset for {k!r} must be >= 0, got {v}")
        object.__setattr__(self, "s_p", s_p)
        object.__setattr__(self, "s_p_reduced", s_pr)
        object.__setattr__(self, "h_s", h_s)
        object.__setattr__(self, "r_s", r_s)

    def human_offset(self, name: str) -> Decimal:
        key = naming.resolve(name, self.h_s)
        return self.h_s[key] if key is not None else ZERO

    def robot_offset(self, name: str) -> Decimal:
        key = naming.resolve(name, self.r_s)
        return self.r_s[key] if key is not None else ZERO

    def with_offsets(self, h_s: Optional[Mapping] = None, r_s: Optional[Mapping] = None) -> "SeparationPolicy":
        """Copy with offsets added on top of the current ones."""
        new_h = dict(self.h_s)
        for k, v in (h_s or {}).items():
            new_h[k] = new_h.get(k, ZERO) + _dec(v)
        new_r = dict(self.r_s)
        for k, v in (r_s or {}).items():
            new_r[k] = new_r.get(k, ZERO) + _dec(v)
        return SeparationPolicy(self.s_p, self.s_p_reduced, self.h_compen, self.r_compen, new_h, new_r, self.velocity)

    def compile(self, human: Sequence[str], robot: Sequence[str]) -> "ThresholdMatrices":
        return compile_thresholds(self, human, robot)


def _check_known(policy: SeparationPolicy, i: str, j: str):
    if i not in policy.h_compen:
        raise UnknownKeypoint(i, "human compensation table")
    if j not in policy.r_compen:
        raise UnknownKeypoint(j, "robot compensation table")


def guaranteed_distance(policy: SeparationPolicy, i: str, j: str, baseline) -> Decimal:
    """Baseline plus the human and robot offsets (and the velocity increment if enabled)."""
    _check_known(policy, i, j)
    d = policy.human_offset(i) + _dec(baseline) + policy.robot_offset(j)
    if policy.velocity is not None:
        d += policy.velocity.increment
    return d


def keypoint_separation(policy: SeparationPolicy, i: str, j: str, baseline) -> Decimal:
    return policy.h_compen.lookup(i) + guaranteed_distance(policy, i, j, baseline) + policy.r_compen.lookup(j)


@dataclass(frozen=True, eq=False)
class ThresholdMatrices:
    """Compiled stop and reduced-speed thresholds, rows human, columns robot.

    ``stop``/``reduced`` hold exact decimals; ``stop_array``/``reduced_array``
    are read-only float copies used for per-frame evaluation.
    """

    human: Tuple[str, ...]
    robot: Tuple[str, ...]
    stop: Tuple[Tuple[Decimal, ...], ...]
    reduced: Tuple[Tuple[Decimal, ...], ...]
    policy: SeparationPolicy
    stop_array: np.ndarray = field(init=False, repr=False)
    reduced_array: np.ndarray = field(init=False, repr=False)
    human_index: Dict[str, int] = field(init=False, repr=False)
    robot_index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        for name, rows in (("stop", self.stop), ("reduced", self.reduced)):
            arr = np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(len(self.human), len(self.robot))
            arr.setflags(write=False)
            object.__setattr__(self, f"{name}_array", arr)
        object.__setattr__(self, "human_index", {k: i for i, k in enumerate(self.human)})
        object.__setattr__(self, "robot_index", {k: i for i, k in enumerate(self.robot)})

    def stop_threshold(self, i: str, j: str) -> Decimal:
        return self.stop[self._h(i)][self._r(j)]

    def reduced_threshold(self, i: str, j: str) -> Decimal:
        return self.reduced[self._h(i)][self._r(j)]

    def _h(self, name):
        try:
            return self.human_index[name]
        except KeyError:
            raise UnknownKeypoint(name, "threshold matrix rows") from None

    def _r(self, name):
        try:
            return self.robot_index[name]
        except KeyError:
            raise UnknownKeypoint(name, "threshold matrix columns") from None

    def rows(self):
        """``(human, robot, stop, reduced)`` for every pair in matrix order."""
        for a, i in enumerate(self.human):
            for b, j in enumerate(self.robot):
                yield i, j, self.stop[a][b], self.reduced[a][b]


def compile_thresholds(policy: SeparationPolicy, human: Sequence[str], robot: Sequence[str]) -> ThresholdMatrices:
    human, robot = tuple(human), tuple(robot)
    if not human or not robot:
        raise ValueError("keypoint lists must be non-empty")
    for names, side in ((human, "human"), (robot, "robot")):
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate {side} keypoint names")
    stop = tuple(tuple(keypoint_separation(policy, i, j, policy.s_p) for j in robot) for i in human)
    reduced = tuple(tuple(keypoint_separation(policy, i, j, policy.s_p_reduced) for j in robot) for i in human)
    return ThresholdMatrices(human, robot, stop, reduced, policy)
