"""Delimited-text formats: skeleton traces, decision logs, pair-distance traces."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, List, Optional, Union

from .errors import NonMonotonicTime, ParseError
from .monitor import SafetyDecision

TRACE_HEADER = "time_s,agent,keypoint,x,y,z,confidence"
DECISION_HEADER = (
    "time_s,state,speed_factor,worst_human_kp,worst_robot_kp,distance_m,stop_threshold_m,reduced_threshold_m,event"
)
DISTANCE_HEADER = "time_s,human_kp,robot_kp,distance_m"

AGENTS = ("human", "robot")


@dataclass(frozen=True)
class SkeletonTraceRecord:
    """One keypoint observation. Coordinates are None for a reported-but-undetected keypoint."""

    time_s: float
    agent: str
    keypoint: str
    x: Optional[float]
    y: Optional[float]
    z: Optional[float]
    confidence: float = 1.0

    @property
    def present(self) -> bool:
        return self.x is not None


def _float(cell: str, lineno: int, what: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(lineno, f"{what}: not a number ({cell!r})") from None
    if not math.isfinite(v):
        raise ParseError(lineno, f"{what}: must be finite")
    return v


def parse_trace(data: Union[bytes, str]) -> List[SkeletonTraceRecord]:
    """Parse a skeleton trace.

    The first non-blank line must be the header. Empty ``x,y,z`` cells mark a
    keypoint that was expected but not detected.

    Raises:
        ParseError: malformed line (1-based line number).
        NonMonotonicTime: time decreases for an agent.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    records: List[SkeletonTraceRecord] = []
    last = {}
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line.replace(" ", "") != TRACE_HEADER:
                raise ParseError(lineno, f"expected header {TRACE_HEADER!r}")
            header_seen = True
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 7:
            raise ParseError(lineno, f"expected 7 columns, got {len(cells)}")
        t = _float(cells[0], lineno, "time_s")
        agent, kp = cells[1], cells[2]
        if agent not in AGENTS:
            raise ParseError(lineno, f"agent must be human or robot, got {agent!r}")
        if not kp:
            raise ParseError(lineno, "empty keypoint name")
        xyz = cells[3:6]
        if all(c == "" for c in xyz):
            x = y = z = None
        else:
            x, y, z = (_float(c, lineno, n) for c, n in zip(xyz, "xyz"))
        conf = _float(cells[6], lineno, "confidence") if cells[6] else 1.0
        if not 0.0 <= conf <= 1.0:
            raise ParseError(lineno, "confidence must lie in [0, 1]")
        if agent in last and t < last[agent]:
            raise NonMonotonicTime(lineno, f"time {t!r} < previous {last[agent]!r} for {agent}")
        last[agent] = t
        records.append(SkeletonTraceRecord(t, agent, kp, x, y, z, conf))
    if not header_seen:
        raise ParseError(1, f"missing header {TRACE_HEADER!r}")
    return records


def format_trace(records: Iterable[SkeletonTraceRecord]) -> str:
    rows = [TRACE_HEADER]
    for r in records:
        if r.present:
            xyz = f"{r.x!r},{r.y!r},{r.z!r}"
        else:
            xyz = ",,"
        rows.append(f"{r.time_s!r},{r.agent},{r.keypoint},{xyz},{r.confidence!r}")
    return "\n".join(rows) + "\n"


def _g(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.9g}"


def _d(v: Optional[Decimal]) -> str:
    return "" if v is None else format(v, "f")


def decision_row(d: SafetyDecision) -> str:
    h, r = d.worst_pair if d.worst_pair else ("", "")
    return ",".join(
        (
            _g(d.timestamp),
            d.state.label,
            _g(d.speed_factor),
            h,
            r,
            _g(d.worst_distance),
            _d(d.worst_stop_threshold),
            _d(d.worst_reduced_threshold),
            d.event,
        )
    )


def format_decision_log(decisions: Iterable[SafetyDecision], only_events: bool = False) -> str:
    rows = [DECISION_HEADER]
    rows += [decision_row(d) for d in decisions if not only_events or d.event != "none"]
    return "\n".join(rows) + "\n"


def format_distance_trace(samples) -> str:
    rows = [DISTANCE_HEADER]
    rows += [f"{_g(s.time_s)},{s.human},{s.robot},{_g(s.distance)}" for s in samples]
    return "\n".join(rows) + "\n"


def write_atomic(path: Union[str, Path], text: str) -> None:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
