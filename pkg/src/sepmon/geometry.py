"""Points, keypoint frames, affine/rigid transforms and calibration fitting.

Everything here is in meters. Transforms map source-frame coordinates
(e.g. camera) into the robot base frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateCorrespondences, ParseError

_DET_EPS = 1e-12
_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"Point3.{name} must be finite, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def of(cls, p) -> "Point3":
        if isinstance(p, Point3):
            return p
        x, y, z = (float(v) for v in p)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def distance_to(self, other) -> float:
        ox, oy, oz = other
        return math.sqrt((self.x - ox) ** 2 + (self.y - oy) ** 2 + (self.z - oz) ** 2)


PointLike = Union[Point3, Sequence[float], np.ndarray]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KeypointFrame:
    """Named 3D keypoints of one agent at one instant.

    Absent detections are carried explicitly through ``present``; their
    rows in ``positions`` hold NaN and must not be read.
    """

    names: Tuple[str, ...]
    positions: np.ndarray
    present: np.ndarray
    confidence: np.ndarray
    timestamp: float = 0.0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        n = len(names)
        if len(set(names)) != n:
            raise ValueError("duplicate keypoint names in frame")
        pos = np.array(self.positions, dtype=float).reshape(n, 3)
        present = np.array(self.present, dtype=bool).reshape(n)
        conf = np.array(self.confidence, dtype=float).reshape(n)
        if not np.all(np.isfinite(pos[present])):
            raise ValueError("present keypoints must have finite coordinates")
        pos[~present] = np.nan
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "present", _readonly(present))
        object.__setattr__(self, "confidence", _readonly(conf))
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(names)})

    @classmethod
    def from_points(
        cls,
        points: Mapping[str, Optional[PointLike]],
        timestamp: float = 0.0,
        confidence: Optional[Mapping[str, float]] = None,
    ) -> "KeypointFrame":
        """Build a frame from ``{name: point}``; a ``None`` point marks a missing keypoint."""
        names = tuple(points)
        pos = np.full((len(names), 3), np.nan)
        present = np.zeros(len(names), dtype=bool)
        for i, k in enumerate(names):
            p = points[k]
            if p is not None:
                pos[i] = tuple(Point3.of(p))
                present[i] = True
        conf = np.array([1.0 if confidence is None else float(confidence.get(k, 1.0)) for k in names])
        return cls(names, pos, present, conf, timestamp)

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def index(self, name: str) -> int:
        return self._index[name]

    def position(self, name: str) -> Optional[Point3]:
        i = self._index[name]
        if not self.present[i]:
            return None
        return Point3.of(self.positions[i])

    def as_dict(self) -> dict:
        return {k: self.position(k) for k in self.names}


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """``p -> linear @ p + translation``.

    With ``rigid=True`` the linear part must be a proper rotation.
    """

    linear: np.ndarray
    translation: np.ndarray
    rigid: bool = False

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        det = np.linalg.det(lin)
        if abs(det) <= _DET_EPS:
            raise ValueError(f"singular linear part (det={det:.3g})")
        if self.rigid:
            err = np.max(np.abs(lin.T @ lin - np.eye(3)))
            if err > _ORTHO_TOL or det < 0:
                raise ValueError(f"rigid transform is not a rotation (orthonormality error {err:.3g}, det {det:.6g})")
        object.__setattr__(self, "linear", _readonly(lin))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(3), np.zeros(3), rigid=True)

    @classmethod
    def from_rotation_vector(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "AffineTransform":
        return cls(rotation_matrix(rotvec), translation, rigid=True)

    @classmethod
    def translation_only(cls, translation) -> "AffineTransform":
        return cls(np.eye(3), translation, rigid=True)

    def apply(self, points) -> np.ndarray:
        """Vectorised application to an ``(..., 3)`` array."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.linear.T + self.translation

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """Return ``self ∘ other`` (``other`` applied first)."""
        lin = self.linear @ other.linear
        t = self.linear @ other.translation + self.translation
        if self.rigid and other.rigid:
            return _rigid_unchecked(lin, t)
        return AffineTransform(lin, t)

    def inverse(self) -> "AffineTransform":
        if self.rigid:
            return _rigid_unchecked(self.linear.T, -self.linear.T @ self.translation)
        inv = np.linalg.inv(self.linear)
        return AffineTransform(inv, -inv @ self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.linear
        m[:3, 3] = self.translation
        return m


def _rigid_unchecked(lin, t) -> AffineTransform:
    # products of rotations: orthonormal up to rounding, no revalidation
    obj = object.__new__(AffineTransform)
    object.__setattr__(obj, "linear", _readonly(np.array(lin, dtype=float)))
    object.__setattr__(obj, "translation", _readonly(np.array(t, dtype=float)))
    object.__setattr__(obj, "rigid", True)
    return obj


def rotation_matrix(rotvec) -> np.ndarray:
    """Rotation matrix for an axis-angle vector (radians), via Rodrigues' formula."""
    r = np.asarray(rotvec, dtype=float).reshape(3)
    angle = float(np.linalg.norm(r))
    if angle == 0.0:
        return np.eye(3)
    return axis_angle_matrix(r / angle, angle)


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def apply_transform(t: AffineTransform, p: PointLike) -> Point3:
    return Point3.of(t.linear @ np.asarray(tuple(Point3.of(p)), dtype=float) + t.translation)


def _as_pairs(correspondences) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(correspondences, tuple) and len(correspondences) == 2 and np.ndim(correspondences[0]) == 2:
        src, tgt = correspondences
    else:
        pairs = list(correspondences)
        src = [tuple(Point3.of(s)) for s, _ in pairs]
        tgt = [tuple(Point3.of(t)) for _, t in pairs]
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    tgt = np.asarray(tgt, dtype=float).reshape(-1, 3)
    if src.shape != tgt.shape:
        raise ValueError("source and target point counts differ")
    return src, tgt


def _rank(centered: np.ndarray) -> int:
    s = np.linalg.svd(centered, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > 1e-9 * s[0]))


def fit_transform(correspondences, mode: str = "rigid") -> AffineTransform:
    """Least-squares transform mapping sources onto targets.

    Args:
        correspondences: iterable of ``(source, target)`` point pairs, or a
            ``(sources, targets)`` tuple of ``(n, 3)`` arrays.
        mode: ``"rigid"`` (rotation + translation, SVD/Procrustes closed form)
            or ``"affine"`` (general linear part, normal equations).

    Raises:
        DegenerateCorrespondences: fewer than 3 non-collinear points (rigid) or
            4 non-coplanar points (affine).
    """
    src, tgt = _as_pairs(correspondences)
    n = len(src)
    if mode == "rigid":
        if n < 3:
            raise DegenerateCorrespondences(f"rigid fit needs >= 3 points, got {n}")
        cs, ct = src.mean(axis=0), tgt.mean(axis=0)
        A, B = src - cs, tgt - ct
        if _rank(A) < 2:
            raise DegenerateCorrespondences("rigid fit needs non-collinear source points")
        H = A.T @ B
        U, _, Vt = np.linalg.svd(H)
        d = 1.0 if np.linalg.det(Vt.T @ U.T) >= 0 else -1.0
        R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
        return AffineTransform(R, ct - R @ cs, rigid=True)
    if mode == "affine":
        if n < 4:
            raise DegenerateCorrespondences(f"affine fit needs >= 4 points, got {n}")
        if _rank(src - src.mean(axis=0)) < 3:
            raise DegenerateCorrespondences("affine fit needs non-coplanar source points")
        X = np.hstack([src, np.ones((n, 1))])
        beta = np.linalg.solve(X.T @ X, X.T @ tgt)
        try:
            return AffineTransform(beta[:3].T, beta[3])
        except ValueError as exc:
            raise DegenerateCorrespondences(str(exc)) from None
    raise ValueError(f"unknown fit mode {mode!r}")


def residuals(t: AffineTransform, correspondences) -> np.ndarray:
    """Per-correspondence error ``|t(source) - target|``."""
    src, tgt = _as_pairs(correspondences)
    return np.linalg.norm(t.apply(src) - tgt, axis=1)


def load_correspondences(text: str) -> Tuple[np.ndarray, np.ndarray]:
    """Parse ``sx,sy,sz,tx,ty,tz`` lines; ``#`` starts a comment, a header row is allowed."""
    src, tgt = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        if cells == ["sx", "sy", "sz", "tx", "ty", "tz"]:
            continue
        if len(cells) != 6:
            raise ParseError(lineno, f"expected 6 columns, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError(lineno, "non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError(lineno, "non-finite value")
        src.append(vals[:3])
        tgt.append(vals[3:])
    return np.array(src, dtype=float).reshape(-1, 3), np.array(tgt, dtype=float).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Keypoint-pair distances; ``valid[i, j]`` is False where either keypoint is missing."""

    row_names: Tuple[str, ...]
    col_names: Tuple[str, ...]
    values: np.ndarray
    valid: np.ndarray

    def get(self, row: str, col: str) -> Optional[float]:
        i, j = self.row_names.index(row), self.col_names.index(col)
        return float(self.values[i, j]) if self.valid[i, j] else None

    def __getitem__(self, key):
        return self.get(*key)

    @property
    def shape(self):
        return self.values.shape


def pairwise_distances(a: KeypointFrame, b: KeypointFrame) -> DistanceMatrix:
    diff = a.positions[:, None, :] - b.positions[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    valid = a.present[:, None] & b.present[None, :]
    d[~valid] = np.nan
    return DistanceMatrix(a.names, b.names, _readonly(d), _readonly(valid))

