"""Volumetric body models and keypoint compensation coefficients.

Each body point belongs to its nearest keypoint; a keypoint's compensation
coefficient is the largest distance from it to any point it owns. Checking
keypoint distances against thresholds widened by these coefficients then
covers the whole body volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from . import naming
from .errors import EmptyModel, ParseError, UnknownKeypoint
from .geometry import Point3

DEFAULT_SAMPLING_STEP = 0.005

_CHUNK = 100_000


@dataclass(frozen=True)
class Sphere:
    name: str
    center: Point3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", Point3.of(self.center))
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ValueError(f"segment {self.name!r}: radius must be finite and >= 0")
        object.__setattr__(self, "radius", float(self.radius))

    def transformed(self, R, t) -> "Sphere":
        return Sphere(self.name, Point3.of(R @ self.center.as_array() + t), self.radius)

    def defining_points(self) -> np.ndarray:
        return self.center.as_array()[None, :]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        c = self.center.as_array()
        return c - self.radius, c + self.radius

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """Distance from each point to the solid (0 inside)."""
        return np.maximum(np.linalg.norm(pts - self.center.as_array(), axis=1) - self.radius, 0.0)

    def project(self, pts: np.ndarray) -> np.ndarray:
        c = self.center.as_array()
        v = pts - c
        n = np.linalg.norm(v, axis=1, keepdims=True)
        scale = np.where(n > self.radius, self.radius / np.where(n > 0, n, 1.0), 1.0)
        return c + v * scale

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / 3.0)
        return self.center.as_array() + d * r[:, None]


@dataclass(frozen=True)
class Capsule:
    name: str
    a: Point3
    b: Point3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", Point3.of(self.a))
        object.__setattr__(self, "b", Point3.of(self.b))
        if self.a == self.b:
            raise ValueError(f"segment {self.name!r}: capsule endpoints must differ")
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ValueError(f"segment {self.name!r}: radius must be finite and >= 0")
        object.__setattr__(self, "radius", float(self.radius))

    def transformed(self, R, t) -> "Capsule":
        return Capsule(
            self.name, Point3.of(R @ self.a.as_array() + t), Point3.of(R @ self.b.as_array() + t), self.radius
        )

    def defining_points(self) -> np.ndarray:
        return np.stack([self.a.as_array(), self.b.as_array()])

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        p = self.defining_points()
        return p.min(axis=0) - self.radius, p.max(axis=0) + self.radius

    def _closest_on_axis(self, pts: np.ndarray) -> np.ndarray:
        a, b = self.a.as_array(), self.b.as_array()
        ab = b - a
        s = np.clip((pts - a) @ ab / (ab @ ab), 0.0, 1.0)
        return a + s[:, None] * ab

    def distance(self, pts: np.ndarray) -> np.ndarray:
        c = self._closest_on_axis(pts)
        return np.maximum(np.linalg.norm(pts - c, axis=1) - self.radius, 0.0)

    def project(self, pts: np.ndarray) -> np.ndarray:
        c = self._closest_on_axis(pts)
        v = pts - c
        n = np.linalg.norm(v, axis=1, keepdims=True)
        scale = np.where(n > self.radius, self.radius / np.where(n > 0, n, 1.0), 1.0)
        return c + v * scale

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform points in the solid: cylinder body or one of the two hemispherical caps, by volume."""
        a, b = self.a.as_array(), self.b.as_array()
        ab = b - a
        L = float(np.linalg.norm(ab))
        u = ab / L
        if self.radius == 0.0:
            return a + rng.random(n)[:, None] * ab
        r = self.radius
        # orthonormal frame (u, e1, e2) around the axis
        e1 = np.cross(u, np.eye(3)[int(np.argmin(np.abs(u)))])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(u, e1)
        v_cyl = math.pi * r * r * L
        v_caps = 4.0 / 3.0 * math.pi * r ** 3
        in_cyl = rng.random(n) < v_cyl / (v_cyl + v_caps)
        out = np.empty((n, 3))

        k = int(in_cyl.sum())
        rho = r * np.sqrt(rng.random(k))
        phi = 2.0 * math.pi * rng.random(k)
        s = L * rng.random(k)
        out[in_cyl] = a + s[:, None] * u + (rho * np.cos(phi))[:, None] * e1 + (rho * np.sin(phi))[:, None] * e2

        m = n - k
        d = rng.normal(size=(m, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d *= (r * rng.random(m) ** (1.0 / 3.0))[:, None]
        at_b = rng.random(m) < 0.5
        # fold each ball sample onto the outward half
        outward = np.where(at_b, 1.0, -1.0)
        along = d @ u
        d -= (2.0 * np.minimum(along * outward, 0.0) * outward)[:, None] * u
        out[~in_cyl] = np.where(at_b[:, None], b, a) + d
        return out


BodySegment = Union[Sphere, Capsule]


@dataclass(frozen=True, eq=False)
class BodyModel:
    keypoints: Mapping[str, Point3]
    segments: Tuple[BodySegment, ...] = ()

    def __post_init__(self):
        kps = {k: Point3.of(p) for k, p in dict(self.keypoints).items()}
        object.__setattr__(self, "keypoints", kps)
        object.__setattr__(self, "segments", tuple(self.segments))

    def transformed(self, R, t) -> "BodyModel":
        R = np.asarray(R, dtype=float)
        t = np.asarray(t, dtype=float)
        kps = {k: Point3.of(R @ p.as_array() + t) for k, p in self.keypoints.items()}
        return BodyModel(kps, tuple(s.transformed(R, t) for s in self.segments))

    def with_keypoint(self, name: str, p) -> "BodyModel":
        kps = dict(self.keypoints)
        kps[name] = Point3.of(p)
        return BodyModel(kps, self.segments)


@dataclass(frozen=True, eq=False)
class CompensationTable:
    """Per-keypoint compensation coefficients in meters.

    Lookups accept the exact keypoint name, an alias, or a side-prefixed
    name whose class has an entry (``left_wrist`` -> ``wrist``).
    ``sampling_step`` records the resolution the table was computed at
    (0 for measured presets).
    """

    coefficients: Mapping[str, Decimal]
    aliases: Mapping[str, str] = field(default_factory=dict)
    sampling_step: float = 0.0

    def __post_init__(self):
        coeffs = {k: Decimal(v) if not isinstance(v, float) else Decimal(repr(v)) for k, v in dict(self.coefficients).items()}
        for k, v in coeffs.items():
            if not v.is_finite() or v < 0:
                raise ValueError(f"compensation for {k!r} must be >= 0, got {v}")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "aliases", dict(self.aliases))

    def resolve(self, name: str) -> Optional[str]:
        return naming.resolve(name, self.coefficients, self.aliases)

    def lookup(self, name: str) -> Decimal:
        key = self.resolve(name)
        if key is None:
            raise UnknownKeypoint(name, "compensation table")
        return self.coefficients[key]

    def __getitem__(self, name: str) -> Decimal:
        return self.lookup(name)

    def __contains__(self, name) -> bool:
        return self.resolve(name) is not None

    def to_csv(self) -> str:
        rows = ["keypoint,coefficient_m"]
        rows += [f"{k},{format(v, 'f')}" for k, v in self.coefficients.items()]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "CompensationTable":
        coeffs: Dict[str, Decimal] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.replace(" ", "") == "keypoint,coefficient_m":
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != 2 or not cells[0]:
                raise ParseError(lineno, "expected keypoint,coefficient_m")
            try:
                v = Decimal(cells[1])
            except ArithmeticError:
                raise ParseError(lineno, f"bad coefficient {cells[1]!r}") from None
            if not v.is_finite() or v < 0:
                raise ParseError(lineno, "coefficient must be a finite value >= 0")
            coeffs[cells[0]] = v
        return cls(coeffs)


MEASURED_HUMAN_COMPENSATION = CompensationTable(
    {
        "nose": Decimal("0.10"),
        "neck": Decimal("0.25"),
        "eye": Decimal("0.10"),
        "ear": Decimal("0.10"),
        "shoulder": Decimal("0.15"),
        "elbow": Decimal("0.15"),
        "wrist": Decimal("0.15"),
        "hip": Decimal("0.00"),
        "knee": Decimal("0.00"),
        "ankle": Decimal("0.00"),
    }
)

# the measured robot table names its middle keypoint "wrist"; the chain calls it "forearm"
MEASURED_ROBOT_COMPENSATION = CompensationTable(
    {"end_effector": Decimal("0.06"), "wrist": Decimal("0.05"), "elbow": Decimal("0.06")},
    aliases={"forearm": "wrist"},
)

COMPENSATION_PRESETS = {
    "measured-human": MEASURED_HUMAN_COMPENSATION,
    "measured-robot": MEASURED_ROBOT_COMPENSATION,
}


def _sorted_keypoints(keypoints: Mapping[str, Point3]) -> Tuple[Tuple[str, ...], np.ndarray]:
    names = tuple(sorted(keypoints))
    return names, np.array([tuple(keypoints[k]) for k in names], dtype=float).reshape(-1, 3)


def _nearest(pts: np.ndarray, kp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Index of the nearest keypoint (first in ``kp`` order on exact ties) and all distances."""
    d = np.linalg.norm(pts[:, None, :] - kp[None, :, :], axis=2)
    return np.argmin(d, axis=1), d


def assign_nearest(p, keypoints: Mapping[str, Point3]) -> str:
    """Name of the keypoint closest to ``p``; exact ties go to the smallest name."""
    if not keypoints:
        raise ValueError("keypoint set is empty")
    names, kp = _sorted_keypoints(keypoints)
    idx, _ = _nearest(np.array([tuple(Point3.of(p))], dtype=float), kp)
    return names[int(idx[0])]


def _canonical_frame(model: BodyModel) -> Tuple[np.ndarray, np.ndarray]:
    """Rotation and origin fixed to the model's own geometry.

    Sampling in this frame makes the result independent of where the model
    sits in the world (up to symmetric, degenerate configurations).
    """
    pts = [np.array([tuple(p) for p in model.keypoints.values()], dtype=float)]
    pts += [s.defining_points() for s in model.segments]
    P = np.concatenate(pts)
    origin = P.mean(axis=0)
    X = P - origin
    _, vecs = np.linalg.eigh(X.T @ X)
    axes = vecs[:, ::-1].T.copy()
    for i in range(2):
        proj = X @ axes[i]
        skew = float(np.sum(proj ** 3))
        if abs(skew) <= 1e-12 * max(1.0, float(np.sum(np.abs(proj) ** 3))):
            j = int(np.argmax(np.abs(proj)))
            skew = float(proj[j])
        if skew < 0:
            axes[i] = -axes[i]
    axes[2] = np.cross(axes[0], axes[1])
    return axes, origin


def _lattice_samples(seg: BodySegment, h: float) -> np.ndarray:
    """Lattice points inside ``seg`` plus projections of nearby outside lattice points.

    Every point of the solid lies within ``h*sqrt(3)/2`` of some returned sample.
    """
    lo, hi = seg.bounds()
    reach = h * math.sqrt(3.0) / 2.0
    axes = [np.arange(math.floor((lo[k] - reach) / h), math.ceil((hi[k] + reach) / h) + 1) * h for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    dist = seg.distance(grid)
    inside = grid[dist <= 0.0]
    near = grid[(dist > 0.0) & (dist <= reach * (1.0 + 1e-9))]
    return np.concatenate([inside, seg.project(near)])


def compute_compensation(model: BodyModel, sampling_step: float = DEFAULT_SAMPLING_STEP) -> CompensationTable:
    """Compensation coefficient for every keypoint of ``model``.

    Segments are sampled on a lattice of spacing ``sampling_step``. A sample
    counts towards every keypoint whose distance is within ``2*delta`` of the
    nearest one (``delta`` being the lattice covering radius), so a sample
    sitting just across an ownership boundary still bounds its neighbour's
    region. The result is then within ``sampling_step`` of the exact maximum
    and never undershoots it by more than ``delta``. Coefficients are rounded
    up to the micrometer.
    """
    if sampling_step <= 0:
        raise ValueError("sampling_step must be > 0")
    if not model.keypoints:
        raise EmptyModel("body model has no keypoints")
    axes, origin = _canonical_frame(model)
    local = model.transformed(axes, -axes @ origin)
    names, kp = _sorted_keypoints(local.keypoints)
    delta = sampling_step * math.sqrt(3.0) / 2.0
    best = np.zeros(len(names))
    for seg in local.segments:
        samples = _lattice_samples(seg, sampling_step)
        for start in range(0, len(samples), _CHUNK):
            _, d = _nearest(samples[start:start + _CHUNK], kp)
            owned = d <= d.min(axis=1, keepdims=True) + 2.0 * delta
            best = np.maximum(best, np.max(np.where(owned, d, 0.0), axis=0))
    coeffs = {k: Decimal(math.ceil(v * 1e6 - 1e-6)) / Decimal(10 ** 6) for k, v in zip(names, best)}
    ordered = {k: coeffs[k] for k in model.keypoints}
    return CompensationTable(ordered, sampling_step=sampling_step)


@dataclass(frozen=True)
class CoverageReport:
    """``max_excess`` is the largest ``distance - (coefficient + step)`` seen; negative when covered."""

    trials: int
    violations: int
    max_excess: float


def verify_coverage(
    model: BodyModel,
    table: CompensationTable,
    trials: int,
    rng: Union[np.random.Generator, int, None] = 0,
    sampling_step: Optional[float] = None,
) -> CoverageReport:
    """Monte-Carlo check that each body point is within its keypoint's coefficient.

    Points are drawn by picking a segment uniformly, then a point uniformly
    inside it. ``sampling_step`` defaults to the table's own.
    """
    if not model.segments or trials <= 0:
        return CoverageReport(0, 0, -math.inf)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    step = table.sampling_step if sampling_step is None else sampling_step
    names, kp = _sorted_keypoints(model.keypoints)
    limit = np.array([float(table.lookup(k)) for k in names]) + step
    which = rng.integers(0, len(model.segments), size=trials)
    violations, worst = 0, -math.inf
    for i, seg in enumerate(model.segments):
        n = int(np.sum(which == i))
        if n == 0:
            continue
        pts = seg.sample(rng, n)
        idx, d = _nearest(pts, kp)
        excess = d[np.arange(n), idx] - limit[idx]
        violations += int(np.sum(excess > 1e-12))
        worst = max(worst, float(excess.max()))
    return CoverageReport(trials, violations, worst)
