"""Scenario configuration: YAML schema, validation and the shipped scenario presets.

YAML floats are read as exact decimals so policy values survive untouched
into the compiled threshold matrices. Validation errors carry the dotted
path of the offending field (``policy.s_p``, ``robot.chain.joints.2.axis``).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml

from . import naming
from .body_model import (
    COMPENSATION_PRESETS,
    DEFAULT_SAMPLING_STEP,
    BodyModel,
    Capsule,
    CompensationTable,
    Sphere,
    compute_compensation,
)
from .errors import ConfigError, ParseError, UnknownKeypoint
from .geometry import AffineTransform, Point3, rotation_matrix
from .kinematics import Joint, JointChain, KeypointAttachment, nao_left_arm_approx
from .monitor import MissingMode, MissingPolicy
from .policy import SeparationPolicy, ThresholdMatrices, VelocityTerm, compile_thresholds
from .simulation import POSES, ReplayTrajectory, RobotMotionProfile, Scenario, SyntheticTrajectory
from .traces import parse_trace

PRESETS = ("paper-scenario-a", "paper-scenario-b", "paper-scenario-c")

_REQUIRED = object()


class _DecimalLoader(yaml.SafeLoader):
    pass


def _construct_decimal(loader, node):
    text = loader.construct_scalar(node).replace("_", "")
    if text.lower() in (".nan", ".inf", "-.inf", "+.inf"):
        return float(text.replace(".", "", 1))
    return Decimal(text)


_DecimalLoader.add_constructor("tag:yaml.org,2002:float", _construct_decimal)


def parse_yaml(text: Union[str, bytes], path: str = "") -> Any:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        return yaml.load(text, Loader=_DecimalLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(path, f"invalid YAML: {exc}") from None


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _is_number(v) -> bool:
    return isinstance(v, (int, Decimal, float)) and not isinstance(v, bool)


class _Section:
    """A mapping being validated; every key must be consumed by ``take``."""

    def __init__(self, data, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
        self.data = dict(data)
        self.path = path

    def has(self, key) -> bool:
        return key in self.data

    def raw(self, key, default=_REQUIRED):
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(_join(self.path, key), "required field is missing")
            return default
        return self.data.pop(key)

    def section(self, key, required=False) -> "_Section":
        return _Section(self.raw(key, _REQUIRED if required else None), _join(self.path, key))

    def decimal(self, key, default=_REQUIRED, minimum=None) -> Decimal:
        v = self.raw(key, default)
        return _decimal(v, _join(self.path, key), minimum)

    def number(self, key, default=_REQUIRED, minimum=None, positive=False) -> float:
        v = self.raw(key, default)
        p = _join(self.path, key)
        if not _is_number(v):
            raise ConfigError(p, f"expected a number, got {v!r}")
        v = float(v)
        if not np.isfinite(v):
            raise ConfigError(p, "expected a finite number")
        if positive and not v > 0:
            raise ConfigError(p, f"expected a number > 0, got {v:g}")
        if minimum is not None and v < minimum:
            raise ConfigError(p, f"expected a number >= {minimum:g}, got {v:g}")
        return v

    def integer(self, key, default=_REQUIRED, minimum=None) -> int:
        v = self.raw(key, default)
        p = _join(self.path, key)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(p, f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise ConfigError(p, f"expected an integer >= {minimum}, got {v}")
        return v

    def string(self, key, default=_REQUIRED, choices=None) -> str:
        v = self.raw(key, default)
        p = _join(self.path, key)
        if not isinstance(v, str):
            raise ConfigError(p, f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(p, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def vec3(self, key, default=_REQUIRED) -> Tuple[float, float, float]:
        return _vec(self.raw(key, default), _join(self.path, key), 3)

    def finish(self):
        if self.data:
            key = sorted(self.data, key=str)[0]
            raise ConfigError(_join(self.path, key), "unknown field")


def _decimal(v, path, minimum=None) -> Decimal:
    if not _is_number(v):
        raise ConfigError(path, f"expected a number, got {v!r}")
    d = v if isinstance(v, Decimal) else Decimal(repr(v)) if isinstance(v, float) else Decimal(v)
    if not d.is_finite():
        raise ConfigError(path, "expected a finite number")
    if minimum is not None and d < minimum:
        raise ConfigError(path, f"expected a number >= {minimum}, got {d}")
    return d


def _vec(v, path, n) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != n or not all(_is_number(x) for x in v):
        raise ConfigError(path, f"expected a list of {n} numbers, got {v!r}")
    out = tuple(float(x) for x in v)
    if not all(np.isfinite(out)):
        raise ConfigError(path, "expected finite numbers")
    return out


def _rotation(v, path) -> np.ndarray:
    """A rotation given as an axis-angle vector (radians) or a 3x3 matrix."""
    if v is None:
        return np.eye(3)
    if isinstance(v, (list, tuple)) and len(v) == 3 and all(isinstance(r, (list, tuple)) for r in v):
        return np.array([_vec(r, _join(path, i), 3) for i, r in enumerate(v)])
    return rotation_matrix(_vec(v, path, 3))


def _rigid(sec: _Section) -> AffineTransform:
    rot = _rotation(sec.raw("rotation", None), _join(sec.path, "rotation"))
    t = sec.vec3("translation", (0, 0, 0))
    sec.finish()
    try:
        return AffineTransform(rot, t, rigid=True)
    except ValueError as exc:
        raise ConfigError(_join(sec.path, "rotation"), str(exc)) from None


def _parse_chain(robot: _Section) -> Tuple[JointChain, Tuple[KeypointAttachment, ...]]:
    raw = robot.raw("chain", "nao-left-arm-approx")
    path = _join(robot.path, "chain")
    default_attachments = None
    if isinstance(raw, str):
        if raw != "nao-left-arm-approx":
            raise ConfigError(path, f"unknown chain {raw!r} (known: nao-left-arm-approx)")
        chain, default_attachments = nao_left_arm_approx()
    else:
        sec = _Section(raw, path)
        base = _rigid(sec.section("base")) if sec.has("base") else AffineTransform.identity()
        tip = _rigid(sec.section("tip")) if sec.has("tip") else None
        joints_raw = sec.raw("joints")
        jpath = _join(path, "joints")
        if not isinstance(joints_raw, list) or not joints_raw:
            raise ConfigError(jpath, "expected a non-empty list of joints")
        joints = []
        for i, j in enumerate(joints_raw):
            js = _Section(j, _join(jpath, i))
            axis = js.vec3("axis")
            norm = float(np.linalg.norm(axis))
            if abs(norm - 1.0) > 1e-9:
                raise ConfigError(_join(js.path, "axis"), f"axis must be unit-norm, norm is {norm:.12g}")
            jtype = js.string("type", "revolute", ("revolute", "prismatic"))
            rot = _rotation(js.raw("fixed_rotation", None), _join(js.path, "fixed_rotation"))
            trans = js.vec3("fixed_translation", (0, 0, 0))
            js.finish()
            try:
                fixed = AffineTransform(rot, trans, rigid=True)
            except ValueError as exc:
                raise ConfigError(_join(js.path, "fixed_rotation"), str(exc)) from None
            joints.append(Joint(axis, jtype, fixed))
        sec.finish()
        chain = JointChain(tuple(joints), base, tip)

    apath = _join(robot.path, "attachments")
    raw_att = robot.raw("attachments", None)
    if raw_att is None:
        if default_attachments is None:
            raise ConfigError(apath, "required field is missing")
        return chain, default_attachments
    if not isinstance(raw_att, list) or not raw_att:
        raise ConfigError(apath, "expected a non-empty list of attachments")
    atts = []
    for i, a in enumerate(raw_att):
        s = _Section(a, _join(apath, i))
        name = s.string("name")
        link = s.integer("link", minimum=0)
        if link >= chain.n_links:
            raise ConfigError(_join(s.path, "link"), f"link index {link} out of range (chain has {chain.n_links} links)")
        offset = s.vec3("offset", (0, 0, 0))
        s.finish()
        atts.append(KeypointAttachment(name, link, Point3.of(offset)))
    names = [a.name for a in atts]
    if len(set(names)) != len(names):
        raise ConfigError(apath, "duplicate attachment names")
    return chain, tuple(atts)


def _parse_motion(sec: _Section, dof: int) -> RobotMotionProfile:
    amp = sec.raw("amplitude", [0.0] * dof)
    center = sec.raw("center", [0.0] * dof)
    amp = _vec(amp, _join(sec.path, "amplitude"), dof)
    center = _vec(center, _join(sec.path, "center"), dof)
    period = sec.number("period", 4.0, positive=True)
    phase = sec.number("phase", 0.0)
    sec.finish()
    return RobotMotionProfile(amp, center, period, phase)


def parse_body_model(data, path: str = "") -> Tuple[BodyModel, float]:
    """Body model mapping -> ``(model, sampling_step)``."""
    sec = _Section(data, path)
    kraw = sec.section("keypoints", required=True)
    keypoints = {}
    for name in list(kraw.data):
        keypoints[str(name)] = Point3.of(kraw.vec3(name))
    segs_raw = sec.raw("segments", [])
    spath = _join(path, "segments")
    if not isinstance(segs_raw, list):
        raise ConfigError(spath, "expected a list")
    segments = []
    for i, s in enumerate(segs_raw):
        ss = _Section(s, _join(spath, i))
        name = ss.string("name", f"segment{i}")
        if ss.has("sphere"):
            sp = ss.section("sphere")
            seg = Sphere(name, sp.vec3("center"), sp.number("radius", minimum=0.0))
            sp.finish()
        elif ss.has("capsule"):
            cp = ss.section("capsule")
            a, b = cp.vec3("a"), cp.vec3("b")
            if a == b:
                raise ConfigError(_join(cp.path, "b"), "capsule endpoints must differ")
            seg = Capsule(name, a, b, cp.number("radius", minimum=0.0))
            cp.finish()
        else:
            raise ConfigError(ss.path, "segment needs a 'sphere' or 'capsule' entry")
        ss.finish()
        segments.append(seg)
    step = sec.number("sampling_step", DEFAULT_SAMPLING_STEP, positive=True)
    sec.finish()
    return BodyModel(keypoints, tuple(segments)), step


def _parse_compensation(raw, path: str) -> CompensationTable:
    if isinstance(raw, str):
        if raw not in COMPENSATION_PRESETS:
            raise ConfigError(path, f"unknown compensation preset {raw!r} (known: {', '.join(COMPENSATION_PRESETS)})")
        return COMPENSATION_PRESETS[raw]
    sec = _Section(raw, path)
    if sec.has("body_model"):
        model, step = parse_body_model(sec.raw("body_model"), _join(path, "body_model"))
        sec.finish()
        if not model.keypoints:
            raise ConfigError(_join(path, "body_model.keypoints"), "needs at least one keypoint")
        return compute_compensation(model, step)
    tsec = sec.section("table", required=True)
    table = {str(k): tsec.decimal(k, minimum=0) for k in list(tsec.data)}
    aliases = sec.raw("aliases", {})
    if not isinstance(aliases, dict) or not all(isinstance(v, str) for v in aliases.values()):
        raise ConfigError(_join(path, "aliases"), "expected a mapping of name -> table entry")
    for k, v in aliases.items():
        if v not in table:
            raise ConfigError(_join(_join(path, "aliases"), k), f"alias target {v!r} is not in the table")
    sec.finish()
    return CompensationTable(table, {str(k): v for k, v in aliases.items()})


def _offsets(sec: _Section, key: str) -> Dict[str, Decimal]:
    raw = sec.section(key)
    return {str(k): raw.decimal(k, minimum=0) for k in list(raw.data)}


def _parse_policy(sec: _Section) -> SeparationPolicy:
    s_p = sec.decimal("s_p", minimum=0)
    s_pr = sec.decimal("s_p_reduced", minimum=0)
    if s_pr < s_p:
        raise ConfigError(_join(sec.path, "s_p_reduced"), f"must be >= s_p ({s_p})")
    h_s = _offsets(sec, "h_s")
    r_s = _offsets(sec, "r_s")
    h_compen = _parse_compensation(sec.raw("h_compen", "measured-human"), _join(sec.path, "h_compen"))
    r_compen = _parse_compensation(sec.raw("r_compen", "measured-robot"), _join(sec.path, "r_compen"))
    velocity = None
    if sec.has("velocity_term"):
        v = sec.section("velocity_term")
        velocity = VelocityTerm(v.decimal("v_max", minimum=0), v.decimal("t_react", minimum=0), v.decimal("t_stop", minimum=0))
        v.finish()
    sec.finish()
    return SeparationPolicy(s_p, s_pr, h_compen, r_compen, h_s, r_s, velocity)


def _parse_trajectory(sec: _Section, keypoints: Tuple[str, ...], base_dir: Optional[Path]):
    kind = sec.string("type", "synthetic", ("synthetic", "replay"))
    if kind == "replay":
        p = sec.string("path")
        sec.finish()
        path = Path(p)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            records = parse_trace(path.read_bytes())
        except OSError as exc:
            raise ConfigError(_join(sec.path, "path"), f"cannot read trace: {exc}") from None
        except ParseError as exc:
            raise ConfigError(_join(sec.path, "path"), f"bad trace: {exc}") from None
        unknown = sorted({r.keypoint for r in records if r.agent == "human"} - set(keypoints))
        if unknown:
            raise ConfigError(_join(sec.path, "path"), f"trace has keypoints outside human.keypoints: {unknown}")
        return ReplayTrajectory.from_records(records, keypoints)

    pose_name = sec.string("pose", None) if sec.has("pose") else None
    if pose_name is not None and pose_name not in POSES:
        raise ConfigError(_join(sec.path, "pose"), f"unknown pose {pose_name!r} (known: {', '.join(POSES)})")
    pose = POSES.get(pose_name, {})
    lead = sec.string("lead", pose.get("lead", _REQUIRED))
    if lead not in keypoints:
        raise ConfigError(_join(sec.path, "lead"), f"{lead!r} is not a human keypoint")
    if sec.has("offsets"):
        o = sec.section("offsets")
        offsets = {str(k): o.vec3(k) for k in list(o.data)}
    elif pose:
        if lead != pose["lead"]:
            raise ConfigError(_join(sec.path, "lead"), f"pose {pose_name!r} is built around {pose['lead']!r}")
        offsets = dict(pose["offsets"])
    else:
        raise ConfigError(_join(sec.path, "offsets"), "give either 'pose' or 'offsets'")
    expected = set(keypoints) - {lead}
    if set(offsets) != expected:
        missing = sorted(expected - set(offsets))
        extra = sorted(set(offsets) - expected)
        raise ConfigError(_join(sec.path, "offsets"), f"must cover every other human keypoint (missing {missing}, unexpected {extra})")
    traj = SyntheticTrajectory(
        lead=lead,
        offsets={k: Point3.of(offsets[k]) for k in keypoints if k != lead},
        start=sec.vec3("start"),
        target=sec.vec3("target"),
        approach_start=sec.number("approach_start", 0.0, minimum=0.0),
        approach_speed=sec.number("approach_speed", positive=True),
        dwell=sec.number("dwell", 0.0, minimum=0.0),
        retreat_speed=sec.number("retreat_speed", positive=True),
        order=keypoints,
    )
    sec.finish()
    return traj


def _parse_missing(sec: _Section) -> MissingPolicy:
    mode = sec.string("mode", "conservative", [m.value for m in MissingMode])
    t_hold = sec.number("t_hold", 0.0, minimum=0.0)
    floor = sec.number("confidence_floor", 0.0, minimum=0.0)
    if floor > 1.0:
        raise ConfigError(_join(sec.path, "confidence_floor"), "must lie in [0, 1]")
    sec.finish()
    return MissingPolicy(MissingMode(mode), t_hold, floor)


def _name_list(v, path) -> Tuple[str, ...]:
    if not isinstance(v, list) or not v or not all(isinstance(x, str) for x in v):
        raise ConfigError(path, "expected a non-empty list of names")
    if len(set(v)) != len(v):
        raise ConfigError(path, "duplicate names")
    return tuple(v)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    chain: JointChain
    attachments: Tuple[KeypointAttachment, ...]
    motion: RobotMotionProfile
    human_keypoints: Tuple[str, ...]
    trajectory: object
    policy: SeparationPolicy
    matrices: ThresholdMatrices
    missing: MissingPolicy
    hysteresis: float
    reduced_speed: float
    frame_rate: float
    duration: float
    seed: int
    actuation_delay: int
    tracked_pairs: Optional[Tuple[Tuple[str, str], ...]]
    noise: float
    source: dict

    @property
    def robot_keypoints(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.attachments)

    def scenario(self) -> Scenario:
        return Scenario(
            chain=self.chain,
            attachments=self.attachments,
            motion=self.motion,
            matrices=self.matrices,
            trajectory=self.trajectory,
            human_keypoints=self.human_keypoints,
            missing=self.missing,
            frame_rate=self.frame_rate,
            duration=self.duration,
            actuation_delay=self.actuation_delay,
            hysteresis=self.hysteresis,
            reduced_speed=self.reduced_speed,
            tracked_pairs=self.tracked_pairs,
            seed=self.seed,
            noise=self.noise,
        )


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r} (known: {', '.join(PRESETS)})")
    return resources.files("sepmon").joinpath(f"presets/{name}.yaml").read_text(encoding="utf-8")


def _expand(data, path="", seen=()) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(path, "configuration must be a mapping")
    if "preset" not in data:
        return data
    name = data["preset"]
    if not isinstance(name, str):
        raise ConfigError("preset", "expected a preset name")
    if name in seen:
        raise ConfigError("preset", f"preset cycle through {name!r}")
    base = _expand(parse_yaml(preset_text(name), "preset"), path, seen + (name,))
    rest = {k: v for k, v in data.items() if k != "preset"}
    return _merge(base, rest)


def config_from_mapping(data, base_dir: Optional[Path] = None) -> ScenarioConfig:
    data = _expand(data)
    source = copy.deepcopy(data)
    top = _Section(data, "")
    name = top.string("name", "scenario")
    seed = top.integer("seed", 0, minimum=0)
    frame_rate = top.number("frame_rate", 30.0, positive=True)
    duration = top.number("duration", 30.0, minimum=0.0)
    delay = top.integer("actuation_delay", 1, minimum=1)

    robot = top.section("robot")
    chain, attachments = _parse_chain(robot)
    motion = _parse_motion(robot.section("motion"), chain.dof)
    robot.finish()

    human = top.section("human")
    kp_raw = human.raw("keypoints", list(naming.HUMAN_KEYPOINTS))
    human_kps = _name_list(kp_raw, "human.keypoints")
    trajectory = _parse_trajectory(human.section("trajectory", required=True), human_kps, base_dir)
    noise = human.number("noise", 0.0, minimum=0.0)
    human.finish()

    policy = _parse_policy(top.section("policy", required=True))
    robot_kps = tuple(a.name for a in attachments)
    for key in policy.h_s:
        if not any(naming.resolve(k, {key: 0}) for k in human_kps):
            raise ConfigError(f"policy.h_s.{key}", "matches no human keypoint")
    for key in policy.r_s:
        if not any(naming.resolve(k, {key: 0}, policy.r_compen.aliases) for k in robot_kps):
            raise ConfigError(f"policy.r_s.{key}", "matches no robot keypoint")
    try:
        matrices = compile_thresholds(policy, human_kps, robot_kps)
    except UnknownKeypoint as exc:
        which = "h_compen" if "human" in exc.where else "r_compen"
        raise ConfigError(f"policy.{which}", f"no compensation entry for keypoint {exc.name!r}") from None

    mon = top.section("monitor")
    missing = _parse_missing(mon.section("missing"))
    hysteresis = mon.number("hysteresis", 0.0, minimum=0.0)
    reduced_speed = mon.number("reduced_speed", 0.5, minimum=0.0)
    if reduced_speed > 1.0:
        raise ConfigError("monitor.reduced_speed", "must lie in [0, 1]")
    tracked = None
    if mon.has("tracked_pairs"):
        raw = mon.raw("tracked_pairs")
        tracked = []
        if not isinstance(raw, list):
            raise ConfigError("monitor.tracked_pairs", "expected a list of [human, robot] pairs")
        for i, pair in enumerate(raw):
            p = f"monitor.tracked_pairs.{i}"
            if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
                raise ConfigError(p, "expected [human_keypoint, robot_keypoint]")
            if pair[0] not in human_kps or pair[1] not in robot_kps:
                raise ConfigError(p, f"unknown pair {pair}")
            tracked.append((pair[0], pair[1]))
        tracked = tuple(tracked)
    mon.finish()
    top.finish()

    return ScenarioConfig(
        name=name,
        chain=chain,
        attachments=attachments,
        motion=motion,
        human_keypoints=human_kps,
        trajectory=trajectory,
        policy=policy,
        matrices=matrices,
        missing=missing,
        hysteresis=hysteresis,
        reduced_speed=reduced_speed,
        frame_rate=frame_rate,
        duration=duration,
        seed=seed,
        actuation_delay=delay,
        tracked_pairs=tracked,
        noise=noise,
        source=source,
    )


def load_config(data: Union[bytes, str], base_dir: Optional[Path] = None) -> ScenarioConfig:
    """Parse and validate a YAML scenario configuration.

    Raises:
        ConfigError: with the dotted path of the first invalid field.
    """
    return config_from_mapping(parse_yaml(data), base_dir)


def load_preset(name: str) -> ScenarioConfig:
    return config_from_mapping({"preset": name})


def resolve_config(ref: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    """A preset name or a path to a YAML file, optionally with overrides merged on top."""
    if ref in PRESETS:
        data, base_dir = {"preset": ref}, None
    else:
        path = Path(ref)
        try:
            text = path.read_bytes()
        except OSError as exc:
            raise ConfigError("", f"cannot read config {ref!r}: {exc.strerror}") from None
        data, base_dir = parse_yaml(text), path.parent
    if overrides:
        data = _merge(_expand(data), overrides)
    return config_from_mapping(data, base_dir)
