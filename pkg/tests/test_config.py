from decimal import Decimal as D

import pytest

from sepmon.config import PRESETS, load_config, load_preset, parse_body_model, parse_yaml, resolve_config
from sepmon.errors import ConfigError
from sepmon.monitor import MissingMode

MINIMAL = """
robot:
  chain:
    joints:
      - {axis: [0, 0, 1]}
      - {axis: [0, 0, 1], fixed_translation: [0.3, 0, 0]}
    tip: {translation: [0.2, 0, 0]}
  attachments:
    - {name: end_effector, link: 3}
human:
  keypoints: [right_wrist, nose]
  trajectory:
    lead: right_wrist
    offsets: {nose: [0.1, 0.0, 0.5]}
    start: [1.0, 0.0, 0.0]
    target: [0.6, 0.0, 0.0]
    approach_speed: 0.1
    retreat_speed: 0.1
policy:
  s_p: 0.05
  s_p_reduced: 0.20
duration: 2
"""


def test_preset_a_matches_table():
    m = load_preset("paper-scenario-a").matrices
    assert m.stop_threshold("right_wrist", "end_effector") == D("0.26")
    assert m.reduced_threshold("right_wrist", "end_effector") == D("0.41")
    assert m.stop_threshold("nose", "end_effector") == D("0.21")
    assert m.reduced_threshold("nose", "end_effector") == D("0.36")


def test_preset_b_changes_head_rows_only():
    a, b = load_preset("paper-scenario-a").matrices, load_preset("paper-scenario-b").matrices
    assert (b.stop_threshold("nose", "end_effector"), b.reduced_threshold("nose", "end_effector")) == (D("0.36"), D("0.51"))
    assert b.stop_threshold("left_wrist", "end_effector") == a.stop_threshold("left_wrist", "end_effector")
    assert b.reduced_threshold("left_wrist", "end_effector") == D("0.41")


def test_preset_c_dominates_b_by_tool_offset():
    b, c = load_preset("paper-scenario-b").matrices, load_preset("paper-scenario-c").matrices
    for (h, r, sb, rb), (_, _, sc, rc) in zip(b.rows(), c.rows()):
        delta = D("0.10") if r == "end_effector" else D(0)
        assert (sc - sb, rc - rb) == (delta, delta)


def test_presets_listed():
    assert PRESETS == ("paper-scenario-a", "paper-scenario-b", "paper-scenario-c")


def test_yaml_floats_are_exact():
    assert parse_yaml("x: 0.1")["x"] == D("0.1")


def test_minimal_config():
    cfg = load_config(MINIMAL)
    assert cfg.robot_keypoints == ("end_effector",)
    assert cfg.human_keypoints == ("right_wrist", "nose")
    assert cfg.missing.mode == MissingMode.CONSERVATIVE
    assert cfg.frame_rate == 30.0


def err(text):
    with pytest.raises(ConfigError) as e:
        load_config(text)
    return e.value.path


def test_negative_s_p():
    assert err(MINIMAL.replace("s_p: 0.05", "s_p: -0.05")) == "policy.s_p"


@pytest.mark.parametrize(
    "old, new, path",
    [
        ("duration: 2", "duration: 2\nbogus: 1", "bogus"),
        ("s_p_reduced: 0.20", "s_p_reduced: 0.01", "policy.s_p_reduced"),
        ("s_p_reduced: 0.20", "s_p_reduced: 0.20\n  h_s: {tail: 0.1}", "policy.h_s.tail"),
        ("s_p_reduced: 0.20", "s_p_reduced: 0.20\n  h_compen: nope", "policy.h_compen"),
        ("s_p_reduced: 0.20", "s_p_reduced: 0.20\n  r_compen: {table: {wrist: 0.1}}", "policy.r_compen"),
        ("{axis: [0, 0, 1]}\n", "{axis: [0, 0, 2]}\n", "robot.chain.joints.0.axis"),
        ("link: 3", "link: 4", "robot.attachments.0.link"),
        ("offsets: {nose: [0.1, 0.0, 0.5]}", "offsets: {}", "human.trajectory.offsets"),
        ("approach_speed: 0.1", "approach_speed: 0", "human.trajectory.approach_speed"),
        ("start: [1.0, 0.0, 0.0]", "start: [1.0, 0.0]", "human.trajectory.start"),
        ("duration: 2", "duration: 2\nmonitor: {missing: {mode: maybe}}", "monitor.missing.mode"),
        ("duration: 2", "duration: 2\nmonitor: {reduced_speed: 2}", "monitor.reduced_speed"),
        ("duration: 2", "duration: 2\nactuation_delay: 0", "actuation_delay"),
    ],
)
def test_error_paths(old, new, path):
    assert old in MINIMAL
    assert err(MINIMAL.replace(old, new, 1)) == path


def test_invalid_yaml():
    with pytest.raises(ConfigError):
        load_config("robot: [unclosed")


def test_overrides_and_files(tmp_path):
    cfg = resolve_config("paper-scenario-a", {"seed": 4, "duration": 1.5})
    assert (cfg.seed, cfg.duration) == (4, 1.5)
    f = tmp_path / "s.yaml"
    f.write_text("preset: paper-scenario-c\nname: mine\n")
    cfg = resolve_config(str(f))
    assert cfg.name == "mine"
    assert cfg.matrices.stop_threshold("nose", "end_effector") == D("0.46")
    with pytest.raises(ConfigError):
        resolve_config(str(tmp_path / "absent.yaml"))


def test_replay_trajectory_path_is_relative_to_config(tmp_path):
    (tmp_path / "t.csv").write_text(
        "time_s,agent,keypoint,x,y,z,confidence\n0.0,human,right_wrist,1,0,0,1\n0.0,human,nose,1,0,0.5,1\n"
    )
    head, tail = MINIMAL.split("  trajectory:\n")
    text = head + "  trajectory: {type: replay, path: t.csv}\n" + tail[tail.index("policy:"):]
    (tmp_path / "c.yaml").write_text(text)
    cfg = resolve_config(str(tmp_path / "c.yaml"))
    assert cfg.trajectory.end_time == 0.0


def test_inline_body_model_compensation():
    text = MINIMAL.replace(
        "s_p_reduced: 0.20",
        "s_p_reduced: 0.20\n  h_compen:\n    body_model:\n      keypoints: {wrist: [0, 0, 0], nose: [0, 0, 1]}\n"
        "      segments:\n        - {name: ball, sphere: {center: [0, 0, 0], radius: 0.05}}",
    )
    cfg = load_config(text)
    assert abs(cfg.policy.h_compen["wrist"] - D("0.05")) <= D("0.005")


def test_parse_body_model_errors():
    with pytest.raises(ConfigError) as e:
        parse_body_model({"keypoints": {"a": [0, 0, 0]}, "segments": [{"name": "x", "cube": {}}]})
    assert e.value.path == "segments.0"
