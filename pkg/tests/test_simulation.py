import dataclasses
import math

import numpy as np
import pytest

from sepmon.config import load_preset, resolve_config
from sepmon.errors import ReplayExhausted
from sepmon.geometry import KeypointFrame
from sepmon.monitor import SafetyState
from sepmon.simulation import (
    ReplayTrajectory,
    RobotMotionProfile,
    SyntheticTrajectory,
    frame_count,
    robot_motion_step,
    run_scenario,
    synthetic_human_at,
)
from sepmon.traces import SkeletonTraceRecord, format_decision_log

FOUR = ["enter_reduced", "enter_stopped", "resume_reduced", "resume_normal"]


@pytest.fixture(scope="module")
def run_a():
    return run_scenario(load_preset("paper-scenario-a"))


def profile():
    return RobotMotionProfile((0.3, -0.2, 0.0), (0.1, 0.0, 0.5), 4.0, phase=0.1)


def test_zero_speed_freezes_pose():
    p = profile()
    before = p.joint_state().values
    for dt in (0.01, 1.0, 17.3):
        assert robot_motion_step(p, dt, 0.0).values == before


def test_full_period_repeats_pose():
    p = profile()
    before = np.array(p.joint_state().values)
    after = np.array(robot_motion_step(p, 4.0, 1.0).values)
    assert p.phase == pytest.approx(1.1, abs=1e-15)
    assert np.abs(after - before).max() <= 1e-12


def test_half_speed_twice_equals_full_speed_once():
    a, b = profile(), profile()
    robot_motion_step(a, 0.1, 0.5)
    robot_motion_step(a, 0.1, 0.5)
    robot_motion_step(b, 0.1, 1.0)
    assert a.phase == pytest.approx(b.phase, abs=1e-15)


def test_motion_rejects_bad_input():
    with pytest.raises(ValueError):
        robot_motion_step(profile(), 0.0, 1.0)
    with pytest.raises(ValueError):
        robot_motion_step(profile(), 0.1, 1.5)
    with pytest.raises(ValueError):
        RobotMotionProfile((0.0,), (0.0,), 0.0)


def trajectory():
    return SyntheticTrajectory(
        "right_wrist", {"nose": (0.5, 0, 0.3)}, (1.0, 0.0, 0.0), (0.4, 0.3, 0.2), 2.0, 0.2, 1.0, 0.1
    )


def test_synthetic_path_examples():
    tr = trajectory()
    f = synthetic_human_at(tr, 1.0)
    assert tuple(f.position("right_wrist")) == (1.0, 0.0, 0.0)
    assert np.allclose(f.position("nose").as_array(), (1.5, 0, 0.3))
    length = math.dist((1.0, 0.0, 0.0), (0.4, 0.3, 0.2))
    f = synthetic_human_at(tr, 2.0 + length / 0.2)
    assert np.abs(f.position("right_wrist").as_array() - (0.4, 0.3, 0.2)).max() <= 1e-9
    assert tuple(synthetic_human_at(tr, 1e6).position("right_wrist")) == (1.0, 0.0, 0.0)


def test_synthetic_path_is_continuous():
    tr = trajectory()
    ts = np.linspace(0, 20, 20001)
    pts = np.array([tr.lead_position(t) for t in ts])
    step = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert step.max() <= 0.2 * (ts[1] - ts[0]) + 1e-12


def test_synthetic_rejects_bad_speed():
    with pytest.raises(ValueError):
        SyntheticTrajectory("w", {}, (0, 0, 0), (1, 0, 0), 0, 0.0, 0, 1)


def test_frame_count():
    assert frame_count(30, 30) == 900
    assert frame_count(0, 30) == 0
    assert frame_count(0.1, 30) == 3


def test_scenario_a_event_order(run_a):
    assert [e for _, e in run_a.events()] == FOUR
    assert len(run_a.decisions) == 900


def test_timestamps_non_decreasing(run_a):
    ts = [d.timestamp for d in run_a.decisions]
    assert all(b >= a for a, b in zip(ts, ts[1:]))


def test_stop_freeze(run_a):
    events = [d.event for d in run_a.decisions]
    k = events.index("enter_stopped")
    r = next(i for i in range(k + 1, len(events)) if events[i].startswith("resume"))
    ref = run_a.robot_frames[k].positions
    for f in run_a.robot_frames[k:r + 1]:
        assert np.abs(f.positions - ref).max() <= 1e-12
    # and the robot really was moving before the stop
    assert np.abs(run_a.robot_frames[k - 5].positions - ref).max() > 1e-6


def test_closed_loop_safety(run_a):
    m = load_preset("paper-scenario-a").matrices
    for dec, h, r in zip(run_a.decisions, run_a.human_frames, run_a.robot_frames):
        if dec.state != SafetyState.NORMAL:
            continue
        for i, hn in enumerate(h.names):
            for j, rn in enumerate(r.names):
                d = float(np.linalg.norm(h.positions[i] - r.positions[j]))
                assert d >= float(m.stop_threshold(hn, rn))


def test_summary_counts(run_a):
    s = run_a.summary
    assert s.frames == 900
    assert s.event_counts == {e: 1 for e in FOUR}
    d = run_a.pair_distances("right_wrist", "end_effector")
    assert s.min_distance[("right_wrist", "end_effector")] == min(x for _, x in d)


def test_scenario_b_nose_triggers_further_out():
    def trigger(cfg, lead):
        res = run_scenario(cfg)
        k = next(i for i, d in enumerate(res.decisions) if d.event == "enter_reduced")
        return dict(res.pair_distances(lead, "end_effector"))[res.decisions[k].timestamp]

    nose = trigger(load_preset("paper-scenario-b"), "nose")
    over = {"human": {"trajectory": {"pose": "reach-right", "lead": "right_wrist"}}}
    wrist = trigger(resolve_config("paper-scenario-b", over), "right_wrist")
    assert nose > wrist


def test_zero_duration():
    res = run_scenario(resolve_config("paper-scenario-a", {"duration": 0}))
    assert res.decisions == [] and res.pair_samples == []
    assert res.summary.frames == 0
    assert set(res.summary.event_counts.values()) == {0}
    assert res.summary.min_distance == {}


def test_determinism():
    cfg = resolve_config("paper-scenario-a", {"duration": 10, "human": {"noise": 0.01}})
    a = format_decision_log(run_scenario(cfg).decisions)
    b = format_decision_log(run_scenario(cfg).decisions)
    assert a == b
    other = resolve_config("paper-scenario-a", {"duration": 10, "seed": 1, "human": {"noise": 0.01}})
    assert format_decision_log(run_scenario(other).decisions) != a


def test_longer_actuation_delay_still_orders_events():
    res = run_scenario(resolve_config("paper-scenario-a", {"actuation_delay": 3}))
    assert [e for _, e in res.events()] == FOUR


def replay_records(times, x):
    return [SkeletonTraceRecord(t, "human", "right_wrist", x, 0.098, 0.1) for t in times]


def test_replay_sample_and_hold():
    frames = [KeypointFrame.from_points({"w": (0, 0, 0)}, 0.0), KeypointFrame.from_points({"w": (1, 0, 0)}, 1.0)]
    tr = ReplayTrajectory(frames)
    assert tuple(tr.at(0.5, ["w"]).position("w")) == (0, 0, 0)
    assert tuple(tr.at(1.0, ["w"]).position("w")) == (1, 0, 0)
    assert tr.at(0.5, ["w"]).timestamp == 0.5
    with pytest.raises(ValueError):
        ReplayTrajectory(frames[::-1])


def test_replay_exhausted():
    base = load_preset("paper-scenario-a").scenario()
    tr = ReplayTrajectory.from_records(replay_records([0.0, 0.5], 1.0), base.human_keypoints)
    sc = dataclasses.replace(base, trajectory=tr, duration=2.0)
    with pytest.raises(ReplayExhausted):
        run_scenario(sc)


def test_replay_with_partial_skeleton_stops_conservatively():
    base = load_preset("paper-scenario-a").scenario()
    tr = ReplayTrajectory.from_records(replay_records([0.0, 1.0], 1.0), base.human_keypoints)
    res = run_scenario(dataclasses.replace(base, trajectory=tr, duration=1.0))
    assert all(d.state == SafetyState.STOPPED for d in res.decisions)


def trigger_distance(cfg, lead):
    res = run_scenario(cfg)
    series = res.pair_distances(lead, "end_effector")
    d = np.array([x for _, x in series])
    k = next(i for i, dec in enumerate(res.decisions) if dec.event == "enter_reduced")
    return float(d[k]), float(np.abs(np.diff(d)).max())


LEAN = {"human": {"trajectory": {"pose": "lean-in", "lead": "nose"}}}
REACH = {"human": {"trajectory": {"pose": "reach-right", "lead": "right_wrist"}}}


def test_trigger_gap_follows_reduced_threshold_gap():
    # head rows: 0.51 vs wrist 0.41 under head offsets
    nose, a = trigger_distance(resolve_config("paper-scenario-b", LEAN), "nose")
    wrist, b = trigger_distance(resolve_config("paper-scenario-b", REACH), "right_wrist")
    assert abs((nose - wrist) - 0.10) <= max(a, b)


def test_head_offset_moves_nose_trigger_by_offset():
    with_offset, a = trigger_distance(resolve_config("paper-scenario-b", LEAN), "nose")
    without, b = trigger_distance(resolve_config("paper-scenario-a", LEAN), "nose")
    assert abs((with_offset - without) - 0.15) <= max(a, b)


def test_tool_offset_moves_trigger_outward():
    b_cfg, c_cfg = resolve_config("paper-scenario-b", REACH), resolve_config("paper-scenario-c", REACH)
    wb, _ = trigger_distance(b_cfg, "right_wrist")
    wc, step = trigger_distance(c_cfg, "right_wrist")
    assert wc > wb
    assert abs((wc - wb) - 0.10) <= step
