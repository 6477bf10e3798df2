import json
import subprocess
import sys

import numpy as np
import pytest

from sepmon.cli import main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_matrix_preset(capsys):
    code, out, _ = run(["matrix", "--config", "paper-scenario-a"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "human_kp,robot_kp,s_d_m,s_d_reduced_m"
    assert "right_wrist,end_effector,0.26,0.41" in lines
    assert "nose,end_effector,0.21,0.36" in lines
    assert "wrist,end_effector,0.26,0.41" in out


def test_matrix_is_stable(capsys, tmp_path):
    outs = []
    for k in range(2):
        assert main(["matrix", "--config", "paper-scenario-c", "--out", str(tmp_path / f"m{k}.csv")]) == 0
        outs.append((tmp_path / f"m{k}.csv").read_bytes())
    assert outs[0] == outs[1]
    assert b"nose,end_effector,0.46,0.61" in outs[0]


def test_calibrate_identity(capsys, tmp_path):
    pts = tmp_path / "c.csv"
    pts.write_text("sx,sy,sz,tx,ty,tz\n0,0,0,0,0,0\n1,0,0,1,0,0\n0,1,0,0,1,0\n0,0,1,0,0,1\n")
    code, out, _ = run(["calibrate", "--points", str(pts)], capsys)
    assert code == 0
    assert out.splitlines() == [
        "mode,rigid",
        "linear,1,0,0",
        "linear,0,1,0",
        "linear,0,0,1",
        "translation,0,0,0",
        "max_residual_m,0",
        "rms_residual_m,0",
    ]


def test_calibrate_degenerate(capsys, tmp_path):
    pts = tmp_path / "c.csv"
    pts.write_text("0,0,0,0,0,0\n1,1,1,1,1,1\n2,2,2,2,2,2\n")
    code, _, err = run(["calibrate", "--points", str(pts)], capsys)
    assert code == 1 and "sepmon:" in err


def test_compensate(capsys, tmp_path):
    model = tmp_path / "m.yaml"
    model.write_text(
        "keypoints: {elbow: [0, 0, 0], wrist: [0.3, 0, 0]}\n"
        "segments:\n  - {name: forearm, capsule: {a: [0, 0, 0], b: [0.3, 0, 0], radius: 0.0}}\n"
    )
    code, out, _ = run(["compensate", "--model", str(model)], capsys)
    assert code == 0
    rows = dict(line.split(",") for line in out.splitlines()[1:])
    assert set(rows) == {"elbow", "wrist"}
    assert all(abs(float(v) - 0.15) <= 0.005 for v in rows.values())


def test_run_writes_logs(capsys, tmp_path):
    out_dir = tmp_path / "out"
    code, out, _ = run(["run", "--config", "paper-scenario-a", "--out", str(out_dir)], capsys)
    assert code == 0
    assert [line.split()[1] for line in out.splitlines()] == [
        "enter_reduced", "enter_stopped", "resume_reduced", "resume_normal",
    ]
    events = (out_dir / "events.csv").read_text().splitlines()
    assert [row.rsplit(",", 1)[1] for row in events[1:]] == [
        "enter_reduced", "enter_stopped", "resume_reduced", "resume_normal",
    ]
    assert len((out_dir / "decisions.csv").read_text().splitlines()) == 901
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["frames"] == 900 and summary["event_counts"]["enter_stopped"] == 1
    dist = np.genfromtxt(out_dir / "distances.csv", delimiter=",", skip_header=1, usecols=3)
    assert np.all(dist > 0)


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus"],
        ["matrix"],
        ["matrix", "--config", "no-such-preset"],
        ["run", "--config", "paper-scenario-a"],
        ["calibrate", "--points", "/nonexistent/points.csv"],
        ["calibrate", "--points", "x", "--mode", "projective"],
    ],
)
def test_invalid_input_exit_1(capsys, argv):
    code, _, err = run(argv, capsys)
    assert code == 1
    assert err


def test_runtime_failure_exit_2(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(["run", "--config", "paper-scenario-a", "--duration", "0.1", "--out", str(blocker / "sub")], capsys)
    assert code == 2 and err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sepmon.cli", "matrix", "--config", "paper-scenario-b"],
                          capture_output=True, text=True, check=True)
    assert "nose,end_effector,0.36,0.51" in proc.stdout
