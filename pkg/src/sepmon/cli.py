"""Command-line entry point: ``sepmon {matrix,compensate,calibrate,run}``.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .body_model import compute_compensation
from .config import PRESETS, parse_body_model, parse_yaml, resolve_config
from .errors import ConfigError, DegenerateCorrespondences, ParseError, SepmonError
from .geometry import fit_transform, load_correspondences, residuals
from .simulation import run_scenario
from .traces import format_decision_log, format_distance_trace, write_atomic

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _num(v: float) -> str:
    if abs(v) < 5e-13:
        v = 0.0
    return f"{v:.9g}"


def _emit(text: str, out: Optional[str]):
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def cmd_matrix(args) -> int:
    cfg = resolve_config(args.config)
    rows = ["human_kp,robot_kp,s_d_m,s_d_reduced_m"]
    for h, r, stop, red in cfg.matrices.rows():
        rows.append(f"{h},{r},{format(stop, 'f')},{format(red, 'f')}")
    _emit("\n".join(rows) + "\n", args.out)
    return EXIT_OK


def cmd_compensate(args) -> int:
    path = Path(args.model)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError("", f"cannot read model {args.model!r}: {exc.strerror}") from None
    model, step = parse_body_model(parse_yaml(text))
    if args.step is not None:
        if not args.step > 0:
            raise ConfigError("step", "must be > 0")
        step = args.step
    if not model.keypoints:
        raise ConfigError("keypoints", "needs at least one keypoint")
    table = compute_compensation(model, step)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        text = Path(args.points).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read correspondences {args.points!r}: {exc.strerror}") from None
    src, tgt = load_correspondences(text)
    t = fit_transform((src, tgt), args.mode)
    res = residuals(t, (src, tgt))
    lines = [f"mode,{args.mode}"]
    lines += ["linear," + ",".join(_num(v) for v in row) for row in t.linear]
    lines.append("translation," + ",".join(_num(v) for v in t.translation))
    lines.append(f"max_residual_m,{_num(float(res.max()) if len(res) else 0.0)}")
    lines.append(f"rms_residual_m,{_num(float(np.sqrt(np.mean(res ** 2))) if len(res) else 0.0)}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.duration is not None:
        overrides["duration"] = args.duration
    cfg = resolve_config(args.config, overrides or None)
    result = run_scenario(cfg)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"sepmon: cannot create {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    write_atomic(out / "decisions.csv", format_decision_log(result.decisions))
    write_atomic(out / "events.csv", format_decision_log(result.decisions, only_events=True))
    write_atomic(out / "distances.csv", format_distance_trace(result.pair_samples))
    s = result.summary
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "frames": s.frames,
        "event_counts": s.event_counts,
        "min_distance_m": {f"{h}|{r}": _num(d) for (h, r), d in sorted(s.min_distance.items())},
    }
    write_atomic(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for t, event in result.events():
        print(f"{_num(t)} {event}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sepmon", description="Keypoint speed-and-separation monitoring toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    m = sub.add_parser("matrix", help="print the compiled threshold matrices of a scenario")
    m.add_argument("--config", required=True, help=f"YAML file or preset ({', '.join(PRESETS)})")
    m.add_argument("--out", help="write to this file instead of stdout")
    m.set_defaults(func=cmd_matrix)

    c = sub.add_parser("compensate", help="compute compensation coefficients for a body model")
    c.add_argument("--model", required=True, help="body model YAML file")
    c.add_argument("--step", type=float, help="sampling step in meters (default: model's, else 0.005)")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compensate)

    k = sub.add_parser("calibrate", help="fit a camera-to-robot transform from correspondences")
    k.add_argument("--points", required=True, help="file with sx,sy,sz,tx,ty,tz lines")
    k.add_argument("--mode", choices=("rigid", "affine"), default="rigid")
    k.add_argument("--out")
    k.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", help="run a closed-loop scenario and write its logs")
    r.add_argument("--config", required=True, help=f"YAML file or preset ({', '.join(PRESETS)})")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float)
    r.set_defaults(func=cmd_run)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, ParseError, DegenerateCorrespondences) as exc:
        print(f"sepmon: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SepmonError, OSError, ValueError) as exc:
        print(f"sepmon: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
