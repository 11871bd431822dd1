"""Command-line front end.

Exit codes: 0 success, 2 malformed input line, 3 weights/config mismatch or
missing ground truth, 4 streaming requested on a bidirectional model.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bench import run_bench, write_report
from .errors import ConfigError, WeightsError
from .keypoints import (
    KeypointFormatError,
    format_row,
    iter_keypoints,
    pose_header,
    read_keypoints,
    read_pose3d,
    write_keypoints,
    write_pose3d,
)
from .model import HummussConfig, ModelState, forward, init_model, stream_step
from .rates import subsample_eval, write_rate_csv
from .tasks import CorruptionSpec, corrupt, synth_motion
from .weights_io import load_weights, save_weights

EXIT_OK, EXIT_INPUT, EXIT_WEIGHTS, EXIT_MODE = 0, 2, 3, 4
SEED_ENV = "HUMMUSS_SEED"


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return values


def _load_model(path, need_causal: bool = False):
    try:
        weights = load_weights(path)
    except FileNotFoundError:
        raise CliError(EXIT_WEIGHTS, f"weights file not found: {path}") from None
    except WeightsError as exc:
        raise CliError(EXIT_WEIGHTS, f"cannot load weights ({exc.code}): {exc}") from None
    if weights.config.d_in != 3:
        raise CliError(EXIT_WEIGHTS, f"model expects d_in={weights.config.d_in}, keypoint stream has 3")
    if need_causal and not weights.config.causal:
        raise CliError(EXIT_MODE, "stream mode requires a causal model")
    return weights


@contextlib.contextmanager
def _open_in(path):
    if path in (None, "-"):
        yield sys.stdin
    else:
        with open(path) as fh:
            yield fh


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _offline_scale(timestamps_ms, fps: float) -> float:
    if len(timestamps_ms) < 2:
        return 1.0
    factor = float(np.median(np.diff(timestamps_ms))) / 1000.0 * fps
    return 1.0 if abs(factor - 1.0) < 1e-9 else factor


def cmd_infer(args) -> int:
    weights = _load_model(args.model, need_causal=args.mode == "stream")
    adapt = args.fps_adapt == "on"
    with _open_in(args.input) as src, _open_out(args.output) as dst:
        try:
            if args.mode == "stream":
                state = ModelState()
                header_done = False
                for _, ts, frame in iter_keypoints(src):
                    if not header_done:
                        dst.write(pose_header(frame.shape[0]))
                        header_done = True
                    pose = stream_step(weights, frame, ts / 1000.0 if adapt else None, state)
                    dst.write(format_row(ts, pose) + "\n")
                    dst.flush()
            else:
                timestamps, frames = read_keypoints(src)
                if len(timestamps):
                    scale = _offline_scale(timestamps, weights.config.nominal_fps) if adapt else 1.0
                    poses = forward(weights, frames[None], delta_scale=scale)[1][0]
                    write_pose3d(dst, timestamps, poses)
        except KeypointFormatError as exc:
            raise CliError(EXIT_INPUT, f"malformed input: {exc}") from None
    return EXIT_OK


def cmd_bench(args) -> int:
    weights = _load_model(args.model, need_causal=True)
    rows = run_bench(weights, args.contexts, n_steps=args.frames, repeat=args.repeat,
                     n_joints=args.joints, warmup=args.warmup, seed=default_seed())
    write_report(sys.stdout, rows)
    return EXIT_OK


def _gt_path(input_path: str) -> Path:
    p = Path(input_path)
    return p.with_name(p.name.split(".")[0] + ".gt3d.csv")


def cmd_subsample_eval(args) -> int:
    weights = _load_model(args.model)
    gt_path = Path(args.gt) if args.gt else _gt_path(args.input)
    if not gt_path.exists():
        raise CliError(EXIT_WEIGHTS, f"ground-truth 3D file not found: {gt_path}")
    try:
        with open(args.input) as fh:
            _, frames = read_keypoints(fh)
        with open(gt_path) as fh:
            _, gt = read_pose3d(fh)
    except KeypointFormatError as exc:
        raise CliError(EXIT_INPUT, f"malformed input: {exc}") from None
    if gt.shape[:2] != frames.shape[:2]:
        raise CliError(EXIT_WEIGHTS, f"ground truth {gt.shape[:2]} does not match keypoints {frames.shape[:2]}")
    write_rate_csv(sys.stdout, subsample_eval(weights, frames, gt, args.rates))
    return EXIT_OK


def cmd_init(args) -> int:
    try:
        config = HummussConfig(n_blocks=args.n_blocks, d_m=args.d_m, d_rep=args.d_rep,
                               state_dim=args.state_dim, causal=args.causal,
                               n_expand=Fraction(args.n_expand) if args.n_expand else None,
                               nominal_fps=args.fps, block_agg=args.block_agg, fusion=args.fusion)
    except ConfigError as exc:
        raise CliError(EXIT_WEIGHTS, str(exc)) from None
    seed = args.seed if args.seed is not None else default_seed()
    save_weights(init_model(config, seed), args.output, dtype=args.dtype)
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    gt, proj = synth_motion(args.joints, args.frames, args.fps, seed=seed)
    if args.mask_prob > 0 or args.noise:
        proj = corrupt(proj, CorruptionSpec(mask_prob=args.mask_prob, seed=seed,
                                            gauss_sigma=0.01 if args.noise else 0.0,
                                            uniform_halfwidth=0.02 if args.noise else 0.0))
    timestamps = np.arange(args.frames) * 1000.0 / args.fps
    out = Path(args.output)
    with open(out, "w") as fh:
        write_keypoints(fh, timestamps, proj.as_input(), args.fps)
    with open(Path(args.gt) if args.gt else _gt_path(str(out)), "w") as fh:
        write_pose3d(fh, timestamps, gt.xyz)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hummuss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="2D keypoints -> 3D pose, streaming or offline")
    p.add_argument("--model", required=True)
    p.add_argument("--input", default="-", help="keypoint file, '-' for stdin")
    p.add_argument("--mode", choices=("stream", "offline"), default="stream")
    p.add_argument("--fps-adapt", choices=("on", "off"), default="on")
    p.add_argument("--output", default="-", help="pose file, '-' for stdout")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="recurrent vs rewindow per-frame latency (CSV)")
    p.add_argument("--model", required=True)
    p.add_argument("--contexts", type=_int_list, default=[27, 81, 243])
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--joints", type=int, default=17)
    p.add_argument("--warmup", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("subsample-eval", help="error vs frame-rate subsampling (CSV)")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--gt", help="ground-truth pose file (default: <input stem>.gt3d.csv)")
    p.add_argument("--rates", type=_int_list, default=[1, 2, 4, 8])
    p.set_defaults(func=cmd_subsample_eval)

    p = sub.add_parser("init", help="write a randomly initialised weights file")
    p.add_argument("--output", required=True)
    p.add_argument("--n-blocks", type=int, default=5)
    p.add_argument("--d-m", type=int, default=256)
    p.add_argument("--d-rep", type=int, default=512)
    p.add_argument("--state-dim", type=int, default=128)
    p.add_argument("--n-expand", help="expansion factor, e.g. 3 or 5/2 (default by mode)")
    p.add_argument("--causal", action="store_true")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--block-agg", choices=("gate", "mean", "learned"), default="gate")
    p.add_argument("--fusion", choices=("gate", "mean", "learned"), default="learned")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("synth", help="write synthetic keypoints and matching 3D ground truth")
    p.add_argument("--output", required=True)
    p.add_argument("--gt", help="ground-truth path (default: <output stem>.gt3d.csv)")
    p.add_argument("--joints", type=int, default=17)
    p.add_argument("--frames", type=int, default=243)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--mask-prob", type=float, default=0.0)
    p.add_argument("--noise", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"hummuss: {exc}", file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        # downstream reader closed early (e.g. `| head`); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
