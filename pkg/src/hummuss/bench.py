"""Per-frame latency of recurrent streaming versus sliding-window re-convolution.

The ``rewindow`` baseline re-runs the convolutional forward pass of the same
model over the trailing ``c`` frames for every new frame.  It stands in for
history-attending inference; it is not a transformer.
"""

from __future__ import annotations

import csv
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from .model import ModelState, ModelWeights, forward, stream_step
from .tasks import synth_motion

BASELINE_NOTE = "# rewindow = sliding-window re-convolution of the same model (proxy baseline, not a transformer)"


@dataclass
class BenchRow:
    mode: str
    context_length: int
    median_latency_us: float
    p95_latency_us: float
    state_bytes_or_window_bytes: int


def _bench_frames(weights: ModelWeights, n_frames: int, n_joints: int, seed: int) -> np.ndarray:
    _, proj = synth_motion(n_joints, n_frames, weights.config.nominal_fps, seed=seed)
    return proj.as_input()


def _summarise(per_repeat: list[list[float]]) -> tuple[float, float]:
    median = float(np.median([np.median(r) for r in per_repeat]))
    p95 = float(np.percentile(np.concatenate(per_repeat), 95))
    return median, p95


def bench_recurrent(weights, frames, context: int, n_steps: int, repeat: int, warmup: int = 50):
    """Latency (us) of ``n_steps`` stream steps taken after ``context`` frames of history."""
    fps = weights.config.nominal_fps
    runs, nbytes = [], 0
    for _ in range(repeat):
        state = ModelState()
        for f in range(warmup):
            stream_step(weights, frames[f % len(frames)], f / fps, state)
        state.reset()
        for f in range(context):
            stream_step(weights, frames[f], f / fps, state)
        lat = []
        for f in range(context, context + n_steps):
            t0 = time.perf_counter_ns()
            stream_step(weights, frames[f], f / fps, state)
            lat.append((time.perf_counter_ns() - t0) / 1e3)
        runs.append(lat)
        nbytes = state.nbytes
    return BenchRow("recurrent", context, *_summarise(runs), nbytes)


def bench_rewindow(weights, frames, context: int, n_steps: int, repeat: int, warmup: int = 50):
    """Latency (us) of re-running ``forward`` on the trailing ``context`` frames per new frame."""
    runs = []
    window = None
    for _ in range(warmup):
        forward(weights, frames[None, :context])
    for _ in range(repeat):
        lat = []
        for f in range(context, context + n_steps):
            window = frames[None, f - context + 1:f + 1]
            t0 = time.perf_counter_ns()
            forward(weights, window)
            lat.append((time.perf_counter_ns() - t0) / 1e3)
        runs.append(lat)
    return BenchRow("rewindow", context, *_summarise(runs), int(window.nbytes))


def run_bench(weights: ModelWeights, contexts=(27, 81, 243), n_steps: int = 100, repeat: int = 3,
              n_joints: int = 17, warmup: int = 50, seed: int = 0, modes=("recurrent", "rewindow")):
    frames = _bench_frames(weights, max(contexts) + n_steps + 1, n_joints, seed)
    rows = []
    for c in contexts:
        if "recurrent" in modes:
            rows.append(bench_recurrent(weights, frames, c, n_steps, repeat, warmup))
        if "rewindow" in modes:
            rows.append(bench_rewindow(weights, frames, c, n_steps, repeat, warmup))
    return rows


def write_report(out, rows: list[BenchRow]) -> None:
    out.write(BASELINE_NOTE + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([f.name for f in fields(BenchRow)])
    for row in rows:
        mode, c, med, p95, nbytes = astuple(row)
        writer.writerow([mode, c, f"{med:.1f}", f"{p95:.1f}", nbytes])
