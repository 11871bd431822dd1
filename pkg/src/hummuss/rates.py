"""Evaluation on frame-rate subsampled input with a rescaled discretization step."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ModelWeights, forward


@dataclass
class RateRow:
    rate: int
    frames: int
    mpjpe_vs_gt: float
    dev_vs_fullrate: float


def subsample_indices(n_frames: int, rate: int) -> np.ndarray:
    """Every ``rate``-th frame, ending each hold interval (frames r-1, 2r-1, ...)."""
    if rate < 1:
        raise ValueError(f"rate must be a positive integer, got {rate}")
    return np.arange(rate - 1, n_frames, rate)


def mean_joint_error(a, b) -> float:
    return float(np.mean(np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)))


def subsample_eval(weights: ModelWeights, frames, gt3d, rates=(1, 2, 4, 8)) -> list[RateRow]:
    """Run the model on every ``r``-th frame with the temporal step scaled by ``r``.

    Errors are mean per-joint Euclidean distances on the retained frames,
    against ground truth and against the full-rate prediction at the same
    timestamps.
    """
    frames = np.asarray(frames, dtype=np.float64)
    gt3d = np.asarray(gt3d, dtype=np.float64)
    if gt3d.shape[:2] != frames.shape[:2]:
        raise ValueError(f"ground truth {gt3d.shape} does not match keypoints {frames.shape}")
    full = forward(weights, frames[None])[1][0]
    rows = []
    for r in rates:
        idx = subsample_indices(len(frames), r)
        if len(idx) == 0:
            rows.append(RateRow(r, 0, float("nan"), float("nan")))
            continue
        pose = full[idx] if r == 1 else forward(weights, frames[None, idx], delta_scale=float(r))[1][0]
        rows.append(RateRow(r, len(idx), mean_joint_error(pose, gt3d[idx]), mean_joint_error(pose, full[idx])))
    return rows


def write_rate_csv(out, rows: list[RateRow]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["rate", "frames", "mpjpe_vs_gt", "dev_vs_fullrate"])
    for row in rows:
        writer.writerow([row.rate, row.frames, repr(row.mpjpe_vs_gt), repr(row.dev_vs_fullrate)])
