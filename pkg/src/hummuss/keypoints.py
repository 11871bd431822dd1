"""Text line protocol for timestamped keypoint streams.

A keypoint file starts with a header ``# joints=J fps=F`` followed by one
line per frame: ``timestamp_ms,x1,y1,c1,...,xJ,yJ,cJ``.  Pose files use the
header ``# joints=J kind=pose3d`` and ``timestamp_ms,x1,y1,z1,...`` lines.
"""

from __future__ import annotations

from typing import Iterable, Iterator, TextIO

import numpy as np


class KeypointFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _parse_header(line: str, lineno: int) -> dict[str, str]:
    if not line.startswith("#"):
        raise KeypointFormatError(lineno, "missing '# joints=J ...' header")
    fields = {}
    for tok in line[1:].split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise KeypointFormatError(lineno, f"bad header token {tok!r}")
        fields[key] = value
    if "joints" not in fields:
        raise KeypointFormatError(lineno, "header does not declare joints=")
    try:
        if int(fields["joints"]) < 1:
            raise ValueError
    except ValueError:
        raise KeypointFormatError(lineno, f"invalid joint count {fields['joints']!r}") from None
    return fields


def _parse_rows(lines: Iterable[str], width: int) -> Iterator[tuple[int, float, np.ndarray, int]]:
    """Yield ``(lineno, timestamp_ms, values [J, width], J)`` after the header; validates order."""
    n_joints = None
    last = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if n_joints is None:
            header = _parse_header(line, lineno)
            n_joints = int(header["joints"])
            continue
        parts = line.split(",")
        if len(parts) != 1 + width * n_joints:
            raise KeypointFormatError(lineno, f"expected {1 + width * n_joints} fields, got {len(parts)}")
        try:
            values = np.array([float(p) for p in parts])
        except ValueError:
            raise KeypointFormatError(lineno, "non-numeric field") from None
        if not np.all(np.isfinite(values)):
            raise KeypointFormatError(lineno, "non-finite value")
        ts = values[0]
        if last is not None and not ts > last:
            raise KeypointFormatError(lineno, f"timestamp {ts:g} ms does not increase (previous {last:g} ms)")
        last = ts
        yield lineno, ts, values[1:].reshape(n_joints, width), n_joints


def read_header(lines: Iterable[str]) -> dict[str, str] | None:
    for lineno, raw in enumerate(lines, start=1):
        if raw.strip():
            return _parse_header(raw.strip(), lineno)
    return None


def iter_keypoints(lines: Iterable[str]) -> Iterator[tuple[int, float, np.ndarray]]:
    """Yield ``(lineno, timestamp_ms, frame [J, 3])`` for each keypoint line."""
    for lineno, ts, frame, _ in _parse_rows(lines, 3):
        conf = frame[:, 2]
        if np.any(conf < 0) or np.any(conf > 1):
            raise KeypointFormatError(lineno, "confidence outside [0, 1]")
        yield lineno, ts, frame


def read_keypoints(lines: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
    rows = list(iter_keypoints(lines))
    if not rows:
        return np.zeros(0), np.zeros((0, 0, 3))
    return np.array([r[1] for r in rows]), np.stack([r[2] for r in rows])


def read_pose3d(lines: Iterable[str]) -> tuple[np.ndarray, np.ndarray]:
    rows = list(_parse_rows(lines, 3))
    if not rows:
        return np.zeros(0), np.zeros((0, 0, 3))
    return np.array([r[1] for r in rows]), np.stack([r[2] for r in rows])


def format_row(timestamp_ms: float, values: np.ndarray) -> str:
    return ",".join([repr(float(timestamp_ms))] + [repr(float(v)) for v in np.ravel(values)])


def write_keypoints(out: TextIO, timestamps_ms, frames, fps: float) -> None:
    frames = np.asarray(frames)
    out.write(f"# joints={frames.shape[1]} fps={fps:g}\n")
    for ts, frame in zip(timestamps_ms, frames):
        out.write(format_row(ts, frame) + "\n")


def pose_header(n_joints: int) -> str:
    return f"# joints={n_joints} kind=pose3d\n"


def write_pose3d(out: TextIO, timestamps_ms, poses) -> None:
    poses = np.asarray(poses)
    out.write(pose_header(poses.shape[1]))
    for ts, pose in zip(timestamps_ms, poses):
        out.write(format_row(ts, pose) + "\n")
