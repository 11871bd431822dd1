"""Pretraining losses, 2D corruption, synthetic motion and a finite-difference trainer."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ModelWeights, forward

log = logging.getLogger(__name__)


@dataclass
class Skeleton2DSeq:
    """Image-plane keypoints ``xy [F, J, 2]`` with detector confidence ``conf [F, J]``."""

    xy: np.ndarray
    conf: np.ndarray

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.conf = np.asarray(self.conf, dtype=np.float64)
        if self.xy.ndim != 3 or self.xy.shape[-1] != 2 or self.conf.shape != self.xy.shape[:2]:
            raise ValueError(f"inconsistent 2D skeleton shapes {self.xy.shape} / {self.conf.shape}")
        if np.any(self.conf < 0) or np.any(self.conf > 1):
            raise ValueError("confidences must lie in [0, 1]")

    def as_input(self) -> np.ndarray:
        """``[F, J, 3]`` model input (x, y, confidence)."""
        return np.concatenate([self.xy, self.conf[..., None]], axis=-1)


@dataclass
class Skeleton3DSeq:
    """Root-relative 3D joint positions ``xyz [F, J, 3]`` in meters."""

    xyz: np.ndarray

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64)
        if self.xyz.ndim != 3 or self.xyz.shape[-1] != 3:
            raise ValueError(f"expected [F, J, 3], got {self.xyz.shape}")

    def project(self) -> Skeleton2DSeq:
        """Orthographic projection with confidence 1."""
        return Skeleton2DSeq(self.xyz[..., :2].copy(), np.ones(self.xyz.shape[:2]))


@dataclass
class CorruptionSpec:
    mask_prob: float = 0.15
    gauss_sigma: float = 0.01
    uniform_halfwidth: float = 0.02
    mix_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("mask_prob", "mix_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.gauss_sigma < 0 or self.uniform_halfwidth < 0:
            raise ValueError("noise magnitudes must be non-negative")


def _xyz(x):
    return x.xyz if isinstance(x, Skeleton3DSeq) else np.asarray(x, dtype=np.float64)


def loss_3d(pred, gt, lambda_v: float = 1.0) -> float:
    """Summed squared position error plus ``lambda_v`` times summed squared velocity error.

    Accepts ``[..., F, J, 3]``; the velocity term starts at the second frame.
    """
    p, g = _xyz(pred), _xyz(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    if p.ndim < 3 or p.shape[-3] < 1:
        raise ValueError("need at least one frame")
    err = p - g
    vel = np.diff(err, axis=-3)
    return float(np.sum(err**2) + lambda_v * np.sum(vel**2))


def loss_2d(pred3d, target: Skeleton2DSeq) -> float:
    """Confidence-weighted squared error of the depth-dropped prediction."""
    p = _xyz(pred3d)
    if p.shape[:-1] != target.conf.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {target.xy.shape}")
    diff = p[..., :2] - target.xy
    return float(np.sum(target.conf * np.sum(diff**2, axis=-1)))


def corrupt(clean: Skeleton2DSeq, spec: CorruptionSpec) -> Skeleton2DSeq:
    """Zero-mask joints with ``mask_prob``; jitter the rest with Gaussian-or-uniform noise."""
    rng = np.random.default_rng(spec.seed)
    shape = clean.conf.shape
    masked = rng.random(shape) < spec.mask_prob
    use_gauss = rng.random(shape) < spec.mix_prob
    gauss = rng.normal(0.0, spec.gauss_sigma, shape + (2,))
    unif = rng.uniform(-spec.uniform_halfwidth, spec.uniform_halfwidth, shape + (2,))
    xy = clean.xy + np.where(use_gauss[..., None], gauss, unif)
    xy[masked] = 0.0
    conf = np.where(masked, 0.0, clean.conf)
    return Skeleton2DSeq(xy, conf)


def synth_motion(n_joints: int, n_frames: int, fps: float, seed: int = 0,
                 root_relative: bool | None = None) -> tuple[Skeleton3DSeq, Skeleton2DSeq]:
    """Smooth pseudo-skeleton motion sampled at ``fps`` plus its exact 2D projection.

    Joints hang off a binary tree with random bone vectors that wobble by a few
    low-frequency sinusoids, so bone lengths stay roughly fixed.  The curves
    depend only on ``seed`` and ``n_joints``: doubling ``fps`` and ``n_frames``
    samples the same trajectories twice as densely.  ``root_relative`` defaults
    to True when there is more than one joint.
    """
    if n_joints < 1 or n_frames < 1 or not fps > 0:
        raise ValueError("n_joints and n_frames must be positive and fps > 0")
    if root_relative is None:
        root_relative = n_joints > 1
    rng = np.random.default_rng(seed)
    n_waves = 3
    rest = rng.normal(size=(n_joints, 3))
    rest *= rng.uniform(0.1, 0.3, size=(n_joints, 1)) / np.linalg.norm(rest, axis=1, keepdims=True)
    amp = rng.uniform(0.02, 0.08, size=(n_joints, n_waves, 3))
    freq = rng.uniform(0.2, 1.5, size=(n_joints, n_waves, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(n_joints, n_waves, 3))

    t = np.arange(n_frames) / fps
    wobble = np.sin(2 * np.pi * freq[None] * t[:, None, None, None] + phase[None])  # [F, J, W, 3]
    local = rest[None] + np.sum(amp[None] * wobble, axis=2)
    xyz = np.empty_like(local)
    for j in range(n_joints):
        parent = (j - 1) // 2
        xyz[:, j] = local[:, j] + (xyz[:, parent] if j > 0 else 0.0)
    if root_relative:
        xyz = xyz - xyz[:, :1]
    gt = Skeleton3DSeq(xyz)
    return gt, gt.project()


@dataclass
class TaskSample:
    inputs: np.ndarray  # [F, J, 3] model input
    gt3d: Skeleton3DSeq
    target2d: Skeleton2DSeq


def sinusoid_task(n_frames: int = 16, fps: float = 30.0, n_samples: int = 1, seed: int = 0) -> list[TaskSample]:
    """Single-joint lifting task: a 3D sinusoidal trajectory seen through its projection."""
    samples = []
    for i in range(n_samples):
        gt, proj = synth_motion(1, n_frames, fps, seed=seed + i)
        samples.append(TaskSample(proj.as_input(), gt, proj))
    return samples


@dataclass
class TrainResult:
    losses: list[float]
    phases: list[str]
    weights: ModelWeights


def _default_trainable(name: str) -> bool:
    return not name.endswith(".delta_log")


def toy_train(weights: ModelWeights, dataset: list[TaskSample], steps: int, step_size: float, *,
              method: str = "spsa", lambda_v: float = 1.0, schedule=None, trainable=None,
              h_rel: float = 1e-4, n_dirs: int = 4, seed: int = 0) -> TrainResult:
    """Finite-difference gradient descent on a small model.

    ``method="coord"`` takes central differences along every trainable
    coordinate; ``"spsa"`` averages ``n_dirs`` simultaneous Rademacher
    perturbations.  Perturbations are ``h_rel * max(|theta|, 1)``.  The
    descent uses losses divided by the number of (frame, joint) terms, while
    the returned trace holds the raw summed losses, one entry before the first
    step and one after each step.  ``schedule`` is a list of
    ``(n_steps, "3d" | "2d")`` phases; the default is all-3D.
    """
    if method not in ("coord", "spsa"):
        raise ValueError(f"unknown method {method!r}")
    schedule = list(schedule) if schedule is not None else [(steps, "3d")]
    labels = [kind for n, kind in schedule for _ in range(n)]
    if len(labels) < steps:
        labels += [schedule[-1][1]] * (steps - len(labels))
    if any(kind not in ("3d", "2d") for kind in labels):
        raise ValueError("schedule phases must be '3d' or '2d'")
    trainable = trainable or _default_trainable

    config = weights.config
    tensors = {k: v.copy() for k, v in weights.named_tensors().items()}
    names = [k for k in tensors if trainable(k)]
    sizes = [tensors[k].size for k in names]
    theta = np.concatenate([tensors[k].ravel() for k in names])
    n_terms = sum(s.gt3d.xyz.shape[0] * s.gt3d.xyz.shape[1] for s in dataset)
    inputs = [s.inputs[None] for s in dataset]
    rng = np.random.default_rng(seed)

    def build(vec):
        for name, chunk in zip(names, np.split(vec, np.cumsum(sizes)[:-1])):
            tensors[name] = chunk.reshape(tensors[name].shape)
        return ModelWeights.from_named_tensors(config, tensors)

    def total_loss(vec, kind):
        w = build(vec)
        total = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for x, sample in zip(inputs, dataset):
                pose = forward(w, x)[1][0]
                total += loss_3d(pose, sample.gt3d, lambda_v) if kind == "3d" else loss_2d(pose, sample.target2d)
        if not np.isfinite(total):
            worst = names[int(np.argmax([np.abs(c).max() for c in np.split(vec, np.cumsum(sizes)[:-1])]))]
            raise FloatingPointError(f"non-finite {kind} loss; largest-magnitude tensor is {worst}")
        return total

    first_kind = labels[0] if labels else schedule[0][1]
    losses, phases = [total_loss(theta, first_kind)], [first_kind]
    for i in range(steps):
        kind = labels[i]
        h = h_rel * np.maximum(np.abs(theta), 1.0)
        if method == "coord":
            grad = np.empty_like(theta)
            for c in range(theta.size):
                e = theta.copy()
                e[c] += h[c]
                up = total_loss(e, kind)
                e[c] -= 2 * h[c]
                grad[c] = (up - total_loss(e, kind)) / (2 * h[c])
        else:
            grad = np.zeros_like(theta)
            for _ in range(n_dirs):
                sign = rng.choice([-1.0, 1.0], size=theta.size)
                diff = total_loss(theta + h * sign, kind) - total_loss(theta - h * sign, kind)
                grad += diff / (2 * h * sign)
            grad /= n_dirs
        theta = theta - step_size * grad / n_terms
        losses.append(total_loss(theta, kind))
        phases.append(kind)
        log.debug("step %d (%s): loss %.6g", i + 1, kind, losses[-1])
    return TrainResult(losses, phases, build(theta))
