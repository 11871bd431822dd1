"""The full spatiotemporal network and its streaming (causal) execution."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction

import numpy as np

from .blocks import (
    AGGREGATIONS,
    BlockWeights,
    bi_block_forward,
    block_shapes,
    combine,
    init_block,
    new_block_state,
    reduced_width,
    softmax,
    uni_block_forward,
    uni_block_step,
)
from .errors import ConfigError, MissingTensorError, ModeError, ShapeMismatchError, UnknownTensorError
from .seq import SsmState
from .ssm import discretize

# how close a timestamp-derived rescale factor must be to 1 to reuse the nominal discretization
_UNIT_FACTOR_TOL = 1e-9


@dataclass
class HummussConfig:
    n_blocks: int = 5
    d_in: int = 3
    d_m: int = 256
    d_rep: int = 512
    state_dim: int = 128
    k_spatial: int = 1
    k_temporal: int = 2
    n_expand: Fraction | None = None  # None picks 3 (causal) or 5/2 (bidirectional)
    causal: bool = False
    nominal_fps: float = 30.0
    block_agg: str = "gate"
    fusion: str = "learned"

    def __post_init__(self):
        if self.n_expand is None:
            self.n_expand = Fraction(3) if self.causal else Fraction(5, 2)
        self.n_expand = Fraction(self.n_expand)
        self.validate()

    def validate(self) -> None:
        for name in ("n_blocks", "d_in", "d_m", "d_rep", "state_dim", "k_spatial", "k_temporal"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.state_dim % 2:
            raise ConfigError(f"state_dim must be even, got {self.state_dim}")
        if (self.n_expand * self.d_m).denominator != 1:
            raise ConfigError(f"n_expand * d_m = {self.n_expand * self.d_m} is not an integer")
        for k in (self.k_spatial, self.k_temporal):
            if self.d_m % k:
                raise ConfigError(f"d_m={self.d_m} not divisible by k={k}")
        if self.block_agg not in AGGREGATIONS or self.fusion not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
        if not self.nominal_fps > 0:
            raise ConfigError("nominal_fps must be positive")

    def to_text(self) -> str:
        """``key=value`` lines in field order (the weights-file config record)."""
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, bool):
                value = int(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "HummussConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep or key not in types:
                raise ConfigError(f"bad config entry {line!r}")
            if key in ("block_agg", "fusion"):
                kwargs[key] = value
            elif key == "n_expand":
                kwargs[key] = Fraction(value)
            elif key == "causal":
                kwargs[key] = bool(int(value))
            elif key == "nominal_fps":
                kwargs[key] = float(value)
            else:
                kwargs[key] = int(value)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


BLOCK_SLOTS = ("stream1.spatial", "stream1.temporal", "stream2.temporal", "stream2.spatial")


@dataclass(eq=False)
class LayerWeights:
    s1_spatial: BlockWeights
    s1_temporal: BlockWeights
    s2_temporal: BlockWeights
    s2_spatial: BlockWeights
    w_fuse: np.ndarray | None = None

    def blocks(self):
        return dict(zip(BLOCK_SLOTS, (self.s1_spatial, self.s1_temporal, self.s2_temporal, self.s2_spatial)))


@dataclass(eq=False)
class ModelWeights:
    config: HummussConfig
    lift_w: np.ndarray
    lift_b: np.ndarray
    layers: list[LayerWeights]
    head_w: np.ndarray
    head_b: np.ndarray
    readout_w: np.ndarray
    readout_b: np.ndarray

    def named_tensors(self) -> dict[str, np.ndarray]:
        """All parameters under their canonical dotted names, in file order."""
        out = {"lift.w": self.lift_w, "lift.b": self.lift_b}
        for i, layer in enumerate(self.layers):
            for slot, block in layer.blocks().items():
                for name, arr in block.named_arrays().items():
                    out[f"blocks.{i}.{slot}.{name}"] = arr
            if layer.w_fuse is not None:
                out[f"blocks.{i}.fuse.w"] = layer.w_fuse
        out.update({"head.w": self.head_w, "head.b": self.head_b,
                    "readout.w": self.readout_w, "readout.b": self.readout_b})
        return out

    @classmethod
    def from_named_tensors(cls, config: HummussConfig, tensors: dict[str, np.ndarray]) -> "ModelWeights":
        expected = expected_shapes(config)
        unknown = [name for name in tensors if name not in expected]
        if unknown:
            raise UnknownTensorError(f"unknown tensor name(s): {', '.join(unknown[:5])}")
        missing = [name for name in expected if name not in tensors]
        if missing:
            raise MissingTensorError(f"missing tensor(s): {', '.join(missing[:5])}")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ShapeMismatchError(f"{name}: expected shape {shape}, got {tuple(tensors[name].shape)}")
        t = {name: np.asarray(arr, dtype=np.float64) for name, arr in tensors.items()}
        layers = []
        for i in range(config.n_blocks):
            blocks = []
            for slot in BLOCK_SLOTS:
                prefix = f"blocks.{i}.{slot}."
                arrays = {name[len(prefix):]: arr for name, arr in t.items() if name.startswith(prefix)}
                blocks.append(BlockWeights.from_arrays(arrays, agg=config.block_agg))
            layers.append(LayerWeights(*blocks, w_fuse=t.get(f"blocks.{i}.fuse.w")))
        return cls(config, t["lift.w"], t["lift.b"], layers, t["head.w"], t["head.b"],
                   t["readout.w"], t["readout.b"])

    def num_params(self) -> int:
        return sum(arr.size for arr in self.named_tensors().values())


def _block_plan(config: HummussConfig):
    """``slot -> (k, bidirectional)`` for the four blocks of a layer."""
    temporal_bi = not config.causal
    return {
        "stream1.spatial": (config.k_spatial, True),
        "stream1.temporal": (config.k_temporal, temporal_bi),
        "stream2.temporal": (config.k_temporal, temporal_bi),
        "stream2.spatial": (config.k_spatial, True),
    }


def expected_shapes(config: HummussConfig) -> dict[str, tuple]:
    """Canonical tensor names and shapes implied by a config, in file order."""
    out = {"lift.w": (config.d_in, config.d_m), "lift.b": (config.d_m,)}
    pairs = config.state_dim // 2
    for i in range(config.n_blocks):
        for slot, (k, bi) in _block_plan(config).items():
            prefix = f"blocks.{i}.{slot}."
            for name, shape in block_shapes(config.d_m, k, config.n_expand, bi, config.block_agg).items():
                out[prefix + name] = shape
            narrow = reduced_width(config.d_m, k)
            for tag in ("fwd", "bwd") if bi else ("fwd",):
                for name in ("lambda_re", "lambda_im", "c_re", "c_im"):
                    out[f"{prefix}{tag}.{name}"] = (narrow, pairs)
                out[f"{prefix}{tag}.delta_log"] = (narrow,)
                out[f"{prefix}{tag}.d"] = (narrow,)
        if config.fusion == "learned":
            out[f"blocks.{i}.fuse.w"] = (2 * config.d_m, 2)
    out.update({"head.w": (config.d_m, config.d_rep), "head.b": (config.d_rep,),
                "readout.w": (config.d_rep, 3), "readout.b": (3,)})
    return out


def init_model(config: HummussConfig, seed: int | np.random.Generator = 0) -> ModelWeights:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def affine(n_in, n_out):
        bound = 1.0 / np.sqrt(n_in)
        return rng.uniform(-bound, bound, (n_in, n_out)), rng.uniform(-bound, bound, n_out)

    lift_w, lift_b = affine(config.d_in, config.d_m)
    layers = []
    for _ in range(config.n_blocks):
        blocks = [init_block(config.d_m, k, config.n_expand, config.state_dim, rng, bi, config.block_agg)
                  for k, bi in _block_plan(config).values()]
        w_fuse = None
        if config.fusion == "learned":
            bound = 1.0 / np.sqrt(2 * config.d_m)
            w_fuse = rng.uniform(-bound, bound, (2 * config.d_m, 2))
        layers.append(LayerWeights(*blocks, w_fuse=w_fuse))
    head_w, head_b = affine(config.d_m, config.d_rep)
    readout_w, readout_b = affine(config.d_rep, 3)
    return ModelWeights(config, lift_w, lift_b, layers, head_w, head_b, readout_w, readout_b)


def _temporal(block: BlockWeights, x, conv, delta_scale):
    if block.bidirectional:
        return bi_block_forward(x, block, "fft" if conv is None else conv, delta_scale)
    # the Toeplitz path keeps causal outputs bit-identical under future changes
    return uni_block_forward(x, block, "direct" if conv is None else conv, delta_scale)


def fuse(x_st, x_ts, layer: LayerWeights, mode: str):
    """Per-position fusion of the two streams; also returns the 2-way weights for ``learned``."""
    if mode == "learned":
        alpha = softmax(np.concatenate([x_st, x_ts], axis=-1) @ layer.w_fuse)
        return alpha[..., :1] * x_st + alpha[..., 1:] * x_ts, alpha
    return combine(x_st, x_ts, mode), None


def spatiotemporal_forward(x, layer: LayerWeights, config: HummussConfig, delta_scale: float = 1.0,
                           conv: str | None = None, return_alpha: bool = False):
    """One dual-stream layer on ``[B, F, J, D_m]``.

    Stream 1 runs the spatial block over joints and then the temporal block
    over frames; stream 2 runs them in the opposite order.  ``delta_scale``
    rescales the temporal DSSM steps only (joint index is not time).
    """
    x = np.asarray(x, dtype=np.float64)
    b, f, j, d = x.shape
    if d != config.d_m:
        raise ValueError(f"expected model width {config.d_m}, got {d}")

    x_s = bi_block_forward(x.reshape(b * f, j, d), layer.s1_spatial)
    x_s = x_s.reshape(b, f, j, d).transpose(0, 2, 1, 3).reshape(b * j, f, d)
    x_ts = _temporal(layer.s1_temporal, x_s, conv, delta_scale)
    x_ts = x_ts.reshape(b, j, f, d).transpose(0, 2, 1, 3)

    x_t = _temporal(layer.s2_temporal, x.transpose(0, 2, 1, 3).reshape(b * j, f, d), conv, delta_scale)
    x_t = x_t.reshape(b, j, f, d).transpose(0, 2, 1, 3).reshape(b * f, j, d)
    x_st = bi_block_forward(x_t, layer.s2_spatial).reshape(b, f, j, d)

    out, alpha = fuse(x_st, x_ts, layer, config.fusion)
    return (out, alpha) if return_alpha else out


def forward(weights: ModelWeights, u, delta_scale: float = 1.0, conv: str | None = None):
    """Map ``[B, F, J, D_in]`` keypoints to ``(representation [.., D_rep], pose3d [.., 3])``."""
    config = weights.config
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 4 or u.shape[-1] != config.d_in:
        raise ConfigError(f"expected [B, F, J, {config.d_in}] input, got {u.shape}")
    x = u @ weights.lift_w + weights.lift_b
    for layer in weights.layers:
        x = spatiotemporal_forward(x, layer, config, delta_scale, conv)
    rep = x @ weights.head_w + weights.head_b
    return rep, rep @ weights.readout_w + weights.readout_b


@dataclass
class ModelState:
    """Recurrent memory of a causal model: one state per temporal block, per joint."""

    temporal: list[tuple[SsmState, SsmState]] = field(default_factory=list)
    last_timestamp: float | None = None

    @classmethod
    def for_model(cls, weights: ModelWeights, n_joints: int) -> "ModelState":
        states = [(new_block_state(layer.s1_temporal, (n_joints,)),
                   new_block_state(layer.s2_temporal, (n_joints,))) for layer in weights.layers]
        return cls(states)

    def reset(self) -> None:
        for pair in self.temporal:
            for s in pair:
                s.reset()
        self.last_timestamp = None

    @property
    def n_joints(self) -> int | None:
        return self.temporal[0][0].state.shape[0] if self.temporal else None

    @property
    def complex_count(self) -> int:
        return sum(s.state.size for pair in self.temporal for s in pair)

    @property
    def nbytes(self) -> int:
        return sum(s.nbytes for pair in self.temporal for s in pair)


def _step_factor(state: ModelState, timestamp: float | None, fps: float) -> float:
    if timestamp is None:
        return 1.0
    last = state.last_timestamp
    if last is not None and not timestamp > last:
        raise ValueError(f"timestamps must increase: {timestamp} after {last}")
    state.last_timestamp = timestamp
    if last is None:
        return 1.0
    factor = (timestamp - last) * fps
    return 1.0 if abs(factor - 1.0) < _UNIT_FACTOR_TOL else factor


def stream_step_full(weights: ModelWeights, frame, timestamp: float | None, state: ModelState):
    """Like :func:`stream_step` but returns ``(representation [J, D_rep], pose3d [J, 3])``."""
    config = weights.config
    if not config.causal:
        raise ModeError("streaming requires a causal model")
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or frame.shape[-1] != config.d_in:
        raise ConfigError(f"expected [J, {config.d_in}] frame, got {frame.shape}")
    if not state.temporal:
        state.temporal = ModelState.for_model(weights, frame.shape[0]).temporal
    elif state.n_joints != frame.shape[0]:
        raise ValueError(f"state holds {state.n_joints} joints, frame has {frame.shape[0]}")
    factor = _step_factor(state, timestamp, config.nominal_fps)

    x = frame @ weights.lift_w + weights.lift_b  # [J, D_m]
    for layer, (st1, st2) in zip(weights.layers, state.temporal):
        x_s = bi_block_forward(x[None], layer.s1_spatial)[0]
        x_ts = uni_block_step(x_s, layer.s1_temporal, st1, discretize(layer.s1_temporal.fwd, factor))
        x_t = uni_block_step(x, layer.s2_temporal, st2, discretize(layer.s2_temporal.fwd, factor))
        x_st = bi_block_forward(x_t[None], layer.s2_spatial)[0]
        x, _ = fuse(x_st, x_ts, layer, config.fusion)
    rep = x @ weights.head_w + weights.head_b
    return rep, rep @ weights.readout_w + weights.readout_b


def stream_step(weights: ModelWeights, frame, timestamp: float | None, state: ModelState):
    """Process one ``[J, D_in]`` frame in O(1) memory; returns ``[J, 3]``.

    Spatial blocks see all joints of the frame at once; temporal blocks advance
    one recurrent step.  A timestamp gap of ``g`` seconds scales the temporal
    step size by ``g * nominal_fps``.
    """
    return stream_step_full(weights, frame, timestamp, state)[1]
