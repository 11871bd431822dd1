"""Gated DSSM blocks over ``[B, L, D_m]`` sequences.

The bidirectional block mixes an identity pathway with forward and backward
DSSM pathways; the unidirectional (causal) block drops the backward pathway.
Pathways are merged by multiplicative gating unless another aggregation is
selected (``"mean"`` or ``"learned"`` softmax pooling).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import erf

from .seq import SsmState, conv_direct, conv_fft, conv_naive, step
from .ssm import DssmParams, Discretized, compute_kernel, discretize, init_linear

AGGREGATIONS = ("gate", "mean", "learned")
_CONVS = {"fft": conv_fft, "direct": conv_direct, "naive": conv_naive}
LN_EPS = 1e-5


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def layer_norm(x, gamma, beta, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def combine(a, b, mode: str = "gate", w=None):
    """Merge two equally shaped pathways.

    ``gate`` is the Hadamard product, ``mean`` the average, and ``learned``
    weights each position by ``softmax(concat(a, b) @ w)`` over the pair.
    """
    if mode == "gate":
        return a * b
    if mode == "mean":
        return 0.5 * (a + b)
    if mode == "learned":
        alpha = softmax(np.concatenate([a, b], axis=-1) @ w)
        return alpha[..., :1] * a + alpha[..., 1:] * b
    raise ValueError(f"unknown aggregation {mode!r}; expected one of {AGGREGATIONS}")


def expanded_width(d_m: int, n) -> int:
    width = Fraction(n) * d_m
    if width.denominator != 1 or width <= 0:
        raise ValueError(f"expansion n={n} times D_m={d_m} must be a positive integer")
    return int(width)


def reduced_width(d_m: int, k: int) -> int:
    if k < 1 or d_m % k:
        raise ValueError(f"D_m={d_m} must be divisible by reduction factor k={k}")
    return d_m // k


@dataclass(eq=False)
class BlockWeights:
    """Weights of one gated block; backward-pathway fields are ``None`` for causal blocks."""

    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    w_id: np.ndarray
    w_f1: np.ndarray
    w_f2: np.ndarray
    w_out: np.ndarray
    fwd: DssmParams
    w_b1: np.ndarray | None = None
    w_b2: np.ndarray | None = None
    w_cb: np.ndarray | None = None
    bwd: DssmParams | None = None
    agg: str = "gate"
    w_agg1: np.ndarray | None = None
    w_agg2: np.ndarray | None = None

    @property
    def bidirectional(self) -> bool:
        return self.bwd is not None

    @property
    def d_m(self) -> int:
        return self.w_id.shape[0]

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Flat ``name -> array`` view in canonical order (complex ``c`` split)."""
        out = {"ln_gamma": self.ln_gamma, "ln_beta": self.ln_beta, "w_id": self.w_id,
               "w_f1": self.w_f1, "w_f2": self.w_f2}
        if self.bidirectional:
            out.update(w_b1=self.w_b1, w_b2=self.w_b2, w_cb=self.w_cb)
        out["w_out"] = self.w_out
        if self.agg == "learned":
            out["w_agg1"] = self.w_agg1
            if self.bidirectional:
                out["w_agg2"] = self.w_agg2
        for tag, p in (("fwd", self.fwd), ("bwd", self.bwd)):
            if p is None:
                continue
            out.update({
                f"{tag}.lambda_re": p.lambda_re, f"{tag}.lambda_im": p.lambda_im,
                f"{tag}.c_re": p.c.real, f"{tag}.c_im": p.c.imag,
                f"{tag}.delta_log": p.delta_log, f"{tag}.d": p.d,
            })
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], agg: str = "gate") -> "BlockWeights":
        def ssm(tag):
            if f"{tag}.lambda_re" not in arrays:
                return None
            return DssmParams(
                arrays[f"{tag}.lambda_re"], arrays[f"{tag}.lambda_im"],
                arrays[f"{tag}.c_re"] + 1j * arrays[f"{tag}.c_im"],
                arrays[f"{tag}.delta_log"], arrays[f"{tag}.d"],
            )

        return cls(
            ln_gamma=arrays["ln_gamma"], ln_beta=arrays["ln_beta"], w_id=arrays["w_id"],
            w_f1=arrays["w_f1"], w_f2=arrays["w_f2"], w_out=arrays["w_out"], fwd=ssm("fwd"),
            w_b1=arrays.get("w_b1"), w_b2=arrays.get("w_b2"), w_cb=arrays.get("w_cb"), bwd=ssm("bwd"),
            agg=agg, w_agg1=arrays.get("w_agg1"), w_agg2=arrays.get("w_agg2"),
        )

    def num_params(self) -> int:
        return sum(a.size for a in self.named_arrays().values())


def block_shapes(d_m: int, k: int, n, bidirectional: bool, agg: str = "gate") -> dict[str, tuple]:
    """Expected shape of every matrix in a block (DSSM parameters excluded)."""
    wide = expanded_width(d_m, n)
    narrow = reduced_width(d_m, k)
    shapes = {"ln_gamma": (d_m,), "ln_beta": (d_m,), "w_id": (d_m, wide), "w_f1": (d_m, narrow)}
    if bidirectional:
        shapes.update(w_f2=(narrow, d_m), w_b1=(d_m, narrow), w_b2=(narrow, d_m), w_cb=(d_m, wide))
    else:
        shapes["w_f2"] = (narrow, wide)
    shapes["w_out"] = (wide, d_m)
    if agg == "learned":
        shapes["w_agg1"] = (2 * d_m, 2) if bidirectional else (2 * wide, 2)
        if bidirectional:
            shapes["w_agg2"] = (2 * wide, 2)
    return shapes


def _uniform(rng, shape):
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)


def init_block(d_m: int, k: int, n, state_dim: int, rng: np.random.Generator,
               bidirectional: bool, agg: str = "gate") -> BlockWeights:
    """Random block: fan-in scaled uniform matrices, unit layer norm, linear-init DSSMs."""
    if agg not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {agg!r}")
    shapes = block_shapes(d_m, k, n, bidirectional, agg)
    arrays = {}
    for name, shape in shapes.items():
        if name == "ln_gamma":
            arrays[name] = np.ones(shape)
        elif name == "ln_beta":
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = _uniform(rng, shape)
    narrow = reduced_width(d_m, k)
    fwd = init_linear(state_dim, rng, channels=narrow)
    bwd = init_linear(state_dim, rng, channels=narrow) if bidirectional else None
    return BlockWeights(
        ln_gamma=arrays["ln_gamma"], ln_beta=arrays["ln_beta"], w_id=arrays["w_id"],
        w_f1=arrays["w_f1"], w_f2=arrays["w_f2"], w_out=arrays["w_out"], fwd=fwd,
        w_b1=arrays.get("w_b1"), w_b2=arrays.get("w_b2"), w_cb=arrays.get("w_cb"), bwd=bwd,
        agg=agg, w_agg1=arrays.get("w_agg1"), w_agg2=arrays.get("w_agg2"),
    )


def flip(x):
    """Reverse the sequence axis of a ``[B, L, H]`` tensor."""
    return np.asarray(x)[:, ::-1, :]


def dssm(params: DssmParams, u, conv: str = "fft", delta_scale: float = 1.0):
    """Apply a DSSM layer to ``[B, L, H]`` with the chosen convolution routine."""
    kernels = compute_kernel(params, u.shape[1], delta_scale)
    return _CONVS[conv](u, kernels, params.d)


def _check_input(x, w: BlockWeights):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[-1] != w.d_m:
        raise ValueError(f"expected [B, L, {w.d_m}] input, got {x.shape}")
    return x


def bi_block_forward(x, w: BlockWeights, conv: str = "fft", delta_scale: float = 1.0):
    if not w.bidirectional:
        raise ValueError("bi_block_forward needs backward-pathway weights")
    x = _check_input(x, w)
    x_n = layer_norm(x, w.ln_gamma, w.ln_beta)
    x_id = gelu(x_n @ w.w_id)
    x_f = dssm(w.fwd, gelu(x_n @ w.w_f1), conv, delta_scale) @ w.w_f2
    x_b = flip(dssm(w.bwd, gelu(flip(x_n) @ w.w_b1), conv, delta_scale) @ w.w_b2)
    x_cb = gelu(combine(x_f, x_b, w.agg, w.w_agg1) @ w.w_cb)
    return x + combine(x_cb, x_id, w.agg, w.w_agg2) @ w.w_out


def uni_block_forward(x, w: BlockWeights, conv: str = "fft", delta_scale: float = 1.0):
    x = _check_input(x, w)
    x_n = layer_norm(x, w.ln_gamma, w.ln_beta)
    x_id = gelu(x_n @ w.w_id)
    x_f = dssm(w.fwd, gelu(x_n @ w.w_f1), conv, delta_scale) @ w.w_f2
    return x + combine(x_f, x_id, w.agg, w.w_agg1) @ w.w_out


def new_block_state(w: BlockWeights, batch_shape=()) -> SsmState:
    return SsmState.for_params(w.fwd, batch_shape)


def uni_block_step(u_t, w: BlockWeights, state: SsmState, disc: Discretized | None = None):
    """One time step of the causal block on ``[..., D_m]``; mutates ``state``."""
    if w.bidirectional:
        raise ValueError("only unidirectional blocks can be stepped")
    u_t = np.asarray(u_t, dtype=np.float64)
    if u_t.shape[-1] != w.d_m:
        raise ValueError(f"expected trailing width {w.d_m}, got {u_t.shape}")
    x_n = layer_norm(u_t, w.ln_gamma, w.ln_beta)
    x_id = gelu(x_n @ w.w_id)
    x_f = step(w.fwd, state, gelu(x_n @ w.w_f1), disc if disc is not None else discretize(w.fwd)) @ w.w_f2
    return u_t + combine(x_f, x_id, w.agg, w.w_agg1) @ w.w_out
