"""Convolutional and recurrent execution of a DSSM layer.

Sequences are ``[B, L, H]`` real arrays.  The convolutional paths take a
``[H, L]`` kernel (see :func:`hummuss.ssm.compute_kernel`) and a per-channel
feedthrough ``d``; the recurrent path advances an :class:`SsmState` by one
sample at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ssm import DssmParams, Discretized, discretize


def _check_conv_args(u, kernels, d):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 3:
        raise ValueError(f"expected [B, L, H] input, got shape {u.shape}")
    kernels = np.asarray(kernels, dtype=np.float64)
    _, length, channels = u.shape
    if kernels.shape != (channels, length):
        raise ValueError(f"kernel shape {kernels.shape} does not match (H={channels}, L={length})")
    d = np.zeros(channels) if d is None else np.broadcast_to(np.asarray(d, dtype=np.float64), (channels,))
    return u, kernels, d


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def conv_fft(u, kernels, d=None) -> np.ndarray:
    """Causal convolution via zero-padded real FFTs, plus feedthrough."""
    u, kernels, d = _check_conv_args(u, kernels, d)
    length = u.shape[1]
    n = next_pow2(2 * length - 1)
    u_f = np.fft.rfft(u, n=n, axis=1)
    k_f = np.fft.rfft(kernels.T, n=n, axis=0)
    y = np.fft.irfft(u_f * k_f, n=n, axis=1)[:, :length]
    return y + d * u


def conv_direct(u, kernels, d=None) -> np.ndarray:
    """Causal convolution as a lower-triangular Toeplitz product.

    ``O(L^2)`` per channel, but each output only ever sees earlier inputs
    multiplied by exact zeros, so changing future samples leaves past
    outputs bit-identical (the FFT path mixes rounding across the window).
    """
    u, kernels, d = _check_conv_args(u, kernels, d)
    length = u.shape[1]
    lag = np.arange(length)[:, None] - np.arange(length)[None, :]
    toeplitz = np.where(lag >= 0, kernels[:, np.clip(lag, 0, None)], 0.0)  # [H, L, L]
    y = np.einsum("hts,bsh->bth", toeplitz, u)
    return y + d * u


def conv_naive(u, kernels, d=None) -> np.ndarray:
    """Reference ``y_k = sum_{j<=k} K_j u_{k-j} + d u_k`` as an explicit double loop."""
    u, kernels, d = _check_conv_args(u, kernels, d)
    length = u.shape[1]
    y = np.zeros_like(u)
    for k in range(length):
        acc = np.zeros((u.shape[0], u.shape[2]))
        for j in range(k + 1):
            acc += kernels[:, j] * u[:, k - j, :]
        y[:, k, :] = acc + d * u[:, k, :]
    return y


@dataclass
class SsmState:
    """Complex recurrent state ``[..., H, P]`` owned by a single stream."""

    state: np.ndarray
    last_timestamp: float | None = None

    @classmethod
    def zeros(cls, channels: int, pairs: int, batch_shape=()) -> "SsmState":
        return cls(np.zeros((*batch_shape, channels, pairs), dtype=np.complex128))

    @classmethod
    def for_params(cls, params: DssmParams, batch_shape=()) -> "SsmState":
        return cls.zeros(params.channels, params.pairs, batch_shape)

    def reset(self) -> None:
        self.state[...] = 0
        self.last_timestamp = None

    @property
    def nbytes(self) -> int:
        return self.state.nbytes


def step(params: DssmParams, state: SsmState, u_t, disc: Discretized | None = None) -> np.ndarray:
    """Advance ``state`` by one input sample ``u_t`` of shape ``[..., H]``; return ``y_t``.

    ``disc`` overrides the parameters' own discretization, e.g. one produced
    by :func:`rescale_delta` for an irregular frame gap.
    """
    u_t = np.asarray(u_t, dtype=np.float64)
    if state.state.shape[-2:] != (params.channels, params.pairs):
        raise ValueError(
            f"state {state.state.shape[-2:]} does not match params ({params.channels}, {params.pairs})"
        )
    if u_t.shape != state.state.shape[:-1]:
        raise ValueError(f"input shape {u_t.shape} does not match state batch/channels {state.state.shape[:-1]}")
    if disc is None:
        disc = discretize(params)
    x = state.state
    x *= disc.a_bar
    x += disc.b_bar * u_t[..., None]
    return 2.0 * np.einsum("...hp,hp->...h", x, params.c).real + params.d * u_t


def rescale_delta(params: DssmParams, factor: float) -> Discretized:
    """Discretization at ``factor * delta``; learned ``lam`` and ``c`` are untouched."""
    if not factor > 0:
        raise ValueError(f"rescale factor must be positive, got {factor}")
    return discretize(params, factor)


def run_recurrent(params: DssmParams, u, delta_scale: float = 1.0) -> np.ndarray:
    """Step a whole ``[B, L, H]`` sequence from zero state."""
    u = np.asarray(u, dtype=np.float64)
    state = SsmState.for_params(params, batch_shape=(u.shape[0],))
    disc = discretize(params, delta_scale)
    return np.stack([step(params, state, u[:, t], disc) for t in range(u.shape[1])], axis=1)
