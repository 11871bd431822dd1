"""Diagonal SSM parameters, zero-order-hold discretization and closed-form kernels.

A DSSM layer with ``H`` channels keeps one independent diagonal SSM per
channel.  Only one member of each complex-conjugate eigenvalue pair is stored,
so every array below has a trailing axis of ``P = N_s / 2`` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def complex_expm1(z: np.ndarray) -> np.ndarray:
    """``exp(z) - 1`` without cancellation for small ``|z|``."""
    z = np.asarray(z, dtype=np.complex128)
    x, y = z.real, z.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


@dataclass(eq=False)
class DssmParams:
    """Learnable parameters of a DSSM layer, shaped ``[H, P]`` (or ``[H]``).

    The diagonal state matrix is ``-exp(lambda_re) + 1j * lambda_im`` and the
    step size is ``exp(delta_log)`` seconds.  Instances are treated as
    immutable: derived kernels and discretizations are memoised on the object.
    """

    lambda_re: np.ndarray
    lambda_im: np.ndarray
    c: np.ndarray
    delta_log: np.ndarray
    d: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.lambda_re = np.atleast_2d(np.asarray(self.lambda_re, dtype=np.float64))
        self.lambda_im = np.atleast_2d(np.asarray(self.lambda_im, dtype=np.float64))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=np.complex128))
        self.delta_log = np.atleast_1d(np.asarray(self.delta_log, dtype=np.float64))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=np.float64))
        shape = self.lambda_re.shape
        if self.lambda_im.shape != shape or self.c.shape != shape:
            raise ValueError(
                f"lambda_re {shape}, lambda_im {self.lambda_im.shape} and c {self.c.shape} must agree"
            )
        if self.delta_log.shape != (shape[0],) or self.d.shape != (shape[0],):
            raise ValueError(f"delta_log and d must have shape ({shape[0]},)")

    @property
    def channels(self) -> int:
        return self.lambda_re.shape[0]

    @property
    def pairs(self) -> int:
        return self.lambda_re.shape[1]

    @property
    def state_dim(self) -> int:
        return 2 * self.pairs

    @property
    def lam(self) -> np.ndarray:
        """Complex diagonal entries, ``[H, P]``; real parts are strictly negative."""
        return -np.exp(self.lambda_re) + 1j * self.lambda_im

    @property
    def delta(self) -> np.ndarray:
        return np.exp(self.delta_log)

    def num_params(self) -> int:
        # c counts twice: real and imaginary parts
        return 4 * self.lambda_re.size + self.delta_log.size + self.d.size


@dataclass(frozen=True)
class Discretized:
    """ZOH-discretized transition ``a_bar = e^{lam*dt}`` and input gain ``b_bar``."""

    a_bar: np.ndarray
    b_bar: np.ndarray


_CACHE_LIMIT = 64


def _remember(params: DssmParams, key, value):
    if len(params._cache) >= _CACHE_LIMIT:
        params._cache.clear()
    params._cache[key] = value
    return value


def init_linear(state_dim: int, rng: np.random.Generator, channels: int = 1) -> DssmParams:
    """Linear initialization: real part -1/2, imaginary part ``pi * j``.

    ``c`` gets independent standard-normal real and imaginary parts and the
    step size is drawn uniformly from [0.001, 0.1] per channel.
    """
    if not isinstance(state_dim, (int, np.integer)) or state_dim < 2 or state_dim % 2:
        raise ValueError(f"state_dim must be a positive even integer, got {state_dim!r}")
    if channels < 1:
        raise ValueError(f"channels must be positive, got {channels}")
    pairs = state_dim // 2
    lambda_re = np.full((channels, pairs), np.log(0.5))
    lambda_im = np.tile(np.pi * np.arange(1, pairs + 1, dtype=np.float64), (channels, 1))
    c = rng.standard_normal((channels, pairs)) + 1j * rng.standard_normal((channels, pairs))
    delta_log = np.log(rng.uniform(0.001, 0.1, size=channels))
    return DssmParams(lambda_re, lambda_im, c, delta_log, np.zeros(channels))


def discretize(params: DssmParams, delta_scale: float = 1.0) -> Discretized:
    """Zero-order hold at step ``delta * delta_scale``; memoised per scale."""
    key = ("disc", float(delta_scale))
    hit = params._cache.get(key)
    if hit is not None:
        return hit
    if not delta_scale > 0:
        raise ValueError(f"delta_scale must be positive, got {delta_scale}")
    lam = params.lam
    dt_lam = lam * (params.delta * delta_scale)[:, None]
    # exp for a_bar keeps relative accuracy when |a_bar| is small; expm1 for b_bar avoids cancellation near 0
    return _remember(params, key, Discretized(a_bar=np.exp(dt_lam), b_bar=complex_expm1(dt_lam) / lam))


def compute_kernel(params: DssmParams, length: int, delta_scale: float = 1.0) -> np.ndarray:
    """Real convolution kernel ``[H, length]`` of every channel.

    ``taps[h, k] = Re(2 * sum_j c_j * b_bar_j * exp(lam_j * k * dt))``, a
    Vandermonde product costing ``O(H * P * L)``.
    """
    if length < 1:
        raise ValueError(f"kernel length must be >= 1, got {length}")
    key = ("kernel", int(length), float(delta_scale))
    hit = params._cache.get(key)
    if hit is not None:
        return hit
    disc = discretize(params, delta_scale)
    dt_lam = params.lam * (params.delta * delta_scale)[:, None]
    powers = np.exp(dt_lam[:, :, None] * np.arange(length))
    taps = 2.0 * np.einsum("hp,hpl->hl", params.c * disc.b_bar, powers).real
    taps.setflags(write=False)
    return _remember(params, key, taps)
