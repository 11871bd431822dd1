"""Diagonal state-space models for human motion with exact streaming inference."""

from .blocks import BlockWeights, bi_block_forward, flip, init_block, uni_block_forward, uni_block_step
from .model import HummussConfig, ModelState, ModelWeights, forward, init_model, spatiotemporal_forward, stream_step
from .seq import SsmState, conv_direct, conv_fft, conv_naive, rescale_delta, step
from .ssm import Discretized, DssmParams, compute_kernel, discretize, init_linear

__version__ = "0.1.0"

__all__ = [
    "BlockWeights", "Discretized", "DssmParams", "HummussConfig", "ModelState", "ModelWeights",
    "SsmState", "bi_block_forward", "compute_kernel", "conv_direct", "conv_fft", "conv_naive",
    "discretize", "flip", "forward", "init_block", "init_linear", "init_model", "rescale_delta",
    "spatiotemporal_forward", "step", "stream_step", "uni_block_forward", "uni_block_step",
]
