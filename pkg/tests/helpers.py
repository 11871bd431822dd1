"""Shared random generators and slow reference implementations for the test-suite."""

import cmath
import math

import numpy as np

from hummuss.ssm import DssmParams


def random_params(rng, channels=1, pairs=2, d=True, delta=None):
    """Stable random DSSM parameters spanning slow/fast decay and low/high frequency."""
    lambda_re = rng.uniform(-3.0, 1.0, (channels, pairs))
    lambda_im = rng.uniform(0.0, 60.0, (channels, pairs))
    c = rng.standard_normal((channels, pairs)) + 1j * rng.standard_normal((channels, pairs))
    if delta is None:
        delta_log = np.log(rng.uniform(0.001, 0.1, channels))
    else:
        delta_log = np.full(channels, np.log(delta))
    dd = rng.standard_normal(channels) if d else np.zeros(channels)
    return DssmParams(lambda_re, lambda_im, c, delta_log, dd)


def loop_kernel(params, length, delta_scale=1.0):
    """Kernel by unrolling the recurrence: Re(2 sum_j c_j a_j^k b_j), a^k by repeated products."""
    out = np.zeros((params.channels, length))
    for h in range(params.channels):
        dt = math.exp(params.delta_log[h]) * delta_scale
        for j in range(params.pairs):
            lam = complex(-math.exp(params.lambda_re[h, j]), params.lambda_im[h, j])
            a = cmath.exp(lam * dt)
            b = (a - 1) / lam
            power = 1.0 + 0j
            for k in range(length):
                out[h, k] += (2 * params.c[h, j] * power * b).real
                power *= a
    return out


def ref_gelu(x):
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def ref_layer_norm(v, gamma, beta, eps=1e-5):
    n = len(v)
    mu = sum(v) / n
    var = sum((x - mu) ** 2 for x in v) / n
    return [(x - mu) / math.sqrt(var + eps) * g + b for x, g, b in zip(v, gamma, beta)]


def ref_matvec(v, m):
    return [sum(v[i] * m[i][j] for i in range(len(v))) for j in range(len(m[0]))]


def ref_dssm(seq, params):
    """Naive causal convolution of a [L][H] list-of-lists with loop kernels."""
    length = len(seq)
    kern = loop_kernel(params, length)
    out = []
    for t in range(length):
        row = []
        for h in range(params.channels):
            acc = sum(kern[h, j] * seq[t - j][h] for j in range(t + 1))
            row.append(acc + params.d[h] * seq[t][h])
        out.append(row)
    return out


def ref_block(x, w, bidirectional):
    """Straight-line scalar evaluation of one gated block on a single [L][D] sequence."""
    gelu_v = lambda v: [ref_gelu(a) for a in v]  # noqa: E731
    x = [list(map(float, row)) for row in x]
    xn = [ref_layer_norm(row, w.ln_gamma, w.ln_beta) for row in x]
    x_id = [gelu_v(ref_matvec(r, w.w_id)) for r in xn]
    f_in = [gelu_v(ref_matvec(r, w.w_f1)) for r in xn]
    x_f = [ref_matvec(r, w.w_f2) for r in ref_dssm(f_in, w.fwd)]
    if bidirectional:
        rev = xn[::-1]
        b_in = [gelu_v(ref_matvec(r, w.w_b1)) for r in rev]
        x_b = [ref_matvec(r, w.w_b2) for r in ref_dssm(b_in, w.bwd)][::-1]
        gated = [[a * b for a, b in zip(ra, rb)] for ra, rb in zip(x_f, x_b)]
        x_cb = [gelu_v(ref_matvec(r, w.w_cb)) for r in gated]
        mixed = [[a * b for a, b in zip(ra, rb)] for ra, rb in zip(x_cb, x_id)]
    else:
        mixed = [[a * b for a, b in zip(ra, rb)] for ra, rb in zip(x_f, x_id)]
    return [[xi + oi for xi, oi in zip(xr, ref_matvec(mr, w.w_out))] for xr, mr in zip(x, mixed)]


def loop_loss_3d(pred, gt, lam):
    total = 0.0
    frames, joints, _ = pred.shape
    for t in range(frames):
        for j in range(joints):
            total += sum((pred[t, j, c] - gt[t, j, c]) ** 2 for c in range(3))
            if t >= 1:
                total += lam * sum(
                    ((pred[t, j, c] - pred[t - 1, j, c]) - (gt[t, j, c] - gt[t - 1, j, c])) ** 2 for c in range(3)
                )
    return total


def loop_loss_2d(pred, xy, conf):
    total = 0.0
    frames, joints, _ = pred.shape
    for t in range(frames):
        for j in range(joints):
            total += conf[t, j] * sum((pred[t, j, c] - xy[t, j, c]) ** 2 for c in range(2))
    return total
