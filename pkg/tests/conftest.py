"""Shared fixtures and independent oracles for the test suite.

Oracles here are deliberately naive (nested loops, explicit scans) and stay
independent of the vectorized implementations they check.
"""

import numpy as np
import pytest

from orthoprune.network import (
    build_network,
    conv_spec,
    dense_spec,
    flatten_spec,
    maxpool_spec,
    relu_spec,
)
from orthoprune.training import OrthoConfig, total_loss


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------

def conv2d_loops(x, w, b, stride, pad):
    """Five-nested-loop convolution reference."""
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    xp = np.pad(np.asarray(x, dtype=np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, c_out, h_out, w_out))
    for ni in range(n):
        for co in range(c_out):
            for i in range(h_out):
                for j in range(w_out):
                    acc = 0.0
                    for ci in range(c_in):
                        for p in range(k):
                            for q in range(k):
                                acc += xp[ni, ci, i * stride + p, j * stride + q] * float(w[co, ci, p, q])
                    out[ni, co, i, j] = acc + float(b[co])
    return out


def maxpool2d_scan(x, window, stride):
    """Window-scan pooling reference."""
    n, c, h, w = x.shape
    h_out = (h - window) // stride + 1
    w_out = (w - window) // stride + 1
    out = np.zeros((n, c, h_out, w_out), dtype=x.dtype)
    for ni in range(n):
        for ci in range(c):
            for i in range(h_out):
                for j in range(w_out):
                    best = x[ni, ci, i * stride, j * stride]
                    for p in range(window):
                        for q in range(window):
                            v = x[ni, ci, i * stride + p, j * stride + q]
                            if v > best:
                                best = v
                    out[ni, ci, i, j] = best
    return out


def dense_loops(x, w, b):
    """Triple-loop affine map reference."""
    n, f = x.shape
    o = w.shape[0]
    out = np.zeros((n, o))
    for ni in range(n):
        for oi in range(o):
            acc = 0.0
            for fi in range(f):
                acc += float(x[ni, fi]) * float(w[oi, fi])
            out[ni, oi] = acc + float(b[oi])
    return out


def softmax_ce_f64(logits, labels):
    """High-precision softmax cross-entropy reference."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = z.shape[0]
    loss = -np.mean(np.log(p[np.arange(n), labels]))
    return loss, p


def ortho_loss_f64(wm, squared=False):
    """Explicit Gram / subtract-identity / Frobenius reference in float64."""
    wm = np.asarray(wm, dtype=np.float64)
    r = wm.shape[0]
    gram = np.zeros((r, r))
    for i in range(r):
        for j in range(r):
            gram[i, j] = float(np.dot(wm[i], wm[j]))
            if i == j:
                gram[i, j] -= 1.0
    sq = float((gram * gram).sum())
    return sq if squared else float(np.sqrt(sq))


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def max_rel_error(analytic, numeric, floor=1e-2):
    """Elementwise |a-n| / max(|a|, |n|, floor), maximized.

    The floor makes the comparison strictly relative above ``floor`` and
    absolute (scaled by 1/floor) below it, so finite-difference truncation
    noise on near-zero gradients does not register as relative error.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def joint_loss_grad_check(net, batch, labels, ocfg, step=1e-5):
    """Max relative error of every parameter gradient vs central differences."""
    total_loss(net, batch, labels, ocfg, accumulate_grads=True)
    analytic = [p.grad.copy() for p in net.parameters()]
    worst = 0.0
    for param, grads in zip(net.parameters(), analytic):
        flat = param.value.reshape(-1)
        fd = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _, _ = total_loss(net, batch, labels, ocfg, accumulate_grads=False)
            flat[i] = orig - step
            down, _, _ = total_loss(net, batch, labels, ocfg, accumulate_grads=False)
            flat[i] = orig
            fd[i] = (up - down) / (2 * step)
        worst = max(worst, max_rel_error(grads.reshape(-1), fd))
    return worst


def random_desk_network(rng, dtype=np.float64):
    """A small random 2-conv network with generic-position (nonzero) biases.

    Biases are randomized because a zero bias on an all-dead receptive field
    parks relu exactly at its kink, where finite differences and the
    subgradient legitimately disagree.
    """
    c1 = int(rng.integers(2, 5))
    c2 = int(rng.integers(3, 7))
    side = int(rng.integers(10, 14))
    classes = int(rng.integers(3, 5))
    pad = int(rng.integers(0, 2))
    specs = [
        conv_spec(c1, 3, stride=1, pad=pad), relu_spec(), maxpool_spec(2, 2),
        conv_spec(c2, 3, stride=1, pad=pad), relu_spec(), maxpool_spec(2, 2),
        flatten_spec(), dense_spec(classes),
    ]
    net = build_network(specs, (1, side, side), classes,
                        seed=int(rng.integers(0, 2**31)), dtype=dtype)
    for param in net.parameters():
        if param.value.ndim == 1:
            param.value[...] = rng.uniform(-0.1, 0.1, size=param.value.shape)
    batch = rng.uniform(0.0, 1.0, size=(2, 1, side, side)).astype(dtype)
    labels = rng.integers(0, classes, size=2)
    return net, batch, labels


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def ocfg():
    return OrthoConfig(lambda_ortho=0.01)
