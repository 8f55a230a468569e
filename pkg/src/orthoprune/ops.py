"""Dense-array operators with explicit backward rules.

Every operator is a pure function over numpy arrays (float32 in normal use,
float64 for gradient-check replays) and is deterministic: identical inputs
produce bit-identical outputs. Scatter reductions (conv/pool input gradients)
accumulate through ``np.bincount``, whose flat-index summation order is fixed.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Parameter",
    "conv2d",
    "conv2d_backward",
    "conv_output_extent",
    "dense",
    "dense_backward",
    "maxpool2d",
    "maxpool2d_backward",
    "relu",
    "relu_backward",
    "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
]


class Parameter:
    """A trainable array paired with a same-shape gradient accumulator.

    The gradient is all-zero on creation and after :meth:`reset_grad`.
    """

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    def reset_grad(self) -> None:
        self.grad[...] = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


def conv_output_extent(extent: int, kernel: int, stride: int, pad: int) -> int:
    """Output extent of a convolution/pooling axis: floor((E+2p-k)/s)+1."""
    return (extent + 2 * pad - kernel) // stride + 1


def _check_conv_args(x, weights, bias, stride, pad):
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be (N, C, H, W), got ndim={x.ndim}")
    if weights.ndim != 4:
        raise ValueError(
            f"conv2d: weights must be (C_out, C_in, k, k), got ndim={weights.ndim}"
        )
    c_out, c_in, kh, kw = weights.shape
    if kh != kw:
        raise ValueError(f"conv2d: kernel must be square, got {kh}x{kw}")
    if x.shape[1] != c_in:
        raise ValueError(
            f"conv2d: input channels {x.shape[1]} != weight in_channels {c_in}"
        )
    if bias.shape != (c_out,):
        raise ValueError(
            f"conv2d: bias shape {bias.shape} != (out_channels,)=({c_out},)"
        )
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"conv2d: pad must be >= 0, got {pad}")
    h, w = x.shape[2], x.shape[3]
    if kh > h + 2 * pad:
        raise ValueError(
            f"conv2d: kernel {kh} exceeds padded height {h + 2 * pad}"
        )
    if kw > w + 2 * pad:
        raise ValueError(
            f"conv2d: kernel {kw} exceeds padded width {w + 2 * pad}"
        )


def _pad_spatial(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _window_cols(xp: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Gather kxk patches of a padded (N, C, Hp, Wp) batch into columns.

    Returns (N, L, C*k*k) with L = h_out*w_out, patch entry order (c, p, q).
    """
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    n, c, h_out, w_out, _, _ = windows.shape
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, h_out * w_out, c * kernel * kernel)
    return np.ascontiguousarray(cols)


def _col_flat_indices(c_in, hp, wp, kernel, stride, h_out, w_out) -> np.ndarray:
    """Flat (C*Hp*Wp) index of each column entry, shaped (L, C*k*k)."""
    i_grid = np.arange(h_out)[:, None] * stride + np.arange(kernel)[None, :]
    j_grid = np.arange(w_out)[:, None] * stride + np.arange(kernel)[None, :]
    pos = i_grid[:, None, :, None] * wp + j_grid[None, :, None, :]  # (h_out, w_out, k, k)
    chan = np.arange(c_in) * (hp * wp)
    idx = chan[None, None, :, None, None] + pos[:, :, None, :, :]
    return idx.reshape(h_out * w_out, c_in * kernel * kernel)


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray,
           stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate a (N, C_in, H, W) batch with (C_out, C_in, k, k) kernels.

    Zero padding; output extents follow :func:`conv_output_extent`. Matches
    the direct five-nested-loop definition.
    """
    _check_conv_args(x, weights, bias, stride, pad)
    n, _, h, w = x.shape
    c_out, c_in, kernel, _ = weights.shape
    h_out = conv_output_extent(h, kernel, stride, pad)
    w_out = conv_output_extent(w, kernel, stride, pad)
    cols = _window_cols(_pad_spatial(x, pad), kernel, stride)
    w_flat = weights.reshape(c_out, c_in * kernel * kernel)
    out = cols @ w_flat.T + bias  # (N, L, C_out)
    return np.ascontiguousarray(out.transpose(0, 2, 1).reshape(n, c_out, h_out, w_out))


def conv2d_backward(x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray,
                    stride: int = 1, pad: int = 0,
                    cols: np.ndarray | None = None):
    """Gradients of conv2d w.r.t. input, weights, and bias.

    ``cols`` may pass the forward pass's patch columns to avoid regathering.
    Returns (grad_x, grad_weights, grad_bias).
    """
    n, c_in, h, w = x.shape
    c_out, _, kernel, _ = weights.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    _, _, h_out, w_out = grad_out.shape
    if cols is None:
        cols = _window_cols(_pad_spatial(x, pad), kernel, stride)
    go_flat = np.ascontiguousarray(grad_out.reshape(n, c_out, h_out * w_out))

    w_flat = weights.reshape(c_out, c_in * kernel * kernel)
    grad_w = np.matmul(go_flat, cols).sum(axis=0).reshape(weights.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))

    # Scatter-add column gradients back onto the padded input plane.
    dcols = np.matmul(go_flat.transpose(0, 2, 1), w_flat)  # (N, L, C*k*k)
    idx = _col_flat_indices(c_in, hp, wp, kernel, stride, h_out, w_out)
    plane = c_in * hp * wp
    big_idx = (np.arange(n)[:, None, None] * plane + idx[None, :, :]).ravel()
    flat = np.bincount(big_idx, weights=dcols.ravel(), minlength=n * plane)
    grad_xp = flat.reshape(n, c_in, hp, wp).astype(x.dtype)
    if pad:
        grad_x = grad_xp[:, :, pad:pad + h, pad:pad + w]
    else:
        grad_x = grad_xp
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; subgradient 0 at x == 0."""
    return np.where(x > 0, grad_out, 0).astype(x.dtype, copy=False)


def _check_pool_args(x, window, stride):
    if x.ndim != 4:
        raise ValueError(f"maxpool2d: input must be (N, C, H, W), got ndim={x.ndim}")
    if window < 1 or stride < 1:
        raise ValueError(
            f"maxpool2d: window and stride must be >= 1, got {window}, {stride}"
        )
    if window > x.shape[2]:
        raise ValueError(
            f"maxpool2d: window {window} exceeds input height {x.shape[2]}"
        )
    if window > x.shape[3]:
        raise ValueError(
            f"maxpool2d: window {window} exceeds input width {x.shape[3]}"
        )


def maxpool2d(x: np.ndarray, window: int, stride: int,
              return_argmax: bool = False):
    """Per-window spatial maximum with the pad=0 floor output formula.

    With ``return_argmax`` also returns each window's flat (p*k+q) winner,
    first occurrence on ties.
    """
    _check_pool_args(x, window, stride)
    windows = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    n, c, h_out, w_out, _, _ = windows.shape
    flat = windows.reshape(n, c, h_out, w_out, window * window)
    if return_argmax:
        am = flat.argmax(axis=4)
        out = np.take_along_axis(flat, am[..., None], axis=4)[..., 0]
        return np.ascontiguousarray(out), am
    return np.ascontiguousarray(flat.max(axis=4))


def maxpool2d_backward(x: np.ndarray, window: int, stride: int,
                       grad_out: np.ndarray,
                       argmax: np.ndarray | None = None) -> np.ndarray:
    """Route gradients to each window's maximum position (accumulating overlaps)."""
    n, c, h, w = x.shape
    if argmax is None:
        _, argmax = maxpool2d(x, window, stride, return_argmax=True)
    _, _, h_out, w_out = grad_out.shape
    p = argmax // window
    q = argmax % window
    rows = np.arange(h_out)[None, None, :, None] * stride + p
    cols = np.arange(w_out)[None, None, None, :] * stride + q
    nc = (np.arange(n)[:, None, None, None] * c
          + np.arange(c)[None, :, None, None])
    flat_idx = ((nc * h + rows) * w + cols).ravel()
    flat = np.bincount(flat_idx, weights=grad_out.ravel(), minlength=n * c * h * w)
    return flat.reshape(n, c, h, w).astype(x.dtype)


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map: (N, F) x (O, F)^T + (O,) -> (N, O)."""
    if x.ndim != 2:
        raise ValueError(f"dense: input must be (N, F), got ndim={x.ndim}")
    if weights.ndim != 2:
        raise ValueError(f"dense: weights must be (O, F), got ndim={weights.ndim}")
    if x.shape[1] != weights.shape[1]:
        raise ValueError(
            f"dense: input features {x.shape[1]} != weight features {weights.shape[1]}"
        )
    if bias.shape != (weights.shape[0],):
        raise ValueError(
            f"dense: bias shape {bias.shape} != (out_features,)=({weights.shape[0]},)"
        )
    return x @ weights.T + bias


def dense_backward(x: np.ndarray, weights: np.ndarray, grad_out: np.ndarray):
    """Gradients of dense w.r.t. input, weights, and bias."""
    grad_w = grad_out.T @ x
    grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ weights
    return grad_x, grad_w, grad_b


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and row-stochastic softmax probabilities.

    Uses max-subtraction for stability. Labels must lie in [0, C).
    """
    if logits.ndim != 2:
        raise ValueError(
            f"softmax_cross_entropy: logits must be (N, C), got ndim={logits.ndim}"
        )
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(
            f"softmax_cross_entropy: got {labels.shape[0] if labels.ndim else 0} "
            f"labels for {n} rows"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = int(labels[(labels < 0) | (labels >= c)][0])
        raise ValueError(
            f"softmax_cross_entropy: label {bad} outside [0, {c})"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    log_probs = shifted - np.log(total)
    loss = -log_probs[np.arange(n), labels].mean()
    return float(loss), probs


def softmax_cross_entropy_backward(probs: np.ndarray, labels) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. logits: (p - onehot)/N."""
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    grad /= n
    return grad
