"""Row-orthonormality penalty on flattened conv kernels, with its gradient."""

from __future__ import annotations

import numpy as np

__all__ = ["gram_deviation", "ortho_loss", "ortho_loss_grad", "reshape_kernels"]


def reshape_kernels(weights: np.ndarray) -> np.ndarray:
    """Flatten a (C_out, C_in, k, k) kernel tensor to (C_out, C_in*k*k) rows."""
    if weights.ndim != 4:
        raise ValueError(
            f"reshape_kernels: expected a 4-D kernel tensor, got ndim={weights.ndim}"
        )
    return weights.reshape(weights.shape[0], -1)


def gram_deviation(wm: np.ndarray) -> np.ndarray:
    """W W^T - I for a row matrix W."""
    return wm @ wm.T - np.eye(wm.shape[0], dtype=wm.dtype)


def ortho_loss(wm: np.ndarray, squared: bool = False) -> float:
    """Frobenius norm (optionally squared) of the Gram deviation W W^T - I.

    Zero exactly when the rows are orthonormal.
    """
    g = gram_deviation(wm)
    sq = float((g * g).sum())
    return sq if squared else float(np.sqrt(sq))


def ortho_loss_grad(wm: np.ndarray, eps: float = 1e-12,
                    squared: bool = False) -> np.ndarray:
    """Gradient of :func:`ortho_loss` w.r.t. the row matrix.

    With G = W W^T - I: the squared penalty differentiates to 4 G W; the
    unsquared norm to 2 G W / ||G||_F, which is non-differentiable at zero,
    so inside the eps guard region the gradient is defined as all zeros.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    g = gram_deviation(wm)
    if squared:
        return 4.0 * (g @ wm)
    norm = float(np.sqrt((g * g).sum()))
    if norm <= eps:
        return np.zeros_like(wm)
    return (2.0 / norm) * (g @ wm)
