"""Joint cross-entropy + orthogonality objective and the SGD training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .data import LabeledDataset
from .network import Network
from .ortho import ortho_loss, ortho_loss_grad, reshape_kernels

__all__ = [
    "OrthoConfig",
    "TrainConfig",
    "learning_rate",
    "total_loss",
    "train",
]


@dataclass
class OrthoConfig:
    """Weight and numeric guards for the kernel-orthogonality penalty."""

    lambda_ortho: float = 0.01
    epsilon_guard: float = 1e-12
    use_squared_variant: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lambda_ortho < 1.0:
            raise ValueError(f"lambda_ortho must be in [0, 1), got {self.lambda_ortho}")
        if self.epsilon_guard <= 0.0:
            raise ValueError(f"epsilon_guard must be > 0, got {self.epsilon_guard}")


@dataclass
class TrainConfig:
    """SGD hyperparameters with an exponentially decayed learning rate."""

    epochs: int = 10
    batch_size: int = 32
    eta0: float = 0.1
    alpha: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eta0 <= 0.0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Rate for 0-based epoch t: eta0 * alpha^t."""
    return cfg.eta0 * cfg.alpha ** epoch


def penalty_total(net: Network, cfg: OrthoConfig) -> float:
    """Sum of the orthogonality penalty over every conv layer."""
    return sum(
        ortho_loss(reshape_kernels(net.conv_layer(l).weights.value),
                   squared=cfg.use_squared_variant)
        for l in range(net.conv_layer_count)
    )


def total_loss(net: Network, batch: np.ndarray, labels, cfg: OrthoConfig,
               accumulate_grads: bool = True) -> tuple[float, float, float]:
    """Joint objective: cross-entropy plus lambda times the summed penalty.

    Returns (total, cross_entropy, penalty_sum). With ``accumulate_grads``
    the network's parameter gradients are reset and repopulated; the
    lambda == 0 path is bit-identical to plain cross-entropy.
    """
    if accumulate_grads:
        net.reset_grads()
        logits, _ = net.forward(batch, cache=True)
    else:
        logits, _ = net.forward(batch, cache=False)
    ce, probs = ops.softmax_cross_entropy(logits, labels)
    if accumulate_grads:
        net.backward(ops.softmax_cross_entropy_backward(probs, labels))

    if cfg.lambda_ortho == 0.0:
        return ce, ce, 0.0

    penalty = 0.0
    for l in range(net.conv_layer_count):
        weights = net.conv_layer(l).weights
        wm = reshape_kernels(weights.value)
        penalty += ortho_loss(wm, squared=cfg.use_squared_variant)
        if accumulate_grads:
            grad = ortho_loss_grad(wm, eps=cfg.epsilon_guard,
                                   squared=cfg.use_squared_variant)
            weights.grad += cfg.lambda_ortho * grad.reshape(weights.value.shape)
    total = ce + cfg.lambda_ortho * penalty
    return float(total), ce, float(penalty)


def _sgd_step(net: Network, eta: float) -> None:
    for param in net.parameters():
        param.value -= np.asarray(eta, dtype=param.value.dtype) * param.grad


def train(net: Network, dataset: LabeledDataset, tcfg: TrainConfig,
          ocfg: OrthoConfig) -> tuple[Network, list[float]]:
    """Plain SGD over seeded-shuffled batches; returns (net, per-epoch mean loss).

    Epoch t uses learning rate eta0 * alpha^t. The network is mutated in
    place; identical configs and data reproduce identical parameters.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(tcfg.seed)
    history: list[float] = []
    n = len(dataset)
    for epoch in range(tcfg.epochs):
        eta = learning_rate(tcfg, epoch)
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            batch = dataset.images[idx]
            labels = dataset.labels[idx]
            loss, _, _ = total_loss(net, batch, labels, ocfg)
            _sgd_step(net, eta)
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
    return net, history
