"""Class-conditional activation statistics and pruned-filter selection.

For each conv filter the score is the mean (over samples) of the spatial
maximum of its activation map, computed separately on forget-class and
retained-class samples; the difference ranks how class-specific a filter is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Partition
from .network import Network
from .pruning import PlanEntry, PruningPlan, pruning_strengths

__all__ = [
    "ChannelStats",
    "SelectionConfig",
    "activation_stats",
    "build_pruning_plan",
    "select_pruned_set",
]


@dataclass
class ChannelStats:
    """Per-filter activation summary for one conv layer."""

    layer: int
    a_target: np.ndarray  # (C_out,) mean spatial max on forget-class samples
    a_retain: np.ndarray  # (C_out,) mean spatial max on retained-class samples
    diff: np.ndarray = field(init=False)  # a_target - a_retain

    def __post_init__(self):
        self.a_target = np.asarray(self.a_target, dtype=np.float32)
        self.a_retain = np.asarray(self.a_retain, dtype=np.float32)
        if self.a_target.shape != self.a_retain.shape or self.a_target.ndim != 1:
            raise ValueError(
                f"a_target {self.a_target.shape} and a_retain {self.a_retain.shape} "
                f"must be equal-length vectors"
            )
        self.diff = self.a_target - self.a_retain

    @property
    def filter_count(self) -> int:
        return int(self.a_target.shape[0])


@dataclass
class SelectionConfig:
    """Pruning ratio and the per-side sample budget used for statistics."""

    ratio: float = 0.25
    samples_per_side: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.samples_per_side < 1:
            raise ValueError(
                f"samples_per_side must be >= 1, got {self.samples_per_side}"
            )


def _mean_spatial_max(maps: np.ndarray) -> np.ndarray:
    # maps: (N, C_out, H, W); mean accumulates in sample order.
    return maps.max(axis=(2, 3)).mean(axis=0)


def activation_stats(net: Network, target_samples: np.ndarray,
                     retain_samples: np.ndarray, layer: int,
                     pre_activation: bool = False) -> ChannelStats:
    """Mean spatial-max activation per filter for both sample sides.

    ``layer`` indexes conv layers (0-based). Maps are post-relu unless
    ``pre_activation`` is set.
    """
    if not 0 <= layer < net.conv_layer_count:
        raise ValueError(
            f"layer {layer} is not a conv layer index in [0, {net.conv_layer_count})"
        )
    for name, batch in (("target", target_samples), ("retain", retain_samples)):
        if batch.ndim != 4 or batch.shape[0] == 0:
            raise ValueError(f"{name} batch must be a nonempty (N, C, H, W) array")
    _, target_maps = net.forward(target_samples, pre_activation=pre_activation)
    _, retain_maps = net.forward(retain_samples, pre_activation=pre_activation)
    return ChannelStats(
        layer=layer,
        a_target=_mean_spatial_max(target_maps[layer]),
        a_retain=_mean_spatial_max(retain_maps[layer]),
    )


def select_pruned_set(stats: ChannelStats, ratio: float) -> list[int]:
    """Indices of the ceil(ratio * C_out) largest-difference filters.

    Ordered by descending difference; ties broken by smaller filter index.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n_p = math.ceil(ratio * stats.filter_count)
    order = np.argsort(-stats.diff, kind="stable")
    return [int(j) for j in order[:n_p]]


def _draw_side(rng: np.random.Generator, images: np.ndarray, budget: int) -> np.ndarray:
    n = images.shape[0]
    take = min(budget, n)
    idx = rng.choice(n, size=take, replace=False)
    return images[idx]


def build_pruning_plan(net: Network, split: Partition, cfg: SelectionConfig,
                       lambda_floor: float,
                       pre_activation: bool = False) -> PruningPlan:
    """Rank every conv layer's filters and attach rank-adaptive strengths.

    Draws ``samples_per_side`` seeded samples (without replacement, all if a
    side is smaller) from the forget and retain sides, computes activation
    statistics for all conv layers from those two forward passes, and emits
    one plan entry per selected filter.
    """
    if len(split.forget) == 0:
        raise ValueError("forget side of the partition is empty")
    if len(split.retain) == 0:
        raise ValueError("retain side of the partition is empty")
    rng = np.random.default_rng(cfg.seed)
    target_batch = _draw_side(rng, split.forget.images, cfg.samples_per_side)
    retain_batch = _draw_side(rng, split.retain.images, cfg.samples_per_side)

    _, target_maps = net.forward(target_batch, pre_activation=pre_activation)
    _, retain_maps = net.forward(retain_batch, pre_activation=pre_activation)

    entries: list[PlanEntry] = []
    for layer in range(net.conv_layer_count):
        stats = ChannelStats(
            layer=layer,
            a_target=_mean_spatial_max(target_maps[layer]),
            a_retain=_mean_spatial_max(retain_maps[layer]),
        )
        selected = select_pruned_set(stats, cfg.ratio)
        strengths = pruning_strengths(len(selected), lambda_floor)
        for j, strength in zip(selected, strengths):
            entries.append(PlanEntry(layer=layer, filter=j,
                                     diff=float(stats.diff[j]), strength=strength))
    return PruningPlan(entries=entries)
