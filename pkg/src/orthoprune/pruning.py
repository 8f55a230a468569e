"""Rank-adaptive soft pruning of selected filters and optional fine-tuning."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict

import numpy as np

from .data import LabeledDataset
from .network import Network

__all__ = [
    "PlanEntry",
    "PruningPlan",
    "apply_soft_prune",
    "fine_tune",
    "pruning_strengths",
]


def pruning_strengths(n_p: int, lambda_floor: float) -> list[float]:
    """Strengths S_k = max(floor, 1 - k/n_p) for ranks k = 1..n_p.

    The floor keeps every selected filter from being fully deactivated
    (floor 1.0 forces complete zeroing instead).
    """
    if n_p < 1:
        raise ValueError(f"n_p must be >= 1, got {n_p}")
    if not 0.0 <= lambda_floor <= 1.0:
        raise ValueError(f"lambda_floor must be in [0, 1], got {lambda_floor}")
    return [max(lambda_floor, 1.0 - k / n_p) for k in range(1, n_p + 1)]


@dataclass
class PlanEntry:
    layer: int
    filter: int
    diff: float
    strength: float


@dataclass
class PruningPlan:
    """Executable unlearning action: per-layer ranked filter suppressions."""

    entries: list[PlanEntry]

    def __post_init__(self):
        seen = set()
        last_layer = -1
        last_strength = None
        for e in self.entries:
            if not 0.0 <= e.strength <= 1.0:
                raise ValueError(
                    f"strength {e.strength} for layer {e.layer} filter {e.filter} "
                    f"outside [0, 1]"
                )
            key = (e.layer, e.filter)
            if key in seen:
                raise ValueError(f"duplicate plan entry for layer/filter {key}")
            seen.add(key)
            if e.layer != last_layer:
                if e.layer < last_layer:
                    raise ValueError("plan entries must be ordered by layer")
                last_layer = e.layer
                last_strength = e.strength
            else:
                if last_strength is not None and e.strength > last_strength + 1e-7:
                    raise ValueError(
                        f"strengths within layer {e.layer} must be nonincreasing"
                    )
                last_strength = e.strength

    def layer_entries(self, layer: int) -> list[PlanEntry]:
        return [e for e in self.entries if e.layer == layer]

    def to_json(self) -> str:
        doc = {"schema_version": 1, "entries": [asdict(e) for e in self.entries]}
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PruningPlan":
        doc = json.loads(text)
        if doc.get("schema_version") != 1:
            raise ValueError(f"unsupported plan schema_version {doc.get('schema_version')}")
        return cls(entries=[PlanEntry(**e) for e in doc["entries"]])


def apply_soft_prune(net: Network, plan: PruningPlan) -> float:
    """Scale each listed filter's weight slice and bias entry by (1 - S_k).

    All indices are validated before any mutation (all-or-nothing). Returns
    the wall-clock seconds spent on the mutation itself.
    """
    for e in plan.entries:
        if not 0 <= e.layer < net.conv_layer_count:
            raise ValueError(
                f"plan layer {e.layer} outside [0, {net.conv_layer_count})"
            )
        c_out = net.conv_layer(e.layer).weights.value.shape[0]
        if not 0 <= e.filter < c_out:
            raise ValueError(
                f"plan filter {e.filter} outside [0, {c_out}) in layer {e.layer}"
            )
    start = time.perf_counter()
    for e in plan.entries:
        conv = net.conv_layer(e.layer)
        keep = np.float32(1.0 - e.strength)
        conv.weights.value[e.filter] *= keep
        conv.bias.value[e.filter] *= keep
    return time.perf_counter() - start


def fine_tune(net: Network, retain: LabeledDataset, tcfg, ocfg,
              epochs: int | None = None) -> Network:
    """Brief SGD on retained data only, keeping the orthogonality term active.

    ``epochs`` overrides ``tcfg.epochs`` and may be 0, which leaves the
    network untouched.
    """
    from .training import TrainConfig, train  # local import to avoid a cycle

    if epochs is None:
        epochs = tcfg.epochs
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if epochs == 0:
        return net
    cfg = TrainConfig(epochs=epochs, batch_size=tcfg.batch_size,
                      eta0=tcfg.eta0, alpha=tcfg.alpha, seed=tcfg.seed)
    net, _ = train(net, retain, cfg, ocfg)
    return net
