"""Class unlearning for small CNNs: orthogonal kernel training plus
activation-guided soft pruning, with an evaluation harness for retained and
forgotten accuracy, membership-inference risk, and unlearning latency."""

from .channels import ChannelStats, SelectionConfig, activation_stats, build_pruning_plan, select_pruned_set
from .checkpoint import CheckpointError, load_network, save_network
from .data import LabeledDataset, Partition, load_cifar10, partition, synth_dataset
from .estimators import ClassUnlearner, OrthoConvClassifier
from .evaluation import (
    MiaProtocol,
    UnlearnReport,
    accuracy,
    build_report,
    mia_attack,
    retrain_baseline,
    timed,
)
from .network import LayerSpec, Network, build_network, desk_architecture
from .ops import Parameter
from .ortho import ortho_loss, ortho_loss_grad, reshape_kernels
from .pruning import PlanEntry, PruningPlan, apply_soft_prune, fine_tune, pruning_strengths
from .training import OrthoConfig, TrainConfig, learning_rate, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "ChannelStats",
    "CheckpointError",
    "ClassUnlearner",
    "LabeledDataset",
    "LayerSpec",
    "MiaProtocol",
    "Network",
    "OrthoConfig",
    "OrthoConvClassifier",
    "Parameter",
    "Partition",
    "PlanEntry",
    "PruningPlan",
    "SelectionConfig",
    "TrainConfig",
    "UnlearnReport",
    "accuracy",
    "activation_stats",
    "apply_soft_prune",
    "build_network",
    "build_pruning_plan",
    "build_report",
    "desk_architecture",
    "fine_tune",
    "learning_rate",
    "load_cifar10",
    "load_network",
    "mia_attack",
    "ortho_loss",
    "ortho_loss_grad",
    "partition",
    "pruning_strengths",
    "reshape_kernels",
    "retrain_baseline",
    "save_network",
    "select_pruned_set",
    "synth_dataset",
    "timed",
    "total_loss",
    "train",
]
