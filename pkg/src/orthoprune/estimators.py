"""Scikit-learn style estimators wrapping the training and unlearning pipeline.

``OrthoConvClassifier`` is a fit/predict image classifier trained under the
kernel-orthogonality penalty; ``ClassUnlearner`` is a meta-estimator that
takes a fitted classifier and produces a soft-pruned copy that has forgotten
the requested classes. Both follow the get_params/set_params contract so
they compose with clone, pipelines, and model selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .channels import SelectionConfig, build_pruning_plan
from .data import LabeledDataset, partition
from .evaluation import timed
from .network import LayerSpec, desk_architecture, build_network
from .pruning import apply_soft_prune, fine_tune
from .training import OrthoConfig, TrainConfig, train
from .validation import check_images, check_labels

__all__ = ["ClassUnlearner", "OrthoConvClassifier"]


def _resolve_architecture(layers, class_count: int) -> list[LayerSpec]:
    if layers is None:
        return desk_architecture(class_count)
    specs = [LayerSpec.from_dict(dict(d)) if isinstance(d, dict) else d for d in layers]
    if specs and specs[-1].kind == "dense":
        return specs
    specs = list(specs)
    specs.append(LayerSpec("dense", out_features=class_count))
    return specs


class _NetworkPredictorMixin:
    """predict/predict_proba/decision_function over a fitted ``network_``."""

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError(
                f"{type(self).__name__} must be fitted before prediction"
            )

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_images(X)
        logits, _ = self.network_.forward(X)
        return logits

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]


class OrthoConvClassifier(_NetworkPredictorMixin, BaseEstimator, ClassifierMixin):
    """Small CNN classifier trained by SGD under an orthogonality penalty.

    Parameters
    ----------
    layers : list of dict or LayerSpec, optional
        Architecture in network order. A trailing dense layer sized to the
        class count is appended when absent. ``None`` selects the default
        two-conv architecture.
    epochs, batch_size, eta0, alpha, seed : SGD schedule; epoch t uses
        learning rate ``eta0 * alpha**t``.
    lambda_ortho : float
        Weight of the kernel-orthogonality penalty, in [0, 1).
    epsilon_guard : float
        Guard width for the penalty gradient near its nonsmooth zero.
    squared_penalty : bool
        Use the squared Frobenius variant of the penalty.
    """

    def __init__(self, layers=None, epochs=10, batch_size=32, eta0=0.1, alpha=0.9,
                 lambda_ortho=0.01, epsilon_guard=1e-12, squared_penalty=False,
                 seed=0):
        self.layers = layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.eta0 = eta0
        self.alpha = alpha
        self.lambda_ortho = lambda_ortho
        self.epsilon_guard = epsilon_guard
        self.squared_penalty = squared_penalty
        self.seed = seed

    def _configs(self) -> tuple[TrainConfig, OrthoConfig]:
        tcfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           eta0=self.eta0, alpha=self.alpha, seed=self.seed)
        ocfg = OrthoConfig(lambda_ortho=self.lambda_ortho,
                           epsilon_guard=self.epsilon_guard,
                           use_squared_variant=self.squared_penalty)
        return tcfg, ocfg

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, n_samples=X.shape[0])
        self.classes_ = np.unique(y)
        class_count = int(self.classes_.shape[0])
        if class_count < 2:
            raise ValueError(f"need at least 2 classes, got {class_count}")
        encoded = np.searchsorted(self.classes_, y)
        dataset = LabeledDataset(X, encoded, class_count)
        tcfg, ocfg = self._configs()
        specs = _resolve_architecture(self.layers, class_count)
        net = build_network(specs, dataset.image_shape, class_count, seed=self.seed)
        (_, history), seconds = timed(lambda: train(net, dataset, tcfg, ocfg))
        self.network_ = net
        self.loss_history_ = history
        self.train_seconds_ = seconds
        self.n_features_in_ = int(np.prod(dataset.image_shape))
        return self


class ClassUnlearner(_NetworkPredictorMixin, BaseEstimator, ClassifierMixin):
    """Forget selected classes from a fitted :class:`OrthoConvClassifier`.

    ``fit(X, y)`` takes the classifier's original training data, splits it
    into forget/retain sides, ranks conv filters by class-conditional
    activation differences, and soft-prunes a copy of the fitted network.
    The wrapped classifier is never mutated.

    Parameters
    ----------
    estimator : fitted OrthoConvClassifier
    forget_classes : iterable of labels to forget (in the estimator's label
        space), a nonempty strict subset of its classes.
    ratio : fraction of each conv layer's filters to suppress, in (0, 1].
    strength_floor : minimum suppression strength, in [0, 1].
    samples_per_side : per-side sample budget for activation statistics.
    fine_tune_epochs : post-prune SGD epochs on retained data (0 disables).
    fine_tune_eta0, fine_tune_alpha : fine-tuning schedule.
    pre_activation : rank on pre-relu maps instead of post-relu.
    seed : sampling and fine-tuning seed.
    """

    def __init__(self, estimator=None, forget_classes=(0,), ratio=0.25,
                 strength_floor=0.4, samples_per_side=64, fine_tune_epochs=0,
                 fine_tune_eta0=0.02, fine_tune_alpha=0.9, pre_activation=False,
                 seed=0):
        self.estimator = estimator
        self.forget_classes = forget_classes
        self.ratio = ratio
        self.strength_floor = strength_floor
        self.samples_per_side = samples_per_side
        self.fine_tune_epochs = fine_tune_epochs
        self.fine_tune_eta0 = fine_tune_eta0
        self.fine_tune_alpha = fine_tune_alpha
        self.pre_activation = pre_activation
        self.seed = seed

    def fit(self, X, y):
        if self.estimator is None or not hasattr(self.estimator, "network_"):
            raise NotFittedError("estimator must be a fitted OrthoConvClassifier")
        X = check_images(X)
        y = check_labels(y, n_samples=X.shape[0])
        classes = self.estimator.classes_
        encoded = np.searchsorted(classes, y)
        dataset = LabeledDataset(X, encoded, int(classes.shape[0]))
        forget_encoded = {int(np.searchsorted(classes, c)) for c in self.forget_classes}
        split = partition(dataset, forget_encoded)

        cfg = SelectionConfig(ratio=self.ratio, samples_per_side=self.samples_per_side,
                              seed=self.seed)
        net = self.estimator.network_.copy()

        def build_and_apply():
            plan = build_pruning_plan(net, split, cfg, self.strength_floor,
                                      pre_activation=self.pre_activation)
            apply_soft_prune(net, plan)
            return plan

        plan, seconds = timed(build_and_apply)
        self.plan_ = plan
        self.unlearn_seconds_ = seconds
        self.fine_tune_seconds_ = 0.0
        if self.fine_tune_epochs:
            _, ocfg = self.estimator._configs()
            tcfg = TrainConfig(epochs=self.fine_tune_epochs,
                               batch_size=self.estimator.batch_size,
                               eta0=self.fine_tune_eta0, alpha=self.fine_tune_alpha,
                               seed=self.seed)
            _, self.fine_tune_seconds_ = timed(
                lambda: fine_tune(net, split.retain, tcfg, ocfg)
            )
        self.network_ = net
        self.classes_ = classes
        return self
