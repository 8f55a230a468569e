"""Evaluation harness: accuracy, membership-inference risk, timing, baselines."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import LabeledDataset
from .network import Network, build_network
from .training import OrthoConfig, TrainConfig, train

__all__ = [
    "MiaProtocol",
    "UnlearnReport",
    "accuracy",
    "best_threshold",
    "build_report",
    "class_confidences",
    "fit_hinge_threshold",
    "mia_attack",
    "retrain_baseline",
    "timed",
]

logger = logging.getLogger(__name__)

_EVAL_BATCH = 256


def _logits(net: Network, images: np.ndarray) -> np.ndarray:
    chunks = []
    for start in range(0, images.shape[0], _EVAL_BATCH):
        logits, _ = net.forward(images[start:start + _EVAL_BATCH])
        chunks.append(logits)
    return np.concatenate(chunks, axis=0)


def predict_labels(net: Network, images: np.ndarray) -> np.ndarray:
    """Argmax class per sample; ties go to the smallest class index."""
    return _logits(net, images).argmax(axis=1)


def accuracy(net: Network, dataset: LabeledDataset) -> float:
    """Fraction of samples whose argmax logit equals the label."""
    if len(dataset) == 0:
        raise ValueError("accuracy: dataset is empty")
    predicted = predict_labels(net, dataset.images)
    return float((predicted == dataset.labels).mean())


def class_confidences(net: Network, dataset: LabeledDataset) -> np.ndarray:
    """Softmax probability assigned to each sample's own label."""
    logits = _logits(net, dataset.images)
    _, probs = ops.softmax_cross_entropy(logits, dataset.labels)
    return probs[np.arange(len(dataset)), dataset.labels]


def timed(action):
    """Run a zero-argument callable; returns (result, wall-clock seconds)."""
    start = time.perf_counter()
    result = action()
    return result, time.perf_counter() - start


@dataclass
class MiaProtocol:
    """Scalar-confidence membership attack with a learned linear threshold.

    The attack classifier is sign(w*f + b) over the confidence feature f,
    fit by hinge-loss subgradient descent on a seeded train split of the
    member/nonmember pools; the exhaustive threshold sweep serves as the
    reference oracle in tests.
    """

    train_fraction: float = 0.5
    iterations: int = 600
    step_size: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(
                f"train_fraction must be in (0, 1], got {self.train_fraction}"
            )
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def _hinge_descent(x: np.ndarray, labels: np.ndarray, w: float, b: float,
                   protocol: MiaProtocol) -> tuple[float, float]:
    """Averaged subgradient descent on mean hinge loss from an init (w, b)."""
    tail = max(1, protocol.iterations // 2)
    w_avg, b_avg = 0.0, 0.0
    for t in range(protocol.iterations):
        eta = protocol.step_size / (1.0 + 0.1 * t)
        margin = labels * (w * x + b)
        active = margin < 1.0
        if active.any():
            gw = -(labels[active] * x[active]).mean()
            gb = -(labels[active]).mean()
        else:
            gw = 0.0
            gb = 0.0
        w -= eta * gw
        b -= eta * gb
        if t >= protocol.iterations - tail:
            w_avg += w
            b_avg += b
    return w_avg / tail, b_avg / tail


def fit_hinge_threshold(features: np.ndarray, labels: np.ndarray,
                        protocol: MiaProtocol) -> tuple[float, float]:
    """Fit sign(w*f + b) by averaged hinge-loss subgradient descent.

    ``labels`` are +1 (member) / -1 (nonmember). Returns (w, b). The descent
    runs from both polarity initializations and keeps the solution with the
    lower hinge loss (ties broken by training accuracy, then positive
    polarity) so weak-signal pools cannot strand the fit in the wrong
    orientation. When every feature is identical the classifier degenerates
    to the majority label (ties count as member), reported via a warning
    rather than an error.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 1 or features.shape != labels.shape:
        raise ValueError("features and labels must be equal-length vectors")
    if np.all(features == features[0]):
        majority = 1.0 if (labels > 0).sum() >= (labels < 0).sum() else -1.0
        logger.warning(
            "mia attack-training features are all identical; predicting the "
            "majority label (%s)", "member" if majority > 0 else "nonmember"
        )
        return 0.0, majority
    scale = float(np.abs(features).max())
    x = features / scale

    candidates = []
    for w0 in (1.0, -1.0):
        w, b = _hinge_descent(x, labels, w0, -w0 * float(x.mean()), protocol)
        loss = float(np.maximum(0.0, 1.0 - labels * (w * x + b)).mean())
        acc = float((np.where(w * x + b >= 0.0, 1.0, -1.0) == labels).mean())
        candidates.append((loss, -acc, -w0, w, b))
    _, _, _, w, b = min(candidates)
    return w / scale, b


def best_threshold(features: np.ndarray, labels: np.ndarray) -> tuple[float, int, float]:
    """Exhaustive sweep oracle: (threshold, polarity, training accuracy).

    polarity +1 classifies f >= threshold as member, -1 the reverse.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    values = np.unique(features)
    candidates = [values[0] - 1.0]
    candidates.extend(((values[:-1] + values[1:]) / 2.0).tolist())
    candidates.append(values[-1] + 1.0)
    best = (candidates[0], 1, -1.0)
    n = labels.shape[0]
    for threshold in candidates:
        for polarity in (1, -1):
            side = (features >= threshold) if polarity == 1 else (features < threshold)
            predicted = np.where(side, 1.0, -1.0)
            acc = float((predicted == labels).sum()) / n
            if acc > best[2]:
                best = (float(threshold), polarity, acc)
    return best


def _attack_success(member_f: np.ndarray, nonmember_f: np.ndarray,
                    target_f: np.ndarray, protocol: MiaProtocol) -> float:
    """Fit the threshold attack on scalar features; fraction of targets called members."""
    member_f = np.asarray(member_f, dtype=np.float64)
    nonmember_f = np.asarray(nonmember_f, dtype=np.float64)
    target_f = np.asarray(target_f, dtype=np.float64)

    rng = np.random.default_rng(protocol.seed)
    # Balance the pools so the threshold is not dominated by one side.
    pool = min(member_f.shape[0], nonmember_f.shape[0])
    member_f = member_f[rng.choice(member_f.shape[0], size=pool, replace=False)]
    nonmember_f = nonmember_f[rng.choice(nonmember_f.shape[0], size=pool, replace=False)]
    take = max(1, int(round(protocol.train_fraction * pool)))
    features = np.concatenate([member_f[:take], nonmember_f[:take]])
    labels = np.concatenate([np.ones(take), -np.ones(take)])

    w, b = fit_hinge_threshold(features, labels, protocol)
    train_acc = float((np.where(w * features + b >= 0.0, 1.0, -1.0) == labels).mean())
    if train_acc < 0.55:
        logger.warning(
            "mia attack classifier is at chance level (attack-training accuracy "
            "%.3f); the reported success rate carries no membership signal",
            train_acc,
        )
    predicted_member = (w * target_f + b) >= 0.0
    return float(predicted_member.mean())


def mia_attack(net: Network, members: LabeledDataset, nonmembers: LabeledDataset,
               targets: LabeledDataset, protocol: MiaProtocol | None = None) -> float:
    """Fraction of target samples the membership classifier calls members.

    Members and nonmembers are featurized by the model's confidence on their
    own label; the attack classifier is fit on a seeded train split of those
    pools and then applied to the targets' forgotten-class confidences.
    """
    if protocol is None:
        protocol = MiaProtocol()
    return _attack_success(
        class_confidences(net, members),
        class_confidences(net, nonmembers),
        class_confidences(net, targets),
        protocol,
    )


def retrain_baseline(specs, input_shape, class_count: int, retain: LabeledDataset,
                     tcfg: TrainConfig, ocfg: OrthoConfig) -> tuple[Network, float]:
    """Gold-standard baseline: fresh seeded build trained on retained data only.

    The class count is unchanged; forgotten classes are simply absent from
    the training data. Returns (network, wall-clock training seconds).
    """
    if len(retain) == 0:
        raise ValueError("retrain_baseline: retain dataset is empty")
    net = build_network(specs, input_shape, class_count, seed=tcfg.seed)
    (_, _), seconds = timed(lambda: train(net, retain, tcfg, ocfg))
    return net, seconds


REPORT_SCHEMA_VERSION = 1
_TIMING_FIELDS = ("unlearn_seconds", "train_seconds", "fine_tune_seconds")


@dataclass
class UnlearnReport:
    """Metrics of one unlearning run, JSON-emittable and reproducible."""

    acc_forget_test: float
    acc_retain_test: float
    mia_success: float
    unlearn_seconds: float
    train_seconds: float
    config: dict = field(default_factory=dict)
    fine_tune_seconds: float = 0.0
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_json(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "acc_forget_test": self.acc_forget_test,
            "acc_retain_test": self.acc_retain_test,
            "mia_success": self.mia_success,
            "unlearn_seconds": self.unlearn_seconds,
            "train_seconds": self.train_seconds,
            "fine_tune_seconds": self.fine_tune_seconds,
            "config": self.config,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "UnlearnReport":
        doc = json.loads(text)
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported report schema_version {doc.get('schema_version')}"
            )
        return build_report(
            acc_forget_test=doc["acc_forget_test"],
            acc_retain_test=doc["acc_retain_test"],
            mia_success=doc["mia_success"],
            unlearn_seconds=doc["unlearn_seconds"],
            train_seconds=doc["train_seconds"],
            fine_tune_seconds=doc.get("fine_tune_seconds", 0.0),
            config=doc["config"],
        )

    def strip_timing(self) -> dict:
        """Report content with timing fields nulled, for determinism checks."""
        doc = json.loads(self.to_json())
        for key in _TIMING_FIELDS:
            doc[key] = None
        return doc


def build_report(acc_forget_test, acc_retain_test, mia_success, unlearn_seconds,
                 train_seconds, config, fine_tune_seconds=0.0) -> UnlearnReport:
    """Validate metric ranges and assemble an :class:`UnlearnReport`."""
    values = {
        "acc_forget_test": acc_forget_test,
        "acc_retain_test": acc_retain_test,
        "mia_success": mia_success,
    }
    for name, value in values.items():
        if value is None or not 0.0 <= float(value) <= 1.0:
            raise ValueError(f"report field {name} must be in [0, 1], got {value}")
    for name, value in (("unlearn_seconds", unlearn_seconds),
                        ("train_seconds", train_seconds),
                        ("fine_tune_seconds", fine_tune_seconds)):
        if value is None or float(value) < 0.0:
            raise ValueError(f"report field {name} must be >= 0, got {value}")
    if config is None:
        raise ValueError("report field config is missing")
    return UnlearnReport(
        acc_forget_test=float(acc_forget_test),
        acc_retain_test=float(acc_retain_test),
        mia_success=float(mia_success),
        unlearn_seconds=float(unlearn_seconds),
        train_seconds=float(train_seconds),
        fine_tune_seconds=float(fine_tune_seconds),
        config=config,
    )
