"""Full-batch training, evaluation and smoothness diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .data import Dataset
from .graph import local_label_smoothness
from .models import VARIANTS, ModelParams, forward, init_params

OPTIMIZERS = ("gd", "momentum", "adam")


class TrainingDivergedError(FloatingPointError):
    """The training loss became NaN or infinite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became {loss} at epoch {epoch}; try a smaller learning rate")
        self.epoch = epoch
        self.loss = loss


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: str = "gcn"
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 1000
    patience: int = 50
    seed: int = 0
    alpha: float = 0.1
    K: int = 10
    s: float = 9.0
    hidden: int = 64
    optimizer: str = "gd"
    momentum: float = 0.9

    def __post_init__(self):
        if self.model not in VARIANTS:
            raise ValueError(f"unknown model {self.model!r}; choose from {VARIANTS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.patience < 1 or self.hidden < 1 or self.K < 1:
            raise ValueError("epochs >= 0, patience >= 1, hidden >= 1 and K >= 1 are required")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.s > 0:
            raise ValueError("s must be positive")


@dataclass
class Metrics:
    accuracy: float
    val_accuracy: float | None = None
    per_group: tuple[float | None, float | None] = (None, None)
    correlation: float | None = None
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0

    def to_json(self) -> dict:
        low, high = self.per_group
        return {
            "accuracy": self.accuracy,
            "val_accuracy": self.val_accuracy,
            "low_smoothness_accuracy": low,
            "high_smoothness_accuracy": high,
            "correlation": self.correlation,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
        }


def predict(logits: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` already returns the lowest tied index."""
    return np.argmax(logits, axis=1)


def _logits(params: ModelParams, dataset: Dataset) -> tuple[np.ndarray, np.ndarray | None]:
    out, C = forward(params, dataset.features, dataset.graph)
    return out.value, None if C is None else C.value[:, 0]


def _accuracy(pred: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        raise ValueError("accuracy over an empty node set")
    return float(np.mean(pred[mask] == labels[mask]))


def _grouped(pred, dataset: Dataset, mask: np.ndarray, threshold: float):
    ls = local_label_smoothness(dataset.graph, dataset.labels)
    low = mask & (ls <= threshold)
    high = mask & (ls > threshold)
    return tuple(_accuracy(pred, dataset.labels, g) if g.any() else None for g in (low, high))


def grouped_accuracy(params: ModelParams, dataset: Dataset, threshold: float = 0.5,
                     split: str = "test") -> tuple[float | None, float | None]:
    """Accuracy on nodes with ``ls <= threshold`` and ``ls > threshold``; None marks an empty group."""
    logits, _ = _logits(params, dataset)
    return _grouped(predict(logits), dataset, dataset.mask(split), threshold)


def smoothness_correlation(C, ls) -> float:
    """Pearson correlation between smoothness factors and local label smoothness."""
    C = np.asarray(C, dtype=np.float64)
    ls = np.asarray(ls, dtype=np.float64)
    if C.shape != ls.shape or C.ndim != 1:
        raise ValueError("C and ls must be 1-D and of equal length")
    dc, dl = C - C.mean(), ls - ls.mean()
    denom = math.sqrt(float(dc @ dc) * float(dl @ dl))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    return float(np.clip((dc @ dl) / denom, -1.0, 1.0))


def learned_smoothness(params: ModelParams, dataset: Dataset) -> np.ndarray:
    """Per-node factors C_i of a trained ADA-UGNN, in evaluation mode."""
    if params.variant != "ada-ugnn":
        raise ValueError("smoothness factors exist only for ada-ugnn")
    return _logits(params, dataset)[1]


def _correlation_nodes(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    ls, isolated = local_label_smoothness(dataset.graph, dataset.labels, return_isolated=True)
    return ls, (dataset.labels >= 0) & ~isolated


def evaluate(params: ModelParams, dataset: Dataset, split: str = "test", threshold: float = 0.5) -> Metrics:
    """Accuracy and grouped accuracy on ``split``; for ADA-UGNN also r(C, ls)."""
    mask = dataset.mask(split)
    if not mask.any():
        raise ValueError(f"split {split!r} is empty")
    logits, C = _logits(params, dataset)
    pred = predict(logits)
    corr = None
    if C is not None:
        ls, keep = _correlation_nodes(dataset)
        try:
            corr = smoothness_correlation(C[keep], ls[keep])
        except UndefinedCorrelationError:
            corr = None
    return Metrics(
        accuracy=_accuracy(pred, dataset.labels, mask),
        per_group=_grouped(pred, dataset, mask, threshold),
        correlation=corr,
    )


class _Optimizer:
    """Gradient step followed by decoupled weight decay on the flagged arrays."""

    def __init__(self, config: TrainConfig, params: ModelParams):
        self.cfg = config
        self.decay = params.decayed()
        self.state = [np.zeros_like(a) for a in params.arrays()]
        self.state2 = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        cfg = self.cfg
        self.t += 1
        out = []
        for k, (a, g) in enumerate(zip(arrays, grads)):
            if cfg.optimizer == "gd":
                upd = g
            elif cfg.optimizer == "momentum":
                self.state[k] = cfg.momentum * self.state[k] + g
                upd = self.state[k]
            else:
                self.state[k] = 0.9 * self.state[k] + 0.1 * g
                self.state2[k] = 0.999 * self.state2[k] + 0.001 * g * g
                m = self.state[k] / (1 - 0.9 ** self.t)
                v = self.state2[k] / (1 - 0.999 ** self.t)
                upd = m / (np.sqrt(v) + 1e-8)
            new = a - cfg.lr * upd
            if self.decay[k] and cfg.weight_decay:
                new = new - cfg.lr * cfg.weight_decay * a
            out.append(new)
        return out


def train(config: TrainConfig, dataset: Dataset, params: ModelParams | None = None) -> tuple[ModelParams, Metrics]:
    """Full-batch training with early stopping on validation accuracy.

    Returns the parameters from the epoch with the best validation accuracy,
    ties going to the lower validation loss, and their test metrics.
    """
    if not dataset.train_mask.any() or not dataset.val_mask.any():
        raise ValueError("training needs nonempty train and val splits")
    if params is None:
        params = init_params(config.model, dataset.num_features, config.hidden, dataset.num_classes,
                             seed=config.seed, alpha=config.alpha, K=config.K, s=config.s)
    rng = np.random.default_rng([config.seed, 1])
    opt = _Optimizer(config, params)
    labels = dataset.labels

    def val_state(p):
        out, _ = forward(p, dataset.features, dataset.graph)
        loss = ag.softmax_cross_entropy(out, labels, dataset.val_mask).value
        return _accuracy(predict(out.value), labels, dataset.val_mask), float(loss)

    best_params, (best_val, best_loss) = params, val_state(params)
    best_epoch, since_best = 0, 0
    train_curve, val_curve = [], []
    epoch = 0
    # overflow on the way to a NaN loss is reported as divergence, not as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            leaves = [ag.Tensor(a, requires_grad=True) for a in params.arrays()]
            out, _ = forward(params, dataset.features, dataset.graph, config.dropout, rng, leaves=leaves)
            loss = ag.softmax_cross_entropy(out, labels, dataset.train_mask)
            if not np.isfinite(loss.value):
                raise TrainingDivergedError(epoch, float(loss.value))
            ag.backward(loss)
            grads = [np.zeros_like(t.value) if t.grad is None else t.grad for t in leaves]
            params = params.with_arrays(opt.step(params.arrays(), grads))

            val_acc, val_loss = val_state(params)
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(epoch, val_loss)
            train_curve.append(float(loss.value))
            val_curve.append(val_loss)
            if val_acc > best_val or (val_acc == best_val and val_loss < best_loss):
                best_params, best_val, best_loss, best_epoch, since_best = params, val_acc, val_loss, epoch, 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    break

    metrics = evaluate(best_params, dataset, "test")
    metrics.val_accuracy = best_val
    metrics.train_loss, metrics.val_loss = train_curve, val_curve
    metrics.best_epoch, metrics.epochs_run = best_epoch, epoch
    return best_params, metrics
