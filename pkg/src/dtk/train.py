"""Loss, optimizer, plateau scheduler, and the epoch loop.

The recipe: Adam at a small base rate, categorical cross-entropy, and a
validation-loss plateau scheduler that multiplies the rate by sqrt(0.05)
after 7 epochs without strict improvement. All randomness (shuffling,
augmentation) derives from the single seed in TrainConfig, so equal seeds
give bit-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cifar import AugmentConfig, augment
from .errors import ConfigError, InputError, NumericError, StateError
from .graph import ModelGraph
from .tensor import Tensor


@dataclass
class TrainConfig:
    epochs: int = 250
    base_lr: float = 1e-5
    plateau_patience: int = 7
    plateau_factor: float = math.sqrt(0.05)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    seed: int = 0
    augment: Optional[AugmentConfig] = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(f"bad budget: epochs={self.epochs}, batch={self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError(f"plateau_factor must be in (0, 1), got {self.plateau_factor}")
        if self.plateau_patience < 1:
            raise ConfigError(f"plateau_patience must be >= 1, got {self.plateau_patience}")


def cross_entropy(probs: Tensor, labels: np.ndarray):
    """Mean negative log-likelihood plus the fused gradient w.r.t. logits.

    The returned gradient is (probs - onehot) / N, i.e. the adjoint through
    softmax and cross-entropy together; feed it to a graph whose output layer
    is the softmax.
    """
    labels = np.asarray(labels)
    n, c = probs.shape
    if labels.shape != (n,):
        raise InputError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise InputError(f"label out of range [0, {c})")
    picked = probs.data[np.arange(n), labels].astype(np.float64)
    with np.errstate(divide="ignore"):  # p == 0 surfaces as inf loss, caught by fit
        loss = float(-np.log(picked).mean())
    grad = probs.data.copy()
    grad[np.arange(n), labels] -= probs.dtype.type(1)
    grad /= probs.dtype.type(n)
    return loss, Tensor(grad)


def accuracy(probs: Tensor, labels: np.ndarray) -> float:
    return float((probs.data.argmax(axis=1) == np.asarray(labels)).mean())


class AdamState:
    """First/second moment tensors per parameter plus one shared step counter."""

    def __init__(self, params: dict[str, Tensor]):
        self.moments = {
            name: (np.zeros(t.shape, dtype=t.dtype), np.zeros(t.shape, dtype=t.dtype))
            for name, t in params.items()
        }
        self.t = 0


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place; frozen params never appear here."""
    for name in grads:
        if name not in params or name not in state.moments:
            raise StateError(f"gradient for '{name}' has no matching parameter state")
    state.t += 1
    t = state.t
    for name, g in grads.items():
        theta = params[name].data
        m, v = state.moments[name]
        np.multiply(m, beta1, out=m)
        m += (1 - beta1) * g.data
        np.multiply(v, beta2, out=v)
        v += (1 - beta2) * (g.data * g.data)
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


class PlateauScheduler:
    """Multiply lr by factor after `patience` epochs without a strictly better best."""

    def __init__(self, base_lr: float, patience: int, factor: float):
        self.lr = base_lr
        self.patience = patience
        self.factor = factor
        self.best = None
        self.wait = 0

    def step(self, val_loss: float) -> float:
        if self.best is None or val_loss < self.best:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.patience:
                self.lr *= self.factor
                self.wait = 0
        return self.lr


def plateau_scheduler(history: list[float], current_lr: float, config: TrainConfig) -> float:
    """Replay a validation-loss history; current_lr is the rate in force at history[0]."""
    sched = PlateauScheduler(current_lr, config.plateau_patience, config.plateau_factor)
    lr = current_lr
    for loss in history:
        lr = sched.step(loss)
    return lr


@dataclass
class DataSplits:
    train_images: np.ndarray  # float32 [N,3,H,W], already standardized
    train_labels: np.ndarray
    val_images: np.ndarray
    val_labels: np.ndarray
    test_images: Optional[np.ndarray] = None
    test_labels: Optional[np.ndarray] = None


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainReport:
    initial_val_loss: float
    initial_val_acc: float
    epochs: list[EpochStats] = field(default_factory=list)
    test_acc: Optional[float] = None
    samples_presented: int = 0
    adam_state: Optional["AdamState"] = None  # handed back for checkpointing

    def to_csv(self) -> str:
        def fmt(v):
            return repr(float(v))

        lines = ["epoch,train_loss,train_acc,val_loss,val_acc,lr"]
        for row in self.epochs:
            lines.append(
                f"{row.epoch},{fmt(row.train_loss)},{fmt(row.train_acc)},"
                f"{fmt(row.val_loss)},{fmt(row.val_acc)},{fmt(row.lr)}"
            )
        if self.test_acc is not None:
            lines.append(f"test_acc,{fmt(self.test_acc)}")
        return "\n".join(lines) + "\n"


def evaluate(graph: ModelGraph, images: np.ndarray, labels: np.ndarray, batch_size: int = 256):
    """Single-pass loss and accuracy, no augmentation."""
    total_loss = 0.0
    correct = 0
    n = images.shape[0]
    for start in range(0, n, batch_size):
        xb = Tensor(images[start : start + batch_size])
        yb = labels[start : start + batch_size]
        probs, _ = graph.forward(xb)
        loss, _ = cross_entropy(probs, yb)
        total_loss += loss * xb.shape[0]
        correct += int((probs.data.argmax(axis=1) == yb).sum())
    return total_loss / n, correct / n


def _sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 2, epoch, index])))


def fit(graph: ModelGraph, data: DataSplits, config: TrainConfig) -> TrainReport:
    """Run the full training loop and return per-epoch metrics.

    Deterministic for a fixed seed: the shuffle order and every per-sample
    augmentation draw are derived from (seed, epoch, sample index).
    """
    trainable = graph.trainable_params()
    state = AdamState(trainable)
    sched = PlateauScheduler(config.base_lr, config.plateau_patience, config.plateau_factor)

    init_loss, init_acc = evaluate(graph, data.val_images, data.val_labels)
    report = TrainReport(initial_val_loss=init_loss, initial_val_acc=init_acc)

    n_train = data.train_images.shape[0]
    lr = config.base_lr
    for epoch in range(1, config.epochs + 1):
        order_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 1, epoch])))
        order = order_rng.permutation(n_train)
        epoch_loss = 0.0
        epoch_correct = 0
        for batch_no, start in enumerate(range(0, n_train, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = data.train_images[idx].copy()
            if config.augment is not None:
                for row, sample_idx in enumerate(idx):
                    xb[row] = augment(
                        xb[row], config.augment, _sample_rng(config.seed, epoch, int(sample_idx))
                    )
            yb = data.train_labels[idx]
            probs, cache = graph.forward(Tensor(xb))
            loss, grad_logits = cross_entropy(probs, yb)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            grads, _ = graph.backward(cache, grad_logits)
            adam_step(trainable, grads, state, lr, config.beta1, config.beta2, config.eps)
            epoch_loss += loss * len(idx)
            epoch_correct += int((probs.data.argmax(axis=1) == yb).sum())
            report.samples_presented += len(idx)
        val_loss, val_acc = evaluate(graph, data.val_images, data.val_labels)
        report.epochs.append(
            EpochStats(epoch, epoch_loss / n_train, epoch_correct / n_train, val_loss, val_acc, lr)
        )
        lr = sched.step(val_loss)

    if data.test_images is not None:
        _, test_acc = evaluate(graph, data.test_images, data.test_labels)
        report.test_acc = test_acc
    report.adam_state = state
    return report
