"""Minibatch Adam training with best-validation-macro-F1 model selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingError
from ..eval.metrics import macro_f1
from . import tensor as T
from .layers import FingerprintClassifier

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError(f"invalid training hyperparameters: {self}")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_f1: float = -1.0
    initial_loss: float = float("nan")

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "val_f1": self.val_f1, "best_epoch": self.best_epoch,
                "best_val_f1": self.best_val_f1, "initial_loss": self.initial_loss}


class Adam:
    def __init__(self, params: dict[str, T.Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p.data = (p.data - c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)).astype(p.dtype)


def predict(clf: FingerprintClassifier, X: np.ndarray) -> np.ndarray:
    probs, _ = clf.forward(X)
    return probs.argmax(axis=1)


def train(clf: FingerprintClassifier, X_train: np.ndarray, y_train: np.ndarray, X_val: np.ndarray,
          y_val: np.ndarray, cfg: TrainConfig = TrainConfig()) -> History:
    """Train in place; on return ``clf`` holds the best-validation weights.

    Labels are integer class indices in ``[0, clf.n_classes)``.
    """
    if len(X_train) == 0 or len(X_val) == 0:
        raise ConfigError("training and validation sets must be nonempty")
    if len(X_train) != len(y_train) or len(X_val) != len(y_val):
        raise ConfigError("feature and label counts differ")
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    classes = list(range(clf.n_classes))
    rng = np.random.default_rng(cfg.seed)
    params = clf.named_parameters()
    opt = Adam(params, cfg)
    hist = History()
    best_state = {k: v.copy() for k, v in clf.state_dict().items()}
    stale = 0
    clf.train()
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(X_train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            clf.zero_grad()
            logits, _ = clf.logits(X_train[idx])
            loss = T.softmax_cross_entropy(logits, y_train[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"loss became {value}", epoch)
            if math.isnan(hist.initial_loss):
                hist.initial_loss = value
            losses.append(value * len(idx))
            loss.backward()
            opt.step()
        hist.train_loss.append(sum(losses) / len(order))
        f1 = macro_f1(y_val.tolist(), predict(clf, X_val).tolist(), classes)
        clf.train()
        hist.val_f1.append(f1)
        log.info("epoch %d loss %.4f val macro-F1 %.4f", epoch, hist.train_loss[-1], f1)
        if f1 > hist.best_val_f1:
            hist.best_val_f1, hist.best_epoch = f1, epoch
            best_state = {k: v.copy() for k, v in clf.state_dict().items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    clf.load_state_dict(best_state)
    clf.eval()
    return hist
