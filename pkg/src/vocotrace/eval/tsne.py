"""Exact t-SNE for a few thousand points."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..errors import ConfigError

MAX_POINTS = 5000
EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250


@dataclass
class Embedding2D:
    coords: np.ndarray
    labels: list[str]
    kl: float
    kl_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("t-SNE produced non-finite coordinates")


def joint_probabilities(X: np.ndarray, perplexity: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(dist2, 0.0)
    P = _kernels.conditional_affinities(dist2, perplexity)
    P = (P + P.T) / (2.0 * len(X))
    return np.maximum(P, 1e-12)


def tsne(X: np.ndarray, labels=None, perplexity: float = 30.0, iters: int = 1000, seed: int = 0,
         learning_rate: float = 200.0, polish_iters: int = 100) -> Embedding2D:
    """Embed ``X`` in 2-d.

    Plain gradient descent with momentum (0.5, then 0.8 after the early
    exaggeration phase) and per-coordinate adaptive gains. The final
    ``polish_iters`` steps drop momentum and backtrack whenever a step would
    raise the KL divergence, so the tail of ``kl_history`` is monotone.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < 3 * perplexity:
        raise ConfigError(f"t-SNE needs at least {3 * perplexity:g} points for perplexity {perplexity:g}, got {n}")
    if n > MAX_POINTS:
        raise ConfigError(f"exact t-SNE is limited to {MAX_POINTS} points, got {n}")
    if iters <= polish_iters + EXAGGERATION_ITERS:
        raise ConfigError(f"iters must exceed {polish_iters + EXAGGERATION_ITERS}")
    P = joint_probabilities(X, perplexity)
    rng = np.random.default_rng(seed)
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history: list[float] = []
    for it in range(iters - polish_iters):
        early = it < EXAGGERATION_ITERS
        grad, kl = _kernels.tsne_gradient(Y, P * EXAGGERATION if early else P)
        momentum = 0.5 if early else 0.8
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        if not early:
            history.append(kl)
    grad, kl = _kernels.tsne_gradient(Y, P)
    step = learning_rate
    for _ in range(polish_iters):
        while True:
            cand = Y - step * grad
            cand_grad, cand_kl = _kernels.tsne_gradient(cand, P)
            if cand_kl <= kl or step < 1e-8:
                break
            step *= 0.5
        if cand_kl <= kl:
            Y, grad, kl = cand - cand.mean(axis=0), cand_grad, cand_kl
            step *= 1.5
        history.append(kl)
    labels = [str(v) for v in labels] if labels is not None else [""] * n
    return Embedding2D(Y, labels, float(kl), history)
