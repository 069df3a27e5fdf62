"""Minimal reverse-mode autodiff over numpy arrays.

Only the operations the Res2Net classifier needs are provided. Each op
records its parents and a closure that accumulates gradients into them;
``Tensor.backward`` walks the graph in reverse topological order.
"""
from __future__ import annotations

import os

import numpy as np

from .. import _kernels
from ..errors import LabelError, ShapeError

DEBUG = bool(os.environ.get("VOCOTRACE_DEBUG"))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (), backward=None, name: str = ""):
        self.data = np.asarray(data)
        if DEBUG and not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values produced by {name or 'op'}")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if not self.requires_grad:
            return
        g = g.astype(self.data.dtype, copy=False)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad: np.ndarray | None = None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(t):
            # iterative DFS; deep graphs would overflow Python's recursion limit
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                for p in node._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            if node._parents and not any(p.requires_grad for p in node._parents):
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if p._backward is None:
                    p._accum(pg)
                else:
                    grads[id(p)] = pg if id(p) not in grads else grads[id(p)] + pg

    def __add__(self, other):
        return add(self, other)


def _result(data, parents, backward, name):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=parents if req else (), backward=backward if req else None,
                  name=name)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w.T + b with w of shape (out, in)."""
    if x.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def back(g):
        gx = g @ w.data
        gw = g.T @ x.data
        return (gx, gw) if b is None else (gx, gw, g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, back, "linear")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation, NCHW input, weight (O, C, kh, kw)."""
    if x.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    wmat = w.data.reshape(o, -1)
    pointwise = kh == 1 and kw == 1 and pad == 0
    if pointwise:
        xs = x.data[:, :, ::stride, ::stride]
        cols = np.ascontiguousarray(xs.transpose(0, 2, 3, 1)).reshape(-1, c)
    else:
        cols = _kernels.im2col(np.ascontiguousarray(x.data), kh, kw, stride, pad)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    def back(g):
        gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
        gw = (gm.T @ cols).reshape(w.shape)
        gcols = gm @ wmat
        if pointwise:
            gx = np.zeros_like(x.data)
            gx[:, :, ::stride, ::stride] = gcols.reshape(n, ho, wo, c).transpose(0, 3, 1, 2)
        else:
            gx = _kernels.col2im(np.ascontiguousarray(gcols), x.shape, kh, kw, stride, pad)
        if b is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, back, "conv2d")


def avg_pool2d(x: Tensor, k: int = 3, stride: int = 2, pad: int = 1) -> Tensor:
    """Average pooling; padded cells count as zeros (divisor is always k*k)."""
    n, c, h, wd = x.shape
    flat = np.ascontiguousarray(x.data.reshape(n * c, 1, h, wd))
    cols = _kernels.im2col(flat, k, k, stride, pad)
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = cols.mean(axis=1).reshape(n, c, ho, wo)

    def back(g):
        gcols = np.repeat(g.reshape(-1, 1) / (k * k), k * k, axis=1)
        gx = _kernels.col2im(np.ascontiguousarray(gcols, dtype=x.dtype), (n * c, 1, h, wd), k, k, stride, pad)
        return (gx.reshape(x.shape),)

    return _result(out, (x,), back, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    n, c, h, wd = x.shape
    out = x.data.mean(axis=(2, 3))

    def back(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * wd), x.shape).copy(),)

    return _result(out, (x,), back, "global_avg_pool")


def split_channels(x: Tensor, parts: int) -> list[Tensor]:
    c = x.shape[1]
    if c % parts:
        raise ShapeError(f"cannot split {c} channels into {parts} groups")
    step = c // parts
    outs = []
    for i in range(parts):
        sl = slice(i * step, (i + 1) * step)

        def back(g, sl=sl):
            gx = np.zeros_like(x.data)
            gx[:, sl] = g
            return (gx,)

        outs.append(_result(np.ascontiguousarray(x.data[:, sl]), (x,), back, "split"))
    return outs


def concat_channels(xs: list[Tensor]) -> Tensor:
    sizes = [t.shape[1] for t in xs]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in xs], axis=1)

    def back(g):
        return tuple(np.ascontiguousarray(g[:, bounds[i]:bounds[i + 1]]) for i in range(len(xs)))

    return _result(out, tuple(xs), back, "concat")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation over (N, H, W). Running stats are updated in place."""
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(shape).astype(x.dtype)) * inv.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def back(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(shape)
        if training:
            m = x.data.size // x.shape[1]
            gx = (inv.reshape(shape) / m) * (m * gxhat - gxhat.sum(axis=axes).reshape(shape)
                                              - xhat * (gxhat * xhat).sum(axis=axes).reshape(shape))
        else:
            gx = gxhat * inv.reshape(shape)
        return gx, gg, gb

    return _result(out, (x, gamma, beta), back, "batch_norm")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels.

    Evaluated in float64 whatever the logits dtype, so a zero head gives
    exactly ln C.
    """
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise LabelError(f"labels must be {n} integers in [0, {c})")
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(n), labels].mean()

    def back(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return ((float(g) / n) * d,)

    return _result(np.asarray(loss), (logits,), back, "softmax_cross_entropy")


def cross_entropy(p: np.ndarray, y: np.ndarray, floor: float = 1e-12) -> float:
    """Mean of -sum_j y_j log p_j over rows, with log clamped at ``floor``."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    if p.shape != y.shape or p.ndim != 2:
        raise ShapeError(f"probabilities {p.shape} and labels {y.shape} must be matching 2-d arrays")
    onehot = np.isin(y, (0, 1)).all() and np.all(y.sum(axis=1) == 1)
    if not onehot:
        raise LabelError("labels must be one-hot rows")
    return float(-(y * np.log(np.maximum(p, floor))).sum(axis=1).mean())
