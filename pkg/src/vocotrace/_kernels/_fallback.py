"""Pure numpy versions of the hot kernels.

Each function has a compiled twin in ``_ckernels.pyx`` with the same
signature and the same result up to floating-point summation order.
"""
from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N * Ho * Wo, C * kh * kw) patch matrix."""
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (N, C, Ho, Wo, kh, kw) -> (N, Ho, Wo, C, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kh: int, kw: int,
           stride: int, pad: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patches back into an image."""
    n, c, h, w = shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    patches = cols.reshape(n, ho, wo, c, kh, kw)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += \
                patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def sinc_resample(x: np.ndarray, step: float, n_out: int, cutoff: float, half_width: int) -> np.ndarray:
    """Band-limited interpolation of ``x`` at positions ``m * step``.

    The kernel is ``cutoff * sinc(cutoff * t)`` under a Hann window spanning
    ``half_width / cutoff`` input samples on each side, which is
    ``half_width`` zero crossings of the (scaled) sinc.
    """
    x = np.asarray(x, dtype=np.float64)
    span = half_width / cutoff
    reach = int(np.ceil(span))
    out = np.empty(n_out)
    chunk = 4096
    offsets = np.arange(-reach, reach + 1)
    for start in range(0, n_out, chunk):
        m = np.arange(start, min(n_out, start + chunk))
        pos = m * step
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        t = pos[:, None] - idx
        kern = cutoff * np.sinc(cutoff * t) * np.where(np.abs(t) < span, 0.5 + 0.5 * np.cos(np.pi * t / span), 0.0)
        valid = (idx >= 0) & (idx < x.size)
        vals = np.where(valid, x[np.clip(idx, 0, x.size - 1)], 0.0)
        out[start : start + m.size] = np.einsum("ij,ij->i", kern, vals)
    return out


def _row_entropy(d_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    p = np.exp(-d_row * beta)
    s = p.sum()
    if s <= 0:
        return 0.0, np.zeros_like(p)
    h = np.log(s) + beta * np.dot(d_row, p) / s
    return h, p / s


def conditional_affinities(dist2: np.ndarray, perplexity: float, tol: float = 1e-5,
                           max_iter: int = 100) -> np.ndarray:
    """Row-stochastic P(j|i) with each row's entropy matched to log(perplexity)."""
    n = dist2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(dist2[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        h, p = _row_entropy(d, beta)
        for _ in range(max_iter):
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            h, p = _row_entropy(d, beta)
        P[i, np.arange(n) != i] = p
    return P


def tsne_gradient(Y: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of KL(P || Q) with Student-t Q, and the KL value itself."""
    sq = np.sum(Y * Y, axis=1)
    num = 1.0 / (1.0 + sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T)
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-12)
    W = (P - Q) * num
    grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))
    return grad, kl
