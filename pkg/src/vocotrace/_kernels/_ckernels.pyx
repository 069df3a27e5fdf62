# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_fallback.py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, exp, fabs, floor, log, sin, M_PI

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(const real[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n * ho * wo, c * kh * kw), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col, iy, ix
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    row = (b * ho + oy) * wo + ox
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[row, col] = x[b, ch, iy, ix]
                                col += 1
    return out_arr


def col2im(const real[:, ::1] cols, tuple shape, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col, iy, ix
    with nogil:
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    row = (b * ho + oy) * wo + ox
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[b, ch, iy, ix] += cols[row, col]
                                col += 1
    return out_arr


def sinc_resample(x_in, double step, Py_ssize_t n_out, double cutoff, int half_width):
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n_in = x.shape[0]
    out_arr = np.empty(n_out, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double span = half_width / cutoff
    cdef Py_ssize_t reach = <Py_ssize_t>(span + 0.999999999)
    cdef Py_ssize_t m, k, base, idx
    cdef double pos, t, arg, kern, acc
    with nogil:
        for m in range(n_out):
            pos = m * step
            base = <Py_ssize_t>floor(pos)
            acc = 0.0
            for k in range(-reach, reach + 1):
                idx = base + k
                if idx < 0 or idx >= n_in:
                    continue
                t = pos - idx
                if fabs(t) >= span:
                    continue
                arg = M_PI * cutoff * t
                if arg == 0.0:
                    kern = cutoff
                else:
                    kern = cutoff * sin(arg) / arg
                kern *= 0.5 + 0.5 * cos(M_PI * t / span)
                acc += kern * x[idx]
            out[m] = acc
    return out_arr


cdef double _entropy(double[::1] d, double beta, double[::1] p, Py_ssize_t skip) nogil:
    cdef Py_ssize_t j, n = d.shape[0]
    cdef double s = 0.0, sd = 0.0
    for j in range(n):
        if j == skip:
            p[j] = 0.0
            continue
        p[j] = exp(-d[j] * beta)
        s += p[j]
        sd += d[j] * p[j]
    if s <= 0.0:
        return 0.0
    for j in range(n):
        p[j] /= s
    return log(s) + beta * sd / s


def conditional_affinities(dist2_in, double perplexity, double tol=1e-5, int max_iter=100):
    cdef const double[:, ::1] dist2 = np.ascontiguousarray(dist2_in, dtype=np.float64)
    cdef Py_ssize_t n = dist2.shape[0]
    P_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] d = np.empty(n, dtype=np.float64)
    cdef double target = log(perplexity)
    cdef double beta, lo, hi, h, diff, dmin
    cdef Py_ssize_t i, j, it
    cdef bint hi_inf
    with nogil:
        for i in range(n):
            dmin = 1e300
            for j in range(n):
                if j != i and dist2[i, j] < dmin:
                    dmin = dist2[i, j]
            for j in range(n):
                d[j] = dist2[i, j] - dmin
            beta = 1.0
            lo = 0.0
            hi = 0.0
            hi_inf = True
            h = _entropy(d, beta, P[i], i)
            for it in range(max_iter):
                diff = h - target
                if fabs(diff) < tol:
                    break
                if diff > 0:
                    lo = beta
                    if hi_inf:
                        beta = beta * 2.0
                    else:
                        beta = 0.5 * (beta + hi)
                else:
                    hi = beta
                    hi_inf = False
                    beta = 0.5 * (beta + lo)
                h = _entropy(d, beta, P[i], i)
    return P_arr


def tsne_gradient(Y_in, P_in):
    cdef const double[:, ::1] Y = np.ascontiguousarray(Y_in, dtype=np.float64)
    cdef const double[:, ::1] P = np.ascontiguousarray(P_in, dtype=np.float64)
    cdef Py_ssize_t n = Y.shape[0], dim = Y.shape[1]
    num_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    grad_arr = np.zeros((n, dim), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, dsq, diff, q, w, kl = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dsq = 0.0
                for k in range(dim):
                    diff = Y[i, k] - Y[j, k]
                    dsq += diff * diff
                num[i, j] = 1.0 / (1.0 + dsq)
                num[j, i] = num[i, j]
                total += 2.0 * num[i, j]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                q = num[i, j] / total
                if q < 1e-12:
                    q = 1e-12
                if P[i, j] > 0:
                    kl += P[i, j] * log(P[i, j] / q)
                w = (P[i, j] - q) * num[i, j]
                for k in range(dim):
                    grad[i, k] += 4.0 * w * (Y[i, k] - Y[j, k])
    return grad_arr, kl
