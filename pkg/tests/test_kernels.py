"""Compiled kernels agree with the numpy fallback; backend selection."""
import os
import subprocess
import sys

import numpy as np
import pytest

from vocotrace import _kernels
from vocotrace._kernels import fallback

needs_compiled = pytest.mark.skipif(_kernels.compiled is None, reason="compiled kernels not built")


def _affinity_inputs(rng, n=60):
    pts = rng.standard_normal((n, 5))
    sq = np.sum(pts**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * pts @ pts.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return d2


def _joint(rng, n=60):
    P = rng.random((n, n))
    P = P + P.T
    np.fill_diagonal(P, 0.0)
    return P / P.sum()


@needs_compiled
@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_im2col_col2im_parity(rng, stride, pad):
    x = rng.standard_normal((2, 3, 11, 7)).astype(np.float32)
    a = _kernels.compiled.im2col(x, 3, 3, stride, pad)
    b = fallback.im2col(x, 3, 3, stride, pad)
    np.testing.assert_allclose(a, b, atol=1e-6)
    cols = rng.standard_normal(b.shape).astype(np.float32)
    np.testing.assert_allclose(_kernels.compiled.col2im(cols, x.shape, 3, 3, stride, pad),
                               fallback.col2im(cols, x.shape, 3, 3, stride, pad), atol=1e-5)


@pytest.mark.parametrize("impl", ["fallback", "compiled"])
def test_col2im_is_adjoint_of_im2col(rng, impl):
    mod = fallback if impl == "fallback" else _kernels.compiled
    if mod is None:
        pytest.skip("compiled kernels not built")
    x = rng.standard_normal((2, 3, 9, 6))
    cols = mod.im2col(x.astype(np.float32), 3, 3, 2, 1).astype(np.float64)
    c = rng.standard_normal(cols.shape)
    back = mod.col2im(c.astype(np.float32), x.shape, 3, 3, 2, 1).astype(np.float64)
    assert np.sum(cols * c) == pytest.approx(np.sum(x * back), rel=1e-4)


@needs_compiled
@pytest.mark.parametrize("step", [0.9, 1.0, 1.1])
def test_sinc_resample_parity(rng, step):
    x = rng.standard_normal(3000)
    n = int(round(len(x) / step))
    cutoff = min(1.0, 1.0 / step)
    np.testing.assert_allclose(_kernels.compiled.sinc_resample(x, step, n, cutoff, 16),
                               fallback.sinc_resample(x, step, n, cutoff, 16), atol=1e-9)


def test_sinc_resample_identity(rng):
    x = rng.standard_normal(500)
    np.testing.assert_allclose(_kernels.sinc_resample(x, 1.0, 500, 1.0, 16), x, atol=1e-9)


@needs_compiled
def test_tsne_kernels_parity(rng):
    d2 = _affinity_inputs(rng)
    np.testing.assert_allclose(_kernels.compiled.conditional_affinities(d2, 10.0),
                               fallback.conditional_affinities(d2, 10.0), atol=1e-10)
    P = _joint(rng)
    Y = rng.standard_normal((60, 2))
    ga, kla = _kernels.compiled.tsne_gradient(Y, P)
    gb, klb = fallback.tsne_gradient(Y, P)
    np.testing.assert_allclose(ga, gb, atol=1e-10)
    assert kla == pytest.approx(klb, abs=1e-10)


def test_tsne_gradient_matches_finite_difference(rng):
    P = _joint(rng, 20)
    Y = rng.standard_normal((20, 2))
    g, _ = _kernels.tsne_gradient(Y, P)
    h = 1e-6
    for i, j in [(0, 0), (7, 1), (19, 0)]:
        Yp, Ym = Y.copy(), Y.copy()
        Yp[i, j] += h
        Ym[i, j] -= h
        num = (_kernels.tsne_gradient(Yp, P)[1] - _kernels.tsne_gradient(Ym, P)[1]) / (2 * h)
        assert g[i, j] == pytest.approx(num, rel=1e-5, abs=1e-9)


def test_pure_env_selects_fallback():
    code = "from vocotrace import _kernels; print(_kernels.BACKEND)"
    env = {**os.environ, "VOCOTRACE_PURE": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
