"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N wall time of each backend,
the speed-up, and the max abs difference between their outputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from vocotrace import _kernels


def cases(rng: np.random.Generator):
    x = rng.standard_normal((16, 16, 250, 10)).astype(np.float32)
    cols = rng.standard_normal((16 * 250 * 10, 16 * 9)).astype(np.float32)
    wav = rng.standard_normal(24000 * 3)
    pts = rng.standard_normal((300, 64))
    sq = np.sum(pts**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * pts @ pts.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    P = rng.random((300, 300))
    P = (P + P.T) / 2
    np.fill_diagonal(P, 0.0)
    P /= P.sum()
    Y = rng.standard_normal((300, 2))
    return {
        "im2col 16x16x250x10 k3": ("im2col", (x, 3, 3, 1, 1)),
        "col2im 16x16x250x10 k3": ("col2im", (cols, x.shape, 3, 3, 1, 1)),
        "sinc_resample 3 s x0.9": ("sinc_resample", (wav, 0.9, int(round(len(wav) / 0.9)), 1.0, 16)),
        "affinities n=300": ("conditional_affinities", (d2, 30.0)),
        "tsne_gradient n=300": ("tsne_gradient", (Y, P)),
    }


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':<26}{'cython ms':>11}{'numpy ms':>11}{'speed-up':>10}{'max |diff|':>12}")
    for name, (fn, a) in cases(np.random.default_rng(0)).items():
        fast, slow = getattr(_kernels.compiled, fn), getattr(_kernels.fallback, fn)
        t_fast = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat))
        diff = float(np.max(np.abs(np.asarray(_first(fast(*a)), float) - np.asarray(_first(slow(*a)), float))))
        print(f"{name:<26}{1e3 * t_fast:>11.2f}{1e3 * t_slow:>11.2f}{t_slow / t_fast:>9.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
