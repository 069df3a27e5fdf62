"""Central finite-difference gradient checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class GradReport:
    max_rel_error: float
    n_checked: int
    worst: str

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def gradient_check(fn: Callable[[], Tensor], wrt: dict[str, Tensor], h: float = 1e-4,
                   max_entries: int | None = None, seed: int = 0, floor: float = 1e-8) -> GradReport:
    """Compare backprop gradients of scalar ``fn()`` with central differences.

    ``wrt`` tensors should be float64 leaves with ``requires_grad`` set. The
    relative error per entry is ``|a - n| / max(|a| + |n|, floor)``. When
    ``max_entries`` is given, that many entries per tensor are sampled.
    """
    for t in wrt.values():
        t.zero_grad()
    out = fn()
    out.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy() for k, t in wrt.items()}
    rng = np.random.default_rng(seed)
    worst, worst_at, n = 0.0, "", 0
    for k, t in wrt.items():
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = float(fn().data)
            flat[i] = orig - h
            down = float(fn().data)
            flat[i] = orig
            num = (up - down) / (2.0 * h)
            a = analytic[k].reshape(-1)[i]
            err = abs(a - num) / max(abs(a) + abs(num), floor)
            n += 1
            if err > worst:
                worst, worst_at = err, f"{k}[{i}]"
    return GradReport(worst, n, worst_at)
