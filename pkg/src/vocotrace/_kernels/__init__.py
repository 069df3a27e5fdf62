"""Hot kernels, compiled when available.

The Cython module is used if it was built and ``VOCOTRACE_PURE`` is unset;
otherwise the numpy fallback is used. ``BACKEND`` names the active choice.
"""
import os

from . import _fallback as fallback

compiled = None
if not os.environ.get("VOCOTRACE_PURE"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "cython" if compiled is not None else "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
sinc_resample = _impl.sinc_resample
conditional_affinities = _impl.conditional_affinities
tsne_gradient = _impl.tsne_gradient

__all__ = [
    "BACKEND", "compiled", "fallback",
    "im2col", "col2im", "sinc_resample", "conditional_affinities", "tsne_gradient",
]
