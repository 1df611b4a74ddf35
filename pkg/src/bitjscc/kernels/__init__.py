"""Convolution lowering kernels with backend selection at import.

The compiled Cython module is used when it was built; otherwise the numpy
implementation in :mod:`bitjscc.kernels._fallback` is used.  Setting the
environment variable ``BITJSCC_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("BITJSCC_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _conv as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _compiled
    if backend == "numpy":
        return _fallback
    raise ValueError(f"unknown kernel backend {backend!r}")


def available_backends():
    return ["cython", "numpy"] if _compiled is not None else ["numpy"]


def im2col(x, kh, kw, stride=1, pad=0, backend=None):
    """Lower an NCHW batch to a ``(C*kh*kw, N*Ho*Wo)`` column matrix."""
    x = np.ascontiguousarray(x)
    return _impl(backend).im2col(x, kh, kw, stride, pad)


def col2im(cols, shape, kh, kw, stride=1, pad=0, backend=None):
    """Adjoint of :func:`im2col`: scatter-add columns back to an NCHW batch."""
    n, c, h, w = shape
    cols = np.ascontiguousarray(cols)
    return _impl(backend).col2im(cols, n, c, h, w, kh, kw, stride, pad)
