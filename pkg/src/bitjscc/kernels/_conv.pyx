# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im kernels.

Column layout is ``(C*kh*kw, N*Ho*Wo)`` with rows ordered ``(c, ky, kx)`` and
columns ordered ``(n, oy, ox)``.  ``col2im`` adds contributions to each pixel
in ``(ky, kx)`` order, the same order as the numpy fallback, so both backends
agree bit for bit.
"""
import numpy as np

ctypedef fused real:
    float
    double


def _valid_range(int kw, Py_ssize_t wo, Py_ssize_t w, int stride, int pad):
    # output columns ox with 0 <= ox*stride - pad + kx < w, per kernel column kx
    lo = np.zeros(kw, dtype=np.intp)
    hi = np.zeros(kw, dtype=np.intp)
    cdef Py_ssize_t kx, ox
    for kx in range(kw):
        ox = 0
        while ox < wo and ox * stride - pad + kx < 0:
            ox += 1
        lo[kx] = ox
        while ox < wo and ox * stride - pad + kx < w:
            ox += 1
        hi[kx] = ox
    return lo, hi


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((c * kh * kw, n * ho * wo), dtype=dtype)
    cdef real[:, ::1] cols = out
    cdef Py_ssize_t ci, ky, kx, ni, oy, ox, iy, row, col0
    cdef Py_ssize_t[::1] lo, hi
    lo, hi = _valid_range(kw, wo, w, stride, pad)
    for ci in range(c):
        for ky in range(kh):
            for kx in range(kw):
                row = (ci * kh + ky) * kw + kx
                for ni in range(n):
                    for oy in range(ho):
                        iy = oy * stride - pad + ky
                        if iy < 0 or iy >= h:
                            continue
                        col0 = (ni * ho + oy) * wo
                        for ox in range(lo[kx], hi[kx]):
                            cols[row, col0 + ox] = x[ni, ci, iy, ox * stride - pad + kx]
    return out


def col2im(real[:, ::1] cols, int n, int c, int h, int w,
           int kh, int kw, int stride, int pad):
    cdef Py_ssize_t ho = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - kw) // stride + 1
    if cols.shape[0] != c * kh * kw or cols.shape[1] != n * ho * wo:
        raise ValueError(
            f"col2im: columns {cols.shape[0]}x{cols.shape[1]} do not match "
            f"image ({n}, {c}, {h}, {w}) with kernel {kh}x{kw}"
        )
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] x = out
    cdef Py_ssize_t ci, ky, kx, ni, oy, ox, iy, row, col0
    cdef Py_ssize_t[::1] lo, hi
    lo, hi = _valid_range(kw, wo, w, stride, pad)
    for ci in range(c):
        for ky in range(kh):
            for kx in range(kw):
                row = (ci * kh + ky) * kw + kx
                for ni in range(n):
                    for oy in range(ho):
                        iy = oy * stride - pad + ky
                        if iy < 0 or iy >= h:
                            continue
                        col0 = (ni * ho + oy) * wo
                        for ox in range(lo[kx], hi[kx]):
                            x[ni, ci, iy, ox * stride - pad + kx] += cols[row, col0 + ox]
    return out
