"""Pure numpy im2col / col2im, used when the compiled extension is missing."""
import numpy as np


def _out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho = _out_size(h, kh, stride, pad)
    wo = _out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    xt = x.transpose(1, 0, 2, 3)
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    ystop = stride * (ho - 1) + 1
    xstop = stride * (wo - 1) + 1
    for ky in range(kh):
        for kx in range(kw):
            cols[:, ky, kx] = xt[:, :, ky:ky + ystop:stride, kx:kx + xstop:stride]
    return cols.reshape(c * kh * kw, n * ho * wo)


def col2im(cols, n, c, h, w, kh, kw, stride, pad):
    ho = _out_size(h, kh, stride, pad)
    wo = _out_size(w, kw, stride, pad)
    if cols.shape != (c * kh * kw, n * ho * wo):
        raise ValueError(
            f"col2im: columns {cols.shape[0]}x{cols.shape[1]} do not match "
            f"image ({n}, {c}, {h}, {w}) with kernel {kh}x{kw}"
        )
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    xp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    ystop = stride * (ho - 1) + 1
    xstop = stride * (wo - 1) + 1
    for ky in range(kh):
        for kx in range(kw):
            xp[:, :, ky:ky + ystop:stride, kx:kx + xstop:stride] += cols[:, ky, kx]
    xp = xp[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(xp.transpose(1, 0, 2, 3))
