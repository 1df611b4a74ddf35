"""Differentiable operations on :class:`~bitjscc.autodiff.tensor.Tensor`.

Broadcasting is deliberately limited: elementwise binary ops accept two
tensors of identical shape, or a tensor and a scalar.  Per-channel biases are
folded into the convolution ops.
"""
import numpy as np

from .. import kernels
from .tensor import ShapeError, Tensor, record

LOG_FLOOR = 1e-12


def _tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _is_scalar(t):
    return t.data.ndim == 0 or t.size == 1 and t.data.ndim <= 1


def _binary_operands(name, a, b):
    a = _tensor(a, b if isinstance(b, Tensor) else None)
    b = _tensor(b, a)
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}")
    return a, b


def _reduce_to(g, t):
    if g.shape == t.shape:
        return g
    return np.asarray(g.sum(), dtype=t.dtype).reshape(t.shape)


def add(a, b):
    a, b = _binary_operands("add", a, b)
    return record(a.data + b.data, (a, b),
                  lambda g: (_reduce_to(g, a), _reduce_to(g, b)), "add")


def sub(a, b):
    a, b = _binary_operands("sub", a, b)
    return record(a.data - b.data, (a, b),
                  lambda g: (_reduce_to(g, a), _reduce_to(-g, b)), "sub")


def mul(a, b):
    a, b = _binary_operands("mul", a, b)

    def bw(g):
        return _reduce_to(g * b.data, a), _reduce_to(g * a.data, b)

    return record(a.data * b.data, (a, b), bw, "mul")


def matmul(a, b):
    a, b = _tensor(a), _tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return record(a.data @ b.data, (a, b), bw, "matmul")


def _conv_out(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def conv2d(x, w, b=None, stride=1, pad=0):
    """2-D cross-correlation of an NCHW batch with OIHW weights."""
    x, w = _tensor(x), _tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho, wo = _conv_out(h, kh, stride, pad), _conv_out(wd, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {w.shape} too large for input {x.shape}")
    cols = kernels.im2col(x.data, kh, kw, stride, pad)
    wmat = w.data.reshape(co, -1)
    out = wmat @ cols
    if b is not None:
        b = _tensor(b)
        if b.shape != (co,):
            raise ShapeError(f"conv2d: bias shape {b.shape} does not match weight {w.shape}")
        out += b.data[:, None]
    out = out.reshape(co, n, ho, wo).transpose(1, 0, 2, 3)

    def bw(g):
        gm = g.transpose(1, 0, 2, 3).reshape(co, -1)
        gx = gw = gb = None
        if x.requires_grad:
            gx = kernels.col2im(wmat.T @ gm, x.shape, kh, kw, stride, pad)
        if w.requires_grad:
            gw = (gm @ cols.T).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = gm.sum(axis=1)
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return record(out, parents, bw, "conv2d")


def conv_transpose2d(x, w, b=None, stride=1, pad=0):
    """Transposed convolution (adjoint of :func:`conv2d`); weights are IOHW."""
    x, w = _tensor(x), _tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose2d: incompatible shapes {x.shape} and {w.shape}")
    n, ci, h, wd = x.shape
    _, co, kh, kw = w.shape
    ho = (h - 1) * stride - 2 * pad + kh
    wo = (wd - 1) * stride - 2 * pad + kw
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: kernel {w.shape} too large for input {x.shape}")
    xm = x.data.transpose(1, 0, 2, 3).reshape(ci, -1)
    wmat = w.data.reshape(ci, -1)
    out = kernels.col2im(wmat.T @ xm, (n, co, ho, wo), kh, kw, stride, pad)
    if b is not None:
        b = _tensor(b)
        if b.shape != (co,):
            raise ShapeError(
                f"conv_transpose2d: bias shape {b.shape} does not match weight {w.shape}")
        out += b.data[None, :, None, None]

    def bw(g):
        gcols = kernels.im2col(g, kh, kw, stride, pad)
        gx = gw = gb = None
        if x.requires_grad:
            gx = (wmat @ gcols).reshape(ci, n, h, wd).transpose(1, 0, 2, 3)
        if w.requires_grad:
            gw = (xm @ gcols.T).reshape(w.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return record(out, parents, bw, "conv_transpose2d")


def relu(x):
    x = _tensor(x)
    mask = x.data > 0
    return record(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x):
    x = _tensor(x)
    s = _sigmoid(x.data)
    return record(s, (x,), lambda g: (g * s * (1 - s),), "sigmoid")


def tanh(x):
    x = _tensor(x)
    t = np.tanh(x.data)
    return record(t, (x,), lambda g: (g * (1 - t * t),), "tanh")


def exp(x):
    x = _tensor(x)
    e = np.exp(x.data)
    return record(e, (x,), lambda g: (g * e,), "exp")


def log(x):
    """Natural log with arguments floored at ``LOG_FLOOR``.

    The gradient is zero where the floor is active.
    """
    x = _tensor(x)
    floored = np.maximum(x.data, LOG_FLOOR)
    active = x.data > LOG_FLOOR

    def bw(g):
        return (np.where(active, g / floored, 0).astype(x.dtype),)

    return record(np.log(floored), (x,), bw, "log")


def softmax_rows(x):
    """Softmax over the last axis."""
    x = _tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return record(s, (x,), bw, "softmax_rows")


def reshape(x, shape):
    x = _tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None
    return record(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes):
    x = _tensor(x)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ShapeError(f"transpose: axes {tuple(axes)} invalid for shape {x.shape}")
    inverse = np.argsort(axes)
    out = np.ascontiguousarray(x.data.transpose(axes))
    return record(out, (x,), lambda g: (g.transpose(inverse),), "transpose")


def getitem(x, index):
    """Basic (slice/integer) indexing."""
    x = _tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return record(np.array(x.data[index]), (x,), bw, "getitem")


def sum(x):
    x = _tensor(x)
    total = np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype)
    return record(total, (x,), lambda g: (np.full_like(x.data, g),), "sum")


def mean(x):
    x = _tensor(x)
    n = x.size
    m = np.asarray(x.data.mean(dtype=np.float64), dtype=x.dtype)
    return record(m, (x,), lambda g: (np.full_like(x.data, g / n),), "mean")


def mse(a, b):
    """Mean squared error, accumulated in double precision."""
    a, b = _tensor(a), _tensor(b, a)
    if a.shape != b.shape:
        raise ShapeError(f"mse: incompatible shapes {a.shape} and {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    n = diff.size
    value = np.asarray(np.mean(diff * diff))

    def bw(g):
        ga = (2.0 * g / n) * diff
        return ga.astype(a.dtype), (-ga).astype(b.dtype)

    return record(value, (a, b), bw, "mse")


def straight_through(forward_value, surrogate):
    """Return ``forward_value`` whose backward pass goes to ``surrogate``.

    The forward value is reproduced exactly; the incoming gradient is routed
    unchanged to ``surrogate`` and never to ``forward_value``.
    """
    surrogate = _tensor(surrogate)
    fv = forward_value.data if isinstance(forward_value, Tensor) else np.asarray(forward_value)
    if fv.shape != surrogate.shape:
        raise ShapeError(
            f"straight_through: incompatible shapes {fv.shape} and {surrogate.shape}")
    fv = np.array(fv, dtype=fv.dtype if fv.dtype.kind == "f" else surrogate.dtype)
    return record(fv, (surrogate,), lambda g: (g.astype(surrogate.dtype, copy=False),),
                  "straight_through")


_FORWARD_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "matmul": matmul,
    "conv2d": conv2d,
    "conv_transpose2d": conv_transpose2d,
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "softmax_rows": softmax_rows,
    "reshape": reshape,
    "transpose": transpose,
    "mean": mean,
    "sum": sum,
    "mse": mse,
    "straight_through": straight_through,
}


def forward_op(kind, inputs, **kwargs):
    """Apply the named operation to ``inputs``; see the individual functions."""
    try:
        fn = _FORWARD_OPS[kind]
    except KeyError:
        raise ValueError(f"unknown operation {kind!r}") from None
    return fn(*inputs, **kwargs)
