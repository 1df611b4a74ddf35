"""Central finite-difference oracle shared by the gradient tests."""
import numpy as np

from bitjscc.autodiff import backward

H = 1e-5


def numeric_grad(f, array, index=None, h=H):
    """d f / d array by central differences; ``f()`` reads ``array`` in place.

    ``index`` restricts the probe to a list of flat positions.
    """
    flat = array.reshape(-1)
    positions = range(flat.size) if index is None else index
    out = np.zeros(len(positions))
    for k, i in enumerate(positions):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[k] = (fp - fm) / (2 * h)
    return out


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(build, tensors, probes=None, rng=None):
    """Compare analytic and numeric gradients of ``build()`` w.r.t. each tensor.

    ``build`` must return a scalar Tensor computed from ``tensors``.  Returns
    the worst relative error.
    """
    for t in tensors:
        t.grad = None
    backward(build())
    worst = 0.0
    for t in tensors:
        index = None
        if probes is not None and t.size > probes:
            index = list(rng.choice(t.size, probes, replace=False))
        numeric = numeric_grad(lambda: build().item(), t.data, index)
        analytic = t.grad.reshape(-1) if index is None else t.grad.reshape(-1)[index]
        worst = max(worst, rel_error(analytic, numeric))
    return worst
