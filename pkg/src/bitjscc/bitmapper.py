"""Learnable probabilistic mapping from continuous features to bits.

A small convolutional network turns the feature map into one distribution
``[P(b=0), P(b=1)]`` per bit.  Bits are drawn with the Gumbel-Max trick;
gradients flow through the temperature-controlled Gumbel-Softmax relaxation
via a straight-through connection, so the forward pass always carries hard
bits.
"""
import math

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor
from .nn import Conv2d, Module

UNIFORM_CLAMP = 1e-12


class BitMapper(Module):
    """Probabilistic generative network ``z_s -> p_s``.

    Two channel-preserving 3x3 convolutions with a residual connection,
    followed by a 1x1 projection to two logits per emitted bit.  With
    ``bits_per_feature = r`` every feature element yields ``r`` bits.
    """

    def __init__(self, channels, bits_per_feature=1, tau=1.0, seed=1):
        if channels < 1 or bits_per_feature < 1:
            raise ValueError("channels and bits_per_feature must be positive")
        if tau <= 0:
            raise ValueError(f"temperature must be positive, got {tau}")
        self.channels = channels
        self.bits_per_feature = bits_per_feature
        self.tau = float(tau)
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2d(channels, channels, 3, rng=rng)
        self.conv2 = Conv2d(channels, channels, 3, rng=rng, gain=0.1)
        self.proj = Conv2d(channels, 2 * bits_per_feature * channels, 1, rng=rng, gain=1.0)

    def n_bits(self, feature_length):
        return self.bits_per_feature * feature_length

    def descriptor(self):
        return {"channels": self.channels, "bits_per_feature": self.bits_per_feature,
                "tau": self.tau}

    def logits(self, z):
        h = ops.add(self.conv2(ops.relu(self.conv1(z))), z)
        return self.proj(h)

    def distribution(self, z):
        """Feature map ``(N, C, h, w)`` -> ``p_s`` of shape ``(N * L_b, 2)``.

        Bit order within an image is ``(bit_channel, y, x)``, matching the
        decoder's input layout.
        """
        if z.data.ndim != 4 or z.shape[1] != self.channels:
            raise ValueError(
                f"bit mapper expects (N, {self.channels}, h, w) features, got {z.shape}")
        n, _, h, w = z.shape
        rc = self.bits_per_feature * self.channels
        logits = ops.reshape(self.logits(z), (n, 2, rc, h, w))
        rows = ops.reshape(ops.transpose(logits, (0, 2, 3, 4, 1)), (n * rc * h * w, 2))
        return ops.softmax_rows(rows)

    def macs(self, h, w):
        total = 0
        for layer in (self.conv1, self.conv2, self.proj):
            m, _ = layer.macs(h, w)
            total += m
        return total


def gumbel_noise(shape, rng):
    """Standard Gumbel samples ``-ln(-ln u)`` with ``u`` clamped away from 0 and 1."""
    u = np.clip(rng.random(shape), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    return -np.log(-np.log(u))


def _log_probs(p_s):
    p = p_s.data if isinstance(p_s, Tensor) else np.asarray(p_s, dtype=np.float64)
    return np.log(np.maximum(p, p.dtype.type(ops.LOG_FLOOR)))


def gumbel_max_sample(p_s, g):
    """Hard Gumbel-Max draw: returns one-hot rows and the decoded bits.

    Scores are formed in the dtype of ``p_s``, exactly as in
    :func:`gumbel_softmax_relax`, so both pick the same argmax.  Exact ties
    resolve to the first category, i.e. bit 0.
    """
    logp = _log_probs(p_s)
    scores = logp + np.asarray(g, dtype=logp.dtype)
    k = np.argmax(scores, axis=-1)
    one_hot = np.zeros(scores.shape, dtype=np.uint8)
    np.put_along_axis(one_hot, k[..., None], 1, axis=-1)
    bits = one_hot @ np.array([0, 1], dtype=np.uint8)
    return one_hot, bits.astype(np.uint8)


def gumbel_softmax_relax(p_s, g, tau):
    """softmax((log p_s + g) / tau) row-wise, differentiable in ``p_s``."""
    if not tau > 0:
        raise ValueError(f"gumbel_softmax_relax: temperature must be positive, got {tau}")
    p_s = p_s if isinstance(p_s, Tensor) else Tensor(np.asarray(p_s, dtype=np.float64))
    g = np.asarray(g, dtype=p_s.dtype)
    if g.shape != p_s.shape:
        raise ValueError(f"gumbel_softmax_relax: noise {g.shape} does not match p_s {p_s.shape}")
    scores = ops.add(ops.log(p_s), Tensor(g))
    return ops.softmax_rows(ops.mul(scores, 1.0 / tau))


def sample_bits_st(p_s, g, tau):
    """Hard Gumbel-Max bits forward, Gumbel-Softmax gradient backward."""
    _, bits = gumbel_max_sample(p_s, g)
    soft_bit = ops.getitem(gumbel_softmax_relax(p_s, g, tau), (slice(None), 1))
    return ops.straight_through(bits.astype(soft_bit.dtype), soft_bit)


def tau_schedule(step, total_steps, tau_start, tau_end):
    """Exponential anneal from ``tau_start`` to ``tau_end``, then constant."""
    if total_steps <= 0 or step >= total_steps:
        return float(tau_end)
    frac = step / total_steps
    return float(tau_start * math.exp(frac * math.log(tau_end / tau_start)))
