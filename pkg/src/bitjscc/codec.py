"""Convolutional semantic encoder / decoder.

The encoder downsamples by ``DOWNSAMPLE`` (two stride-2 stages) and emits a
continuous feature map of depth ``C``; the decoder mirrors it with transposed
convolutions and accepts any length-``L_b`` vector in ``[0, 1]``, so hard bits
and soft posteriors go through the same network.
"""
from fractions import Fraction

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor
from .nn import Conv2d, ConvTranspose2d, Module, Stack

DOWNSAMPLE = 4


def feature_channels_for(cpp, bits_per_symbol, height, width, bits_per_feature=1):
    """Feature depth C that makes the bit budget hit the requested cpp.

    ``L_b = cpp * H * W * log2(M)`` and ``L_b = bits_per_feature * C * H*W/d^2``.
    Raises ``ValueError`` when either quantity is not an integer.
    """
    cpp = Fraction(cpp).limit_denominator(1 << 20)
    n_bits = cpp * height * width * bits_per_symbol
    if n_bits.denominator != 1 or n_bits <= 0:
        raise ValueError(
            f"cpp={cpp} with {bits_per_symbol} bits/symbol on {height}x{width} "
            f"does not give a positive integer bit budget ({float(n_bits)})")
    grid = (height // DOWNSAMPLE) * (width // DOWNSAMPLE)
    channels = Fraction(int(n_bits), grid * bits_per_feature)
    if channels.denominator != 1:
        raise ValueError(
            f"L_b={int(n_bits)} bits cannot be laid out on a {grid}-element feature grid "
            f"with {bits_per_feature} bit(s) per feature")
    return int(channels)


class SemanticCodec(Module):
    """Encoder ``f_e`` and decoder ``f_d`` sharing one architecture descriptor.

    Parameters
    ----------
    height, width : int
        Image geometry; both must be divisible by 4.
    channels : int
        Depth ``C`` of the continuous feature map.
    widths : tuple of int
        Hidden widths ``(w0, w1)`` of the full- and half-resolution stages.
    bit_channels : int, optional
        Depth of the decoder's input grid, ``L_b / (H*W/16)``.  Defaults to
        ``channels`` (one bit per feature element).
    """

    def __init__(self, height, width, channels, widths=(16, 32), bit_channels=None, seed=0):
        if height % DOWNSAMPLE or width % DOWNSAMPLE or height <= 0 or width <= 0:
            raise ValueError(
                f"image geometry {height}x{width} must be divisible by {DOWNSAMPLE}")
        self.height, self.width = height, width
        self.channels = channels
        self.bit_channels = channels if bit_channels is None else bit_channels
        self.widths = tuple(widths)
        w0, w1 = self.widths
        rng = np.random.default_rng(seed)
        relu = ops.relu
        self.encoder = Stack(
            [
                Conv2d(3, w0, 3, rng=rng),
                Conv2d(w0, w1, 4, stride=2, pad=1, rng=rng),
                Conv2d(w1, w1, 3, rng=rng),
                Conv2d(w1, w1, 4, stride=2, pad=1, rng=rng),
                Conv2d(w1, channels, 3, rng=rng, gain=1.0),
            ],
            [relu, relu, relu, relu, None],
        )
        self.decoder = Stack(
            [
                Conv2d(self.bit_channels, w1, 3, rng=rng),
                ConvTranspose2d(w1, w1, 4, stride=2, pad=1, rng=rng),
                Conv2d(w1, w0, 3, rng=rng),
                ConvTranspose2d(w0, w0, 4, stride=2, pad=1, rng=rng),
                Conv2d(w0, 3, 3, rng=rng, gain=1.0),
            ],
            [relu, relu, relu, relu, ops.sigmoid],
        )

    @property
    def grid(self):
        return self.height // DOWNSAMPLE, self.width // DOWNSAMPLE

    @property
    def feature_length(self):
        h, w = self.grid
        return self.channels * h * w

    @property
    def n_bits(self):
        h, w = self.grid
        return self.bit_channels * h * w

    def descriptor(self):
        return {
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "bit_channels": self.bit_channels,
            "widths": list(self.widths),
        }

    def encode(self, x):
        """NCHW image batch in [0, 1] -> feature map ``(N, C, H/4, W/4)``."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 4 or x.shape[1:] != (3, self.height, self.width):
            raise ValueError(
                f"encode: expected (N, 3, {self.height}, {self.width}) images, got {x.shape}; "
                f"height and width must be divisible by {DOWNSAMPLE}")
        return self.encoder(x)

    def decode(self, v):
        """``(N, L_b)`` vector in [0, 1] -> NCHW reconstruction in [0, 1]."""
        v = v if isinstance(v, Tensor) else Tensor(np.asarray(v, dtype=np.float32))
        if v.data.ndim != 2 or v.shape[1] != self.n_bits:
            raise ValueError(f"decode: expected (N, {self.n_bits}) input, got {v.shape}")
        h, w = self.grid
        return self.decoder(ops.reshape(v, (v.shape[0], self.bit_channels, h, w)))

    def macs(self):
        enc, (h, w) = self.encoder.macs(self.height, self.width)
        dec, _ = self.decoder.macs(h, w)
        return enc + dec


def to_nchw(images):
    """NHWC (or HWC) float images -> contiguous NCHW float32."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 3:
        images = images[None]
    return np.ascontiguousarray(images.transpose(0, 3, 1, 2))


def to_nhwc(batch):
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    return np.ascontiguousarray(data.transpose(0, 2, 3, 1))
