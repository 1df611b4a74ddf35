"""Parameter containers and convolution layers built on the autodiff core."""
import math

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor


class Module:
    """Base class: parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())


def _uniform(rng, shape, fan_in, gain):
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, stride=1, pad=None, rng=None, gain=math.sqrt(2.0)):
        if pad is None:
            pad = kernel // 2
        self.cin, self.cout, self.kernel, self.stride, self.pad = cin, cout, kernel, stride, pad
        fan_in = cin * kernel * kernel
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(_uniform(rng, (cout, cin, kernel, kernel), fan_in, gain),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(cout, np.float32), requires_grad=True)

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def out_size(self, h, w):
        k, s, p = self.kernel, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def macs(self, h, w):
        ho, wo = self.out_size(h, w)
        return ho * wo * self.cout * self.cin * self.kernel ** 2, (ho, wo)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, kernel, stride=1, pad=0, rng=None, gain=math.sqrt(2.0)):
        self.cin, self.cout, self.kernel, self.stride, self.pad = cin, cout, kernel, stride, pad
        fan_in = cin * kernel * kernel / stride ** 2
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(_uniform(rng, (cin, cout, kernel, kernel), fan_in, gain),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(cout, np.float32), requires_grad=True)

    def __call__(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.pad)

    def out_size(self, h, w):
        k, s, p = self.kernel, self.stride, self.pad
        return (h - 1) * s - 2 * p + k, (w - 1) * s - 2 * p + k

    def macs(self, h, w):
        # every input pixel scatters a cout x k x k patch per input channel
        return h * w * self.cin * self.cout * self.kernel ** 2, self.out_size(h, w)


class Stack(Module):
    """Layers applied in order, each followed by its activation (or none)."""

    def __init__(self, layers, activations):
        self.layers = list(layers)
        self.activations = list(activations)

    def __call__(self, x):
        for layer, act in zip(self.layers, self.activations):
            x = layer(x)
            if act is not None:
                x = act(x)
        return x

    def macs(self, h, w):
        total = 0
        for layer in self.layers:
            m, (h, w) = layer.macs(h, w)
            total += m
        return total, (h, w)
