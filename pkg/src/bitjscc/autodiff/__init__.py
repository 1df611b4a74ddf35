"""Minimal reverse-mode automatic differentiation over dense numpy arrays."""
from . import ops
from .ops import (
    add,
    conv2d,
    conv_transpose2d,
    exp,
    forward_op,
    log,
    matmul,
    mean,
    mse,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax_rows,
    straight_through,
    sub,
    tanh,
    transpose,
)
from .optim import Adam, AdamState, StepLR, adam_step
from .tensor import ShapeError, Tensor, backward, grad_enabled, no_grad, tape

__all__ = [
    "Adam", "AdamState", "ShapeError", "StepLR", "Tensor", "adam_step", "add",
    "backward", "conv2d", "conv_transpose2d", "exp", "forward_op", "grad_enabled",
    "log", "matmul", "mean", "mse", "mul", "no_grad", "ops", "relu", "reshape",
    "sigmoid", "softmax_rows", "straight_through", "sub", "tanh", "tape", "transpose",
]
