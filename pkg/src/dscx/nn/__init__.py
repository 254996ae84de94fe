"""Minimal float64 tensor library with reverse-mode gradients."""

from dscx.nn import functional
from dscx.nn.layers import MLP, Buffer, Conv1d, Conv2d, Dense, LayerNorm, Module
from dscx.nn.optim import Adam
from dscx.nn.tensor import Parameter, Tensor, no_grad

__all__ = [
    "Adam",
    "Buffer",
    "Conv1d",
    "Conv2d",
    "Dense",
    "LayerNorm",
    "MLP",
    "Module",
    "Parameter",
    "Tensor",
    "functional",
    "no_grad",
]
