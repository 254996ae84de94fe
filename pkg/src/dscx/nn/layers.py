"""Parameterised layers and a tiny module system.

A :class:`Module` discovers its parameters and sub-modules from instance
attributes (lists of modules included), in attribute definition order, so
parameter names such as ``camera.blocks.3.attention.query`` are stable
across runs and usable as checkpoint keys.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from dscx.nn import functional as F
from dscx.nn.tensor import Parameter, Tensor


class Buffer(Tensor):
    """Named, non-trainable state saved alongside parameters (e.g. input statistics)."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data)
        self.name = name


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    def _walk(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, (Parameter, Buffer)):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")
                    elif isinstance(item, (Parameter, Buffer)):
                        yield f"{path}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        return ((n, t) for n, t in self._walk(prefix) if isinstance(t, Parameter))

    def named_state(self) -> Iterator[tuple[str, Tensor]]:
        """Parameters and buffers: everything a checkpoint must carry."""
        return self._walk()

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        """Stamp every parameter and buffer with its full dotted path."""
        for name, t in self._walk():
            t.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Dense(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(glorot_uniform(rng, (d_in, d_out), d_in, d_out), "weight")
        self.bias = Parameter(np.zeros(d_out), "bias") if bias else None

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: Tensor) -> Tensor:
        return F.dense(x, self.weight, self.bias)


class Conv2d(Module):
    """2-D convolution; ``padding="same"`` keeps extents for odd kernels at stride 1."""

    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding="same"):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if padding == "same":
            padding = ((kh - 1) // 2, (kw - 1) // 2)
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            glorot_uniform(rng, (c_out, c_in, kh, kw), c_in * kh * kw, c_out * kh * kw), "weight"
        )
        self.bias = Parameter(np.zeros(c_out), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel: int, rng, stride=1, padding=None):
        self.stride = stride
        self.padding = (kernel - 1) // 2 if padding is None else padding
        self.weight = Parameter(glorot_uniform(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel), "weight")
        self.bias = Parameter(np.zeros(c_out), "bias")

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = Parameter(np.ones(d), "gain")
        self.shift = Parameter(np.zeros(d), "shift")

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.shift)


class MLP(Module):
    """Dense layers with ReLU between them (none after the last)."""

    def __init__(self, widths: list[int], rng: np.random.Generator):
        self.layers = [Dense(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x
