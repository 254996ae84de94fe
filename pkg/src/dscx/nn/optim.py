"""Adam optimiser."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dscx.nn.tensor import Parameter


@dataclass
class AdamState:
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """Apply one bias-corrected Adam update in place, using each ``p.grad``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i, p in enumerate(params):
        g = p.grad
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        v = state.v[i]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, params: list[Parameter], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))
    if total > max_norm and np.isfinite(total):
        scale = max_norm / total
        for p in params:
            p.grad = p.grad * scale
    return total
