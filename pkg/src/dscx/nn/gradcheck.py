"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from dscx.nn.tensor import Tensor, no_grad


@dataclass
class GradCheckResult:
    max_error: float
    worst: str
    checked: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_error < tol


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    names: Sequence[str] | None = None,
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    The error for one entry is ``|analytic - fd| / max(1, |fd|)``. With
    ``max_entries`` only that many randomly chosen entries per tensor are
    perturbed.
    """
    names = list(names) if names is not None else [f"t{i}" for i in range(len(tensors))]
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    loss_fn().backward()
    analytic = [t.grad.copy() for t in tensors]

    worst, worst_name, checked = 0.0, "", 0
    for t, name, grad in zip(tensors, names, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for k in idx:
            orig = flat[k]
            with no_grad():
                flat[k] = orig + h
                up = float(loss_fn().data)
                flat[k] = orig - h
                down = float(loss_fn().data)
            flat[k] = orig
            fd = (up - down) / (2 * h)
            err = abs(grad.reshape(-1)[k] - fd) / max(1.0, abs(fd))
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{k}]"
    return GradCheckResult(worst, worst_name, checked)
