"""Dense float64 tensors with a recorded tape for reverse-mode gradients.

Every differentiable op in :mod:`dscx.nn.functional` builds its output with
:func:`record`, which stores the parent tensors and a closure mapping the
output gradient to parent gradients. :meth:`Tensor.backward` walks that tape
in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

from dscx.errors import GraphNotRecorded

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (inference mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # Operator sugar; the op implementations live in functional.
    def __add__(self, other):
        from dscx.nn import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from dscx.nn import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from dscx.nn import functional as F

        return F.matmul(self, other)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Intermediate gradients are released as soon as they have been
        propagated, so only leaves hold ``grad`` afterwards.
        """
        if self._backward is None:
            raise GraphNotRecorded(
                "tensor has no recorded history; was it computed under no_grad() "
                "or from inputs that do not require grad?"
            )
        if grad is None:
            if self.data.size != 1:
                raise GraphNotRecorded("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order = _topological_order(self)
        self.grad = np.asarray(grad, dtype=DTYPE)
        for node in reversed(order):
            g = node.grad
            if node._backward is None or g is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg
            node.grad = None


class Parameter(Tensor):
    """Trainable leaf tensor; ``grad`` is always allocated."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op result, attaching tape information when any parent needs grad."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _topological_order(root: Tensor) -> list[Tensor]:
    # Iterative DFS; the 6-block encoders are deep enough to threaten the
    # recursion limit with a recursive walk.
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order
