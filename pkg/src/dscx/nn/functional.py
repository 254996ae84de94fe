"""Differentiable ops over :class:`~dscx.nn.tensor.Tensor`.

Each op computes its forward value with numpy and records a closure that
returns one gradient per parent (``None`` where no gradient flows).
Ops accept an optional leading batch axis wherever the per-sample form is
documented, so a whole minibatch can share one tape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from dscx.errors import InvalidLabel, ShapeMismatch
from dscx.nn.tensor import Tensor, as_tensor, record

LAYER_NORM_EPS = 1e-5


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


# -- elementwise and structural ------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"cannot add shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"cannot multiply shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return record(out, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return record(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot concatenate {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record(out, tensors, backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / count,)

    return record(out, (x,), backward)


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return record(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


# -- linear algebra -------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return record(out, (a, b), backward)


def dense(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` for x of shape (..., d_in) and weight (d_in, d_out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(f"dense input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise ShapeMismatch(f"bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.reshape(-1, g.shape[-1]).sum(axis=0))
        return grads

    return record(out, parents, backward)


# -- convolution -----------------------------------------------------------------


def conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _conv2d_forward(x, w, stride, padding):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    ho = conv_output_extent(h, kh, sh, ph)
    wo = conv_output_extent(wd, kw, sw, pw)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"kernel {kh}x{kw} does not fit input {h}x{wd} with padding {padding}")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    out = np.zeros((f, n, ho, wo))
    # One matmul per kernel offset keeps memory at O(input) instead of im2col's
    # O(input * kh * kw).
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw]
            out += np.tensordot(w[:, :, i, j], patch, axes=([1], [1]))
    return out.transpose(1, 0, 2, 3), xp


def _conv2d_backward(g, xp, w, stride, padding, in_shape, need_input_grad):
    f, c, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    _, _, ho, wo = g.shape
    gw = np.empty_like(w)
    gxp = np.zeros(xp.shape) if need_input_grad else None
    for i in range(kh):
        for j in range(kw):
            rows = slice(i, i + sh * (ho - 1) + 1, sh)
            cols = slice(j, j + sw * (wo - 1) + 1, sw)
            patch = xp[:, :, rows, cols]
            gw[:, :, i, j] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
            if need_input_grad:
                gxp[:, :, rows, cols] += np.tensordot(g, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    gx = None
    if need_input_grad:
        h, wd = in_shape[-2:]
        gx = gxp[:, :, ph : ph + h, pw : pw + wd]
    return gx, gw


def conv2d(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of x (C,H,W) or (N,C,H,W) with weight (F,C,kh,kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 4 or x.ndim not in (3, 4):
        raise ShapeMismatch(f"conv2d expects (N,)C,H,W input and F,C,kh,kw kernel; got {x.shape}, {weight.shape}")
    batched = x.ndim == 4
    xd = x.data if batched else x.data[None]
    if xd.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"input has {xd.shape[1]} channels, kernel expects {weight.shape[1]}")
    stride, padding = _pair(stride), _pair(padding)
    out, xp = _conv2d_forward(xd, weight.data, stride, padding)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)
    if not batched:
        out = out[0]

    def backward(g):
        g4 = g if batched else g[None]
        gx, gw = _conv2d_backward(g4, xp, weight.data, stride, padding, xd.shape, x.requires_grad)
        if gx is not None and not batched:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return grads

    return record(np.ascontiguousarray(out), parents, backward)


def conv1d(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of x (C,L) or (N,C,L) with weight (F,C,k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 3 or x.ndim not in (2, 3):
        raise ShapeMismatch(f"conv1d expects (N,)C,L input and F,C,k kernel; got {x.shape}, {weight.shape}")
    batched = x.ndim == 3
    xd = (x.data if batched else x.data[None])[:, :, None, :]
    if xd.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"input has {xd.shape[1]} channels, kernel expects {weight.shape[1]}")
    w4 = weight.data[:, :, None, :]
    stride2, padding2 = (1, int(stride)), (0, int(padding))
    out, xp = _conv2d_forward(xd, w4, stride2, padding2)
    out = out[:, :, 0, :]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None]
        parents.append(bias)
    if not batched:
        out = out[0]

    def backward(g):
        g4 = (g if batched else g[None])[:, :, None, :]
        gx, gw = _conv2d_backward(g4, xp, w4, stride2, padding2, xd.shape, x.requires_grad)
        if gx is not None:
            gx = gx[:, :, 0, :]
            if not batched:
                gx = gx[0]
        grads = [gx, gw[:, :, 0, :]]
        if bias is not None:
            grads.append(g4.sum(axis=(0, 2, 3)))
        return grads

    return record(np.ascontiguousarray(out), parents, backward)


# -- normalisation and probabilities ----------------------------------------------


def layer_norm(x, gain, shift, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and add ``shift``."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    d = x.shape[-1]
    if gain.shape != (d,) or shift.shape != (d,):
        raise ShapeMismatch(f"layer_norm over width {d} got gain {gain.shape}, shift {shift.shape}")
    centred = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centred**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv_std
    out = xhat * gain.data + shift.data

    def backward(g):
        gxhat = g * gain.data
        gx = inv_std * (
            gxhat - gxhat.mean(axis=-1, keepdims=True) - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, d)
        return gx, (flat_g * xhat.reshape(-1, d)).sum(axis=0), flat_g.sum(axis=0)

    return record(out, (x, gain, shift), backward)


def _softmax(z: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    y = _softmax(x.data, axis)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record(y, (x,), backward)


def cross_entropy(logits, labels, class_weights=None) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits).

    ``logits`` is (K,), (1, K) or (N, K). With ``class_weights`` the mean is
    weighted by the weight of each sample's true class.
    """
    logits = as_tensor(logits)
    z = logits.data.reshape(-1, logits.shape[-1])
    k = z.shape[1]
    y = np.atleast_1d(np.asarray(labels))
    if y.shape != (z.shape[0],) or not np.issubdtype(y.dtype, np.integer):
        raise InvalidLabel(f"need {z.shape[0]} integer labels, got {labels!r}")
    if (y < 0).any() or (y >= k).any():
        raise InvalidLabel(f"labels must lie in 0..{k - 1}, got {y.tolist()}")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(len(y))
    if class_weights is None:
        sample_w = np.ones(len(y))
    else:
        sample_w = np.asarray(class_weights, dtype=float)[y]
    norm = sample_w.sum()
    loss = -(sample_w * log_probs[rows, y]).sum() / norm

    def backward(g):
        probs = np.exp(log_probs)
        probs[rows, y] -= 1.0
        return ((probs * (sample_w / norm)[:, None] * g).reshape(logits.shape),)

    return record(np.asarray(loss), (logits,), backward)
