"""Single-head self-attention encoder.

Each block computes, per token sequence X (T x d_model)::

    A  = softmax(X Q (X K)^T / divisor) X V        # T x d_k
    H  = LayerNorm(X + A W_o)                        # T x d_model
    Y  = LayerNorm(H + MLP(H))                       # MLP: 3 dense layers

The last block of a stack widens to ``d_out`` (200 by default); its MLP output
cannot be added to H directly, so that residual goes through a learned
linear map. The stack mean-pools tokens after the last block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dscx.errors import ShapeMismatch
from dscx.nn import functional as F
from dscx.nn.layers import MLP, Dense, LayerNorm, Module, glorot_uniform
from dscx.nn.tensor import Parameter, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    tokens: int
    d_model: int
    d_k: int = 64
    d_ff: int = 128
    depth: int = 6
    d_out: int = 200
    scale_divisor: float = 8.0
    use_softmax: bool = True


class AttentionLayer(Module):
    def __init__(self, d_model: int, d_k: int, rng, scale_divisor: float = 8.0, use_softmax: bool = True):
        if scale_divisor <= 0:
            raise ValueError("scale divisor must be positive")
        self.query = Parameter(glorot_uniform(rng, (d_model, d_k), d_model, d_k), "query")
        self.key = Parameter(glorot_uniform(rng, (d_model, d_k), d_model, d_k), "key")
        self.value = Parameter(glorot_uniform(rng, (d_model, d_k), d_model, d_k), "value")
        self.scale_divisor = float(scale_divisor)
        self.use_softmax = use_softmax

    def scores(self, x: Tensor) -> Tensor:
        """Pre-normalisation scores ``(X Q)(X K)^T / divisor``, shape (..., T, T)."""
        q = F.matmul(x, self.query)
        k = F.matmul(x, self.key)
        return F.mul(F.matmul(q, F.transpose(k)), 1.0 / self.scale_divisor)

    def weights(self, x: Tensor) -> Tensor:
        s = self.scores(x)
        return F.softmax(s, axis=-1) if self.use_softmax else s

    def forward(self, x: Tensor) -> Tensor:
        return self_attention(x, self)


def self_attention(x, layer: AttentionLayer) -> Tensor:
    """Attention output (..., T, d_k) for tokens ``x`` of shape (..., T, d_model)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim < 2 or x.shape[-1] != layer.query.shape[0]:
        raise ShapeMismatch(f"tokens {x.shape} do not match attention width {layer.query.shape[0]}")
    return F.matmul(layer.weights(x), F.matmul(x, layer.value))


class TransformerBlock(Module):
    def __init__(self, d_model, d_k, d_ff, d_out, rng, scale_divisor=8.0, use_softmax=True):
        self.attention = AttentionLayer(d_model, d_k, rng, scale_divisor, use_softmax)
        self.attention_out = Dense(d_k, d_model, rng)
        self.norm1 = LayerNorm(d_model)
        self.feedforward = MLP([d_model, d_ff, d_ff, d_out], rng)
        self.residual = None if d_out == d_model else Dense(d_model, d_out, rng, bias=False)
        self.norm2 = LayerNorm(d_out)
        self.d_model = d_model

    def forward(self, tokens: Tensor) -> Tensor:
        return encode_block(tokens, self)


def encode_block(tokens, block: TransformerBlock) -> Tensor:
    tokens = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    if tokens.ndim < 2 or tokens.shape[-1] != block.d_model:
        raise ShapeMismatch(f"block expects width {block.d_model}, got tokens {tokens.shape}")
    h = block.norm1(F.add(tokens, block.attention_out(self_attention(tokens, block.attention))))
    skip = h if block.residual is None else block.residual(h)
    return block.norm2(F.add(skip, block.feedforward(h)))


class EncoderStack(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        c = config
        self.config = c
        self.position = Parameter(glorot_uniform(rng, (c.tokens, c.d_model), c.tokens, c.d_model), "position")
        widths = [c.d_model] * (c.depth - 1) + [c.d_out]
        self.blocks = [
            TransformerBlock(c.d_model, c.d_k, c.d_ff, w, rng, c.scale_divisor, c.use_softmax) for w in widths
        ]

    def forward(self, tokens: Tensor) -> Tensor:
        return encode_sequence(tokens, self)


def encode_sequence(tokens, stack: EncoderStack) -> Tensor:
    """Encode (..., T, d_model) tokens to a pooled (..., 1, d_out) feature."""
    tokens = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    c = stack.config
    if tokens.ndim < 2 or tokens.shape[-2:] != (c.tokens, c.d_model):
        raise ShapeMismatch(f"encoder expects {c.tokens} tokens of width {c.d_model}, got {tokens.shape}")
    x = F.add(tokens, stack.position)
    for block in stack.blocks:
        x = encode_block(x, block)
    return F.mean(x, axis=-2, keepdims=True)
