"""Scaled dot-product attention and LoRA projection."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError


class MacCounter:
    """Accumulates multiply-accumulates spent in QK^T and attention-times-V."""

    def __init__(self):
        self.macs = 0
        self.calls = 0

    def add(self, macs: int) -> None:
        self.macs += int(macs)
        self.calls += 1


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    d = q.shape[-1]
    scores = (q @ np.swapaxes(k, -1, -2)) / math.sqrt(d)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, counter: MacCounter | None = None) -> np.ndarray:
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes; leading axes broadcast."""
    if min(q.ndim, k.ndim, v.ndim) < 2:
        raise ShapeError("attention inputs need at least (tokens, features) axes")
    if 0 in q.shape or 0 in k.shape or 0 in v.shape:
        raise ShapeError(f"zero-sized attention input: q{q.shape} k{k.shape} v{v.shape}")
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query/key feature dims differ: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key/value counts differ: {k.shape[-2]} vs {v.shape[-2]}")
    out = attention_weights(q, k) @ v
    if counter is not None:
        batch = math.prod(out.shape[:-2])
        nq, nk = q.shape[-2], k.shape[-2]
        counter.add(batch * nq * nk * (q.shape[-1] + v.shape[-1]))
    return out


def lora_apply(W: np.ndarray, A: np.ndarray, B: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Project tokens ``x[..., in]`` with ``W + B @ A`` (W is ``(out, in)``)."""
    if W.ndim != 2 or A.ndim != 2 or B.ndim != 2:
        raise ShapeError("W, A and B must be matrices")
    out_dim, in_dim = W.shape
    if A.shape[1] != in_dim or B.shape[0] != out_dim or B.shape[1] != A.shape[0]:
        raise ShapeError(f"LoRA dims inconsistent: W{W.shape} A{A.shape} B{B.shape}")
    if x.shape[-1] != in_dim:
        raise ShapeError(f"input feature dim {x.shape[-1]} does not match W{W.shape}")
    return x @ (W + B @ A).T
