"""Forward/backward pairs for the small building blocks shared by the encoder and decoder.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache, accumulates parameter gradients
into ``grads`` in place and returns the gradient w.r.t. the block input.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .numerics import ParamStore, softmax_backward, softmax_stable


@lru_cache(maxsize=16)
def _sinusoid_table(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    table.setflags(write=False)
    return table


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    return _sinusoid_table(max(length, 1), d)[:length]


def add_attention_params(params: ParamStore, prefix: str, d: int) -> None:
    for m in ("Wq", "Wk", "Wv", "Wo"):
        params.add(f"{prefix}.{m}", (d, d), fan_in=d)


def add_ffn_params(params: ParamStore, prefix: str, d: int, d_ff: int) -> None:
    params.add(f"{prefix}.W1", (d, d_ff), fan_in=d)
    params.add(f"{prefix}.b1", (d_ff,), init="zeros")
    params.add(f"{prefix}.W2", (d_ff, d), fan_in=d_ff)
    params.add(f"{prefix}.b2", (d,), init="zeros")


def self_attention_forward(x, params: ParamStore, prefix: str, causal: bool = False):
    """Single-head residual self-attention: ``x + softmax(QK^T/sqrt(d)) V Wo``."""
    Wq, Wk, Wv, Wo = (params[f"{prefix}.{m}"] for m in ("Wq", "Wk", "Wv", "Wo"))
    d = x.shape[1]
    q, k, v = x @ Wq, x @ Wk, x @ Wv
    scores = (q @ k.T) / math.sqrt(d)
    mask = None
    if causal:
        mask = np.tril(np.ones((x.shape[0], x.shape[0]), dtype=bool))
    attn = softmax_stable(scores, axis=-1, mask=mask)
    ctx = attn @ v
    out = x + ctx @ Wo
    return out, (x, q, k, v, attn, ctx, prefix)


def self_attention_backward(dout, cache, params: ParamStore, grads: ParamStore):
    x, q, k, v, attn, ctx, prefix = cache
    Wq, Wk, Wv, Wo = (params[f"{prefix}.{m}"] for m in ("Wq", "Wk", "Wv", "Wo"))
    d = x.shape[1]
    grads[f"{prefix}.Wo"] += ctx.T @ dout
    dctx = dout @ Wo.T
    dattn = dctx @ v.T
    dv = attn.T @ dctx
    dscores = softmax_backward(attn, dattn) / math.sqrt(d)
    dq = dscores @ k
    dk = dscores.T @ q
    grads[f"{prefix}.Wq"] += x.T @ dq
    grads[f"{prefix}.Wk"] += x.T @ dk
    grads[f"{prefix}.Wv"] += x.T @ dv
    return dout + dq @ Wq.T + dk @ Wk.T + dv @ Wv.T


def ffn_forward(x, params: ParamStore, prefix: str):
    """Residual feed-forward block ``x + tanh(x W1 + b1) W2 + b2``."""
    h = np.tanh(x @ params[f"{prefix}.W1"] + params[f"{prefix}.b1"])
    out = x + h @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"]
    return out, (x, h, prefix)


def ffn_backward(dout, cache, params: ParamStore, grads: ParamStore):
    x, h, prefix = cache
    grads[f"{prefix}.W2"] += h.T @ dout
    grads[f"{prefix}.b2"] += dout.sum(axis=0)
    dpre = (dout @ params[f"{prefix}.W2"].T) * (1.0 - h * h)
    grads[f"{prefix}.W1"] += x.T @ dpre
    grads[f"{prefix}.b1"] += dpre.sum(axis=0)
    return dout + dpre @ params[f"{prefix}.W1"].T


def dropout_mask(rng, shape, rate: float):
    """Inverted-dropout multiplier, or ``None`` when dropout is inactive."""
    if rng is None or rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)
