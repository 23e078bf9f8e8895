"""Headline decoder: causal self-attention, graph-feature fusion, output projection, search.

Fusion is scaled dot-product cross-attention.  Decoder states ``O`` are the
queries, the pruned-graph node states ``Z`` are the keys, and the values are
``Z`` itself on real-word rows (the ``Z-bar`` subset) and ``Z Wv`` on every
other row::

    C = softmax(O Wq (Z Wk)^T / sqrt(d)) V,   V_i = Z_i if word(i) else Z_i Wv

The next-token distribution is ``softmax((O + C) W_out + b_out)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrityError
from .layers import (add_attention_params, add_ffn_params, ffn_backward, ffn_forward,
                     self_attention_backward, self_attention_forward, sinusoidal_positions)
from .numerics import ParamStore, log_softmax, softmax_backward, softmax_stable


@dataclass
class GenerationConfig:
    beam: int = 2
    max_len: int = 16
    bos: int = 2
    eos: int = 3
    pad: int = 0
    banned: tuple = ()

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


@dataclass
class FusionInputs:
    Z: np.ndarray
    word_mask: np.ndarray  # bool [n]; True rows form Z-bar
    O: np.ndarray

    @property
    def Z_bar(self) -> np.ndarray:
        return self.Z[self.word_mask]


def add_decoder_params(params: ParamStore, d: int, vocab_size: int, d_ff: int) -> None:
    params.add("dec.tok_emb", (vocab_size, d), fan_in=1)
    add_attention_params(params, "dec.attn", d)
    add_ffn_params(params, "dec.ffn", d, d_ff)
    for m in ("Wq", "Wk", "Wv"):
        params.add(f"fuse.{m}", (d, d), fan_in=d)
    params.add("out.W", (d, vocab_size), fan_in=d)
    params.add("out.b", (vocab_size,), init="zeros")


# ---------------------------------------------------------------------------
# decoder states

def decoder_states(ids, params: ParamStore):
    d = params["dec.tok_emb"].shape[1]
    y0 = params["dec.tok_emb"][ids] + sinusoidal_positions(len(ids), d)
    y1, c_attn = self_attention_forward(y0, params, "dec.attn", causal=True)
    O, c_ffn = ffn_forward(y1, params, "dec.ffn")
    return O, (list(ids), c_attn, c_ffn)


def decoder_states_backward(dO, cache, params: ParamStore, grads: ParamStore) -> None:
    ids, c_attn, c_ffn = cache
    dy1 = ffn_backward(dO, c_ffn, params, grads)
    dy0 = self_attention_backward(dy1, c_attn, params, grads)
    np.add.at(grads["dec.tok_emb"], ids, dy0)


# ---------------------------------------------------------------------------
# fusion

def fuse(fi: FusionInputs, params: ParamStore):
    """Returns ``(C, cache)``; ``cache[0]`` holds the attention matrix [t, n]."""
    Z, word, O = fi.Z, np.asarray(fi.word_mask, dtype=bool), fi.O
    if Z.ndim != 2 or O.ndim != 2 or Z.shape[1] != O.shape[1]:
        raise ValueError(f"fusion shape mismatch: Z {Z.shape}, O {O.shape}")
    if not word.any():
        raise IntegrityError("fusion needs at least one word node")
    d = Z.shape[1]
    q = O @ params["fuse.Wq"]
    k = Z @ params["fuse.Wk"]
    V = np.where(word[:, None], Z, Z @ params["fuse.Wv"])
    attn = softmax_stable(q @ k.T / math.sqrt(d), axis=-1)
    C = attn @ V
    return C, (attn, q, k, V, Z, word, O)


def fuse_backward(dC, cache, params: ParamStore, grads: ParamStore):
    """Returns ``(dZ, dO)``."""
    attn, q, k, V, Z, word, O = cache
    d = Z.shape[1]
    dV = attn.T @ dC
    dattn = dC @ V.T
    dlogits = softmax_backward(attn, dattn) / math.sqrt(d)
    dq = dlogits @ k
    dk = dlogits.T @ q
    grads["fuse.Wq"] += O.T @ dq
    grads["fuse.Wk"] += Z.T @ dk
    dO = dq @ params["fuse.Wq"].T
    dZ = dk @ params["fuse.Wk"].T
    proj = ~word
    grads["fuse.Wv"] += Z[proj].T @ dV[proj]
    dZ[word] += dV[word]
    dZ[proj] += dV[proj] @ params["fuse.Wv"].T
    return dZ, dO


# ---------------------------------------------------------------------------
# output and loss

def output_logits(O, C, params: ParamStore):
    hid = O + C
    return hid @ params["out.W"] + params["out.b"], hid


def output_backward(dlogits, hid, params: ParamStore, grads: ParamStore):
    grads["out.W"] += hid.T @ dlogits
    grads["out.b"] += dlogits.sum(axis=0)
    return dlogits @ params["out.W"].T


def ce_loss(logits, targets, pad: int = 0):
    """Mean negative log-likelihood over non-pad targets, and its gradient w.r.t. ``logits``."""
    targets = np.asarray(targets)
    keep = targets != pad
    count = int(keep.sum())
    if count == 0:
        raise ValueError("reference has no non-pad tokens")
    logp = log_softmax(logits, axis=-1)
    rows = np.arange(len(targets))
    loss = -float(logp[rows[keep], targets[keep]].sum()) / count
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    grad[~keep] = 0.0
    return loss, grad / count


def decode_step_logprobs(prefix, Z, word_mask, params: ParamStore):
    """Log-probabilities of the next token after ``prefix`` (ids, starting with BOS)."""
    O, _ = decoder_states(prefix, params)
    C, _ = fuse(FusionInputs(Z, word_mask, O), params)
    logits, _ = output_logits(O, C, params)
    return log_softmax(logits[-1])


# ---------------------------------------------------------------------------
# search

def greedy_search(step_fn, cfg: GenerationConfig):
    """Returns ``(tokens, normalised score)``; ``step_fn(prefix) -> logprobs``."""
    prefix = [cfg.bos]
    total = 0.0
    for _ in range(cfg.max_len):
        lp = _masked(step_fn(prefix), cfg)
        tok = int(np.argmax(lp))
        total += float(lp[tok])
        if tok == cfg.eos:
            return prefix[1:], total / (len(prefix))
        prefix.append(tok)
    return prefix[1:], total / cfg.max_len


def _masked(lp, cfg):
    if cfg.banned:
        lp = lp.copy()
        lp[list(cfg.banned)] = -np.inf
    return lp


def beam_search(step_fn, cfg: GenerationConfig):
    """Length-normalised beam search.

    Scores are summed token log-probabilities (EOS included when produced)
    divided by the number of scored tokens.  The greedy hypothesis is always
    a candidate, so the result never scores below greedy decoding.
    """
    greedy_tokens, greedy_score = greedy_search(step_fn, cfg)
    if cfg.beam == 1:
        return greedy_tokens, greedy_score
    beams = [(0.0, [cfg.bos])]
    finished = []
    for _ in range(cfg.max_len):
        candidates = []
        for score, prefix in beams:
            lp = _masked(step_fn(prefix), cfg)
            top = np.argsort(-lp, kind="stable")[: cfg.beam]
            for tok in top:
                tok = int(tok)
                if not np.isfinite(lp[tok]):
                    continue
                candidates.append((score + float(lp[tok]), prefix + [tok]))
        candidates.sort(key=lambda c: -c[0])
        beams = []
        for score, prefix in candidates:
            if prefix[-1] == cfg.eos:
                finished.append((score / (len(prefix) - 1), prefix[1:-1]))
            else:
                beams.append((score, prefix))
            if len(beams) == cfg.beam:
                break
        if not beams:
            break
    finished.extend((score / cfg.max_len, prefix[1:]) for score, prefix in beams
                    if len(prefix) - 1 == cfg.max_len)
    finished.append((greedy_score, greedy_tokens))
    best = max(finished, key=lambda f: f[0])
    return best[1], best[0]


def generate(Z, word_mask, params: ParamStore, cfg: GenerationConfig):
    """Decode a headline (token ids, EOS stripped) conditioned on graph features."""
    tokens, _ = beam_search(lambda prefix: decode_step_logprobs(prefix, Z, word_mask, params), cfg)
    return tokens
