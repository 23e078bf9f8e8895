"""Token encoder, node-embedding initialisation and the multi-head graph attention layer.

The contextual encoder is a deliberately small stand-in for a pretrained
language model: learned token embeddings plus sinusoidal positions, one
residual self-attention block and one residual tanh feed-forward block.

GAT layer (per head ``k``, node ``i``, neighbour ``j``)::

    s_ij      = r_i + r_j + m_ij              (m_ij: edge-label embedding)
    e^k_ij    = a^k . sigmoid(s_ij)
    beta^k_ij = softmax_j(e^k_ij) over neighbours (self loop included)
    u_i       = sigmoid( mean_k  sum_j beta^k_ij  s_ij W^k )

``a^k`` turns the vector-valued ``sigmoid(s_ij)`` into a scalar score; the
attention equation is otherwise taken as written.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IntegrityError, SequenceTooLongError
from .layers import (add_attention_params, add_ffn_params, dropout_mask, ffn_backward, ffn_forward,
                     self_attention_backward, self_attention_forward, sinusoidal_positions)
from .numerics import ParamStore, sigmoid, softmax_backward, softmax_stable
from .s3graph import A_SPAN, B_EDU, C_DUMMY, C_WORD, S3Graph
from .vocab import CLS, SEP


@dataclass
class EncoderConfig:
    d_model: int = 32
    K: int = 4
    vocab_size: int = 0
    dropout: float = 0.1
    gat_layers: int = 1
    d_ff: int = 64
    max_seq_len: int = 512
    dummy_slots: int = 128

    def __post_init__(self):
        if self.d_model <= 0 or self.K <= 0:
            raise ValueError("d_model and K must be positive")
        if self.d_model % self.K:
            raise ValueError(f"d_model={self.d_model} is not divisible by K={self.K}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.gat_layers < 1:
            raise ValueError("gat_layers must be >= 1")


def add_encoder_params(params: ParamStore, cfg: EncoderConfig, n_labels: int, n_concepts: int) -> None:
    d = cfg.d_model
    params.add("enc.tok_emb", (cfg.vocab_size, d), fan_in=1)
    add_attention_params(params, "enc.attn", d)
    add_ffn_params(params, "enc.ffn", d, cfg.d_ff)
    params.add("node.dummy_concept", (n_concepts, d), fan_in=1)
    params.add("node.dummy_slot", (cfg.dummy_slots, d), fan_in=1)
    params.add("gat.label_emb", (n_labels, d), fan_in=1)
    for layer in range(cfg.gat_layers):
        params.add(f"gat.{layer}.W", (cfg.K, d, d), fan_in=d)
        params.add(f"gat.{layer}.a", (cfg.K, d), fan_in=d)


# ---------------------------------------------------------------------------
# token encoder

@dataclass
class TokenReps:
    H: np.ndarray
    token_map: dict  # global token index -> row of H
    ids: list
    cache: tuple = field(default=None, repr=False)


def document_ids(doc, vocab):
    """``[CLS] e_1 [SEP] e_2 [SEP] ...`` as ids, and the row of every real token."""
    ids = [vocab.id(CLS)]
    token_map = {}
    pos = 0
    for e in doc.edus:
        for tok in e.tokens:
            token_map[pos] = len(ids)
            ids.append(vocab.id(tok))
            pos += 1
        ids.append(vocab.id(SEP))
    return ids, token_map


def embed_document(doc, params: ParamStore, cfg: EncoderConfig, vocab) -> TokenReps:
    ids, token_map = document_ids(doc, vocab)
    if len(ids) > cfg.max_seq_len:
        raise SequenceTooLongError(len(ids), cfg.max_seq_len)
    x0 = params["enc.tok_emb"][ids] + sinusoidal_positions(len(ids), cfg.d_model)
    x1, c_attn = self_attention_forward(x0, params, "enc.attn")
    h, c_ffn = ffn_forward(x1, params, "enc.ffn")
    return TokenReps(h, token_map, ids, (c_attn, c_ffn))


def embed_backward(dH, reps: TokenReps, params: ParamStore, grads: ParamStore) -> None:
    c_attn, c_ffn = reps.cache
    dx1 = ffn_backward(dH, c_ffn, params, grads)
    dx0 = self_attention_backward(dx1, c_attn, params, grads)
    np.add.at(grads["enc.tok_emb"], reps.ids, dx0)


# ---------------------------------------------------------------------------
# node embeddings

@dataclass
class NodeReps:
    R: np.ndarray
    edge_label_table: np.ndarray
    # per row: ("rows", [H rows]) for pooled/copied nodes, ("dummy", concept_id, slot) otherwise
    sources: list = field(repr=False, default_factory=list)


def _edu_rows(doc_offsets, edu_lengths, lo, hi, token_map):
    rows = []
    for e in range(lo, hi + 1):
        start = doc_offsets[e]
        rows.extend(token_map[p] for p in range(start, start + edu_lengths[e]))
    return rows


def init_node_embeddings(g: S3Graph, h: TokenReps, params: ParamStore, doc, concept_vocab,
                         cfg: Optional[EncoderConfig] = None) -> NodeReps:
    """Word nodes copy their token row; EDU and span nodes mean-pool their tokens.

    Dummy nodes get ``concept_emb[concept] + slot_emb[node_id mod slots]``,
    both trainable and randomly initialised.
    """
    offsets = doc.token_offsets()
    lengths = [len(e.tokens) for e in doc.edus]
    concept_tab = params["node.dummy_concept"]
    slot_tab = params["node.dummy_slot"]
    d = h.H.shape[1]
    R = np.empty((len(g.nodes), d))
    sources = []
    for i, n in enumerate(g.nodes):
        if n.ntype == C_WORD:
            if n.token_index not in h.token_map:
                raise IntegrityError(f"node {n.id}: token {n.token_index} has no encoder row")
            rows = [h.token_map[n.token_index]]
        elif n.ntype == C_DUMMY:
            cid = concept_vocab.id(n.label)
            slot = n.id % slot_tab.shape[0]
            R[i] = concept_tab[cid] + slot_tab[slot]
            sources.append(("dummy", cid, slot))
            continue
        elif n.ntype == B_EDU:
            rows = _edu_rows(offsets, lengths, n.edu_id, n.edu_id, h.token_map)
        elif n.ntype == A_SPAN:
            lo, hi = n.span
            rows = _edu_rows(offsets, lengths, lo, hi, h.token_map)
        else:
            raise IntegrityError(f"node {n.id}: unknown type {n.ntype}")
        R[i] = h.H[rows].mean(axis=0)
        sources.append(("rows", rows))
    return NodeReps(R, params["gat.label_emb"], sources)


def init_nodes_backward(dR, reps: NodeReps, grads: ParamStore, dH) -> None:
    """Scatter node-row gradients back onto token rows (``dH``) and dummy tables."""
    for i, src in enumerate(reps.sources):
        if src[0] == "rows":
            rows = src[1]
            np.add.at(dH, rows, dR[i] / len(rows))
        else:
            _, cid, slot = src
            grads["node.dummy_concept"][cid] += dR[i]
            grads["node.dummy_slot"][slot] += dR[i]


# ---------------------------------------------------------------------------
# graph attention

def gat_layer_forward(R, labels, mask, params: ParamStore, layer: int, rng=None, dropout: float = 0.0):
    """One GAT layer.  ``labels``: [n, n] label ids (-1 = no edge); ``mask``: [n, n] bool."""
    W = params[f"gat.{layer}.W"]
    a = params[f"gat.{layer}.a"]
    E = params["gat.label_emb"]
    n, d = R.shape
    K = W.shape[0]
    if W.shape[1] != d or E.shape[1] != d:
        raise ValueError(f"GAT layer {layer}: node dim {d} does not match parameters {W.shape}")
    if labels.shape != (n, n):
        raise ValueError("adjacency does not match node count")
    node_drop = dropout_mask(rng, R.shape, dropout)
    Rin = R * node_drop if node_drop is not None else R
    E_ext = np.vstack([E, np.zeros((1, d))])
    M = E_ext[labels]  # -1 picks the zero row
    S = Rin[:, None, :] + Rin[None, :, :] + M
    G = sigmoid(S)
    scores = np.moveaxis(G @ a.T, 2, 0)  # [K, n, n]
    beta = softmax_stable(scores, axis=-1, mask=np.broadcast_to(mask, scores.shape))
    attn_drop = dropout_mask(rng, beta.shape, dropout)
    beta_d = beta * attn_drop if attn_drop is not None else beta
    agg = np.matmul(beta_d.transpose(1, 0, 2), S).transpose(1, 0, 2)  # [K, n, d]
    pre = np.matmul(agg, W).mean(axis=0)
    u = sigmoid(pre)
    cache = (R, labels, mask, node_drop, attn_drop, S, G, beta, beta_d, agg, u, layer)
    return u, cache


def gat_layer_backward(du, cache, params: ParamStore, grads: ParamStore):
    R, labels, mask, node_drop, attn_drop, S, G, beta, beta_d, agg, u, layer = cache
    W = params[f"gat.{layer}.W"]
    a = params[f"gat.{layer}.a"]
    K = W.shape[0]
    dpre = du * u * (1.0 - u) / K
    grads[f"gat.{layer}.W"] += np.matmul(agg.transpose(0, 2, 1), dpre[None])
    dagg = np.matmul(dpre[None], W.transpose(0, 2, 1))  # [K, n, d]
    dagg_i = dagg.transpose(1, 0, 2)  # [n, K, d]
    # d beta_d[k,i,j] = dagg[k,i] . S[i,j]
    dbeta_d = np.matmul(dagg_i, S.transpose(0, 2, 1)).transpose(1, 0, 2)  # [K, n, n]
    dS = np.matmul(beta_d.transpose(1, 2, 0), dagg_i)  # [n, n, d]
    dbeta = dbeta_d * attn_drop if attn_drop is not None else dbeta_d
    dscores = softmax_backward(beta, dbeta)  # zero off the mask since beta is zero there
    grads[f"gat.{layer}.a"] += np.einsum("kij,ijd->kd", dscores, G)
    dG = np.moveaxis(dscores, 0, 2) @ a  # [n, n, d]
    dS += dG * G * (1.0 - G)
    dRin = dS.sum(axis=1) + dS.sum(axis=0)
    sel = labels >= 0
    np.add.at(grads["gat.label_emb"], labels[sel], dS[sel])
    return dRin * node_drop if node_drop is not None else dRin


def gat_forward(labels, mask, R, params: ParamStore, cfg: EncoderConfig, rng=None):
    """Stack ``cfg.gat_layers`` layers; returns the final node states and per-layer caches."""
    caches = []
    x = R
    for layer in range(cfg.gat_layers):
        x, c = gat_layer_forward(x, labels, mask, params, layer, rng, cfg.dropout if rng is not None else 0.0)
        caches.append(c)
    return x, caches


def gat_backward(du, caches, params: ParamStore, grads: ParamStore):
    for c in reversed(caches):
        du = gat_layer_backward(du, c, params, grads)
    return du
