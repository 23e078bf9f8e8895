"""End-to-end headline model: token encoder -> graph attention -> fusion -> decoder.

With ``use_graph=False`` the decoder attends directly over the contextual
token rows instead of graph node states (the "no structure" baseline).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import decoder as dec
from .encoder import (EncoderConfig, TokenReps, add_encoder_params, embed_backward, embed_document,
                      gat_backward, gat_forward, init_node_embeddings, init_nodes_backward)
from .numerics import ParamStore
from .s3graph import C_WORD, S3Graph, to_adjacency
from .vocab import BOS, CLS, EOS, PAD, SEP, Vocab


@dataclass
class HeadlineModel:
    cfg: EncoderConfig
    vocab: Vocab
    label_vocab: Vocab
    concept_vocab: Vocab
    use_graph: bool = True
    max_len: int = 16

    def __post_init__(self):
        self.cfg.vocab_size = len(self.vocab)

    # -- parameters ---------------------------------------------------------

    def init_params(self, seed: int) -> ParamStore:
        params = ParamStore(seed=seed)
        add_encoder_params(params, self.cfg, len(self.label_vocab), len(self.concept_vocab))
        dec.add_decoder_params(params, self.cfg.d_model, len(self.vocab), self.cfg.d_ff)
        return params

    def generation_config(self, beam: int = 2, max_len: int | None = None) -> dec.GenerationConfig:
        v = self.vocab
        return dec.GenerationConfig(beam=beam, max_len=max_len or self.max_len, bos=v.id(BOS), eos=v.id(EOS),
                                    pad=v.id(PAD), banned=(v.id(PAD), v.id(BOS), v.id(CLS), v.id(SEP)))

    # -- forward pieces -----------------------------------------------------

    def encode(self, doc, params: ParamStore) -> TokenReps:
        return embed_document(doc, params, self.cfg, self.vocab)

    def graph_states(self, doc, graph: S3Graph, tok: TokenReps, params: ParamStore, rng=None):
        """GAT output ``u`` over ``graph`` (rows follow ``graph.nodes``) plus a backward cache."""
        adj = to_adjacency(graph)
        labels = adj.label_matrix(self.label_vocab)
        mask = adj.m.astype(bool)
        reps = init_node_embeddings(graph, tok, params, doc, self.concept_vocab, self.cfg)
        u, caches = gat_forward(labels, mask, reps.R, params, self.cfg, rng)
        return u, (reps, caches)

    def features(self, doc, graph: S3Graph | None, params: ParamStore, rng=None, tok: TokenReps | None = None):
        """Keys/values for fusion: ``(Z, word_mask, cache)``."""
        tok = tok if tok is not None else self.encode(doc, params)
        if not self.use_graph:
            rows = sorted(tok.token_map.values())
            return tok.H[rows], np.ones(len(rows), dtype=bool), ("tokens", tok, rows)
        u, gcache = self.graph_states(doc, graph, tok, params, rng)
        word = np.array([n.ntype == C_WORD for n in graph.nodes], dtype=bool)
        return u, word, ("graph", tok, gcache)

    def features_backward(self, dZ, cache, params: ParamStore, grads: ParamStore) -> None:
        kind, tok, extra = cache
        dH = np.zeros_like(tok.H)
        if kind == "tokens":
            dH[extra] += dZ
        else:
            reps, caches = extra
            dR = gat_backward(dZ, caches, params, grads)
            init_nodes_backward(dR, reps, grads, dH)
        embed_backward(dH, tok, params, grads)

    def target_ids(self, doc):
        y = self.vocab.ids(doc.headline_tokens)
        return [self.vocab.id(BOS)] + y, y + [self.vocab.id(EOS)]

    # -- loss ---------------------------------------------------------------

    def loss(self, doc, graph, params: ParamStore, rng=None, tok=None) -> float:
        return self.loss_and_grad(doc, graph, params, rng, need_grad=False, tok=tok)[0]

    def loss_and_grad(self, doc, graph, params: ParamStore, rng=None, need_grad: bool = True, tok=None):
        """Teacher-forced cross-entropy for ``doc``'s headline and, optionally, all parameter gradients."""
        Z, word, fcache = self.features(doc, graph, params, rng, tok)
        dec_in, targets = self.target_ids(doc)
        O, dcache = dec.decoder_states(dec_in, params)
        C, ucache = dec.fuse(dec.FusionInputs(Z, word, O), params)
        logits, hid = dec.output_logits(O, C, params)
        loss, dlogits = dec.ce_loss(logits, targets, pad=self.vocab.id(PAD))
        if not need_grad:
            return loss, None
        grads = params.zeros_like()
        dhid = dec.output_backward(dlogits, hid, params, grads)
        dZ, dO_fuse = dec.fuse_backward(dhid, ucache, params, grads)
        dec.decoder_states_backward(dhid + dO_fuse, dcache, params, grads)
        self.features_backward(dZ, fcache, params, grads)
        return loss, grads

    def log_likelihood(self, doc, graph, params: ParamStore, tok=None) -> float:
        """Mean per-token log-probability of the reference headline (always <= 0)."""
        return -self.loss(doc, graph, params, tok=tok)

    # -- generation ---------------------------------------------------------

    def generate_ids(self, doc, graph, params: ParamStore, gen: dec.GenerationConfig, tok=None) -> list[int]:
        Z, word, _ = self.features(doc, graph, params, tok=tok)
        return dec.generate(Z, word, params, gen)

    def generate(self, doc, graph, params: ParamStore, gen: dec.GenerationConfig | None = None, tok=None):
        gen = gen or self.generation_config()
        return [self.vocab.token(i) for i in self.generate_ids(doc, graph, params, gen, tok)]

    def fusion_attention(self, doc, graph, params: ParamStore, tokens) -> np.ndarray:
        """Fusion attention [t, n] when teacher-forcing ``tokens`` (used for dumps)."""
        Z, word, _ = self.features(doc, graph, params)
        ids = [self.vocab.id(BOS)] + self.vocab.ids(tokens)
        O, _ = dec.decoder_states(ids, params)
        _, cache = dec.fuse(dec.FusionInputs(Z, word, O), params)
        return cache[0]

    # -- persistence --------------------------------------------------------

    def to_obj(self) -> dict:
        return {"encoder": asdict(self.cfg), "vocab": self.vocab.to_obj(),
                "labels": self.label_vocab.to_obj(), "concepts": self.concept_vocab.to_obj(),
                "use_graph": self.use_graph, "max_len": self.max_len}

    @classmethod
    def from_obj(cls, obj) -> "HeadlineModel":
        return cls(EncoderConfig(**obj["encoder"]), Vocab.from_obj(obj["vocab"]), Vocab.from_obj(obj["labels"]),
                   Vocab.from_obj(obj["concepts"]), bool(obj["use_graph"]), int(obj["max_len"]))
