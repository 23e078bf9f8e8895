"""Finite-difference suites for every hand-written backward pass.

Each suite builds a tiny fixed problem from a seed and compares analytic
gradients against central differences (float64).
"""

from __future__ import annotations

import numpy as np

from . import decoder as dec
from .encoder import EncoderConfig, gat_backward, gat_forward
from .model import HeadlineModel
from .numerics import GradCheckReport, ParamStore, finite_diff_check, make_rng
from .pruner import PrunePolicy
from .s3graph import build_s3, to_adjacency
from .synth import SynthSpec, generate_document
from .vocab import build_concept_vocab, build_label_vocab, build_token_vocab

SUITES = ("gat", "fusion", "decoder_ce", "policy")


def _toy(seed: int, d: int = 8, K: int = 2, gat_layers: int = 2, dropout: float = 0.1):
    spec = SynthSpec(n_docs=1, edus_per_doc=(3, 3), tokens_per_edu=(2, 3), vocab_size=12, seed=seed)
    s = generate_document(spec, 0)
    g = build_s3(s.doc, s.tree, s.amrs)
    cfg = EncoderConfig(d_model=d, K=K, d_ff=d, dropout=dropout, gat_layers=gat_layers, dummy_slots=4)
    model = HeadlineModel(cfg, build_token_vocab([s.doc]), build_label_vocab([g]), build_concept_vocab([g]))
    return s.doc, g, model, model.init_params(seed)


def check_gat(seed: int = 0, epsilon: float = 1e-3) -> GradCheckReport:
    doc, g, model, params = _toy(seed)
    adj = to_adjacency(g)
    labels = adj.label_matrix(model.label_vocab)
    mask = adj.m.astype(bool)
    rng = make_rng(seed, 1)
    n, d = len(g), model.cfg.d_model
    store = params.subset("gat.").copy()
    store["R"] = rng.uniform(-1, 1, size=(n, d))
    weight = rng.standard_normal((n, d))

    def f(p):
        u, _ = gat_forward(labels, mask, p["R"], p, model.cfg, make_rng(seed, 2))
        return float(np.sum(u * weight))

    u, caches = gat_forward(labels, mask, store["R"], store, model.cfg, make_rng(seed, 2))
    grads = store.zeros_like()
    grads["R"] = gat_backward(weight, caches, store, grads)
    return finite_diff_check(f, store, grads, epsilon)


def check_fusion(seed: int = 0, epsilon: float = 1e-3) -> GradCheckReport:
    rng = make_rng(seed, 3)
    d, n, t = 8, 6, 4
    store = ParamStore(seed=seed)
    for m in ("Wq", "Wk", "Wv"):
        store.add(f"fuse.{m}", (d, d), fan_in=d)
    store["Z"] = rng.uniform(0, 1, size=(n, d))
    store["O"] = rng.uniform(-1, 1, size=(t, d))
    word = np.array([True, False, True, True, False, False])
    weight = rng.standard_normal((t, d))

    def f(p):
        C, _ = dec.fuse(dec.FusionInputs(p["Z"], word, p["O"]), p)
        return float(np.sum(C * weight))

    _, cache = dec.fuse(dec.FusionInputs(store["Z"], word, store["O"]), store)
    grads = store.zeros_like()
    dZ, dO = dec.fuse_backward(weight, cache, store, grads)
    grads["Z"] = dZ
    grads["O"] = dO
    return finite_diff_check(f, store, grads, epsilon)


def check_decoder_ce(seed: int = 0, epsilon: float = 1e-3) -> GradCheckReport:
    """End-to-end teacher-forced CE through encoder, node init, GAT, fusion and decoder."""
    doc, g, model, params = _toy(seed)
    _, grads = model.loss_and_grad(doc, g, params, make_rng(seed, 4))
    return finite_diff_check(lambda p: model.loss(doc, g, p, make_rng(seed, 4)), params, grads, epsilon)


def check_policy(seed: int = 0, epsilon: float = 1e-3) -> GradCheckReport:
    rng = make_rng(seed, 5)
    policy = PrunePolicy.create(8, hidden=12, action_std=0.3, seed=seed, init_mean=0.1)
    policy.params["policy.l3.W"] = rng.uniform(-0.5, 0.5, size=(12, 1))
    states = rng.uniform(0, 1, size=(5, 8))
    z = rng.standard_normal(5)
    w = rng.standard_normal(5)
    grads = policy.grad_log_density(states, z, w)

    def f(p):
        return float(np.sum(w * PrunePolicy(p, policy.action_std).log_density(states, z)))

    return finite_diff_check(f, policy.params, grads, epsilon)


def run_all(seed: int = 0, epsilon: float = 1e-3, suites=SUITES) -> dict[str, GradCheckReport]:
    table = {"gat": check_gat, "fusion": check_fusion, "decoder_ce": check_decoder_ce, "policy": check_policy}
    unknown = [s for s in suites if s not in table]
    if unknown:
        raise ValueError(f"unknown gradcheck suite(s): {unknown}")
    return {s: table[s](seed, epsilon) for s in suites}
