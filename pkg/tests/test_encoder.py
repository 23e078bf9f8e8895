import itertools

import numpy as np
import pytest

from s3headline.encoder import EncoderConfig, embed_document, gat_forward, gat_layer_forward, init_node_embeddings
from s3headline.errors import SequenceTooLongError
from s3headline.gradcheck import check_gat
from s3headline.model import HeadlineModel
from s3headline.numerics import ParamStore, make_rng
from s3headline.amr import parse_penman
from s3headline.rst import Document, Edu, Leaf
from s3headline.s3graph import A_SPAN, B_EDU, C_DUMMY, build_s3, to_adjacency
from s3headline.synth import SynthSpec, generate_document
from s3headline.vocab import build_concept_vocab, build_label_vocab, build_token_vocab


def _model(docs, graphs, **kw):
    cfg = EncoderConfig(d_model=kw.pop("d_model", 8), K=kw.pop("K", 2), d_ff=8, **kw)
    return HeadlineModel(cfg, build_token_vocab(docs), build_label_vocab(graphs), build_concept_vocab(graphs))


@pytest.fixture
def toy(example):
    doc, _, _, g = example
    model = _model([doc], [g])
    return doc, g, model, model.init_params(0)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(d_model=10, K=4)
    with pytest.raises(ValueError):
        EncoderConfig(dropout=1.0)
    assert EncoderConfig().d_model == 32 and EncoderConfig().K == 4 and EncoderConfig().gat_layers == 1
    assert EncoderConfig().dropout == 0.1


def test_rows_include_specials(toy):
    doc, _, model, params = toy
    h = model.encode(doc, params)
    assert h.H.shape == (10, 8)
    assert sorted(h.token_map.values()) == [1, 2, 3, 4, 6, 7, 8]


def test_edu_order_matters(toy):
    doc, _, model, params = toy
    swapped = Document("d1", (Edu(0, doc.edus[1].text, doc.edus[1].tokens),
                              Edu(1, doc.edus[0].text, doc.edus[0].tokens)), doc.headline, doc.headline_tokens)
    a, b = model.encode(doc, params), model.encode(swapped, params)
    assert a.H.shape == b.H.shape and not np.allclose(a.H, b.H)


def test_zero_params_depend_only_on_positions(toy):
    doc, _, model, params = toy
    zero = ParamStore(seed=0)
    for name, v in params.items():
        zero[name] = np.zeros_like(v)
    other = Document("z", (Edu(0, "", ("girl", "girl", "boy", "on")), Edu(1, "", ("so", "x", "y"))), "a", ("a",))
    a, b = model.encode(doc, zero), model.encode(other, zero)
    assert np.array_equal(a.H, b.H)


def test_sequence_too_long_is_an_error():
    doc = Document("long", (Edu(0, "", tuple(f"w{i}" for i in range(20))),), "w0", ("w0",))
    cfg = EncoderConfig(d_model=8, K=2, max_seq_len=10, vocab_size=30)
    params = ParamStore(seed=0)
    params.add("enc.tok_emb", (30, 8), fan_in=1)
    with pytest.raises(SequenceTooLongError):
        embed_document(doc, params, cfg, build_token_vocab([doc]))


def test_node_pooling(toy):
    doc, g, model, params = toy
    h = model.encode(doc, params)
    reps = init_node_embeddings(g, h, params, doc, model.concept_vocab)
    span = next(i for i, n in enumerate(g.nodes) if n.ntype == A_SPAN)
    edu0 = next(i for i, n in enumerate(g.nodes) if n.ntype == B_EDU and n.edu_id == 0)
    assert np.allclose(reps.R[edu0], h.H[[1, 2, 3, 4]].mean(axis=0), rtol=0, atol=1e-15)
    assert np.allclose(reps.R[span], h.H[[1, 2, 3, 4, 6, 7, 8]].mean(axis=0), rtol=0, atol=1e-15)
    for i, n in enumerate(g.nodes):
        if n.token_index is not None:
            assert np.array_equal(reps.R[i], h.H[h.token_map[n.token_index]])


def test_single_edu_pooling_is_exact():
    doc = Document("s", (Edu(0, "", ("a", "b", "c")),), "a", ("a",))
    g = build_s3(doc, Leaf(0), [parse_penman("(x / amr-empty)", 0)])
    model = _model([doc], [g])
    params = model.init_params(3)
    h = model.encode(doc, params)
    reps = init_node_embeddings(g, h, params, doc, model.concept_vocab)
    assert np.array_equal(reps.R[0], h.H[[1, 2, 3]].mean(axis=0))


def test_dummy_nodes_get_distinct_vectors():
    spec = SynthSpec(n_docs=1, edus_per_doc=(3, 4), dummy_rate=1.0, empty_amr_rate=0.0)
    for seed in range(100):
        s = generate_document(SynthSpec(**{**spec.__dict__, "seed": seed}), 0)
        g = build_s3(s.doc, s.tree, s.amrs)
        model = _model([s.doc], [g])
        params = model.init_params(seed)
        reps = init_node_embeddings(g, model.encode(s.doc, params), params, s.doc, model.concept_vocab)
        dummies = [reps.R[i] for i, n in enumerate(g.nodes) if n.ntype == C_DUMMY]
        assert len(dummies) >= 2
        for a, b in itertools.combinations(dummies, 2):
            assert not np.array_equal(a, b)


def _gat_inputs(seed=0):
    s = generate_document(SynthSpec(n_docs=1, edus_per_doc=(3, 4), seed=seed), 0)
    g = build_s3(s.doc, s.tree, s.amrs)
    model = _model([s.doc], [g], d_model=8, K=2)
    params = model.init_params(seed)
    adj = to_adjacency(g)
    R = make_rng(seed, 9).uniform(-1, 1, size=(len(g), 8))
    return g, model, params, adj, R


def test_zero_weights_give_half():
    g, model, params, adj, R = _gat_inputs()
    params["gat.0.W"] = np.zeros_like(params["gat.0.W"])
    u, _ = gat_forward(adj.label_matrix(model.label_vocab), adj.m.astype(bool), R, params, model.cfg)
    assert np.all(u == 0.5)


def test_attention_rows_and_outputs():
    for seed in range(5):
        g, model, params, adj, R = _gat_inputs(seed)
        mask = adj.m.astype(bool)
        u, cache = gat_layer_forward(R, adj.label_matrix(model.label_vocab), mask, params, 0)
        beta = cache[7]
        assert np.all(np.abs(beta.sum(axis=-1) - 1) < 1e-9)
        assert np.all(beta[:, ~mask] == 0)
        assert np.all((u > 0) & (u < 1))


def test_self_only_neighbourhood_has_unit_weight():
    g, model, params, adj, R = _gat_inputs()
    n = len(g)
    labels = np.full((n, n), -1)
    np.fill_diagonal(labels, model.label_vocab.id("self"))
    _, cache = gat_layer_forward(R, labels, np.eye(n, dtype=bool), params, 0)
    assert np.all(cache[7][:, np.arange(n), np.arange(n)] == 1.0)


def test_edge_order_invariance():
    g, model, params, adj, R = _gat_inputs(2)
    g2 = type(g)(g.doc_id, g.nodes, g.edges[::-1], g.root)
    adj2 = to_adjacency(g2)
    u1, _ = gat_forward(adj.label_matrix(model.label_vocab), adj.m.astype(bool), R, params, model.cfg)
    u2, _ = gat_forward(adj2.label_matrix(model.label_vocab), adj2.m.astype(bool), R, params, model.cfg)
    assert np.array_equal(u1, u2)


def test_dimension_mismatch():
    g, model, params, adj, R = _gat_inputs()
    with pytest.raises(ValueError):
        gat_forward(adj.label_matrix(model.label_vocab), adj.m.astype(bool), R[:, :4], params, model.cfg)


def test_gat_gradcheck():
    rep = check_gat(seed=1)
    assert rep.max_error < 1e-4, rep.worst
