import numpy as np

from s3headline.encoder import EncoderConfig
from s3headline.model import HeadlineModel
from s3headline.numerics import finite_diff_check, make_rng
from s3headline.rst import Document
from s3headline.vocab import UNK, build_concept_vocab, build_label_vocab, build_token_vocab


def _model(example, use_graph=True):
    doc, _, _, g = example
    m = HeadlineModel(EncoderConfig(d_model=8, K=2, d_ff=8), build_token_vocab([doc]), build_label_vocab([g]),
                      build_concept_vocab([g]), use_graph=use_graph, max_len=5)
    return doc, g, m, m.init_params(1)


def test_unknown_reference_tokens_map_to_unk(example):
    doc, g, m, params = _model(example)
    odd = Document(doc.id, doc.edus, "zebra boy", ("zebra", "boy"))
    dec_in, targets = m.target_ids(odd)
    assert targets[0] == m.vocab.id(UNK) and len(targets) == 3 and len(dec_in) == 3
    assert np.isfinite(m.loss(odd, g, params))


def test_log_likelihood_non_positive_and_generation_deterministic(example):
    doc, g, m, params = _model(example)
    assert m.log_likelihood(doc, g, params) <= 0
    a = m.generate(doc, g, params)
    assert a == m.generate(doc, g, params) and len(a) <= 5


def test_no_graph_model_ignores_graph_parameters(example):
    doc, g, m, params = _model(example, use_graph=False)
    Z, word, _ = m.features(doc, None, params)
    assert Z.shape == (7, 8) and word.all()
    _, grads = m.loss_and_grad(doc, None, params)
    for name in grads.names():
        if name.startswith(("gat.", "node.", "policy.")):
            assert not np.any(grads[name]), name


def test_no_graph_gradcheck(example):
    doc, _, m, params = _model(example, use_graph=False)
    _, grads = m.loss_and_grad(doc, None, params)
    rep = finite_diff_check(lambda p: m.loss(doc, None, p), params, grads, 1e-3)
    assert rep.max_error < 1e-4, rep.worst


def test_dropout_only_with_rng(example):
    doc, g, m, params = _model(example)
    clean = m.loss(doc, g, params)
    assert clean == m.loss(doc, g, params)
    assert m.loss(doc, g, params, make_rng(0)) != clean


def test_fusion_attention_rows(example):
    doc, g, m, params = _model(example)
    attn = m.fusion_attention(doc, g, params, ["boy", "girl"])
    assert attn.shape == (3, len(g))
    assert np.all(np.abs(attn.sum(axis=1) - 1) < 1e-9)


def test_serialisation_round_trip(example):
    doc, g, m, params = _model(example)
    back = HeadlineModel.from_obj(m.to_obj())
    assert back.cfg == m.cfg and back.vocab.items == m.vocab.items
    assert back.generate(doc, g, params) == m.generate(doc, g, params)
