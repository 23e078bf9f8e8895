import json
import math

import numpy as np
import pytest

from s3headline.errors import ConfigError, TrainingDiverged, ValidationError
from s3headline.metrics import COLUMNS
from s3headline.model import HeadlineModel
from s3headline.numerics import ParamStore
from s3headline.synth import SynthSpec, generate_corpus
from s3headline.trainer import (JOINT, WARM, Adam, TrainConfig, TrainState, evaluate, init_state, make_samples,
                                paper_lr, predict, split_dev, train)

SMALL = dict(d_model=8, K=2, d_ff=8, policy_hidden=8, max_len=4, batch_size=4)


def _samples(n=8, seed=0, **kw):
    spec = SynthSpec(n_docs=n, seed=seed, edus_per_doc=(2, 3), tokens_per_edu=(3, 4), vocab_size=12, **kw)
    return make_samples([(s.doc, s.tree, s.amrs) for s in generate_corpus(spec)])


def _cfg(**kw):
    return TrainConfig(**{**SMALL, **kw})


def test_defaults_match_published_settings():
    cfg = TrainConfig.from_text("")
    assert (cfg.p_A, cfg.p_B, cfg.p_C) == (0.85, 0.60, 0.40)
    assert cfg.beam == 2 and cfg.dropout == 0.1 and cfg.policy_hidden == 300
    assert cfg.lr_gat == 5e-4 and cfg.patience == 3 and cfg.batch_size == 8 and cfg.clip_norm == 1.0
    p = paper_lr(cfg)
    assert (p.lr_model, p.lr_gat, p.lr_agent) == (5e-6, 5e-4, 5e-6)


def test_config_text_round_trip(tmp_path):
    cfg = _cfg(seed=5, use_graph=False, rouge_variant="1", lr_model=2.5e-3)
    path = tmp_path / "run.cfg"
    cfg.save(path)
    assert TrainConfig.load(path) == cfg
    assert TrainConfig.load(path, seed=9).seed == 9


@pytest.mark.parametrize("text, fragment", [
    ("bogus = 1", "unknown key"),
    ("beam = two", "not a valid int"),
    ("use_graph = maybe", "not a valid bool"),
    ("lr_model = 0", "lr_model"),
    ("p_A = 0.3", "thresholds"),
    ("d_model = 30\nK = 4", "divisible"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        TrainConfig.from_text(text, "x.cfg")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        TrainConfig.load(tmp_path / "nope.cfg")


def test_split_dev_is_deterministic_and_nonempty():
    s = _samples(10)
    a, b = split_dev(s, 0.2, 3), split_dev(s, 0.2, 3)
    assert [x.doc.id for x in a[1]] == [x.doc.id for x in b[1]]
    assert len(a[1]) == 2 and len(a[0]) == 8
    with pytest.raises(ValidationError):
        split_dev(s[:1])


def test_adam_skips_zero_gradients():
    p = ParamStore(seed=0)
    p.add("a", (2,))
    p.add("b", (2,))
    before = p.copy()
    g = p.zeros_like()
    g["a"] += 1.0
    assert Adam(lambda name: 0.1).step(p, g) == ["a"]
    assert np.array_equal(p["b"], before["b"]) and not np.array_equal(p["a"], before["a"])


def test_warm_phase_leaves_policy_untouched():
    tr, dv = split_dev(_samples(), 0.25)
    cfg = _cfg(max_epochs=3, max_warm_epochs=10, patience=10)
    init = init_state(tr, cfg).params
    st = train(tr, cfg, dv)
    assert st.phase == WARM and st.transitions == []
    for name in init.names():
        same = np.array_equal(init[name], st.params[name])
        assert same == name.startswith("policy."), name


def test_single_transition_and_reward_records(tmp_path):
    tr, dv = split_dev(_samples(), 0.25)
    cfg = _cfg(max_epochs=4, max_warm_epochs=2, patience=10, action_std=0.5, policy_init_mean=-1.0)
    st = train(tr, cfg, dv, out_dir=tmp_path, trajectory_path=tmp_path / "traj.jsonl")
    phases = [r["phase"] for r in st.history]
    assert phases == [WARM, WARM, JOINT, JOINT] and st.transitions == [2]
    for r in st.history[2:]:
        assert {"mean_R", "mean_R_c", "mean_R_r", "baseline"} <= set(r)
        assert math.isfinite(r["baseline"]) and r["mean_R_c"] <= 0
    logged = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert len(logged) == 4 and logged[3]["phase"] == JOINT
    traj = [json.loads(line) for line in (tmp_path / "traj.jsonl").read_text().splitlines()]
    assert len(traj) == 2 * len(tr) and all(t["rounds"] == cfg.rounds for t in traj)


def test_training_is_deterministic():
    tr, dv = split_dev(_samples(), 0.25)
    cfg = _cfg(max_epochs=3, max_warm_epochs=1, patience=10, action_std=0.5, policy_init_mean=-1.0)
    a, b = train(tr, cfg, dv), train(tr, cfg, dv)
    assert a.history == b.history
    assert a.params.equals(b.params) and a.params.dumps() == b.params.dumps()
    assert [p for p, _ in predict(a, dv)] == [p for p, _ in predict(b, dv)]


def test_checkpoint_round_trip(tmp_path):
    tr, dv = split_dev(_samples(), 0.25)
    st = train(tr, _cfg(max_epochs=2, prune=False), dv, out_dir=tmp_path)
    for which in ("best", "last"):
        back = TrainState.load(tmp_path, which)
        assert back.params.equals(st.eval_params(which))
        assert back.cfg == st.cfg and back.model.vocab.items == st.model.vocab.items
    assert [p for p, _ in predict(st, dv)] == [p for p, _ in predict(TrainState.load(tmp_path), dv)]
    (tmp_path / "best.ckpt").unlink()
    with pytest.raises(ValidationError):
        TrainState.load(tmp_path, "best")


def test_nan_loss_aborts_with_diagnostic_checkpoint(tmp_path):
    tr, dv = split_dev(_samples(), 0.25)
    cfg = _cfg(max_epochs=2, prune=False)
    st = init_state(tr, cfg)
    st.params["out.b"] = np.full_like(st.params["out.b"], np.nan)
    with pytest.raises(TrainingDiverged, match="diverged.ckpt"):
        train(tr, cfg, dv, out_dir=tmp_path, state=st)
    assert (tmp_path / "diverged.ckpt").exists()


def test_empty_splits_rejected():
    s = _samples(4)
    with pytest.raises(ValidationError):
        train(s, _cfg(), [])
    with pytest.raises(ValidationError):
        train([], _cfg(), s)


def test_report_schema_and_untrained_bleu():
    tr, dv = split_dev(_samples(40, seed=4), 0.5)
    st = init_state(tr, _cfg())
    cols = evaluate(st, dv).columns()
    assert list(cols) == list(COLUMNS) + ["Avg"]
    assert cols["BLEU-4"] < 0.05


class _CopyFirstEdu(HeadlineModel):
    def generate(self, doc, graph, params, gen=None, tok=None):
        return list(doc.edus[0].tokens)


def test_copy_model_on_copy_corpus_scores_one():
    samples = _samples(6)
    for s in samples:
        s.doc = type(s.doc)(s.doc.id, s.doc.edus, s.doc.edus[0].text, s.doc.edus[0].tokens)
    st = init_state(samples, _cfg(prune=False))
    m = st.model
    st.model = _CopyFirstEdu(m.cfg, m.vocab, m.label_vocab, m.concept_vocab, m.use_graph, m.max_len)
    rep = evaluate(st, samples)
    assert rep.rouge1[2] == 1.0 and rep.rougeL[2] == 1.0
