import json
import subprocess
import sys

import pytest

from s3headline import cli
from s3headline.rst import read_docs, write_docs
from s3headline.s3graph import read_graphs


def run(*argv):
    return cli.run([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert cli.run(["synth", "--n", "6", "--seed", "3", "--edus", "2-3", "--tokens", "3-4", "--vocab", "15",
                    "-o", str(d)]) == 0
    return d


def test_synth_layout(corpus):
    assert (corpus / "corpus.docs").exists() and (corpus / "spec.json").exists()
    docs = read_docs(corpus / "corpus.docs")
    assert len(docs) == 6
    for doc in docs:
        assert (corpus / "rst" / f"{doc.id}.rst").exists() and (corpus / "amr" / f"{doc.id}.amr").exists()


def test_synth_seed_env_and_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("S3_SEED", "4")
    assert run("synth", "--n", "2", "-o", tmp_path / "env") == 0
    assert run("synth", "--n", "2", "--seed", "4", "-o", tmp_path / "flag") == 0
    assert run("synth", "--n", "2", "--seed", "5", "-o", tmp_path / "other") == 0
    env = (tmp_path / "env" / "corpus.docs").read_text()
    assert env == (tmp_path / "flag" / "corpus.docs").read_text()
    assert env != (tmp_path / "other" / "corpus.docs").read_text()
    monkeypatch.setenv("S3_SEED", "x")
    assert run("synth", "--n", "1", "-o", tmp_path / "bad") == 1


def test_build_and_stats(corpus, tmp_path, capsys):
    g1, g2 = tmp_path / "a.s3", tmp_path / "b.s3"
    assert run("build", "--data", corpus, "-o", g1) == 0
    assert run("build", "--docs", corpus / "corpus.docs", "--rst", corpus / "rst", "--amr", corpus / "amr",
               "--jobs", "3", "-o", g2) == 0
    assert g1.read_text() == g2.read_text()
    assert [g.doc_id for g in read_graphs(g1)] == [d.id for d in read_docs(corpus / "corpus.docs")]
    capsys.readouterr()
    assert run("stats", g1) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 5
    assert abs(sum(float(r.split()[-2]) for r in rows) - 1) < 1e-3
    assert run("stats", g1, "--compare", g2) == 0
    assert "+0.0000" in capsys.readouterr().out


def test_eval_identity(corpus, tmp_path, capsys):
    pred = tmp_path / "p.txt"
    pred.write_text("police kill the gunman\nthe cat sat\n")
    assert run("eval", "--pred", pred, "--ref", pred, "--meteor-exact") == 0
    header, values = capsys.readouterr().out.splitlines()
    assert header.split()[-1] == "Avg" and "METEOR-exact" in header
    assert all(v == "100.00" for v in values.split())


def test_eval_against_docs_file(corpus, tmp_path, capsys):
    heads = [" ".join(d.headline_tokens) for d in read_docs(corpus / "corpus.docs")]
    pred = tmp_path / "p.txt"
    pred.write_text("\n".join(heads) + "\n")
    assert run("eval", "--pred", pred, "--ref", corpus / "corpus.docs") == 0
    header, values = capsys.readouterr().out.splitlines()
    cols = dict(zip(header.split(), values.split()))
    assert cols["ROUGE-1"] == "100.00" and cols["BLEU-1"] == "100.00"
    pred.write_text(heads[0] + "\n")
    assert run("eval", "--pred", pred, "--ref", corpus / "corpus.docs") == 1


def test_train_generate_round_trip(corpus, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("d_model = 8\nK = 2\nd_ff = 8\npolicy_hidden = 8\nmax_len = 4\nmax_epochs = 2\n"
                   "max_warm_epochs = 1\naction_std = 0.5\n")
    run_dir = tmp_path / "run"
    assert run("train", "--data", corpus, "--config", cfg, "--set", "patience=5", "--seed", "2",
               "--out", run_dir, "--dump-trajectories", tmp_path / "t.jsonl") == 0
    assert {"config.txt", "metrics.jsonl", "model.json", "best.ckpt", "last.ckpt"} <= {
        p.name for p in run_dir.iterdir()}
    assert "seed = 2" in (run_dir / "config.txt").read_text()
    capsys.readouterr()
    assert run("generate", "--data", corpus, "--ckpt", run_dir) == 0
    serial = capsys.readouterr().out
    assert len(serial.splitlines()) == 6
    out = tmp_path / "h.txt"
    assert run("generate", "--data", corpus, "--ckpt", run_dir, "--jobs", "3", "-o", out,
               "--pruned-out", tmp_path / "p.s3", "--dump-attn", tmp_path / "attn.jsonl") == 0
    assert out.read_text() == serial
    assert len(read_graphs(tmp_path / "p.s3")) == 6
    attn = [json.loads(line) for line in (tmp_path / "attn.jsonl").read_text().splitlines()]
    assert all(abs(sum(row) - 1) < 1e-9 for rec in attn for row in rec["attention"])


@pytest.mark.parametrize("argv", [
    ["build", "--data", "/nonexistent", "-o", "x.s3"],
    ["stats", "/nonexistent.s3"],
    ["eval", "--pred", "/nonexistent", "--ref", "/nonexistent"],
    ["train", "--data", "/nonexistent", "--out", "/tmp/x"],
    ["generate", "--ckpt", "/nonexistent", "--data", "/nonexistent"],
    ["build", "--bogus-flag"],
    ["nosuchcommand"],
    ["synth", "--n", "2", "--edus", "a-b", "-o", "/tmp/x"],
])
def test_invalid_input_exits_one(argv, capsys):
    assert cli.run(argv) == 1
    assert "error" in capsys.readouterr().err


def test_malformed_file_reports_path_and_line(tmp_path, capsys):
    bad = tmp_path / "bad.s3"
    bad.write_text('{"doc_id": "a", "root": 0, "nodes": [], "edges": []}\nnot json\n')
    assert run("stats", bad) == 1
    assert f"{bad}:2" in capsys.readouterr().err


def test_bad_config_exits_one(corpus, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense_key = 3\n")
    assert run("train", "--data", corpus, "--config", cfg, "--out", tmp_path / "r") == 1


def test_internal_error_exits_two(monkeypatch, capsys):
    def boom(args):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "cmd_stats", boom)
    assert cli.run(["stats", "x"]) == 2
    assert "RuntimeError" in capsys.readouterr().err


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--seed", "3", "--suite", "fusion", "--suite", "policy") == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and all(line.endswith("ok") for line in lines)
    assert run("gradcheck", "--suite", "nope") == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "s3headline", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("build", "stats", "train", "generate", "eval", "gradcheck", "synth"):
        assert cmd in proc.stdout


def test_synth_lead_vocab(tmp_path):
    assert run("synth", "--n", "3", "--seed", "1", "--lead-vocab", "4", "-o", tmp_path / "c") == 0
    for doc in read_docs(tmp_path / "c" / "corpus.docs"):
        assert all(e.tokens[0] in {"c0", "c1", "c2", "c3"} for e in doc.edus)
    assert run("synth", "--n", "1", "--lead-vocab", "-1", "-o", tmp_path / "bad") == 1
