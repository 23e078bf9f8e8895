"""Command-line entry point: ``s3headline <command> [flags]``.

Exit codes: 0 success, 1 invalid input (files, flags, config), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import ValidationError
from .metrics import corpus_report, format_table
from .rst import read_docs
from .s3graph import STAT_KEYS, build_s3, node_counts, node_stats, read_graphs, write_graphs
from .synth import SynthSpec, corpus_paths, generate_corpus, load_corpus, write_corpus

SEED_ENV = "S3_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV}={raw!r} is not an integer") from None


def resolve_seed(flag: int | None, default: int | None = 0) -> int | None:
    """Explicit flag, else ``$S3_SEED``, else ``default``."""
    if flag is not None:
        return flag
    env = _env_seed()
    return env if env is not None else default


def _pmap(fn, items, jobs: int):
    """Order-preserving map, optionally threaded."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _range(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition("-")
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO-HI, got {text!r}") from None


def _corpus_args(p):
    p.add_argument("--data", help="corpus directory holding corpus.docs, rst/ and amr/")
    p.add_argument("--docs", help=".docs file (overrides --data)")
    p.add_argument("--rst", help="directory of <doc-id>.rst files")
    p.add_argument("--amr", help="directory of <doc-id>.amr files")


def _load(args):
    docs, rst, amr = (corpus_paths(args.data) if args.data else (None, None, None))
    docs, rst, amr = args.docs or docs, args.rst or rst, args.amr or amr
    if not (docs and rst and amr):
        raise ValidationError("need --data DIR or all of --docs, --rst and --amr")
    for p in (docs, rst, amr):
        if not Path(p).exists():
            raise ValidationError(f"{p}: no such file or directory")
    return load_corpus(docs, rst, amr)


# ---------------------------------------------------------------------------
# commands

def cmd_build(args) -> int:
    data = _load(args)
    graphs = _pmap(lambda item: build_s3(*item), data, args.jobs)
    write_graphs(args.output, graphs)
    print(f"wrote {len(graphs)} graphs to {args.output}")
    return 0


def cmd_stats(args) -> int:
    graphs = read_graphs(args.graphs)
    stats = node_stats(graphs)
    counts = node_counts(graphs)
    if args.compare is None:
        print(f"{'category':<12} fraction   count")
        for k in STAT_KEYS:
            print(f"{k:<12} {stats[k]:.4f}   {counts[k]}")
        return 0
    other = read_graphs(args.compare)
    stats2, counts2 = node_stats(other), node_counts(other)
    print(f"{'category':<12} {'base':>8} {'compare':>8} {'delta':>8} {'kept':>7}")
    for k in STAT_KEYS:
        kept = counts2[k] / counts[k] if counts[k] else float("nan")
        print(f"{k:<12} {stats[k]:8.4f} {stats2[k]:8.4f} {stats2[k] - stats[k]:+8.4f} {kept:7.3f}")
    return 0


def cmd_train(args) -> int:
    from .trainer import TrainConfig, make_samples, paper_lr, split_dev, train

    overrides = dict(kv.split("=", 1) for kv in args.set) if args.set else {}
    if any("=" not in kv for kv in args.set or []):
        raise ValidationError("--set expects KEY=VALUE")
    seed = resolve_seed(args.seed, default=None)
    if seed is not None:
        overrides["seed"] = seed
    cfg = TrainConfig.load(args.config, **overrides) if args.config else TrainConfig.from_mapping(
        {k: str(v) for k, v in overrides.items()}, "--set")
    if args.paper_lr:
        cfg = paper_lr(cfg)
    samples = make_samples(_load(args))
    train_s, dev_s = split_dev(samples, args.dev_fraction, cfg.seed)
    state = train(train_s, cfg, dev_s, out_dir=args.out, trajectory_path=args.dump_trajectories)
    print(f"trained {state.epoch} epochs (warm->joint at {state.transitions or 'never'}); "
          f"best dev loss {state.best_dev_loss:.4f}; saved to {args.out}")
    return 0


def cmd_generate(args) -> int:
    from .trainer import TrainState, make_samples, predict

    state = TrainState.load(args.ckpt, args.checkpoint)
    samples = make_samples(_load(args))
    params = state.params
    beam = args.beam if args.beam is not None else state.cfg.beam
    outs = _pmap(lambda s: predict(state, [s], beam, params)[0], samples, args.jobs)
    lines = [" ".join(tokens) for tokens, _ in outs]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.pruned_out:
        write_graphs(args.pruned_out, [g for _, g in outs])
    if args.dump_attn:
        with open(args.dump_attn, "w") as f:
            for s, (tokens, g) in zip(samples, outs):
                attn = state.model.fusion_attention(s.doc, g, params, tokens) if state.cfg.use_graph else None
                f.write(json.dumps({"doc": s.doc.id, "headline": tokens,
                                    "nodes": [[n.id, n.ntype, n.label] for n in g.nodes] if state.cfg.use_graph
                                    else None,
                                    "attention": attn.tolist() if attn is not None else None}) + "\n")
    return 0


def _read_headlines(path) -> list[list[str]]:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{p}: no such file")
    if p.suffix == ".docs":
        return [list(d.headline_tokens) for d in read_docs(p)]
    return [line.split() for line in p.read_text().splitlines()]


def cmd_eval(args) -> int:
    preds = _read_headlines(args.pred)
    refs = _read_headlines(args.ref)
    if len(preds) != len(refs):
        raise ValidationError(f"{args.pred} has {len(preds)} headlines but {args.ref} has {len(refs)}")
    report = corpus_report(preds, refs)
    print(format_table(report, include_meteor=args.meteor_exact))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import SUITES, run_all

    seed = resolve_seed(args.seed)
    reports = run_all(seed, args.epsilon, args.suite or SUITES)
    ok = True
    for name, rep in reports.items():
        passed = rep.passed(args.tol)
        ok &= passed
        print(f"{name:<12} max_rel_error={rep.max_error:.3e} worst={rep.worst} {'ok' if passed else 'FAIL'}")
    return 0 if ok else 2


def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    spec = SynthSpec(n_docs=args.n, edus_per_doc=args.edus, tokens_per_edu=args.tokens, vocab_size=args.vocab,
                     key_edu_rate=args.key_rate, seed=seed, lead_vocab_size=args.lead_vocab)
    write_corpus(args.output, generate_corpus(spec), spec)
    print(f"wrote {args.n} documents to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="s3headline", description="Discourse-and-semantics graph headline generation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build S3 graphs from documents, RST trees and AMRs")
    _corpus_args(b)
    b.add_argument("-o", "--output", required=True, help="output .s3 file")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(fn=cmd_build)

    s = sub.add_parser("stats", help="node-category fractions of a .s3 file")
    s.add_argument("graphs")
    s.add_argument("--compare", help="second .s3 file (e.g. pruned graphs) to compare against")
    s.set_defaults(fn=cmd_stats)

    t = sub.add_parser("train", help="warm-start then joint pruning training")
    _corpus_args(t)
    t.add_argument("--config", help="key = value run configuration")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    t.add_argument("--seed", type=int, help="overrides the config seed and $S3_SEED")
    t.add_argument("--paper-lr", action="store_true", help="use the published learning rates")
    t.add_argument("--dev-fraction", type=float, default=0.2)
    t.add_argument("--out", required=True, help="run directory for checkpoints and metrics")
    t.add_argument("--dump-trajectories", metavar="PATH", help="write pruning trajectories as JSON lines")
    t.set_defaults(fn=cmd_train)

    g = sub.add_parser("generate", help="generate headlines with a trained run")
    _corpus_args(g)
    g.add_argument("--ckpt", required=True, help="run directory written by train")
    g.add_argument("--checkpoint", choices=("best", "last"), default="best")
    g.add_argument("--beam", type=int)
    g.add_argument("-o", "--output", help="headline file (default stdout)")
    g.add_argument("--pruned-out", help="write the pruned graphs to this .s3 file")
    g.add_argument("--dump-attn", help="write fusion attention per document as JSON lines")
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(fn=cmd_generate)

    e = sub.add_parser("eval", help="score predicted headlines against references")
    e.add_argument("--pred", required=True, help="one headline per line, or a .docs file")
    e.add_argument("--ref", required=True, help="one headline per line, or a .docs file")
    e.add_argument("--meteor-exact", action="store_true",
                   help="add the exact-match METEOR column (not comparable with WordNet METEOR)")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference checks of every backward pass")
    c.add_argument("--seed", type=int)
    c.add_argument("--epsilon", type=float, default=1e-3)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    c.set_defaults(fn=cmd_gradcheck)

    y = sub.add_parser("synth", help="write a synthetic corpus")
    y.add_argument("--n", type=int, required=True)
    y.add_argument("--seed", type=int)
    y.add_argument("--edus", type=_range, default=(2, 5), metavar="LO-HI")
    y.add_argument("--tokens", type=_range, default=(3, 6), metavar="LO-HI")
    y.add_argument("--vocab", type=int, default=40)
    y.add_argument("--key-rate", type=float, default=0.3)
    y.add_argument("--lead-vocab", type=int, default=0, help="size of the separate EDU-opening token pool (0 = off)")
    y.add_argument("-o", "--output", required=True)
    y.set_defaults(fn=cmd_synth)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "jobs", 1) < 1:
            raise ValidationError("--jobs must be >= 1")
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
