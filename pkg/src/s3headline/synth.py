"""Synthetic corpora with gold RST trees, chain AMRs and learnable headlines.

Each document picks a few *key* EDUs; the headline is the first token(s) of
every key EDU in document order.  Key EDUs are visible only through the
discourse structure: a child span is a nucleus exactly when it contains a key
EDU, and a span with no key EDU underneath is labelled ``Background``.  An
EDU is therefore key iff every edge on its root path is a nucleus edge, and
the edge into a key EDU is always ``Joint/N`` or ``Elaborate/N``.

With ``lead_vocab_size > 0`` every EDU opens with a token from a separate
pool ``c0 .. c{k-1}``, so headline words are easy to copy and the hard part
is choosing the right EDUs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .amr import AmrEdge, AmrGraph, AmrNode, DUMMY, EMPTY_CONCEPT, WORD, parse_penman, read_amr_file, \
    serialize_penman, write_amr_file
from .errors import ValidationError
from .numerics import make_rng
from .rst import Document, Edu, Internal, Leaf, read_docs, read_rst_file, serialize_rst, write_docs

DUMMY_CONCEPTS = ("and", "person", "thing", "have-rel-role-91", "multi-sentence")
CHAIN_ROLES = (":ARG0", ":ARG1", ":mod", ":ARG2")


@dataclass(frozen=True)
class SynthSpec:
    n_docs: int = 10
    edus_per_doc: tuple = (2, 5)
    tokens_per_edu: tuple = (3, 6)
    vocab_size: int = 40
    key_edu_rate: float = 0.3
    seed: int = 0
    head_tokens_per_edu: int = 1
    align_rate: float = 0.5
    dummy_rate: float = 0.5
    empty_amr_rate: float = 0.1
    lead_vocab_size: int = 0

    def __post_init__(self):
        for name in ("edus_per_doc", "tokens_per_edu"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must be a nonempty range of positive integers")
        if not 0 < self.key_edu_rate <= 1:
            raise ValueError("key_edu_rate must lie in (0, 1]")
        if self.head_tokens_per_edu < 1 or self.head_tokens_per_edu > self.tokens_per_edu[0]:
            raise ValueError("head_tokens_per_edu must be between 1 and the minimum EDU length")
        if self.vocab_size < 2 or self.n_docs < 0:
            raise ValueError("vocab_size must be >= 2 and n_docs >= 0")
        if self.lead_vocab_size < 0:
            raise ValueError("lead_vocab_size must be >= 0")


@dataclass
class SynthDoc:
    doc: Document
    tree: object
    amrs: list
    key_edus: tuple


def _random_tree(rng, lo, hi, key):
    """Random binary bracketing of EDUs lo..hi; returns (tree, contains_key)."""
    if lo == hi:
        return Leaf(lo), lo in key
    split = int(rng.integers(lo, hi))
    left, lk = _random_tree(rng, lo, split, key)
    right, rk = _random_tree(rng, split + 1, hi, key)
    if lk and rk:
        return Internal("Joint", ("N", "N"), left, right), True
    if lk or rk:
        return Internal("Elaborate", ("N", "S") if lk else ("S", "N"), left, right), True
    return Internal("Background", ("N", "S"), left, right), False


def _chain_amr(rng, tokens, edu_id, spec: SynthSpec) -> AmrGraph:
    if rng.random() < spec.empty_amr_rate:
        return parse_penman(f"(x / {EMPTY_CONCEPT})", edu_id)
    aligned = [i for i in range(len(tokens)) if rng.random() < spec.align_rate]
    nodes = []
    if not aligned or rng.random() < spec.dummy_rate:
        concept = DUMMY_CONCEPTS[int(rng.integers(len(DUMMY_CONCEPTS)))]
        nodes.append(AmrNode("x0", concept, DUMMY, None))
    for k, i in enumerate(aligned):
        nodes.append(AmrNode(f"v{k}", tokens[i], WORD, i))
    edges = tuple(AmrEdge(a.variable, b.variable, CHAIN_ROLES[int(rng.integers(len(CHAIN_ROLES)))])
                  for a, b in zip(nodes, nodes[1:]))
    return AmrGraph(nodes[0].variable, {n.variable: n for n in nodes}, edges, edu_id)


def generate_document(spec: SynthSpec, index: int) -> SynthDoc:
    rng = make_rng(spec.seed, index)
    n_edus = int(rng.integers(spec.edus_per_doc[0], spec.edus_per_doc[1] + 1))
    edus = []
    for e in range(n_edus):
        length = int(rng.integers(spec.tokens_per_edu[0], spec.tokens_per_edu[1] + 1))
        tokens = tuple(f"w{int(t)}" for t in rng.integers(0, spec.vocab_size, size=length))
        if spec.lead_vocab_size:
            tokens = (f"c{int(rng.integers(spec.lead_vocab_size))}",) + tokens[1:]
        edus.append(Edu(e, " ".join(tokens), tokens))
    n_key = max(1, int(round(spec.key_edu_rate * n_edus)))
    key = tuple(sorted(int(k) for k in rng.choice(n_edus, size=n_key, replace=False)))
    tree, _ = _random_tree(rng, 0, n_edus - 1, set(key))
    amrs = [_chain_amr(rng, e.tokens, e.id, spec) for e in edus]
    head = tuple(t for k in key for t in edus[k].tokens[: spec.head_tokens_per_edu])
    doc = Document(f"synth-{spec.seed}-{index:05d}", tuple(edus), " ".join(head), head)
    return SynthDoc(doc, tree, amrs, key)


def generate_corpus(spec: SynthSpec) -> list[SynthDoc]:
    return [generate_document(spec, i) for i in range(spec.n_docs)]


def key_edus_from_tree(tree) -> list[int]:
    """EDUs whose every root-path edge is a nucleus edge."""
    out = []

    def visit(node, all_n):
        if isinstance(node, Leaf):
            if all_n:
                out.append(node.edu_id)
            return
        visit(node.left, all_n and node.nuclearity[0] == "N")
        visit(node.right, all_n and node.nuclearity[1] == "N")

    visit(tree, True)
    return out


def oracle_headline(doc: Document, tree, head_tokens_per_edu: int = 1) -> list[str]:
    return [t for k in key_edus_from_tree(tree) for t in doc.edus[k].tokens[:head_tokens_per_edu]]


# ---------------------------------------------------------------------------
# files

def corpus_paths(root) -> tuple[Path, Path, Path]:
    root = Path(root)
    return root / "corpus.docs", root / "rst", root / "amr"


def write_corpus(root, corpus: list[SynthDoc], spec: SynthSpec | None = None) -> Path:
    docs_path, rst_dir, amr_dir = corpus_paths(root)
    rst_dir.mkdir(parents=True, exist_ok=True)
    amr_dir.mkdir(parents=True, exist_ok=True)
    write_docs(docs_path, [s.doc for s in corpus])
    for s in corpus:
        (rst_dir / f"{s.doc.id}.rst").write_text(serialize_rst(s.tree) + "\n")
        write_amr_file(amr_dir / f"{s.doc.id}.amr", s.amrs)
    if spec is not None:
        meta = {k: list(v) if isinstance(v, tuple) else v for k, v in spec.__dict__.items()}
        (Path(root) / "spec.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    return docs_path


def load_corpus(docs_path, rst_dir, amr_dir) -> list[tuple]:
    """``(Document, RstTree, [AmrGraph])`` triples, in ``.docs`` order."""
    out = []
    for doc in read_docs(docs_path):
        rst_path = Path(rst_dir) / f"{doc.id}.rst"
        amr_path = Path(amr_dir) / f"{doc.id}.amr"
        for p in (rst_path, amr_path):
            if not p.exists():
                raise ValidationError(f"{p}: missing file for document {doc.id!r}")
        out.append((doc, read_rst_file(rst_path), read_amr_file(amr_path)))
    return out


def penman_lines(corpus) -> list[str]:
    return [serialize_penman(g) for s in corpus for g in s.amrs]
