"""String <-> id tables for tokens, edge labels and dummy concepts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

PAD, UNK, BOS, EOS, CLS, SEP = "<pad>", "<unk>", "<bos>", "<eos>", "[CLS]", "[SEP]"
TOKEN_SPECIALS = (PAD, UNK, BOS, EOS, CLS, SEP)
UNK_LABEL = "<unk-label>"
UNK_CONCEPT = "<unk-concept>"


@dataclass
class Vocab:
    items: list
    unk: str
    fold: bool = False

    def __post_init__(self):
        self._index = {s: i for i, s in enumerate(self.items)}
        if self.unk not in self._index:
            raise ValueError(f"vocabulary lacks its unknown symbol {self.unk!r}")

    def __len__(self):
        return len(self.items)

    def __contains__(self, s):
        return self._norm(s) in self._index

    def _norm(self, s):
        return s.casefold() if self.fold and s not in TOKEN_SPECIALS else s

    def id(self, s: str) -> int:
        return self._index.get(self._norm(s), self._index[self.unk])

    def ids(self, seq) -> list[int]:
        return [self.id(s) for s in seq]

    def token(self, i: int) -> str:
        return self.items[i]

    def to_obj(self) -> dict:
        return {"items": list(self.items), "unk": self.unk, "fold": self.fold}

    @classmethod
    def from_obj(cls, obj) -> "Vocab":
        return cls(list(obj["items"]), obj["unk"], bool(obj.get("fold", False)))


def _ranked(counter: Counter) -> list[str]:
    return [s for s, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


def build_token_vocab(docs, min_count: int = 1) -> Vocab:
    """Case-folded vocabulary over EDU and headline tokens, specials first."""
    c = Counter()
    for d in docs:
        for e in d.edus:
            c.update(t.casefold() for t in e.tokens)
        c.update(t.casefold() for t in d.headline_tokens)
    words = [w for w in _ranked(c) if c[w] >= min_count and w not in TOKEN_SPECIALS]
    return Vocab(list(TOKEN_SPECIALS) + words, UNK, fold=True)


def build_label_vocab(graphs) -> Vocab:
    """Edge labels seen in ``graphs``, including their ``rev:`` mirrors and ``self``."""
    from .s3graph import SELF_LABEL

    labels = set()
    for g in graphs:
        for e in g.edges:
            labels.add(e.label)
            labels.add(f"rev:{e.label}")
    labels.add(SELF_LABEL)
    return Vocab([UNK_LABEL] + sorted(labels), UNK_LABEL)


def build_concept_vocab(graphs) -> Vocab:
    from .s3graph import C_DUMMY

    concepts = sorted({n.label for g in graphs for n in g.nodes if n.ntype == C_DUMMY})
    return Vocab([UNK_CONCEPT] + concepts, UNK_CONCEPT)
