"""Document-level RST trees over pre-segmented EDUs, plus the document record format.

Trees are strictly binary.  Multinuclear relations with more than two
children have to be binarised (left-branching) by whoever produced the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .errors import RstValidationError, TreeDocMismatchError, ValidationError

NUCLEARITY = ("N", "S")


@dataclass(frozen=True)
class Edu:
    id: int
    text: str
    tokens: tuple

    def __post_init__(self):
        if not self.tokens:
            raise ValidationError(f"EDU {self.id} has no tokens")


@dataclass(frozen=True)
class Document:
    id: str
    edus: tuple
    headline: str
    headline_tokens: tuple

    def __post_init__(self):
        if not self.edus:
            raise ValidationError(f"document {self.id!r} has no EDUs")
        if not self.headline_tokens:
            raise ValidationError(f"document {self.id!r} has an empty headline")
        for i, e in enumerate(self.edus):
            if e.id != i:
                raise ValidationError(f"document {self.id!r}: EDU ids must be contiguous from 0")

    @property
    def n_tokens(self) -> int:
        return sum(len(e.tokens) for e in self.edus)

    def token_offsets(self) -> list[int]:
        """Global position of each EDU's first token."""
        offsets, pos = [], 0
        for e in self.edus:
            offsets.append(pos)
            pos += len(e.tokens)
        return offsets

    def all_tokens(self) -> list[str]:
        return [t for e in self.edus for t in e.tokens]


@dataclass(frozen=True)
class Leaf:
    edu_id: int


@dataclass(frozen=True)
class Internal:
    relation: str
    nuclearity: tuple
    left: "RstTree"
    right: "RstTree"


RstTree = Union[Leaf, Internal]


@dataclass(frozen=True)
class Span:
    span_id: int
    start: int
    end: int
    relation: str
    nuclearity: tuple
    node: Internal


# ---------------------------------------------------------------------------
# parsing / serialization

def _build(obj, path: str) -> RstTree:
    if not isinstance(obj, dict):
        raise RstValidationError("node must be an object", path)
    if "edu" in obj:
        if set(obj) != {"edu"}:
            raise RstValidationError(f"leaf has unexpected keys {sorted(set(obj) - {'edu'})}", path)
        edu = obj["edu"]
        if not isinstance(edu, int) or isinstance(edu, bool) or edu < 0:
            raise RstValidationError(f"leaf edu id must be a non-negative integer, got {edu!r}", path)
        return Leaf(edu)
    missing = {"relation", "nuclearity", "children"} - set(obj)
    if missing:
        raise RstValidationError(f"internal node missing {sorted(missing)}", path)
    rel = obj["relation"]
    if not isinstance(rel, str) or not rel.strip():
        raise RstValidationError("relation must be a nonempty string", path)
    nuc = obj["nuclearity"]
    if (not isinstance(nuc, list) or len(nuc) != 2 or any(n not in NUCLEARITY for n in nuc)):
        raise RstValidationError(f"nuclearity must be a pair of 'N'/'S', got {nuc!r}", path)
    if nuc == ["S", "S"]:
        raise RstValidationError("nuclearity (S,S) is not allowed", path)
    children = obj["children"]
    if not isinstance(children, list) or len(children) != 2:
        n = len(children) if isinstance(children, list) else "non-list"
        raise RstValidationError(f"node must have exactly 2 children, has {n}", path)
    left = _build(children[0], f"{path}.children[0]")
    right = _build(children[1], f"{path}.children[1]")
    return Internal(rel, tuple(nuc), left, right)


def _leaf_paths(t: RstTree, path="root"):
    if isinstance(t, Leaf):
        yield t.edu_id, path
    else:
        yield from _leaf_paths(t.left, f"{path}.children[0]")
        yield from _leaf_paths(t.right, f"{path}.children[1]")


def parse_rst(text) -> RstTree:
    """Parse the JSON record format (string or already-decoded object) and validate it."""
    if isinstance(text, (str, bytes)):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise RstValidationError(f"invalid JSON: {exc}") from exc
    else:
        obj = text
    tree = _build(obj, "root")
    seen = set()
    for expected, (edu, path) in enumerate(_leaf_paths(tree)):
        if edu in seen:
            raise RstValidationError(f"duplicate EDU id {edu}", path)
        if edu != expected:
            raise RstValidationError(f"leaf out of order or missing: expected EDU {expected}, found {edu}", path)
        seen.add(edu)
    return tree


def rst_to_obj(t: RstTree):
    if isinstance(t, Leaf):
        return {"edu": t.edu_id}
    return {"relation": t.relation, "nuclearity": list(t.nuclearity),
            "children": [rst_to_obj(t.left), rst_to_obj(t.right)]}


def serialize_rst(t: RstTree) -> str:
    return json.dumps(rst_to_obj(t), sort_keys=True)


def leaves(t: RstTree) -> list[int]:
    return [e for e, _ in _leaf_paths(t)]


def enumerate_spans(t: RstTree) -> list[Span]:
    """Internal nodes in post-order with their inclusive EDU ranges."""
    spans: list[Span] = []

    def visit(node):
        if isinstance(node, Leaf):
            return node.edu_id, node.edu_id
        lo, _ = visit(node.left)
        _, hi = visit(node.right)
        spans.append(Span(len(spans), lo, hi, node.relation, node.nuclearity, node))
        return lo, hi

    visit(t)
    return spans


def validate_against(t: RstTree, d: Document) -> None:
    n = len(leaves(t))
    if n != len(d.edus):
        raise TreeDocMismatchError(n, len(d.edus))


# ---------------------------------------------------------------------------
# files

def document_from_obj(obj) -> Document:
    if not isinstance(obj, dict):
        raise ValidationError("document record must be an object")
    for key in ("id", "edus", "headline", "headline_tokens"):
        if key not in obj:
            raise ValidationError(f"missing field {key!r}")
    edus = []
    for i, e in enumerate(obj["edus"]):
        if not isinstance(e, dict) or "tokens" not in e:
            raise ValidationError(f"field 'edus[{i}]' must be an object with 'tokens'")
        tokens = tuple(str(t) for t in e["tokens"])
        edus.append(Edu(i, str(e.get("text", " ".join(tokens))), tokens))
    return Document(str(obj["id"]), tuple(edus), str(obj["headline"]),
                    tuple(str(t) for t in obj["headline_tokens"]))


def document_to_obj(d: Document) -> dict:
    return {"id": d.id,
            "edus": [{"text": e.text, "tokens": list(e.tokens)} for e in d.edus],
            "headline": d.headline, "headline_tokens": list(d.headline_tokens)}


def read_docs(path) -> list[Document]:
    docs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            docs.append(document_from_obj(json.loads(line)))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return docs


def write_docs(path, docs) -> None:
    Path(path).write_text("".join(json.dumps(document_to_obj(d)) + "\n" for d in docs))


def read_rst_file(path) -> RstTree:
    try:
        return parse_rst(Path(path).read_text())
    except RstValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
