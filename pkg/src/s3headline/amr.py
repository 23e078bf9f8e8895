"""Sentence-level AMR graphs in PENMAN notation with inline token alignments.

A concept may carry a ``~N`` suffix giving the 0-based index of the token it
realises inside its EDU; such nodes are *word-aligned*, all others are
*dummy* nodes.  Constants (strings, numbers, ``-``) become dummy nodes whose
concept is the literal and whose variable is derived from the attaching edge,
so they survive a serialize/parse round trip unchanged.

Inverse roles (``:ARG0-of``) are normalised at parse time into the forward
role with source and target swapped.  ``:consist-of`` is a genuine role and
is left alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import AlignmentConflictError, IntegrityError, PenmanParseError, ValidationError

WORD = "word-aligned"
DUMMY = "dummy"

EMPTY_CONCEPT = "amr-empty"

_ALIGN_RE = re.compile(r"^(.*?)~(?:e\.)?(\d+)$", re.S)
_NON_INVERTIBLE = {":consist-of"}


@dataclass(frozen=True)
class AmrNode:
    variable: str
    concept: str
    kind: str = DUMMY
    token_index: Optional[int] = None
    constant: bool = False

    def __post_init__(self):
        if (self.kind == WORD) != (self.token_index is not None):
            raise ValueError(f"node {self.variable}: kind {self.kind} inconsistent with token_index")


@dataclass(frozen=True)
class AmrEdge:
    source: str
    target: str
    role: str


@dataclass(frozen=True)
class AmrGraph:
    root: str
    nodes: dict  # variable -> AmrNode, in order of first definition
    edges: tuple  # AmrEdge, in order of appearance
    edu_id: int = 0

    def key(self):
        """Hashable, order-insensitive summary used for isomorphism checks."""
        return (
            self.root,
            frozenset(self.nodes.values()),
            tuple(sorted((e.source, e.role, e.target) for e in self.edges)),
        )

    def is_empty(self) -> bool:
        return len(self.nodes) == 1 and self.nodes[self.root].concept == EMPTY_CONCEPT


def same_graph(a: AmrGraph, b: AmrGraph) -> bool:
    return a.key() == b.key()


# ---------------------------------------------------------------------------
# parsing

class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def offset(self, pos=None) -> int:
        pos = self.pos if pos is None else pos
        return len(self.text[:pos].encode("utf-8"))

    def error(self, message, pos=None):
        return PenmanParseError(message, self.offset(pos))

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            raise self.error(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def atom(self) -> tuple[str, int]:
        """Read a symbol, role or quoted string (quotes kept); returns (text, start)."""
        self.skip_ws()
        start = self.pos
        if start >= len(self.text):
            raise self.error("unexpected end of input")
        if self.text[start] == '"':
            i = start + 1
            while i < len(self.text) and self.text[i] != '"':
                i += 2 if self.text[i] == "\\" else 1
            if i >= len(self.text):
                raise self.error("unterminated string literal", start)
            i += 1
            while i < len(self.text) and not self.text[i].isspace() and self.text[i] not in "()":
                i += 1
            self.pos = i
            return self.text[start:i], start
        i = start
        while i < len(self.text) and not self.text[i].isspace() and self.text[i] not in "()/":
            i += 1
        if i == start:
            raise self.error(f"unexpected {self.text[start]!r}")
        self.pos = i
        return self.text[start:i], start


def _split_alignment(token: str):
    m = _ALIGN_RE.match(token)
    if m and m.group(1):
        return m.group(1), int(m.group(2))
    return token, None


def _invert(role: str):
    if role.endswith("-of") and role not in _NON_INVERTIBLE and len(role) > 4:
        return role[:-3], True
    return role, False


def parse_penman(text: str, edu_id: int = 0) -> AmrGraph:
    lex = _Lexer(text)
    nodes: dict[str, AmrNode] = {}
    # (parent, role, target token, is_node, start offset, alignment); resolved after parsing
    raw_edges: list = []

    def parse_node() -> str:
        lex.expect("(")
        var, vstart = lex.atom()
        if lex.peek() != "/":
            raise lex.error(f"expected '/' after variable {var!r}")
        lex.pos += 1
        if lex.peek() in ("", ")", "("):
            raise lex.error("missing concept")
        concept_tok, _ = lex.atom()
        concept, align = _split_alignment(concept_tok)
        if var in nodes:
            raise lex.error(f"duplicate concept definition for variable {var!r}", vstart)
        nodes[var] = AmrNode(var, concept, WORD if align is not None else DUMMY, align)
        while True:
            ch = lex.peek()
            if ch == ")":
                lex.pos += 1
                return var
            if ch == "":
                raise lex.error("unbalanced parentheses: unexpected end of input")
            role, rstart = lex.atom()
            if not role.startswith(":") or len(role) < 2:
                raise lex.error(f"expected a role, found {role!r}", rstart)
            nxt = lex.peek()
            if nxt in ("", ")") or (nxt == ":"):
                raise lex.error(f"role {role} has no target")
            if nxt == "(":
                child = parse_node()
                raw_edges.append((var, role, child, True, rstart))
            else:
                tok, tstart = lex.atom()
                if tok.startswith(":"):
                    raise lex.error(f"role {role} has no target", tstart)
                raw_edges.append((var, role, tok, False, tstart))

    root = parse_node()
    if lex.peek() != "":
        raise lex.error("trailing content after graph")

    edges: list[AmrEdge] = []
    const_count: dict[str, int] = {}
    for parent, role, target, is_node, _start in raw_edges:
        base, inverted = _invert(role)
        if not is_node and target not in nodes:
            # constant: a fresh dummy node named after its attachment point
            literal, align = _split_alignment(target)
            stem = f"{parent}{base}"
            n = const_count.get(stem, 0) + 1
            const_count[stem] = n
            cvar = stem if n == 1 else f"{stem}#{n}"
            nodes[cvar] = AmrNode(cvar, literal, WORD if align is not None else DUMMY, align, constant=True)
            target = cvar
            inverted = False
            base = role
        if inverted:
            edges.append(AmrEdge(target, parent, base))
        else:
            edges.append(AmrEdge(parent, target, base))

    graph = AmrGraph(root=root, nodes=nodes, edges=tuple(edges), edu_id=edu_id)
    _check_reachable(graph)
    return graph


def _adjacency(g: AmrGraph):
    adj: dict[str, list] = {v: [] for v in g.nodes}
    for i, e in enumerate(g.edges):
        adj[e.source].append((e.role, e.target, i, False))
        adj[e.target].append((e.role, e.source, i, True))
    return adj


def _check_reachable(g: AmrGraph) -> None:
    for e in g.edges:
        if e.source not in g.nodes or e.target not in g.nodes:
            raise IntegrityError(f"edge {e} refers to an unknown variable")
    adj = _adjacency(g)
    seen = {g.root}
    stack = [g.root]
    while stack:
        v = stack.pop()
        for _, other, _, _ in adj[v]:
            if other not in seen:
                seen.add(other)
                stack.append(other)
    missing = set(g.nodes) - seen
    if missing:
        raise IntegrityError(f"nodes unreachable from root {g.root!r}: {sorted(missing)}")


# ---------------------------------------------------------------------------
# serialization

def _format_concept(node: AmrNode) -> str:
    return node.concept if node.token_index is None else f"{node.concept}~{node.token_index}"


def _walk(g: AmrGraph):
    """Canonical depth-first traversal shared by the serializer and node ordering.

    Yields ('open', var), ('edge', role, var, reentrant) and ('close', var)
    events; constants appear as edges to their own variable.
    """
    if g.root not in g.nodes:
        raise IntegrityError(f"root {g.root!r} is not a node")
    _check_reachable(g)
    adj = _adjacency(g)
    visited = set()
    used_edges = set()

    def visit(var):
        visited.add(var)
        yield ("open", var)
        children = []
        for role, other, idx, incoming in adj[var]:
            if idx in used_edges:
                continue
            shown = f"{role}-of" if incoming else role
            children.append((shown, other, idx))
        children.sort(key=lambda c: (c[0], c[1]))
        for shown, other, idx in children:
            if idx in used_edges:
                continue
            used_edges.add(idx)
            node = g.nodes[other]
            if node.constant:
                yield ("edge", shown, other, False)
            elif other in visited:
                yield ("edge", shown, other, True)
            else:
                yield ("edge", shown, other, False)
                yield from visit(other)
        yield ("close", var)

    yield from visit(g.root)


def serialization_order(g: AmrGraph) -> list[str]:
    """Variables in the order their definitions (or constants) are emitted."""
    order = []
    for ev in _walk(g):
        if ev[0] == "open":
            order.append(ev[1])
        elif ev[0] == "edge" and g.nodes[ev[2]].constant:
            order.append(ev[2])
    return order


def serialize_penman(g: AmrGraph) -> str:
    parts: list[str] = []
    pending_edge = None
    for ev in _walk(g):
        kind = ev[0]
        if kind == "open":
            node = g.nodes[ev[1]]
            prefix = f" {pending_edge} " if pending_edge else ""
            parts.append(f"{prefix}({node.variable} / {_format_concept(node)}")
            pending_edge = None
        elif kind == "close":
            parts.append(")")
        else:
            _, role, var, reentrant = ev
            node = g.nodes[var]
            if node.constant:
                parts.append(f" {role} {_format_concept(node)}")
            elif reentrant:
                parts.append(f" {role} {var}")
            else:
                pending_edge = role
    return "".join(parts)


# ---------------------------------------------------------------------------
# alignments and files

def word_nodes(g: AmrGraph) -> dict[int, str]:
    out: dict[int, str] = {}
    for var, node in g.nodes.items():
        if node.kind != WORD:
            continue
        if node.token_index in out:
            raise AlignmentConflictError(
                f"EDU {g.edu_id}: token {node.token_index} aligned to both "
                f"{out[node.token_index]!r} and {var!r}")
        out[node.token_index] = var
    return out


def read_amr_file(path) -> list[AmrGraph]:
    """One PENMAN expression per line, in EDU order; ``#`` lines are comments."""
    graphs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            graphs.append(parse_penman(stripped, edu_id=len(graphs)))
        except (PenmanParseError, IntegrityError) as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def write_amr_file(path, graphs, comment: str | None = None) -> None:
    lines = [f"# {comment}"] if comment else []
    lines.extend(serialize_penman(g) for g in graphs)
    Path(path).write_text("\n".join(lines) + "\n")
