"""Unified semantic discourse graph built from one RST tree and per-EDU AMR graphs.

Node ids are assigned in a fixed order: text-span nodes (RST post-order),
EDU nodes (by EDU id), AMR nodes EDU by EDU in PENMAN serialization order,
then rest-word nodes by global token position.

Edges stored on the graph are the *base* edges.  Reverse edges and self
loops used for message passing are derived by :func:`message_edges` and
:func:`to_adjacency`.

Connectivity is judged on base edges plus an ownership link between every
word-level node and the EDU node it belongs to.  Word nodes are always
linked directly; the ownership link matters for AMR components made only of
dummy nodes, which have no RST-AMR edge of their own.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import amr as amr_io
from .errors import BuildError, AlignmentConflictError, ValidationError
from .rst import Document, Leaf, enumerate_spans, validate_against

A_SPAN = "A_TextSpan"
B_EDU = "B_Edu"
C_WORD = "C_Word"
C_DUMMY = "C_Dummy"
NODE_TYPES = (A_SPAN, B_EDU, C_WORD, C_DUMMY)

RST, AMR, RST_AMR, REVERSE, SELF = "RST", "AMR", "RST_AMR", "REVERSE", "SELF"
RST_AMR_LABEL = "RST-AMR"
SELF_LABEL = "self"

STAT_KEYS = ("text-span", "EDU", "AMR word", "rest word", "AMR dummy")


@dataclass(frozen=True)
class S3Node:
    id: int
    ntype: str
    label: str
    edu_id: Optional[int] = None
    token_index: Optional[int] = None
    amr_var: Optional[str] = None
    span: Optional[tuple] = None  # inclusive EDU range for text-span nodes

    @property
    def level(self) -> str:
        return self.ntype[0]


@dataclass(frozen=True)
class S3Edge:
    src: int
    dst: int
    label: str
    origin: str


@dataclass
class S3Graph:
    doc_id: str
    nodes: list
    edges: list
    root: int
    _index: dict = field(default=None, repr=False, compare=False)

    def index(self) -> dict:
        """node id -> row position."""
        if self._index is None:
            self._index = {n.id: i for i, n in enumerate(self.nodes)}
        return self._index

    def node(self, node_id: int) -> S3Node:
        return self.nodes[self.index()[node_id]]

    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def of_type(self, ntype: str) -> list[S3Node]:
        return [n for n in self.nodes if n.ntype == ntype]

    def __len__(self):
        return len(self.nodes)


# ---------------------------------------------------------------------------
# construction

def build_s3(d: Document, t, amrs: list) -> S3Graph:
    validate_against(t, d)
    if len(amrs) != len(d.edus):
        raise BuildError(f"document {d.id!r}: {len(amrs)} AMR graphs for {len(d.edus)} EDUs")
    nodes: list[S3Node] = []
    edges: list[S3Edge] = []
    spans = enumerate_spans(t)
    offsets = d.token_offsets()

    for sp in spans:
        nodes.append(S3Node(len(nodes), A_SPAN, sp.relation, span=(sp.start, sp.end)))
    edu_node = {}
    for e in d.edus:
        edu_node[e.id] = len(nodes)
        nodes.append(S3Node(len(nodes), B_EDU, e.text, edu_id=e.id, span=(e.id, e.id)))

    # RST edges: parent span -> child, labelled with relation and the child's nuclearity
    span_node = {id(sp.node): sp.span_id for sp in spans}
    for sp in spans:
        for child, nuc in ((sp.node.left, sp.nuclearity[0]), (sp.node.right, sp.nuclearity[1])):
            dst = edu_node[child.edu_id] if isinstance(child, Leaf) else span_node[id(child)]
            edges.append(S3Edge(sp.span_id, dst, f"{sp.relation}/{nuc}", RST))

    covered: set[int] = set()
    for e, g in zip(d.edus, amrs):
        if g.is_empty():
            continue
        try:
            aligned = amr_io.word_nodes(g)
        except AlignmentConflictError as exc:
            raise BuildError(f"document {d.id!r}: {exc}") from exc
        for tok in aligned:
            if not 0 <= tok < len(e.tokens):
                raise BuildError(
                    f"document {d.id!r}: EDU {e.id} alignment ~{tok} outside its {len(e.tokens)} tokens")
        var_node = {}
        for var in amr_io.serialization_order(g):
            an = g.nodes[var]
            var_node[var] = len(nodes)
            if an.token_index is not None:
                gpos = offsets[e.id] + an.token_index
                if gpos in covered:
                    raise BuildError(f"document {d.id!r}: token {gpos} covered twice")
                covered.add(gpos)
                nodes.append(S3Node(len(nodes), C_WORD, an.concept, e.id, gpos, var))
            else:
                nodes.append(S3Node(len(nodes), C_DUMMY, an.concept, e.id, None, var))
        for ae in g.edges:
            edges.append(S3Edge(var_node[ae.source], var_node[ae.target], ae.role, AMR))
        for tok in sorted(aligned):
            edges.append(S3Edge(edu_node[e.id], var_node[aligned[tok]], RST_AMR_LABEL, RST_AMR))

    for e in d.edus:
        for i, tok in enumerate(e.tokens):
            gpos = offsets[e.id] + i
            if gpos in covered:
                continue
            nid = len(nodes)
            nodes.append(S3Node(nid, C_WORD, tok, e.id, gpos, None))
            edges.append(S3Edge(edu_node[e.id], nid, RST_AMR_LABEL, RST_AMR))

    root = spans[-1].span_id if spans else edu_node[0]
    g = S3Graph(d.id, nodes, edges, root)
    unreachable = set(g.node_ids()) - reachable(g)
    if unreachable:
        raise BuildError(f"document {d.id!r}: nodes {sorted(unreachable)} unreachable from root")
    return g


def reachable(g: S3Graph, root: Optional[int] = None) -> set[int]:
    """Node ids reachable from ``root`` over base edges plus EDU ownership links."""
    root = g.root if root is None else root
    present = set(g.node_ids())
    if root not in present:
        return set()
    adj: dict[int, list[int]] = {i: [] for i in present}
    for e in g.edges:
        if e.src in present and e.dst in present:
            adj[e.src].append(e.dst)
            adj[e.dst].append(e.src)
    edu_node = {n.edu_id: n.id for n in g.nodes if n.ntype == B_EDU}
    for n in g.nodes:
        if n.ntype in (C_WORD, C_DUMMY) and n.edu_id in edu_node:
            adj[n.id].append(edu_node[n.edu_id])
            adj[edu_node[n.edu_id]].append(n.id)
    seen = {root}
    stack = [root]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


# ---------------------------------------------------------------------------
# adjacency

def message_edges(g: S3Graph) -> list[S3Edge]:
    """Base edges followed by their reverses and one self loop per node."""
    out = list(g.edges)
    out.extend(S3Edge(e.dst, e.src, f"rev:{e.label}", REVERSE) for e in g.edges)
    out.extend(S3Edge(n.id, n.id, SELF_LABEL, SELF) for n in g.nodes)
    return out


_ORIGIN_RANK = {RST: 0, AMR: 0, RST_AMR: 0, REVERSE: 1, SELF: 2}


@dataclass
class AdjacencyView:
    n: int
    m: np.ndarray  # uint8 [n, n]
    labels: dict  # (row, col) -> label string
    label_names: list
    edge_label_index: dict  # (row, col) -> position in label_names

    def label_matrix(self, vocab=None) -> np.ndarray:
        """Dense [n, n] label ids (``-1`` where there is no edge).

        With ``vocab`` (anything with ``.id(label)``) ids come from it,
        otherwise from this view's own ``label_names``.
        """
        out = np.full((self.n, self.n), -1, dtype=np.int64)
        for (i, j), lab in self.labels.items():
            out[i, j] = vocab.id(lab) if vocab is not None else self.edge_label_index[(i, j)]
        return out


def to_adjacency(g: S3Graph) -> AdjacencyView:
    """Symmetric 0/1 adjacency with unit diagonal over row positions of ``g.nodes``.

    When several edges join the same ordered pair, base labels win over
    reverse labels, which win over ``self``; ties go to the smallest label
    string, so the result does not depend on edge order.
    """
    idx = g.index()
    n = len(g.nodes)
    m = np.zeros((n, n), dtype=np.uint8)
    best: dict = {}
    for e in message_edges(g):
        i, j = idx[e.src], idx[e.dst]
        m[i, j] = 1
        cand = (_ORIGIN_RANK[e.origin], e.label)
        if (i, j) not in best or cand < best[(i, j)]:
            best[(i, j)] = cand
    labels = {k: v[1] for k, v in best.items()}
    names = sorted(set(labels.values()))
    pos = {lab: k for k, lab in enumerate(names)}
    return AdjacencyView(n, m, labels, names, {k: pos[v] for k, v in labels.items()})


# ---------------------------------------------------------------------------
# statistics and export

def _category(n: S3Node) -> str:
    if n.ntype == A_SPAN:
        return "text-span"
    if n.ntype == B_EDU:
        return "EDU"
    if n.ntype == C_DUMMY:
        return "AMR dummy"
    return "AMR word" if n.amr_var is not None else "rest word"


def node_counts(graphs) -> Counter:
    if isinstance(graphs, S3Graph):
        graphs = [graphs]
    c = Counter({k: 0 for k in STAT_KEYS})
    for g in graphs:
        c.update(_category(n) for n in g.nodes)
    return c


def node_stats(graphs) -> dict[str, float]:
    """Share of each node category; accepts one graph or an iterable (counts pooled)."""
    c = node_counts(graphs)
    total = sum(c.values())
    if total == 0:
        raise ValidationError("node_stats needs a nonempty graph")
    return {k: c[k] / total for k in STAT_KEYS}


def graph_to_obj(g: S3Graph) -> dict:
    return {
        "doc_id": g.doc_id,
        "root": g.root,
        "nodes": [{"id": n.id, "ntype": n.ntype, "label": n.label, "edu": n.edu_id,
                   "token": n.token_index, "var": n.amr_var,
                   "span": list(n.span) if n.span is not None else None} for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "label": e.label, "origin": e.origin} for e in g.edges],
    }


def graph_from_obj(obj) -> S3Graph:
    try:
        nodes = [S3Node(int(n["id"]), n["ntype"], n["label"], n.get("edu"), n.get("token"), n.get("var"),
                        tuple(n["span"]) if n.get("span") is not None else None)
                 for n in obj["nodes"]]
        edges = [S3Edge(int(e["src"]), int(e["dst"]), e["label"], e["origin"]) for e in obj["edges"]]
        g = S3Graph(str(obj["doc_id"]), nodes, edges, int(obj["root"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed graph record: {exc!r}") from exc
    for n in nodes:
        if n.ntype not in NODE_TYPES:
            raise ValidationError(f"node {n.id}: unknown ntype {n.ntype!r}")
    ids = set(g.node_ids())
    for e in edges:
        if e.src not in ids or e.dst not in ids:
            raise ValidationError(f"edge {e.src}->{e.dst} refers to a missing node")
    return g


def write_graphs(path, graphs) -> None:
    Path(path).write_text("".join(json.dumps(graph_to_obj(g)) + "\n" for g in graphs))


def read_graphs(path) -> list[S3Graph]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(graph_from_obj(json.loads(line)))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return out
