import numpy as np
import pytest

from s3headline.amr import parse_penman
from s3headline.errors import BuildError, ValidationError
from s3headline.rst import Document, Edu, Leaf, parse_rst
from s3headline.s3graph import (A_SPAN, AMR, B_EDU, C_DUMMY, C_WORD, RST, RST_AMR, RST_AMR_LABEL, STAT_KEYS,
                                build_s3, node_stats, read_graphs, reachable, to_adjacency, write_graphs)
from s3headline.synth import SynthSpec, generate_corpus

from conftest import BOY_AMR, TWO_EDU_TREE, two_edu_doc


def test_two_edu_example_counts(example):
    *_, g = example
    types = [n.ntype for n in g.nodes]
    assert len(g) == 11
    assert types.count(A_SPAN) == 1 and types.count(B_EDU) == 2
    assert types.count(C_WORD) == 7 and types.count(C_DUMMY) == 1
    origins = [e.origin for e in g.edges]
    assert len(g.edges) == 13
    assert (origins.count(RST), origins.count(AMR), origins.count(RST_AMR)) == (2, 4, 7)
    assert all(e.label == RST_AMR_LABEL for e in g.edges if e.origin == RST_AMR)


def test_rst_edge_labels_carry_child_nuclearity(example):
    *_, g = example
    assert sorted(e.label for e in g.edges if e.origin == RST) == ["Elaborate/N", "Elaborate/S"]


def test_node_id_order(example):
    *_, g = example
    assert [n.ntype for n in g.nodes[:3]] == [A_SPAN, B_EDU, B_EDU]
    # EDU0 AMR nodes in serialization order, then EDU1's dummy, then rest words
    assert [n.label for n in g.nodes[3:8]] == ["desire-01", "boy", "believe-01", "girl", "and"]
    assert [n.token_index for n in g.nodes[8:]] == [4, 5, 6]
    assert g.root == 0


def test_example_stats(example):
    *_, g = example
    st = node_stats(g)
    assert st == pytest.approx({"text-span": 1 / 11, "EDU": 2 / 11, "AMR word": 4 / 11,
                                "rest word": 3 / 11, "AMR dummy": 1 / 11}, abs=1e-15)
    assert abs(sum(st.values()) - 1) < 1e-12


def test_example_adjacency(example):
    *_, g = example
    adj = to_adjacency(g)
    assert adj.m.shape == (11, 11)
    assert np.array_equal(adj.m, adj.m.T)
    assert np.all(np.diag(adj.m) == 1)
    assert int(adj.m.sum()) - 11 == 2 * 13
    assert adj.labels[(1, 0)] == "rev:Elaborate/N" and adj.labels[(0, 0)] == "self"


def test_single_edu_fully_aligned():
    doc = Document("s", (Edu(0, "boy wants", ("boy", "wants")),), "boy", ("boy",))
    g = build_s3(doc, Leaf(0), [parse_penman("(w / want-01~1 :ARG0 (b / boy~0))", 0)])
    assert len(g) == 1 + 2
    assert node_stats(g)["rest word"] == 0
    assert g.root == 0 and g.nodes[0].ntype == B_EDU


def test_single_node_graph():
    doc = Document("s", (Edu(0, "x", ("x",)),), "x", ("x",))
    g = build_s3(doc, Leaf(0), [parse_penman("(x / amr-empty)", 0)])
    assert [n.ntype for n in g.nodes] == [B_EDU, C_WORD]
    sub = type(g)(g.doc_id, g.nodes[:1], [], 0)
    assert to_adjacency(sub).m.tolist() == [[1]]
    assert node_stats(sub)["EDU"] == 1.0 and node_stats(sub)["rest word"] == 0


def test_empty_amr_makes_rest_words():
    doc = two_edu_doc()
    g = build_s3(doc, parse_rst(TWO_EDU_TREE), [parse_penman("(x / amr-empty)", 0), parse_penman("(a / and)", 1)])
    rest = [n for n in g.nodes if n.ntype == C_WORD and n.amr_var is None]
    assert [n.token_index for n in rest] == list(range(7))


def test_build_errors():
    doc, tree = two_edu_doc(), parse_rst(TWO_EDU_TREE)
    with pytest.raises(BuildError, match="alignment"):
        build_s3(doc, tree, [parse_penman("(a / x~9)", 0), parse_penman("(a / and)", 1)])
    with pytest.raises(BuildError, match="AMR graphs"):
        build_s3(doc, tree, [parse_penman(BOY_AMR, 0)])
    with pytest.raises(ValidationError):
        build_s3(doc, Leaf(0), [parse_penman(BOY_AMR, 0), parse_penman("(a / and)", 1)])


def _corpus(n=200, seed=1):
    return [build_s3(s.doc, s.tree, s.amrs) for s in generate_corpus(SynthSpec(n_docs=n, seed=seed))]


def test_random_graph_invariants():
    for s, g in zip(generate_corpus(SynthSpec(n_docs=200, seed=1)), _corpus()):
        n_edu = len(s.doc.edus)
        assert len(g.of_type(B_EDU)) == n_edu
        assert len(g.of_type(A_SPAN)) == n_edu - 1
        words = sorted(n.token_index for n in g.of_type(C_WORD))
        assert words == list(range(s.doc.n_tokens))
        assert reachable(g) == set(g.node_ids())
        adj = to_adjacency(g)
        assert np.array_equal(adj.m, adj.m.T) and np.all(np.diag(adj.m) == 1)


def test_build_is_deterministic():
    a, b = _corpus(20, 4), _corpus(20, 4)
    assert [(x.nodes, x.edges) for x in a] == [(y.nodes, y.edges) for y in b]


def test_adjacency_ignores_edge_order():
    g = _corpus(5, 2)[3]
    shuffled = type(g)(g.doc_id, g.nodes, list(reversed(g.edges)), g.root)
    a, b = to_adjacency(g), to_adjacency(shuffled)
    assert np.array_equal(a.m, b.m) and a.labels == b.labels


def test_pooled_stats_sum_to_one():
    st = node_stats(_corpus(30))
    assert set(st) == set(STAT_KEYS)
    assert abs(sum(st.values()) - 1) < 1e-12


def test_graph_file_round_trip(tmp_path, example):
    *_, g = example
    p = tmp_path / "g.s3"
    write_graphs(p, [g, g])
    back = read_graphs(p)
    assert back[0].nodes == g.nodes and back[1].edges == g.edges and back[0].root == g.root
    p.write_text(p.read_text() + '{"doc_id": "x"}\n')
    with pytest.raises(ValidationError, match=r"g\.s3:3"):
        read_graphs(p)
