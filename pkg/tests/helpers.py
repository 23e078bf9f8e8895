"""Random generators shared by the property and acceptance tests."""

import json

from s3headline.rst import Internal, Leaf, rst_to_obj

ROLES = (":ARG0", ":ARG1", ":ARG2", ":mod", ":time", ":location", ":consist-of", ":op1")
CONCEPTS = ("want-01", "boy", "girl", "believe-01", "and", "city", "person", "go-02", "thing")
CONSTANTS = ("-", "5", '"Paris"', "+", "2.5")
RELATIONS = ("Elaborate", "Joint", "Background", "Contrast", "Attribution", "Same-Unit")


def random_penman(rng, max_nodes=8, n_tokens=12):
    """A random valid PENMAN string: tree backbone, inverse roles, reentrancies, constants, alignments."""
    n = int(rng.integers(1, max_nodes + 1))
    children = {i: [] for i in range(n)}
    for i in range(1, n):
        children[int(rng.integers(0, i))].append(i)
    slots = list(rng.permutation(n_tokens))

    def role():
        r = ROLES[int(rng.integers(len(ROLES)))]
        if r != ":consist-of" and rng.random() < 0.2:
            r += "-of"
        return r

    def emit(i):
        concept = CONCEPTS[int(rng.integers(len(CONCEPTS)))]
        if slots and rng.random() < 0.6:
            concept += f"~{int(slots.pop())}"
        parts = [f"(v{i} / {concept}"]
        for c in children[i]:
            parts.append(f"{role()} {emit(c)}")
        if n > 1 and rng.random() < 0.3:
            other = int(rng.integers(n))
            if other != i:
                parts.append(f"{role()} v{other}")
        if rng.random() < 0.3:
            parts.append(f":{['polarity', 'quant', 'name'][int(rng.integers(3))]} "
                         f"{CONSTANTS[int(rng.integers(len(CONSTANTS)))]}")
        return " ".join(parts) + ")"

    return emit(0)


def random_tree(rng, lo, hi):
    if lo == hi:
        return Leaf(lo)
    split = int(rng.integers(lo, hi))
    nuc = [("N", "S"), ("S", "N"), ("N", "N")][int(rng.integers(3))]
    rel = RELATIONS[int(rng.integers(len(RELATIONS)))]
    return Internal(rel, nuc, random_tree(rng, lo, split), random_tree(rng, split + 1, hi))


def random_rst_text(rng, max_edus=8):
    n = int(rng.integers(1, max_edus + 1))
    return json.dumps(rst_to_obj(random_tree(rng, 0, n - 1)))
