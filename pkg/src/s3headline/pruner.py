"""Hierarchical REINFORCE pruning of S3 graphs.

A three-layer tanh network maps a node state ``u_i`` to the mean of a
Gaussian; a sample ``z`` is squashed by a sigmoid into a pruning probability
``a_i``.  A node of level A/B/C is dropped when ``a_i`` exceeds that level's
threshold.  Every node is scored in each round; ``rounds`` rounds are run.

Guards, applied after thresholding and aware of cascade removal:

* the root is never dropped;
* if no EDU node would survive, the EDU node with the smallest action is
  kept together with its ancestor span nodes;
* if no real-word node would survive, the word node with the smallest action
  among those attached to a surviving EDU is kept (fusion needs one); when no
  surviving EDU has words left, the best word overall is kept along with its
  EDU and that EDU's ancestors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardViolation
from .metrics import rouge_l, rouge_n
from .numerics import ParamStore, sigmoid
from .s3graph import A_SPAN, B_EDU, C_DUMMY, C_WORD, RST, S3Graph, reachable

KEEP, DROP = "keep", "drop"
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Thresholds:
    p_A: float = 0.85
    p_B: float = 0.60
    p_C: float = 0.40

    def __post_init__(self):
        if not 0 < self.p_C <= self.p_B <= self.p_A < 1:
            raise ValueError(f"thresholds must satisfy 0 < p_C <= p_B <= p_A < 1, got {self}")

    def for_type(self, ntype: str) -> float:
        if ntype == A_SPAN:
            return self.p_A
        if ntype == B_EDU:
            return self.p_B
        return self.p_C


# ---------------------------------------------------------------------------
# policy

@dataclass
class PrunePolicy:
    params: ParamStore
    action_std: float = 0.1
    prefix: str = "policy"

    @classmethod
    def create(cls, d_model: int, hidden: int = 300, action_std: float = 0.1, seed: int = 0,
               params: ParamStore | None = None, init_mean: float = 0.0, prefix: str = "policy"):
        """Adds the policy weights to ``params`` (or a fresh store).

        The output layer starts at zero weight with bias ``init_mean``, so the
        untrained policy samples ``z ~ N(init_mean, action_std^2)`` for every state.
        """
        params = params if params is not None else ParamStore(seed=seed)
        params.add(f"{prefix}.l1.W", (d_model, hidden), fan_in=d_model)
        params.add(f"{prefix}.l1.b", (hidden,), init="zeros")
        params.add(f"{prefix}.l2.W", (hidden, hidden), fan_in=hidden)
        params.add(f"{prefix}.l2.b", (hidden,), init="zeros")
        params.add(f"{prefix}.l3.W", (hidden, 1), init="zeros")
        params.add(f"{prefix}.l3.b", (1,), init="zeros")
        params[f"{prefix}.l3.b"] = np.array([float(init_mean)])
        return cls(params, action_std, prefix)

    def _p(self, name):
        return self.params[f"{self.prefix}.{name}"]

    def mean(self, states):
        """Gaussian means for a [n, d] batch of states, plus a backward cache."""
        s = np.atleast_2d(states)
        h1 = np.tanh(s @ self._p("l1.W") + self._p("l1.b"))
        h2 = np.tanh(h1 @ self._p("l2.W") + self._p("l2.b"))
        mu = (h2 @ self._p("l3.W") + self._p("l3.b"))[:, 0]
        return mu, (s, h1, h2)

    def log_density(self, states, z):
        """Per-row Gaussian log-density of ``z`` under the policy (std must be > 0)."""
        mu, _ = self.mean(states)
        sd = self.action_std
        return -0.5 * ((np.asarray(z) - mu) / sd) ** 2 - math.log(sd) - _LOG_SQRT_2PI

    def grad_log_density(self, states, z, weights=None) -> ParamStore:
        """``sum_i w_i * d log N(z_i; mu(s_i), std^2) / d theta``."""
        mu, (s, h1, h2) = self.mean(states)
        w = np.ones_like(mu) if weights is None else np.asarray(weights, dtype=np.float64)
        dmu = w * (np.asarray(z) - mu) / self.action_std ** 2
        grads = self.params.zeros_like(prefix=f"{self.prefix}.")
        p = self.prefix
        grads[f"{p}.l3.W"] += h2.T @ dmu[:, None]
        grads[f"{p}.l3.b"] += np.array([dmu.sum()])
        dh2 = dmu[:, None] @ self._p("l3.W").T * (1 - h2 * h2)
        grads[f"{p}.l2.W"] += h1.T @ dh2
        grads[f"{p}.l2.b"] += dh2.sum(axis=0)
        dh1 = dh2 @ self._p("l2.W").T * (1 - h1 * h1)
        grads[f"{p}.l1.W"] += s.T @ dh1
        grads[f"{p}.l1.b"] += dh1.sum(axis=0)
        return grads

    def act(self, states, rng=None):
        """Sample ``(a, z, logprob)`` for a batch; ``rng=None`` or std 0 acts on the mean."""
        mu, _ = self.mean(states)
        if rng is None or self.action_std == 0:
            z = mu.copy()
            if rng is not None:
                rng.standard_normal(len(mu))  # keep stream position independent of std
            logp = np.zeros_like(mu)
        else:
            z = mu + self.action_std * rng.standard_normal(len(mu))
            logp = self.log_density(states, z)
        return sigmoid(z), z, logp


def policy_action(u_i, policy: PrunePolicy, rng=None):
    """Single-node action: ``(a_i, logprob)``.

    With ``action_std == 0`` the density is degenerate and the returned log
    probability is 0.
    """
    a, _, logp = policy.act(np.asarray(u_i)[None, :], rng)
    return float(a[0]), float(logp[0])


# ---------------------------------------------------------------------------
# thresholds, guards, pruning

def _rst_parents(g: S3Graph) -> dict[int, int]:
    return {e.dst: e.src for e in g.edges if e.origin == RST}


def _survivors(g: S3Graph, kept: set[int]) -> set[int]:
    if g.root not in kept:
        return set()
    sub = _restrict(g, kept)
    return reachable(sub)


def _restrict(g: S3Graph, kept: set[int]) -> S3Graph:
    nodes = [n for n in g.nodes if n.id in kept]
    edges = [e for e in g.edges if e.src in kept and e.dst in kept]
    return S3Graph(g.doc_id, nodes, edges, g.root)


def apply_thresholds(actions: dict, g: S3Graph, th: Thresholds) -> dict:
    missing = [n.id for n in g.nodes if n.id not in actions]
    if missing:
        raise ValueError(f"no action for nodes {missing}")
    kept = {n.id for n in g.nodes if not actions[n.id] > th.for_type(n.ntype)}
    kept.add(g.root)
    alive = _survivors(g, kept)

    parents = _rst_parents(g)
    edus = [n for n in g.nodes if n.ntype == B_EDU]

    def keep_edu(edu):
        v = edu.id
        kept.add(v)
        while v in parents:
            v = parents[v]
            kept.add(v)

    if edus and not any(n.id in alive for n in edus):
        keep_edu(min(edus, key=lambda n: (actions[n.id], n.id)))
        alive = _survivors(g, kept)

    words = [n for n in g.nodes if n.ntype == C_WORD]
    if words and not any(n.id in alive for n in words):
        live_edus = {n.edu_id for n in edus if n.id in alive}
        pool = [n for n in words if n.edu_id in live_edus]
        if not pool:
            # earlier rounds stripped the surviving EDUs of words: revive the word's own EDU
            pool = words
        best = min(pool, key=lambda n: (actions[n.id], n.id))
        kept.add(best.id)
        if best.edu_id not in live_edus:
            keep_edu(next(n for n in edus if n.edu_id == best.edu_id))

    return {n.id: KEEP if n.id in kept else DROP for n in g.nodes}


def prune_graph(g: S3Graph, decisions: dict) -> S3Graph:
    """Remove dropped nodes, their edges, and anything no longer reachable from the root."""
    if any(n.id not in decisions for n in g.nodes):
        raise ValueError("decisions must cover every node")
    if decisions[g.root] == DROP:
        raise GuardViolation("the root node cannot be dropped")
    kept = {n.id for n in g.nodes if decisions[n.id] == KEEP}
    if len(kept) == len(g.nodes):
        return g
    alive = _survivors(g, kept)
    out = _restrict(g, alive)
    if not out.nodes or (g.of_type(B_EDU) and not out.of_type(B_EDU)):
        raise GuardViolation("pruning removed every EDU node")
    return out


# ---------------------------------------------------------------------------
# trajectories and rewards

@dataclass
class PruneStep:
    node_id: int
    state: np.ndarray
    action: float
    z: float
    logprob: float
    kept: bool


@dataclass
class PruneTrajectory:
    steps: list = field(default_factory=list)
    rounds: int = 0
    reward: float = 0.0
    reward_c: float = 0.0
    reward_r: float = 0.0
    sizes: list = field(default_factory=list)

    def states(self) -> np.ndarray:
        return np.stack([s.state for s in self.steps])

    def zs(self) -> np.ndarray:
        return np.array([s.z for s in self.steps])

    def to_obj(self) -> dict:
        return {"rounds": self.rounds, "reward": self.reward, "reward_c": self.reward_c,
                "reward_r": self.reward_r, "sizes": self.sizes,
                "steps": [{"node": s.node_id, "action": s.action, "z": s.z, "logprob": s.logprob,
                           "kept": s.kept} for s in self.steps]}

    def dumps(self) -> str:
        return json.dumps(self.to_obj())


def run_pruning(g: S3Graph, state_fn, policy: PrunePolicy, th: Thresholds, rounds: int = 3, rng=None):
    """Score and prune ``rounds`` times.

    ``state_fn(graph)`` returns the [n, d] node states for ``graph`` (rows in
    node order).  Returns the final graph and the trajectory (reward unset).
    """
    traj = PruneTrajectory(rounds=rounds, sizes=[len(g)])
    for _ in range(rounds):
        U = state_fn(g)
        a, z, logp = policy.act(U, rng)
        actions = {n.id: float(a[i]) for i, n in enumerate(g.nodes)}
        decisions = apply_thresholds(actions, g, th)
        for i, n in enumerate(g.nodes):
            traj.steps.append(PruneStep(n.id, U[i].copy(), float(a[i]), float(z[i]), float(logp[i]),
                                        decisions[n.id] == KEEP))
        g = prune_graph(g, decisions)
        traj.sizes.append(len(g))
    return g, traj


def rouge_f(cand, ref, variant: str = "L") -> float:
    if variant == "L":
        return rouge_l(cand, ref)[2]
    return rouge_n(cand, ref, int(variant))[2]


def compute_reward(g_pruned: S3Graph, g_orig: S3Graph, d, model, params, gen=None, tok=None,
                   rouge_variant: str = "L", orig_headline=None):
    """``(R, R_c, R_r)``: length-normalised log-likelihood plus ROUGE gain over the unpruned graph."""
    gen = gen if gen is not None else model.generation_config(beam=1)
    tok = tok if tok is not None else model.encode(d, params)
    r_c = model.log_likelihood(d, g_pruned, params, tok=tok)
    pruned_head = model.generate(d, g_pruned, params, gen, tok=tok)
    if orig_headline is None:
        orig_headline = pruned_head if g_pruned is g_orig else model.generate(d, g_orig, params, gen, tok=tok)
    r_r = rouge_f(pruned_head, d.headline_tokens, rouge_variant) - rouge_f(orig_headline, d.headline_tokens,
                                                                         rouge_variant)
    return r_c + r_r, r_c, r_r


@dataclass
class RewardBaseline:
    decay: float = 0.99
    value: float | None = None

    def update(self, reward: float) -> None:
        if self.value is None:
            self.value = float(reward)
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * float(reward)


def reinforce_update(traj: PruneTrajectory, baseline: RewardBaseline, policy: PrunePolicy) -> ParamStore:
    """Ascent direction ``(R - b) * sum_i grad log pi(z_i | s_i)``; then moves the baseline toward R."""
    b = baseline.value if baseline.value is not None else traj.reward
    advantage = traj.reward - b
    baseline.update(traj.reward)
    if advantage == 0.0 or not traj.steps or policy.action_std == 0:
        return policy.params.zeros_like(prefix=f"{policy.prefix}.")
    return policy.grad_log_density(traj.states(), traj.zs(), np.full(len(traj.steps), advantage))
