"""Warm-start training: cross-entropy first, then joint pruning with REINFORCE.

Phase ``warm`` trains the headline model on full graphs; the policy is left
untouched.  Once dev cross-entropy plateaus (or ``max_warm_epochs`` is hit)
the run switches to phase ``joint``: every document is pruned with sampled
actions, the policy receives a REINFORCE update and the model is trained on
the pruned graph.  The switch happens exactly once per run.
"""

from __future__ import annotations

import configparser
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig
from .errors import ConfigError, TrainingDiverged, ValidationError
from .metrics import MetricReport, average_reports, score_pair
from .model import HeadlineModel
from .numerics import ParamStore, make_rng
from .pruner import PrunePolicy, RewardBaseline, Thresholds, compute_reward, reinforce_update, run_pruning
from .rst import validate_against
from .s3graph import S3Graph, build_s3
from .vocab import build_concept_vocab, build_label_vocab, build_token_vocab

log = logging.getLogger(__name__)

WARM, JOINT = "warm", "joint"
_SECTION = "run"

# rng stream keys
_SHUFFLE, _DROPOUT, _ACTIONS = 1, 2, 3


@dataclass
class TrainConfig:
    seed: int = 0
    # model
    d_model: int = 32
    K: int = 4
    d_ff: int = 64
    gat_layers: int = 1
    dropout: float = 0.1
    max_seq_len: int = 512
    dummy_slots: int = 128
    max_len: int = 16
    use_graph: bool = True
    # pruning
    prune: bool = True
    p_A: float = 0.85
    p_B: float = 0.60
    p_C: float = 0.40
    rounds: int = 3
    action_std: float = 0.1
    policy_hidden: int = 300
    policy_init_mean: float = 0.0
    baseline_decay: float = 0.99
    rouge_variant: str = "L"
    # optimisation
    lr_model: float = 1e-3
    lr_gat: float = 5e-4
    lr_agent: float = 1e-3
    batch_size: int = 8
    clip_norm: float = 1.0
    patience: int = 3
    plateau_delta: float = 1e-4
    max_epochs: int = 50
    max_warm_epochs: int = 30
    # evaluation
    beam: int = 2
    checkpoint: str = "best"

    def __post_init__(self):
        for name in ("lr_model", "lr_gat", "lr_agent"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.batch_size < 1 or self.patience < 1 or self.rounds < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size, patience, rounds and max_epochs must be positive")
        if self.max_warm_epochs < 0:
            raise ConfigError("max_warm_epochs must be >= 0")
        if self.action_std < 0:
            raise ConfigError("action_std must be >= 0")
        if self.checkpoint not in ("best", "last"):
            raise ConfigError("checkpoint must be 'best' or 'last'")
        if self.rouge_variant not in ("1", "2", "L"):
            raise ConfigError("rouge_variant must be 1, 2 or L")
        try:
            self.thresholds()
            self.encoder_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def thresholds(self) -> Thresholds:
        return Thresholds(self.p_A, self.p_B, self.p_C)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(d_model=self.d_model, K=self.K, dropout=self.dropout, gat_layers=self.gat_layers,
                             d_ff=self.d_ff, max_seq_len=self.max_seq_len, dummy_slots=self.dummy_slots)

    # -- key = value text ---------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", **overrides) -> "TrainConfig":
        cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(f"[{_SECTION}]\n" + text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        raw = dict(cp[_SECTION])
        raw.update({k: str(v) for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw, source)

    @classmethod
    def from_mapping(cls, raw: dict, source: str = "<config>") -> "TrainConfig":
        defaults = cls()
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
        kwargs = {}
        for key, text in raw.items():
            kind = type(getattr(defaults, key))
            text = str(text).strip()
            try:
                if kind is bool:
                    if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(text)
                    kwargs[key] = text.lower() in ("true", "1", "yes")
                else:
                    kwargs[key] = kind(text)
            except ValueError:
                raise ConfigError(f"{source}: {key} = {text!r} is not a valid {kind.__name__}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"{path}: no such config file")
        return cls.from_text(path.read_text(), str(path), **overrides)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def paper_lr(cfg: TrainConfig) -> TrainConfig:
    """The published learning rates (which assume a pretrained backbone)."""
    return TrainConfig(**{**asdict(cfg), "lr_model": 5e-6, "lr_gat": 5e-4, "lr_agent": 5e-6})


# ---------------------------------------------------------------------------
# data

@dataclass
class Sample:
    doc: object
    tree: object
    amrs: list
    graph: S3Graph


def make_samples(data) -> list[Sample]:
    """Validate and build S3 graphs for ``(Document, RstTree, [AmrGraph])`` triples."""
    out = []
    for doc, tree, amrs in data:
        validate_against(tree, doc)
        out.append(Sample(doc, tree, list(amrs), build_s3(doc, tree, amrs)))
    return out


def split_dev(samples: list, dev_fraction: float = 0.2, seed: int = 0):
    """Deterministic shuffled train/dev split; both parts nonempty."""
    if len(samples) < 2:
        raise ValidationError("need at least two documents to form a dev split")
    order = make_rng(seed, 99).permutation(len(samples))
    n_dev = min(len(samples) - 1, max(1, int(round(dev_fraction * len(samples)))))
    dev = [samples[i] for i in sorted(order[:n_dev])]
    train = [samples[i] for i in sorted(order[n_dev:])]
    return train, dev


def build_model(samples: list[Sample], cfg: TrainConfig) -> HeadlineModel:
    return HeadlineModel(cfg.encoder_config(), build_token_vocab([s.doc for s in samples]),
                         build_label_vocab([s.graph for s in samples]),
                         build_concept_vocab([s.graph for s in samples]), cfg.use_graph, cfg.max_len)


# ---------------------------------------------------------------------------
# optimiser

class Adam:
    """Adam with per-parameter step counts.

    A parameter whose gradient is exactly zero is skipped entirely, so
    parameters outside the current loss are never touched.
    """

    def __init__(self, lr_fn, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr_fn = lr_fn
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, params: ParamStore, grads: ParamStore) -> list[str]:
        touched = []
        for name, g in grads.items():
            if not np.any(g):
                continue
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            t = self.t[name] = self.t.get(name, 0) + 1
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** t)
            vhat = v / (1 - self.beta2 ** t)
            params[name] = params[name] - self.lr_fn(name) * mhat / (np.sqrt(vhat) + self.eps)
            touched.append(name)
        return touched


def clip_(grads: ParamStore, max_norm: float) -> float:
    norm = grads.global_norm()
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name, g in grads.items():
            g *= scale
    return norm


def _lr_for(cfg: TrainConfig):
    def lr(name: str) -> float:
        if name.startswith("policy."):
            return cfg.lr_agent
        if name.startswith("gat."):
            return cfg.lr_gat
        return cfg.lr_model
    return lr


# ---------------------------------------------------------------------------
# state

@dataclass
class TrainState:
    cfg: TrainConfig
    model: HeadlineModel
    params: ParamStore
    policy: PrunePolicy
    epoch: int = 0
    phase: str = WARM
    best_dev_loss: float = math.inf
    baseline: RewardBaseline = field(default_factory=RewardBaseline)
    best_params: ParamStore | None = None
    transitions: list = field(default_factory=list)
    history: list = field(default_factory=list)

    def eval_params(self, which: str | None = None) -> ParamStore:
        which = which or self.cfg.checkpoint
        if which == "best" and self.best_params is not None:
            return self.best_params
        return self.params

    def meta(self) -> dict:
        return {"model": self.model.to_obj(), "config": self.cfg.to_text(), "epoch": self.epoch,
                "phase": self.phase, "best_dev_loss": self.best_dev_loss, "baseline": self.baseline.value,
                "transitions": self.transitions}

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.json").write_text(json.dumps(self.meta(), sort_keys=True, indent=1) + "\n")
        self.params.save(out / "last.ckpt")
        (self.best_params or self.params).save(out / "best.ckpt")

    @classmethod
    def load(cls, out_dir, which: str = "best") -> "TrainState":
        out = Path(out_dir)
        meta_path = out / "model.json"
        if not meta_path.exists():
            raise ValidationError(f"{meta_path}: missing model description")
        meta = json.loads(meta_path.read_text())
        cfg = TrainConfig.from_text(meta["config"], str(meta_path))
        ckpt = out / f"{which}.ckpt"
        if not ckpt.exists():
            raise ValidationError(f"{ckpt}: missing checkpoint")
        params = ParamStore.load(ckpt)
        policy = PrunePolicy(params, cfg.action_std)
        st = cls(cfg, HeadlineModel.from_obj(meta["model"]), params, policy, int(meta["epoch"]), meta["phase"],
                 float(meta["best_dev_loss"]), RewardBaseline(cfg.baseline_decay, meta["baseline"]),
                 None, list(meta["transitions"]))
        return st


def init_state(train_samples: list[Sample], cfg: TrainConfig) -> TrainState:
    model = build_model(train_samples, cfg)
    params = model.init_params(cfg.seed)
    policy = PrunePolicy.create(cfg.d_model, cfg.policy_hidden, cfg.action_std, params=params,
                                init_mean=cfg.policy_init_mean)
    return TrainState(cfg, model, params, policy, baseline=RewardBaseline(cfg.baseline_decay))


# ---------------------------------------------------------------------------
# training

def prune_deterministic(state: TrainState, sample: Sample, params: ParamStore | None = None, tok=None):
    """Prune with mean actions (no sampling); the graph is unchanged when pruning is off."""
    params = params if params is not None else state.params
    if not (state.cfg.prune and state.cfg.use_graph) or state.phase != JOINT:
        return sample.graph, None
    tok = tok if tok is not None else state.model.encode(sample.doc, params)
    policy = PrunePolicy(params, 0.0)
    state_fn = lambda g: state.model.graph_states(sample.doc, g, tok, params)[0]
    return run_pruning(sample.graph, state_fn, policy, state.cfg.thresholds(), state.cfg.rounds)


def dev_loss(state: TrainState, samples: list[Sample], params: ParamStore | None = None) -> float:
    params = params if params is not None else state.params
    total = 0.0
    for s in samples:
        tok = state.model.encode(s.doc, params)
        g, _ = prune_deterministic(state, s, params, tok)
        total += state.model.loss(s.doc, g, params, tok=tok)
    return total / len(samples)


def _doc_step(state: TrainState, sample: Sample, idx: int, gen, traj_sink=None):
    """Loss, model gradients, policy ascent gradient (or None) and reward record for one document."""
    cfg, model, params = state.cfg, state.model, state.params
    drop_rng = make_rng(cfg.seed, _DROPOUT, state.epoch, idx)
    tok = model.encode(sample.doc, params)
    graph, pg, record = sample.graph, None, None
    if state.phase == JOINT and cfg.prune and cfg.use_graph:
        act_rng = make_rng(cfg.seed, _ACTIONS, state.epoch, idx)
        state_fn = lambda g: model.graph_states(sample.doc, g, tok, params)[0]
        graph, traj = run_pruning(sample.graph, state_fn, state.policy, cfg.thresholds(), cfg.rounds, act_rng)
        traj.reward, traj.reward_c, traj.reward_r = compute_reward(graph, sample.graph, sample.doc, model, params,
                                                                   gen, tok, cfg.rouge_variant)
        pg = reinforce_update(traj, state.baseline, state.policy)
        if not math.isfinite(state.baseline.value):
            raise TrainingDiverged(f"reward baseline became {state.baseline.value}")
        record = (traj.reward, traj.reward_c, traj.reward_r, len(graph) / len(sample.graph))
        if traj_sink is not None:
            traj_sink.write(json.dumps({"epoch": state.epoch, "doc": sample.doc.id, **traj.to_obj()}) + "\n")
    loss, grads = model.loss_and_grad(sample.doc, graph, params, drop_rng, tok=tok)
    return loss, grads, pg, record


def _diverged(state: TrainState, out_dir, what: str):
    if out_dir is not None:
        path = Path(out_dir) / "diverged.ckpt"
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        state.params.save(path)
        what += f"; diagnostic checkpoint written to {path}"
    raise TrainingDiverged(what)


def train_epoch(state: TrainState, samples: list[Sample], opt: Adam, out_dir=None, traj_sink=None) -> dict:
    cfg = state.cfg
    gen = state.model.generation_config(beam=1)
    order = make_rng(cfg.seed, _SHUFFLE, state.epoch).permutation(len(samples))
    losses, records = [], []
    for start in range(0, len(order), cfg.batch_size):
        batch = order[start:start + cfg.batch_size]
        model_grads = None
        policy_grads = None
        for idx in batch:
            loss, grads, pg, rec = _doc_step(state, samples[idx], int(idx), gen, traj_sink)
            if not math.isfinite(loss):
                _diverged(state, out_dir, f"non-finite loss at epoch {state.epoch}, document {samples[idx].doc.id}")
            losses.append(loss)
            model_grads = grads if model_grads is None else _accumulate(model_grads, grads)
            if pg is not None:
                records.append(rec)
                # descend on -J
                policy_grads = _scaled(pg, -1.0) if policy_grads is None else _accumulate(policy_grads, pg, -1.0)
        _finish_grads(model_grads, len(batch), cfg.clip_norm, exclude="policy.")
        opt.step(state.params, model_grads)
        if policy_grads is not None:
            _finish_grads(policy_grads, len(batch), cfg.clip_norm)
            opt.step(state.params, policy_grads)
    rec = {"epoch": state.epoch, "phase": state.phase, "train_loss": float(np.mean(losses))}
    if records:
        r = np.array(records)
        rec.update(mean_R=float(r[:, 0].mean()), mean_R_c=float(r[:, 1].mean()), mean_R_r=float(r[:, 2].mean()),
                   kept_fraction=float(r[:, 3].mean()), baseline=state.baseline.value)
    return rec


def _accumulate(acc: ParamStore, g: ParamStore, scale: float = 1.0) -> ParamStore:
    for name, v in g.items():
        acc[name] += scale * v
    return acc


def _scaled(g: ParamStore, scale: float) -> ParamStore:
    for name, v in g.items():
        v *= scale
    return g


def _finish_grads(grads: ParamStore, n: int, clip_norm: float, exclude: str | None = None) -> None:
    if exclude is not None:
        for name in [k for k in grads.names() if k.startswith(exclude)]:
            del grads.entries[name]
    _scaled(grads, 1.0 / n)
    clip_(grads, clip_norm)


def train(train_samples: list[Sample], cfg: TrainConfig, dev_samples: list[Sample] | None = None,
          out_dir=None, trajectory_path=None, state: TrainState | None = None) -> TrainState:
    """Run warm then joint training; returns the final state (best-dev params kept separately)."""
    if not train_samples:
        raise ValidationError("training set is empty")
    dev_samples = dev_samples if dev_samples else None
    if dev_samples is None:
        raise ValidationError("dev split is empty")
    state = state or init_state(train_samples, cfg)
    opt = Adam(_lr_for(cfg))
    out = Path(out_dir) if out_dir is not None else None
    metrics_f = None
    traj_f = open(trajectory_path, "w") if trajectory_path else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.txt")
        metrics_f = open(out / "metrics.jsonl", "w")
    try:
        phase_best, stale = math.inf, 0
        while state.epoch < cfg.max_epochs:
            rec = train_epoch(state, train_samples, opt, out, traj_f)
            dl = dev_loss(state, dev_samples)
            if not math.isfinite(dl):
                _diverged(state, out, f"non-finite dev loss at epoch {state.epoch}")
            rec["dev_loss"] = dl
            if dl < state.best_dev_loss:
                state.best_dev_loss = dl
                state.best_params = state.params.copy()
            if dl < phase_best - cfg.plateau_delta:
                phase_best, stale = dl, 0
            else:
                stale += 1
            state.history.append(rec)
            log.info("epoch %d %s train %.4f dev %.4f", state.epoch, state.phase, rec["train_loss"], dl)
            if metrics_f is not None:
                metrics_f.write(json.dumps(rec, sort_keys=True) + "\n")
                metrics_f.flush()
            state.epoch += 1
            plateau = stale >= cfg.patience
            if state.phase == WARM:
                if cfg.prune and cfg.use_graph and (plateau or state.epoch >= cfg.max_warm_epochs):
                    state.phase = JOINT
                    state.transitions.append(state.epoch)
                    # pruned-graph losses are not comparable with full-graph ones
                    phase_best, stale = math.inf, 0
                    state.best_dev_loss = math.inf
                elif plateau and not cfg.prune:
                    break
            elif plateau:
                break
    finally:
        if metrics_f is not None:
            metrics_f.close()
        if traj_f is not None:
            traj_f.close()
    if out is not None:
        state.save(out)
    return state


# ---------------------------------------------------------------------------
# evaluation

def predict(state: TrainState, samples: list[Sample], beam: int | None = None, params: ParamStore | None = None):
    """Generated headline tokens and the (deterministically) pruned graph for every sample."""
    params = params if params is not None else state.eval_params()
    gen = state.model.generation_config(beam=beam or state.cfg.beam)
    out = []
    for s in samples:
        tok = state.model.encode(s.doc, params)
        g, _ = prune_deterministic(state, s, params, tok)
        out.append((state.model.generate(s.doc, g, params, gen, tok=tok), g))
    return out


def evaluate(state: TrainState, samples: list[Sample], beam: int | None = None,
             params: ParamStore | None = None) -> MetricReport:
    preds = predict(state, samples, beam, params)
    return average_reports([score_pair(p, s.doc.headline_tokens) for (p, _), s in zip(preds, samples)])


def evaluate_runs(states: list[TrainState], samples: list[Sample], beam: int | None = None) -> MetricReport:
    """Average of per-run corpus averages (e.g. several seeds)."""
    return average_reports([evaluate(st, samples, beam) for st in states])
