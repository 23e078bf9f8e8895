"""Dense-array helpers, seeded randomness, parameter storage and gradient checking.

Arrays are plain ``numpy.float64`` ndarrays.  Random streams come from the
counter-based Philox generator; independent sub-streams are derived from a
seed plus integer keys through ``numpy.random.SeedSequence``, so the same
(seed, keys) pair yields the same draws on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import NonDeterministicError, NumericDomainError, ValidationError

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# randomness

def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Philox stream for ``seed``; extra ``keys`` select an independent sub-stream."""
    if keys:
        seq = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    else:
        seq = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seq))


def gaussian_draw(rng: np.random.Generator, mean: float, std: float) -> float:
    if std < 0:
        raise ValueError("std must be non-negative")
    z = rng.standard_normal()
    if std == 0:
        return float(mean)
    return float(mean + std * z)


# ---------------------------------------------------------------------------
# activations

def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_stable(x, axis: int = -1, mask=None):
    """Softmax along ``axis`` with max subtraction.

    ``mask`` (same shape, truthy = allowed) restricts the support; every slice
    must keep at least one allowed entry.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericDomainError("softmax input contains non-finite values")
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x, axis: int = -1):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax_backward(p, dp, axis: int = -1):
    """Gradient w.r.t. the logits given ``p = softmax(logits)`` and ``dL/dp``."""
    return p * (dp - np.sum(p * dp, axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ParamStore:
    """Ordered name -> array mapping holding trainable parameters."""

    seed: int = 0
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        self._rng = make_rng(self.seed)

    def add(self, name: str, shape, fan_in: int | None = None, init: str = "uniform") -> np.ndarray:
        if name in self.entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        shape = tuple(int(s) for s in shape)
        if init == "zeros":
            value = np.zeros(shape)
        elif init == "uniform":
            fan = fan_in if fan_in is not None else shape[0]
            bound = 1.0 / math.sqrt(fan)
            value = self._rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.entries[name] = value
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __setitem__(self, name: str, value) -> None:
        value = np.ascontiguousarray(value, dtype=np.float64)
        if name in self.entries and self.entries[name].shape != value.shape:
            raise ValueError(f"shape mismatch for {name}: {self.entries[name].shape} vs {value.shape}")
        self.entries[name] = value

    def __contains__(self, name) -> bool:
        return name in self.entries

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return list(self.entries)

    def items(self):
        return self.entries.items()

    def size(self) -> int:
        return sum(v.size for v in self.entries.values())

    def copy(self) -> "ParamStore":
        out = ParamStore(seed=self.seed)
        out.entries = {k: v.copy() for k, v in self.entries.items()}
        return out

    def zeros_like(self, prefix: str | None = None) -> "ParamStore":
        out = ParamStore(seed=self.seed)
        out.entries = {k: np.zeros_like(v) for k, v in self.entries.items()
                       if prefix is None or k.startswith(prefix)}
        return out

    def subset(self, prefix: str) -> "ParamStore":
        """View (shared arrays) of the entries whose name starts with ``prefix``."""
        out = ParamStore(seed=self.seed)
        out.entries = {k: v for k, v in self.entries.items() if k.startswith(prefix)}
        return out

    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(v * v)) for v in self.entries.values()))

    def equals(self, other: "ParamStore") -> bool:
        if list(self.entries) != list(other.entries):
            return False
        return all(np.array_equal(self.entries[k], other.entries[k]) for k in self.entries)

    # -- text checkpoints ---------------------------------------------------

    def dumps(self) -> str:
        lines = [f"s3ckpt version={CHECKPOINT_VERSION} seed={self.seed}"]
        for name, value in self.entries.items():
            shape = ",".join(str(s) for s in value.shape) or "scalar"
            lines.append(f"{name} {shape}")
            lines.append(" ".join(f"{x:.17g}" for x in value.ravel()))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "ParamStore":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("s3ckpt "):
            raise ValidationError(f"{source}:1: missing checkpoint header")
        header = dict(kv.split("=", 1) for kv in lines[0].split()[1:])
        if int(header.get("version", -1)) != CHECKPOINT_VERSION:
            raise ValidationError(f"{source}:1: unsupported checkpoint version {header.get('version')}")
        store = cls(seed=int(header["seed"]))
        body = lines[1:]
        if len(body) % 2:
            raise ValidationError(f"{source}: truncated checkpoint")
        for i in range(0, len(body), 2):
            lineno = i + 2
            parts = body[i].split()
            if len(parts) != 2:
                raise ValidationError(f"{source}:{lineno}: expected '<name> <shape>'")
            name, shape_s = parts
            shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split(","))
            values = np.array([float(x) for x in body[i + 1].split()], dtype=np.float64)
            if values.size != int(np.prod(shape, dtype=np.int64)):
                raise ValidationError(f"{source}:{lineno + 1}: {name} expects {shape}, got {values.size} values")
            store.entries[name] = values.reshape(shape)
        return store

    @classmethod
    def load(cls, path) -> "ParamStore":
        return cls.loads(Path(path).read_text(), source=str(path))


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradCheckReport:
    per_param: dict
    epsilon: float

    @property
    def max_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def worst(self) -> str | None:
        if not self.per_param:
            return None
        return max(self.per_param, key=self.per_param.get)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_error < tol


def finite_diff_check(
    f: Callable[[ParamStore], float],
    params: ParamStore,
    analytic_grads: ParamStore,
    epsilon: float = 1e-3,
    names=None,
) -> GradCheckReport:
    """Compare analytic gradients against central differences, entry by entry.

    Relative error per entry is ``|a - n| / max(|a|, |n|, 1e-8)``; the report
    keeps the maximum per parameter.  ``params`` is perturbed in place and
    restored before returning.
    """
    if not 1e-5 <= epsilon <= 1e-2:
        raise ValueError("epsilon must lie in [1e-5, 1e-2]")
    base = f(params)
    if f(params) != base:
        raise NonDeterministicError("f returned different values for identical parameters")
    report = {}
    for name in (names if names is not None else params.names()):
        value = params[name]
        grad = analytic_grads[name]
        worst = 0.0
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            up = f(params)
            flat[idx] = orig - epsilon
            down = f(params)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = gflat[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    return GradCheckReport(per_param=report, epsilon=epsilon)
