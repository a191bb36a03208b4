"""Minimal dense-layer toolkit with hand-written backward passes.

Everything runs in float64. Each layer caches what its backward pass
needs, so a model is a fixed composition of forward calls followed by
backward calls in reverse order. The correctness contract is the
finite-difference check in :func:`grad_check`, not any particular
autograd mechanism.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass
class Param:
    """A trainable matrix and its accumulated gradient."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.grad.shape != self.value.shape:
            raise ShapeError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    def zero_grad(self):
        self.grad.fill(0.0)


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, upstream, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(np.asarray(x, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(y: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Backward through sigmoid given its output y."""
    return upstream * y * (1.0 - y)


class Linear:
    """y = x @ W + b with analytic gradients for x, W, b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, name: str = ""):
        self.w = Param(uniform_init(rng, in_dim, (in_dim, out_dim)), name=f"{name}.w")
        self.b = Param(np.zeros((1, out_dim)), name=f"{name}.b") if bias else None
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.w.value.shape[0]:
            raise ShapeError(f"linear expects (*, {self.w.value.shape[0]}), got {x.shape}")
        self._x = x
        y = x @ self.w.value
        if self.b is not None:
            y = y + self.b.value
        return y

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward before forward")
        self.w.grad += self._x.T @ upstream
        if self.b is not None:
            self.b.grad += upstream.sum(axis=0, keepdims=True)
        return upstream @ self.w.value.T

    def params(self) -> list[Param]:
        return [self.w] if self.b is None else [self.w, self.b]


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    l2: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


def sgd_step(params: list[Param], cfg: SgdConfig):
    """value <- value - lr * (grad + l2 * value), then zero the grads."""
    for p in params:
        p.value -= cfg.learning_rate * (p.grad + cfg.l2 * p.value)
        p.zero_grad()


def grad_check(f, params: list[Param], eps: float = 1e-5,
               max_coords: int = 20, rng: np.random.Generator | None = None) -> float:
    """Compare analytic gradients against central differences.

    ``f()`` must run forward + backward, returning the scalar loss and
    leaving gradients accumulated in ``params`` (which are zeroed here
    beforehand). Returns the max over sampled coordinates of
    |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    f()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        n = p.value.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        flat = p.value.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            for q in params:
                q.zero_grad()
            hi = f()
            flat[c] = orig - eps
            for q in params:
                q.zero_grad()
            lo = f()
            flat[c] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = g.reshape(-1)[c]
            err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst


def save_checkpoint(path, named_params: list[tuple[str, np.ndarray]], meta: dict | None = None):
    """Write named float64 tensors as JSON with base64 little-endian payloads.

    Round trip through :func:`load_checkpoint` is bit-exact.
    """
    entries = []
    for name, arr in named_params:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "<f8",
            "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
        })
    doc = {"format": "tutorlab-checkpoint-v1", "meta": meta or {}, "params": entries}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "tutorlab-checkpoint-v1":
        raise ValueError(f"not a tutorlab checkpoint: {path}")
    out = {}
    for entry in doc["params"]:
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).astype(np.float64)
        out[entry["name"]] = arr
    return out, doc.get("meta", {})
