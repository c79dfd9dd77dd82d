"""Sine-sigmoid multilayer perceptron used to score next-hop candidates.

Shape: 3 inputs, four hidden layers, one output. Each weight matrix carries a
bias column, so layer j maps (k_in + 1) values to k_out pre-activations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_INPUTS = 3
N_HIDDEN_LAYERS = 4
G_MIN = 1.0 / (1.0 + math.e)
G_MAX = math.e / (1.0 + math.e)


def activation(x):
    """g(x) = 1 / (1 + exp(-sin x)); bounded by 1/(1+e) and e/(1+e)."""
    return 1.0 / (1.0 + np.exp(-np.sin(x)))


def activation_grad(x):
    g = activation(x)
    return g * (1.0 - g) * np.cos(x)


@dataclass
class TrainingSet:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.features.shape[0] < 1:
            raise ValueError("training set needs at least one sample")
        if self.features.shape != (self.labels.size, N_INPUTS):
            raise ValueError("features must be m x 3 and match the labels")

    @property
    def m(self) -> int:
        return self.labels.size


@dataclass
class Perceptron:
    weights: list[np.ndarray]
    hidden_width: int = 8

    def __post_init__(self):
        if len(self.weights) != N_HIDDEN_LAYERS + 1:
            raise ValueError("expected 5 weight matrices (6 layers)")
        k_in = N_INPUTS
        for j, w in enumerate(self.weights):
            k_out = 1 if j == N_HIDDEN_LAYERS else self.hidden_width
            if w.shape != (k_out, k_in + 1):
                raise ValueError(f"layer {j + 1} weight shape {w.shape}, expected {(k_out, k_in + 1)}")
            k_in = k_out

    @classmethod
    def init(cls, rng: np.random.Generator, hidden_width: int = 8) -> "Perceptron":
        sizes = [N_INPUTS] + [hidden_width] * N_HIDDEN_LAYERS + [1]
        ws = [rng.uniform(-0.5, 0.5, size=(b, a + 1)) for a, b in zip(sizes[:-1], sizes[1:])]
        return cls(ws, hidden_width)

    @classmethod
    def zeros(cls, hidden_width: int = 8) -> "Perceptron":
        sizes = [N_INPUTS] + [hidden_width] * N_HIDDEN_LAYERS + [1]
        return cls([np.zeros((b, a + 1)) for a, b in zip(sizes[:-1], sizes[1:])], hidden_width)

    def copy(self) -> "Perceptron":
        return Perceptron([w.copy() for w in self.weights], self.hidden_width)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights)


def _with_bias(a: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((a.shape[0], 1)), a])


def forward_batch(net: Perceptron, x: np.ndarray):
    """Scores for an m x 3 batch plus (pre-activations, activations) per layer."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    acts = [a]
    zs = []
    for w in net.weights:
        z = _with_bias(a) @ w.T
        a = activation(z)
        zs.append(z)
        acts.append(a)
    return a[:, 0], (zs, acts)


def forward(net: Perceptron, features: Sequence[float]):
    score, cache = forward_batch(net, np.asarray(features, dtype=float).reshape(1, -1))
    return float(score[0]), cache


def cost(net: Perceptron, data: TrainingSet) -> float:
    """J = -(1/m) sum[y sin(h) + (1 - y) sin(1 - h)]."""
    h, _ = forward_batch(net, data.features)
    y = data.labels
    return float(-np.mean(y * np.sin(h) + (1.0 - y) * np.sin(1.0 - h)))


def gradients(net: Perceptron, data: TrainingSet) -> list[np.ndarray]:
    h, (zs, acts) = forward_batch(net, data.features)
    y = data.labels
    m = data.m
    d_h = -(y * np.cos(h) - (1.0 - y) * np.cos(1.0 - h)) / m
    delta = d_h[:, None]
    grads = [None] * len(net.weights)
    for j in range(len(net.weights) - 1, -1, -1):
        dz = delta * activation_grad(zs[j])
        grads[j] = dz.T @ _with_bias(acts[j])
        delta = dz @ net.weights[j][:, 1:]
    return grads


def accuracy(net: Perceptron, data: TrainingSet) -> float:
    h, _ = forward_batch(net, data.features)
    return float(np.mean((h >= 0.5) == (data.labels >= 0.5)))


@dataclass
class TrainResult:
    net: Perceptron
    loss_trace: list[float] = field(default_factory=list)


def train(net: Perceptron, data: TrainingSet, lr: float = 0.5, batch_size: int = 180,
          epochs: int = 12, rng: np.random.Generator | None = None,
          betas=(0.9, 0.999), eps: float = 1e-8) -> TrainResult:
    """Mini-batch Adam. Returns a trained copy; the input net is not modified."""
    rng = rng or np.random.default_rng(0)
    net = net.copy()
    m1 = [np.zeros_like(w) for w in net.weights]
    m2 = [np.zeros_like(w) for w in net.weights]
    b1, b2 = betas
    step = 0
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(data.m)
        for start in range(0, data.m, batch_size):
            idx = order[start:start + batch_size]
            grads = gradients(net, TrainingSet(data.features[idx], data.labels[idx]))
            step += 1
            for k, g in enumerate(grads):
                m1[k] = b1 * m1[k] + (1 - b1) * g
                m2[k] = b2 * m2[k] + (1 - b2) * g * g
                mh = m1[k] / (1 - b1 ** step)
                vh = m2[k] / (1 - b2 ** step)
                net.weights[k] -= lr * mh / (np.sqrt(vh) + eps)
        loss = cost(net, data)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch + 1}")
        trace.append(loss)
    return TrainResult(net, trace)


def score_candidates(net: Perceptron, candidates: Sequence[Sequence[float]]) -> list[int]:
    """Candidate indices ranked by descending score; equal scores keep input order."""
    if len(candidates) == 0:
        raise ValueError("no candidates to score")
    scores, _ = forward_batch(net, np.asarray(candidates, dtype=float))
    return [int(i) for i in np.argsort(-scores, kind="stable")]


def dumps(net: Perceptron) -> str:
    out = [f"perceptron hidden_width={net.hidden_width} layers={len(net.weights)}"]
    for j, w in enumerate(net.weights, start=1):
        out.append(f"layer {j} {w.shape[0]} {w.shape[1]}")
        out.append(" ".join(repr(float(v)) for v in w.ravel()))
    return "\n".join(out) + "\n"


def loads(text: str) -> Perceptron:
    lines = text.strip().splitlines()
    width = int(lines[0].split("hidden_width=")[1].split()[0])
    ws = []
    for k in range(1, len(lines), 2):
        _, _, rows, cols = lines[k].split()
        vals = np.array([float(v) for v in lines[k + 1].split()])
        ws.append(vals.reshape(int(rows), int(cols)))
    return Perceptron(ws, width)
