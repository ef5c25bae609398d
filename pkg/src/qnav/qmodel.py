"""Feed-forward regressor that predicts Q-features from a trajectory summary.

The input for a (trajectory, candidate) pair is a fixed-length vector::

    [R(tail) | mean R over trajectory | sin, cos of heading tail->cand | R(cand)]

All arithmetic is float64. The same MLP machinery, with a softmax
cross-entropy loss, backs the 5-bin distance-to-go classifier in
:mod:`qnav.agent`.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .jsonio import atomic_write_text, dumps, read_json
from .navgraph import NavGraph, heading_encoding, unvisited_neighbors

ACTIVATIONS = ("tanh", "relu", "identity")


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class RegressorParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    act: str = "tanh"

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "RegressorParams":
        return RegressorParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.act)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "act": self.act,
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressorParams":
        ws = [np.asarray(layer["w"], dtype=np.float64) for layer in data["layers"]]
        bs = [np.asarray(layer["b"], dtype=np.float64) for layer in data["layers"]]
        params = cls(ws, bs, data.get("act", "tanh"))
        if params.dims != list(data["dims"]):
            raise ShapeMismatch(f"layer shapes {params.dims} disagree with dims {data['dims']}")
        return params


def init_params(dims: Sequence[int], act: str = "tanh", scale: float = 1.0, seed: int = 0) -> RegressorParams:
    """Weights uniform in ``+-scale/sqrt(fan_in)``, zero biases."""
    if act not in ACTIVATIONS:
        raise ValueError(f"unknown activation {act!r}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = scale / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return RegressorParams(ws, bs, act)


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


def _activations(params: RegressorParams, X: np.ndarray):
    zs, acts = [], [X]
    h = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == last else _act(params.act, z)
        zs.append(z)
        acts.append(h)
    return zs, acts


def forward(params: RegressorParams, x: np.ndarray) -> np.ndarray:
    """Network output for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.dims[0]:
        raise ShapeMismatch(f"input has width {x.shape[-1]}, network expects {params.dims[0]}")
    single = x.ndim == 1
    out = _activations(params, x[None, :] if single else x)[1][-1]
    return out[0] if single else out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grads(params: RegressorParams, X: np.ndarray, Y: np.ndarray, loss: str = "mse"):
    """Loss value and its gradients ``(dW list, db list)``.

    ``mse`` averages over every output element; ``xent`` is the mean softmax
    cross-entropy against one-hot (or soft) targets ``Y``.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    zs, acts = _activations(params, X)
    out = acts[-1]
    if out.shape != Y.shape:
        raise ShapeMismatch(f"targets {Y.shape} vs outputs {out.shape}")
    if loss == "mse":
        diff = out - Y
        value = float(np.mean(diff * diff))
        delta = 2.0 * diff / diff.size
    elif loss == "xent":
        p = softmax(out)
        value = float(-np.mean(np.sum(Y * np.log(np.clip(p, 1e-300, None)), axis=1)))
        delta = (p - Y) / X.shape[0]
    else:
        raise ValueError(f"unknown loss {loss!r}")
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i].T) * _act_grad(params.act, zs[i - 1], acts[i])
    return value, gw, gb


def grad_check(params: RegressorParams, x, y, eps: float = 1e-5, loss: str = "mse") -> float:
    """Max relative error between backprop and central-difference gradients.

    Per parameter: ``|ga - gn| / max(|ga|, |gn|, 1e-8)``.
    """
    _, gw, gb = loss_and_grads(params, x, y, loss)
    probe = params.copy()
    worst = 0.0
    for tensors, grads in ((probe.weights, gw), (probe.biases, gb)):
        for arr, g in zip(tensors, grads):
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                up = loss_and_grads(probe, x, y, loss)[0]
                arr[idx] = orig - eps
                down = loss_and_grads(probe, x, y, loss)[0]
                arr[idx] = orig
                num = (up - down) / (2 * eps)
                ana = g[idx]
                rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
                worst = max(worst, rel)
    return worst


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    init_scale: float = 1.0
    hidden: tuple[int, ...] = (128,)
    act: str = "tanh"
    loss: str = "mse"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr < 0 or self.batch_size <= 0 or self.epochs < 0 or self.init_scale <= 0:
            raise ValueError("lr >= 0, batch_size > 0, epochs >= 0, init_scale > 0 required")


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train: list[float] = field(default_factory=list)
    val: list[float | None] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for e, tr, va in zip(self.epochs, self.train, self.val):
            w.writerow([e, format(tr, ".17g"), "" if va is None else format(va, ".17g")])
        return buf.getvalue()


def evaluate_loss(params: RegressorParams, X, Y, loss: str = "mse") -> float:
    return loss_and_grads(params, X, Y, loss)[0]


def train(
    X: np.ndarray,
    Y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    val: tuple[np.ndarray, np.ndarray] | None = None,
    params: RegressorParams | None = None,
) -> tuple[RegressorParams, TrainHistory]:
    """Minibatch gradient descent; returns final parameters and per-epoch losses."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if params is None:
        dims = [X.shape[1], *cfg.hidden, Y.shape[1]]
        params = init_params(dims, cfg.act, cfg.init_scale, seed=cfg.seed)
    else:
        params = params.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    m = [np.zeros_like(a) for a in params.weights + params.biases]
    v = [np.zeros_like(a) for a in params.weights + params.biases]
    step = 0
    hist = TrainHistory()
    n = len(X)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            value, gw, gb = loss_and_grads(params, X[idx], Y[idx], cfg.loss)
            if not np.isfinite(value):
                raise NonFiniteLoss(f"loss became {value} at epoch {epoch}")
            step += 1
            tensors = params.weights + params.biases
            for k, (p, g) in enumerate(zip(tensors, gw + gb)):
                if cfg.optimizer == "sgd":
                    p -= cfg.lr * g
                    continue
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                mhat = m[k] / (1 - cfg.beta1**step)
                vhat = v[k] / (1 - cfg.beta2**step)
                p -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        tr = evaluate_loss(params, X, Y, cfg.loss)
        if not np.isfinite(tr):
            raise NonFiniteLoss(f"training loss became {tr} at epoch {epoch}")
        hist.epochs.append(epoch)
        hist.train.append(tr)
        hist.val.append(evaluate_loss(params, *val, cfg.loss) if val is not None else None)
    return params, hist


def encode_input(g: NavGraph, trajectory: Sequence[int], candidate: int) -> np.ndarray:
    """Fixed-length summary of ``trajectory`` plus ``candidate``; width ``3d + 2``."""
    tail = trajectory[-1]
    mean = g.features[list(trajectory)].mean(axis=0)
    s, c = heading_encoding(g, tail, candidate)
    return np.concatenate([g.features[tail], mean, [s, c], g.features[candidate]])


def encode_samples(samples, worlds: Sequence[NavGraph]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([encode_input(worlds[s.world], s.trajectory, s.candidate) for s in samples])
    Y = np.array([s.target for s in samples])
    return X, Y


def predict_qfeatures(params: RegressorParams, g: NavGraph, trajectory: Sequence[int]) -> dict[int, np.ndarray]:
    """Predicted Q-feature for every unvisited neighbour of the trajectory tail."""
    cands = unvisited_neighbors(g, trajectory)
    if not cands:
        return {}
    out = forward(params, np.array([encode_input(g, trajectory, c) for c in cands]))
    return dict(zip(cands, out))


def save_params(params: RegressorParams, path) -> None:
    atomic_write_text(path, dumps(params.to_dict()) + "\n")


def load_params(path) -> RegressorParams:
    return RegressorParams.from_dict(read_json(path))
