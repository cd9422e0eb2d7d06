"""Dense ReLU classifier, SGD training and rate-based conversion to an SNN."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConversionError, DomainError, ShapeError
from .snn import Layer, LifParams, SimTrace, SpikingNetwork, run_network


@dataclass
class DenseNet:
    """Fully connected network; ``weights[l]`` has shape ``(out, in)``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden: str = "relu"

    def __post_init__(self):
        self.weights = [np.atleast_2d(np.asarray(w, dtype=float)) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape[0] != w.shape[0]:
                raise ShapeError(f"layer {i}: bias length {b.shape[0]} != {w.shape[0]}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: fan-in {w.shape[1]} != {self.weights[i - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError("parameters must be finite")
        if self.hidden not in ("relu", "linear"):
            raise DomainError(f"unknown hidden activation {self.hidden!r}")

    @classmethod
    def init(cls, sizes, seed=0, hidden="relu") -> "DenseNet":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights = [rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
                   for n_in, n_out in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(n_out) for n_out in sizes[1:]]
        return cls(weights, biases, hidden)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.hidden)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "hidden": self.hidden,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, doc) -> "DenseNet":
        net = cls(doc["weights"], doc["biases"], doc.get("hidden", "relu"))
        if list(doc["sizes"]) != net.sizes:
            raise ShapeError("declared sizes disagree with weight shapes")
        return net

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "DenseNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    l2: float = 0.0
    momentum: float = 0.0
    shuffle: bool = True

    def __post_init__(self):
        if not self.lr >= 0:
            raise DomainError("learning rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch size must be >= 1")
        if self.l2 < 0 or not 0 <= self.momentum < 1:
            raise DomainError("l2 must be >= 0 and momentum in [0, 1)")


def _activations(net: DenseNet, x):
    """Pre-activations and post-activations for every layer (batch-first)."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape[1] != net.sizes[0]:
        raise ShapeError(f"input length {a.shape[1]} != {net.sizes[0]}")
    pre, post = [], [a]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if (i == last or net.hidden == "linear") else np.maximum(z, 0.0)
        post.append(a)
    return pre, post


def forward(net: DenseNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    scores = _activations(net, x)[1][-1]
    return scores[0] if x.ndim == 1 else scores


def predict(net: DenseNet, x) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return np.argmax(np.atleast_2d(forward(net, x)), axis=1)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(net: DenseNet, x, y, loss: str = "xent", l2: float = 0.0):
    """Mean loss over the batch and its gradients, ordered like ``net.params()``.

    ``loss="xent"`` is softmax cross-entropy with integer labels;
    ``loss="mse"`` is ``0.5*mean(sum((scores - y)**2))`` with real targets.
    """
    pre, post = _activations(net, x)
    scores = post[-1]
    n = scores.shape[0]
    if loss == "xent":
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        p = _softmax(scores)
        value = -np.mean(np.log(p[np.arange(n), y] + 1e-300))
        delta = p
        delta[np.arange(n), y] -= 1.0
        delta /= n
    elif loss == "mse":
        diff = scores - np.atleast_2d(np.asarray(y, dtype=float))
        value = 0.5 * np.sum(diff ** 2) / n
        delta = diff / n
    else:
        raise DomainError(f"unknown loss {loss!r}")
    value += 0.5 * l2 * sum(np.sum(w ** 2) for w in net.weights)

    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = delta.T @ post[i] + l2 * net.weights[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = delta @ net.weights[i]
            if net.hidden == "relu":
                delta = delta * (pre[i - 1] > 0)
    return value, grads


def accuracy(net: DenseNet, x, y) -> float:
    return float(np.mean(predict(net, x) == np.asarray(y)))


def train_sgd(net: DenseNet, x, y, cfg: TrainConfig):
    """Minibatch SGD on softmax cross-entropy; returns ``(trained, curve)``.

    ``curve`` holds one dict per epoch (epoch 0 is the untrained net) with the
    full-dataset loss and accuracy.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if x.shape[0] == 0:
        raise DomainError("empty training set")
    if x.shape[0] != y.shape[0]:
        raise ShapeError("inputs and labels differ in length")
    if y.min() < 0 or y.max() >= net.sizes[-1]:
        raise DomainError("labels out of range for the output layer")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    velocity = [np.zeros_like(p) for p in net.params()]
    n = x.shape[0]

    def snapshot(epoch):
        value, _ = loss_and_grads(net, x, y, l2=cfg.l2)
        return {"epoch": epoch, "loss": float(value), "accuracy": accuracy(net, x, y)}

    curve = [snapshot(0)]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = loss_and_grads(net, x[idx], y[idx], l2=cfg.l2)
            for p, g, vel in zip(net.params(), grads, velocity):
                vel *= cfg.momentum
                vel -= cfg.lr * g
                p += vel
        curve.append(snapshot(epoch))
    return net, curve


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "accuracy"])
        for row in curve:
            w.writerow([row["epoch"], repr(row["loss"]), repr(row["accuracy"])])


def grad_check(net: DenseNet, x, y, loss: str = "xent", n_params: int = 64, eps: float = 1e-5,
               seed: int = 0, floor: float = 1e-6, relative_to: str = "entry") -> float:
    """Largest relative error between analytic and central-difference gradients.

    A random subset of ``n_params`` parameter entries is probed. With
    ``relative_to="entry"`` the error of each entry is
    ``|g - g_fd| / max(|g|, |g_fd|, floor)``; with ``relative_to="max"`` it is
    divided by the largest probed analytic gradient magnitude instead, which
    keeps tiny entries from being dominated by rounding in the loss.
    """
    if relative_to not in ("entry", "max"):
        raise DomainError(f"unknown relative_to {relative_to!r}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    net = net.copy()
    _, grads = loss_and_grads(net, x, y, loss)
    params = net.params()
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_params, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    flat_g = np.concatenate([g.reshape(-1) for g in grads])
    scale = max(float(np.max(np.abs(flat_g[picks]))), floor)
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        p, g = params[k].reshape(-1), grads[k].reshape(-1)
        j = flat - offsets[k]
        orig = p[j]
        p[j] = orig + eps
        up, _ = loss_and_grads(net, x, y, loss)
        p[j] = orig - eps
        down, _ = loss_and_grads(net, x, y, loss)
        p[j] = orig
        numeric = (up - down) / (2 * eps)
        denom = max(abs(g[j]), abs(numeric), floor) if relative_to == "entry" else scale
        err = abs(g[j] - numeric) / denom
        worst = max(worst, err)
    return worst


def count_macs(net: DenseNet | list) -> int:
    sizes = net.sizes if isinstance(net, DenseNet) else list(net)
    return int(sum(a * b for a, b in zip(sizes[:-1], sizes[1:])))


def convert_to_snn(net: DenseNet, steps: int, calib=None, percentile: float = 99.0,
                   v_init: float = 0.0) -> SpikingNetwork:
    """Rate-based ANN to SNN conversion with data-driven weight normalization.

    Each layer's scale is the ``percentile`` of its positive activations over
    the calibration inputs (1.0 when ``calib`` is None). Weights become
    ``W * scale_prev / scale`` and biases ``b / scale``; neurons are
    non-leaky LIF with threshold 1 and subtract reset, so a firing rate in
    spikes per step approximates the clipped, rescaled ANN activation.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    if any(not np.any(w) for w in net.weights):
        raise ConversionError("cannot convert a network with an all-zero weight layer")
    if calib is not None:
        _, post = _activations(net, calib)
        scales = []
        for a in post[1:]:
            pos = a[a > 0]
            if pos.size == 0:
                raise ConversionError("a layer never activates on the calibration data")
            scales.append(float(np.percentile(pos, percentile)))
    else:
        scales = [1.0] * len(net.weights)
    params = LifParams(decay=1.0, threshold=1.0, reset_mode="subtract", v_init=v_init)
    layers = []
    prev = 1.0
    for w, b, s in zip(net.weights, net.biases, scales):
        layers.append(Layer(params=params, weights=w * prev / s, bias=b / s))
        prev = s
    return SpikingNetwork(layers, meta={"steps": int(steps), "scales": scales})


def snn_classify(snet: SpikingNetwork, rasters, steps: int | None = None,
                 input_kernel: str = "spike") -> tuple[np.ndarray, SimTrace]:
    """Predicted classes (argmax of output spike counts, lowest index on ties)."""
    steps = steps or snet.meta.get("steps")
    trace = run_network(snet, rasters, horizon=steps, input_kernel=input_kernel)
    out = trace.rasters[-1]
    counts = out.sum(axis=-1)
    return np.argmax(np.atleast_2d(counts), axis=1), trace
