"""Dense-net MLP with hand-written backprop, Adam and an early-stopping trainer.

The network is the classifier ``h`` / critic ``f`` shared by every neural
estimator. Topology: ``depth`` leaky-ReLU hidden layers of equal width, and
an output layer that (when ``skip`` is set) sees the concatenation of the
last hidden activation with the raw input.
"""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import DegenerateData, ShapeMismatch
from .ndmath import logsumexp

log = logging.getLogger(__name__)

MLP_FORMAT = "mimest-mlp"
MLP_FORMAT_VERSION = 1


def leaky_relu(z: np.ndarray, slope: float) -> np.ndarray:
    out = np.multiply(z, slope)
    if np.ndim(out) == 0:
        return np.maximum(z, out)
    return np.maximum(z, out, out=out)


def leaky_relu_grad(z: np.ndarray, slope: float) -> np.ndarray:
    # arithmetic on the mask is several times faster than np.where with scalars
    g = np.multiply(z > 0, 1.0 - slope)
    g += slope
    return g


@dataclass
class MlpClassifier:
    """Parameters of the MLP plus a fixed (untrained) input standardization.

    ``weights[i]`` has shape ``(fan_in, fan_out)``. The last entry is the
    output head producing ``n_out`` logits.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    skip: bool = True
    slope: float = 0.01
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @classmethod
    def init(
        cls,
        n_in: int,
        n_out: int,
        width: int = 500,
        depth: int = 3,
        skip: bool = True,
        slope: float = 0.01,
        rng: np.random.Generator | None = None,
        zero: bool = False,
    ) -> "MlpClassifier":
        """He-scaled normal hidden weights; zero output head and biases (everything zero if ``zero``)."""
        if n_in < 1 or n_out < 1:
            raise ValueError("n_in and n_out must be >= 1")
        skip = skip and depth > 0
        sizes = [n_in] + [width] * depth
        head_in = (width + n_in) if skip else sizes[-1]
        fans = list(zip(sizes[:-1], sizes[1:])) + [(head_in, n_out)]
        weights, biases = [], []
        for i, (fin, fout) in enumerate(fans):
            if zero or (i == len(fans) - 1 and depth > 0):
                # zero head: every estimator starts from equal logits (log-ratio 0)
                w = np.zeros((fin, fout))
            else:
                w = rng.standard_normal((fin, fout)) * math.sqrt(2.0 / ((1.0 + slope**2) * fin))
            weights.append(w)
            biases.append(np.zeros(fout))
        return cls(weights, biases, skip=skip, slope=slope)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        self.weights = list(params[0::2])
        self.biases = list(params[1::2])

    def copy(self) -> "MlpClassifier":
        return copy.deepcopy(self)

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatch(f"expected input of shape (n, {self.n_in}), got {x.shape}")
        if self.input_shift is not None:
            x = (x - self.input_shift) / self.input_scale
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        x = self._standardize(x)
        a = x
        acts, zs = [x], []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w
            z += b
            a = leaky_relu(z, self.slope)
            zs.append(z)
            acts.append(a)
        head_in = np.hstack([a, x]) if self.skip and zs else a
        logits = head_in @ self.weights[-1] + self.biases[-1]
        return logits, [acts, zs, head_in]

    def backward(self, cache: list, dlogits: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. ``params()`` given ``dL/dlogits``."""
        acts, zs, head_in = cache
        H = len(zs)
        gw = [None] * (H + 1)
        gb = [None] * (H + 1)
        gw[H] = head_in.T @ dlogits
        gb[H] = dlogits.sum(axis=0)
        if H:
            width = zs[-1].shape[1]
            da = dlogits @ self.weights[-1][:width].T
            for i in range(H - 1, -1, -1):
                dz = leaky_relu_grad(zs[i], self.slope)
                dz *= da
                gw[i] = acts[i].T @ dz
                gb[i] = dz.sum(axis=0)
                if i:
                    da = dz @ self.weights[i].T
        grads = []
        for w, b in zip(gw, gb):
            grads += [w, b]
        return grads

    def to_dict(self) -> dict:
        return {
            "format": MLP_FORMAT,
            "version": MLP_FORMAT_VERSION,
            "skip": self.skip,
            "slope": self.slope,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "input_shift": None if self.input_shift is None else self.input_shift.tolist(),
            "input_scale": None if self.input_scale is None else self.input_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpClassifier":
        if d.get("format") != MLP_FORMAT or d.get("version") != MLP_FORMAT_VERSION:
            raise ValueError("not a mimest-mlp v1 snapshot")
        arr = lambda v: None if v is None else np.asarray(v, dtype=np.float64)  # noqa: E731
        weights = [np.asarray(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]]
        return cls(
            weights=weights,
            biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]],
            skip=d["skip"],
            slope=d["slope"],
            input_shift=arr(d["input_shift"]),
            input_scale=arr(d["input_scale"]),
        )

    def save(self, path: str | Path) -> None:
        # json writes floats with repr(), which round-trips float64 exactly
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "MlpClassifier":
        return cls.from_dict(json.loads(Path(path).read_text()))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax of the true class and its gradient w.r.t. logits."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch("labels must be a vector matching the batch")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError("labels out of range")
    rows = np.arange(n)
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - logits[rows, labels]))
    d = np.exp(logits - lse[:, None])
    d[rows, labels] -= 1.0
    return loss, d / n


def softmax_xent_backward(net: MlpClassifier, batch: np.ndarray, labels: np.ndarray):
    logits, cache = net.forward_cached(batch)
    loss, dlogits = softmax_xent(logits, labels)
    return loss, net.backward(cache, dlogits)


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-6
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def copy(self) -> "AdamState":
        return copy.deepcopy(self)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    inplace: bool = False,
) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam followed by decoupled weight decay.

    Without ``inplace`` the inputs are left untouched and fresh parameter and
    state objects are returned.
    """
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    if not inplace:
        params = [p.copy() for p in params]
        state = state.copy()
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            p -= (state.lr * state.weight_decay) * p
    return list(params), state


@dataclass
class TrainSchedule:
    batch_size: int = 512
    max_epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.1

    def validate(self, n_classes: int = 1) -> None:
        if self.batch_size < max(n_classes, 1):
            raise ValueError(f"batch_size {self.batch_size} < number of classes {n_classes}")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5]")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")


class BatchSource(Protocol):
    """What :func:`train` needs from a training problem."""

    n_classes: int

    def prepare(self, schedule: TrainSchedule, rng: np.random.Generator) -> None: ...

    def epoch(self, rng: np.random.Generator) -> Iterable: ...

    def loss_and_grads(self, net: MlpClassifier, batch) -> tuple[float, list[np.ndarray]]: ...

    def validation_loss(self, net: MlpClassifier) -> float: ...


@dataclass
class TrainResult:
    net: MlpClassifier
    history: list[dict]
    best_epoch: int


def train(
    net: MlpClassifier,
    source: BatchSource,
    schedule: TrainSchedule,
    rng: np.random.Generator,
    adam: AdamState | None = None,
) -> TrainResult:
    """Minimize the source's loss with Adam; return the best-validation snapshot.

    One validation round per epoch. Training stops after ``patience`` rounds
    without strict improvement; the returned network is the checkpoint with
    the lowest validation loss, never a later one.
    """
    schedule.validate(source.n_classes)
    source.prepare(schedule, rng)
    work = net.copy()
    params = work.params()
    adam = AdamState() if adam is None else adam.copy()

    best = source.validation_loss(work)
    best_net, best_epoch = work.copy(), 0
    history = [{"epoch": 0, "train_loss": float("nan"), "val_loss": best, "best_val_loss": best}]
    stale = 0
    for epoch in range(1, schedule.max_epochs + 1):
        losses = []
        for batch in source.epoch(rng):
            loss, grads = source.loss_and_grads(work, batch)
            adam_step(params, grads, adam, inplace=True)
            losses.append(loss)
        val = source.validation_loss(work)
        if val < best:
            best, best_net, best_epoch, stale = val, work.copy(), epoch, 0
        else:
            stale += 1
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)) if losses else float("nan"),
                "val_loss": val,
                "best_val_loss": best,
            }
        )
        if not np.isfinite(val):
            log.warning("validation loss diverged at epoch %d; stopping", epoch)
            break
        if stale >= schedule.patience:
            break
    return TrainResult(best_net, history, best_epoch)


class LabeledSource:
    """Class-balanced minibatches over a fixed labeled dataset.

    Each batch holds ``batch_size // n_classes`` rows per class, drawn without
    replacement within an epoch; a validation split is carved out per class
    when training starts.
    """

    def __init__(self, x: np.ndarray, labels: np.ndarray, n_classes: int):
        self.x = np.asarray(x, dtype=np.float64)
        self.labels = np.asarray(labels)
        self.n_classes = n_classes
        counts = np.bincount(self.labels, minlength=n_classes)
        if np.any(counts == 0):
            raise DegenerateData(f"class(es) {np.flatnonzero(counts == 0).tolist()} have no samples")

    def prepare(self, schedule: TrainSchedule, rng: np.random.Generator) -> None:
        self.per_class = schedule.batch_size // self.n_classes
        self.train_idx, val_idx = [], []
        for c in range(self.n_classes):
            idx = rng.permutation(np.flatnonzero(self.labels == c))
            n_val = max(1, int(round(schedule.val_fraction * len(idx))))
            if len(idx) - n_val < 1:
                raise DegenerateData(f"class {c} has no training samples after the split")
            val_idx.append(idx[:n_val])
            self.train_idx.append(idx[n_val:])
        val_idx = np.concatenate(val_idx)
        self.x_val, self.y_val = self.x[val_idx], self.labels[val_idx]

    def epoch(self, rng: np.random.Generator):
        perms = [rng.permutation(idx) for idx in self.train_idx]
        steps = max(1, min(len(p) for p in perms) // self.per_class)
        for s in range(steps):
            rows = []
            for p in perms:
                take = p[s * self.per_class : (s + 1) * self.per_class]
                if len(take) < self.per_class:
                    take = rng.choice(p, self.per_class)
                rows.append(take)
            rows = np.concatenate(rows)
            yield self.x[rows], self.labels[rows]

    def loss_and_grads(self, net, batch):
        return softmax_xent_backward(net, *batch)

    def validation_loss(self, net) -> float:
        return softmax_xent(net.forward(self.x_val), self.y_val)[0]
