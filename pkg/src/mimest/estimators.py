"""Mutual-information estimators over a :class:`PairedDataset`.

``mime``
    Four-class classifier separating the data joint, the copula joint, the
    copula product and the shuffled data; MI is the mean logit gap h1 - h4
    on held-out pairs (or its Donsker-Varadhan bound with ``mode="dv"``).
``mre``
    The same pipeline with moment-matched Gaussian references.
``mine`` / ``nwj``
    Scalar critic trained on the DV / NWJ variational objective.
``infonce``
    Joint critic scored on every (x_i, y_j) pair of a batch.
``doe-gaussian`` (alias ``doe``)
    Difference of Gaussian entropies, H[Y] - H[Y|X], in closed form.

Every estimator splits its input 80/10/10 into train / validation /
evaluation pairs; reported values use the evaluation split only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .copula import CopulaModel, GaussianReference, fit_copula, fit_gaussian_reference
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyEvaluationSet,
    NotPositiveDefinite,
    SingularCovariance,
    TooFewSamples,
)
from .ndmath import cholesky, logmeanexp, logsumexp, make_rng, split_rng
from .neural import AdamState, MlpClassifier, TrainSchedule, softmax_xent, softmax_xent_backward, train
from .synth import PairedDataset

log = logging.getLogger(__name__)

ESTIMATORS = ("mime", "mre", "mine", "nwj", "infonce", "doe-gaussian")
# short names accepted on input
ALIASES = {"doe": "doe-gaussian"}
N_CLASSES = 4

# class indices of the four-way problem
JOINT, REF_JOINT, REF_PRODUCT, PRODUCT = range(N_CLASSES)


@dataclass
class EstimatorConfig:
    """Architecture, optimizer and protocol settings shared by all estimators.

    ``contrastive_batch_size`` is the InfoNCE training batch (``None`` means
    ``batch_size``); its evaluation always uses ``batch_size``.
    """

    width: int = 500
    depth: int = 3
    skip: bool = True
    slope: float = 0.01
    lr: float = 5e-4
    weight_decay: float = 1e-6
    batch_size: int = 512
    contrastive_batch_size: int | None = None
    max_epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.1
    eval_fraction: float = 0.1
    mode: str = "ratio"
    standardize: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.width < 1 or self.depth < 0:
            raise ConfigInvalid("width must be >= 1 and depth >= 0")
        if self.batch_size < N_CLASSES or self.batch_size % N_CLASSES:
            raise ConfigInvalid(f"batch_size must be a positive multiple of {N_CLASSES} (class-balanced batches)")
        if self.contrastive_batch_size is not None and self.contrastive_batch_size < 2:
            raise ConfigInvalid("contrastive_batch_size must be >= 2")
        if not (0 < self.val_fraction <= 0.5 and 0 < self.eval_fraction < 1):
            raise ConfigInvalid("val_fraction must be in (0, 0.5], eval_fraction in (0, 1)")
        if self.val_fraction + self.eval_fraction >= 1:
            raise ConfigInvalid("val_fraction + eval_fraction must leave training data")
        if self.mode not in ("ratio", "dv"):
            raise ConfigInvalid(f"mode must be 'ratio' or 'dv', got {self.mode!r}")
        if self.lr <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigInvalid("lr, max_epochs and patience must be positive")

    def with_overrides(self, **kw) -> "EstimatorConfig":
        known = {f.name for f in fields(self)}
        bad = set(kw) - known
        if bad:
            raise ConfigInvalid(f"unknown estimator option(s): {sorted(bad)}")
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def schedule(self, batch_size: int | None = None) -> TrainSchedule:
        return TrainSchedule(
            batch_size=batch_size or self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            val_fraction=self.val_fraction,
        )

    def adam(self) -> AdamState:
        return AdamState(lr=self.lr, weight_decay=self.weight_decay)


@dataclass(frozen=True)
class MiEstimate:
    value: float
    estimator: str
    mode: str
    n_eval: int
    seed: int | None = None


@dataclass(frozen=True)
class Splits:
    train: PairedDataset
    val: PairedDataset
    eval: PairedDataset


def split_dataset(ds: PairedDataset, rng: np.random.Generator, val_fraction=0.1, eval_fraction=0.1) -> Splits:
    n_val = int(round(val_fraction * ds.n))
    n_eval = int(round(eval_fraction * ds.n))
    if min(n_val, n_eval) < 2 or ds.n - n_val - n_eval < 2:
        raise TooFewSamples(f"{ds.n} pairs are too few for a train/val/eval split")
    perm = rng.permutation(ds.n)
    return Splits(
        train=ds.subset(perm[n_val + n_eval :]),
        val=ds.subset(perm[:n_val]),
        eval=ds.subset(perm[n_val : n_val + n_eval]),
    )


def _new_net(din: int, n_out: int, cfg: EstimatorConfig, rng, train_ds: PairedDataset) -> MlpClassifier:
    net = MlpClassifier.init(din, n_out, cfg.width, cfg.depth, cfg.skip, cfg.slope, rng)
    if cfg.standardize:
        xy = train_ds.joined()
        scale = xy.std(axis=0)
        net.input_shift = xy.mean(axis=0)
        net.input_scale = np.where(scale > 0, scale, 1.0)
    return net


def _check_dims(ds: PairedDataset, model) -> None:
    if ds.dx != model.dx or ds.dx + ds.dy != (len(model.tables) if isinstance(model, CopulaModel) else len(model.mean)):
        raise DimensionMismatch("dataset and reference model dimensions differ")


def _as_pairs(pairs) -> np.ndarray:
    xy = pairs.joined() if isinstance(pairs, PairedDataset) else np.asarray(pairs, dtype=np.float64)
    if xy.ndim != 2 or len(xy) == 0:
        raise EmptyEvaluationSet("no evaluation pairs")
    return xy


def _shuffled(ds: PairedDataset, rng) -> np.ndarray:
    return np.hstack([ds.x, ds.y[rng.permutation(ds.n)]])


# ---------------------------------------------------------------- four-class


class ReferenceSource:
    """Class-balanced four-way batches.

    Classes 1 and 4 come from the training pairs (4 = independently permuted
    x and y) without replacement within an epoch; classes 2 and 3 are drawn
    fresh from the reference model for every batch.
    """

    n_classes = N_CLASSES

    def __init__(
        self, train_ds: PairedDataset, val_ds: PairedDataset, reference, class_counts=None, allow_imbalanced=False
    ):
        self.train_ds, self.val_ds, self.reference = train_ds, val_ds, reference
        if class_counts is not None and len(set(class_counts)) != 1 and not allow_imbalanced:
            raise ConfigInvalid(f"class-imbalanced batches {tuple(class_counts)}: logit gaps would not be log-ratios")
        # per-class share of a batch; uniform unless a test deliberately skews it
        self.class_counts = class_counts

    def prepare(self, schedule: TrainSchedule, rng) -> None:
        k = schedule.batch_size // N_CLASSES
        self.counts = self.class_counts or (k,) * N_CLASSES
        if len(set(self.counts)) != 1:
            log.warning("class-imbalanced batches %s: logit gaps no longer estimate log-ratios", self.counts)
        v = self.val_ds
        self.val_x = np.vstack(
            [
                v.joined(),
                self.reference.sample_joint(v.n, rng),
                self.reference.sample_product(v.n, rng),
                _shuffled(v, rng),
            ]
        )
        self.val_y = np.repeat(np.arange(N_CLASSES), v.n)

    def epoch(self, rng):
        ds = self.train_ds
        c1, c2, c3, c4 = self.counts
        pj, px, py = rng.permutation(ds.n), rng.permutation(ds.n), rng.permutation(ds.n)
        steps = ds.n // max(c1, c4)
        labels = np.repeat(np.arange(N_CLASSES), self.counts)
        for s in range(steps):
            j = pj[s * c1 : (s + 1) * c1]
            ix, iy = px[s * c4 : (s + 1) * c4], py[s * c4 : (s + 1) * c4]
            batch = np.vstack(
                [
                    np.hstack([ds.x[j], ds.y[j]]),
                    self.reference.sample_joint(c2, rng),
                    self.reference.sample_product(c3, rng),
                    np.hstack([ds.x[ix], ds.y[iy]]),
                ]
            )
            yield batch, labels

    def loss_and_grads(self, net, batch):
        return softmax_xent_backward(net, *batch)

    def validation_loss(self, net) -> float:
        return softmax_xent(net.forward(self.val_x), self.val_y)[0]


def mime_train(
    ds: PairedDataset,
    model,
    cfg: EstimatorConfig,
    rng: np.random.Generator,
    val_ds: PairedDataset | None = None,
    class_counts: tuple[int, int, int, int] | None = None,
    allow_imbalanced: bool = False,
) -> MlpClassifier:
    """Train the four-class classifier against ``model``'s reference samplers.

    ``model`` is a :class:`CopulaModel` (MIME) or :class:`GaussianReference`
    (MRE). Without ``val_ds`` a validation split is carved from ``ds``.
    ``class_counts`` overrides the per-class batch share; unequal shares
    break the uniform-prior identity and are refused unless
    ``allow_imbalanced`` is set.
    """
    _check_dims(ds, model)
    init_rng, split_rng_, train_rng = split_rng(rng, 3)
    if val_ds is None:
        n_val = int(round(cfg.val_fraction * ds.n))
        if n_val < 2 or ds.n - n_val < 2:
            raise TooFewSamples("too few pairs for a validation split")
        perm = split_rng_.permutation(ds.n)
        ds, val_ds = ds.subset(perm[n_val:]), ds.subset(perm[:n_val])
    if ds.n < cfg.batch_size // N_CLASSES:
        raise TooFewSamples(f"{ds.n} training pairs cannot fill a batch share of {cfg.batch_size // N_CLASSES}")
    net = _new_net(ds.dx + ds.dy, N_CLASSES, cfg, init_rng, ds)
    source = ReferenceSource(ds, val_ds, model, class_counts, allow_imbalanced)
    return train(net, source, cfg.schedule(), train_rng, cfg.adam()).net


def mime_estimate(h: MlpClassifier, eval_pairs, estimator: str = "mime", seed=None) -> MiEstimate:
    """Mean logit gap ``h1 - h4`` over held-out joint pairs."""
    xy = _as_pairs(eval_pairs)
    logits = h.forward(xy)
    value = float(np.mean(logits[:, JOINT] - logits[:, PRODUCT]))
    return MiEstimate(value, estimator, "ratio", len(xy), seed)


def telescoped_ratio(h: MlpClassifier, pair) -> tuple[np.ndarray, np.ndarray]:
    """``(r14, r12 + r23 + r34)`` with ``r_ij = h_i - h_j``, per input row."""
    if h.n_out != N_CLASSES:
        raise ValueError("telescoping needs a four-logit head")
    xy = np.atleast_2d(np.asarray(pair, dtype=np.float64))
    z = h.forward(xy)
    direct = z[:, 0] - z[:, 3]
    chained = (z[:, 0] - z[:, 1]) + (z[:, 1] - z[:, 2]) + (z[:, 2] - z[:, 3])
    return direct, chained


def dv_bound(f_joint: np.ndarray, f_product: np.ndarray) -> float:
    """``mean f(joint) - log mean exp f(product)``."""
    if len(f_joint) == 0 or len(f_product) == 0:
        raise EmptyEvaluationSet("DV bound needs joint and product samples")
    return float(np.mean(f_joint) - logmeanexp(f_product))


def nwj_bound(f_joint: np.ndarray, f_product: np.ndarray) -> float:
    if len(f_joint) == 0 or len(f_product) == 0:
        raise EmptyEvaluationSet("NWJ bound needs joint and product samples")
    return float(np.mean(f_joint) - np.mean(np.exp(f_product - 1.0)))


def dv_estimate_from_ratio(h: MlpClassifier, joint_eval, product_eval, estimator="mime", seed=None) -> MiEstimate:
    """DV lower bound with the critic ``f = h1 - h4``."""
    j, p = _as_pairs(joint_eval), _as_pairs(product_eval)
    zj, zp = h.forward(j), h.forward(p)
    value = dv_bound(zj[:, JOINT] - zj[:, PRODUCT], zp[:, JOINT] - zp[:, PRODUCT])
    return MiEstimate(value, estimator, "dv", len(j), seed)


# ---------------------------------------------------------------- critics


class CriticSource:
    """Batches of joint pairs and shuffled pairs for a scalar critic.

    Each step uses ``batch_size / 2`` joint rows and as many product rows,
    the latter pairing x and y from two independent permutations.
    """

    n_classes = 1

    def __init__(self, train_ds: PairedDataset, val_ds: PairedDataset, objective: str):
        self.train_ds, self.val_ds, self.objective = train_ds, val_ds, objective

    def prepare(self, schedule, rng) -> None:
        self.half = max(1, schedule.batch_size // 2)
        self.val_joint = self.val_ds.joined()
        self.val_product = _shuffled(self.val_ds, rng)

    def epoch(self, rng):
        ds, h = self.train_ds, self.half
        pj, px, py = rng.permutation(ds.n), rng.permutation(ds.n), rng.permutation(ds.n)
        for s in range(ds.n // h):
            j, ix, iy = (p[s * h : (s + 1) * h] for p in (pj, px, py))
            yield np.vstack([np.hstack([ds.x[j], ds.y[j]]), np.hstack([ds.x[ix], ds.y[iy]])])

    def _bound(self, fj, fp) -> float:
        return dv_bound(fj, fp) if self.objective == "dv" else nwj_bound(fj, fp)

    def loss_and_grads(self, net, batch):
        f, cache = net.forward_cached(batch)
        f = f[:, 0]
        fj, fp = f[: self.half], f[self.half :]
        d = np.empty_like(f)
        d[: self.half] = -1.0 / len(fj)
        if self.objective == "dv":
            d[self.half :] = np.exp(fp - logsumexp(fp))
        else:
            d[self.half :] = np.exp(fp - 1.0) / len(fp)
        return -self._bound(fj, fp), net.backward(cache, d[:, None])

    def validation_loss(self, net) -> float:
        return -self._bound(net.forward(self.val_joint)[:, 0], net.forward(self.val_product)[:, 0])


def _train_critic(ds: PairedDataset, val_ds: PairedDataset, cfg: EstimatorConfig, rng, objective: str) -> MlpClassifier:
    if ds.n < cfg.batch_size:
        raise TooFewSamples(f"{ds.n} training pairs cannot fill a batch of {cfg.batch_size}")
    init_rng, train_rng = split_rng(rng, 2)
    net = _new_net(ds.dx + ds.dy, 1, cfg, init_rng, ds)
    return train(net, CriticSource(ds, val_ds, objective), cfg.schedule(), train_rng, cfg.adam()).net


def mine_train(ds, val_ds, cfg, rng) -> MlpClassifier:
    return _train_critic(ds, val_ds, cfg, rng, "dv")


def nwj_train(ds, val_ds, cfg, rng) -> MlpClassifier:
    return _train_critic(ds, val_ds, cfg, rng, "nwj")


def mine_estimate(f: MlpClassifier, eval_ds: PairedDataset, rng, seed=None) -> MiEstimate:
    value = dv_bound(f.forward(_as_pairs(eval_ds))[:, 0], f.forward(_shuffled(eval_ds, rng))[:, 0])
    return MiEstimate(value, "mine", "dv", eval_ds.n, seed)


def nwj_estimate(f: MlpClassifier, eval_ds: PairedDataset, rng, seed=None) -> MiEstimate:
    value = nwj_bound(f.forward(_as_pairs(eval_ds))[:, 0], f.forward(_shuffled(eval_ds, rng))[:, 0])
    return MiEstimate(value, "nwj", "nwj", eval_ds.n, seed)


def pair_grid(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row ``i * B + j`` holds ``(x_i, y_j)``."""
    b = len(x)
    return np.hstack([np.repeat(x, b, axis=0), np.tile(y, (b, 1))])


def infonce_loss(scores: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over rows of ``logsumexp_j S_ij - S_ii`` and its gradient."""
    b = len(scores)
    lse = logsumexp(scores, axis=1)
    loss = float(np.mean(lse - np.diag(scores)))
    d = np.exp(scores - lse[:, None])
    d[np.diag_indices(b)] -= 1.0
    return loss, d / b


class ContrastiveSource:
    n_classes = 1

    def __init__(self, train_ds: PairedDataset, val_ds: PairedDataset):
        self.train_ds, self.val_ds = train_ds, val_ds

    def prepare(self, schedule, rng) -> None:
        self.b = schedule.batch_size

    def epoch(self, rng):
        ds, b = self.train_ds, self.b
        perm = rng.permutation(ds.n)
        for s in range(ds.n // b):
            idx = perm[s * b : (s + 1) * b]
            yield ds.x[idx], ds.y[idx]

    def loss_and_grads(self, net, batch):
        x, y = batch
        b = len(x)
        f, cache = net.forward_cached(pair_grid(x, y))
        loss, ds = infonce_loss(f[:, 0].reshape(b, b))
        return loss, net.backward(cache, ds.reshape(-1, 1))

    def validation_loss(self, net) -> float:
        return float(np.mean([loss for _, loss in infonce_chunks(net, self.val_ds, self.b)]))


def infonce_chunks(f: MlpClassifier, ds: PairedDataset, b: int):
    """``(B, loss)`` per consecutive chunk of ``b`` pairs (one short chunk if ``ds.n < b``)."""
    b = min(b, ds.n)
    for s in range(ds.n // b):
        x, y = ds.x[s * b : (s + 1) * b], ds.y[s * b : (s + 1) * b]
        yield b, infonce_loss(f.forward(pair_grid(x, y))[:, 0].reshape(b, b))[0]


def infonce_train(ds, val_ds, cfg, rng) -> MlpClassifier:
    b = cfg.contrastive_batch_size or cfg.batch_size
    if ds.n < b:
        raise TooFewSamples(f"{ds.n} training pairs cannot fill a batch of {b}")
    init_rng, train_rng = split_rng(rng, 2)
    net = _new_net(ds.dx + ds.dy, 1, cfg, init_rng, ds)
    return train(net, ContrastiveSource(ds, val_ds), cfg.schedule(b), train_rng, cfg.adam()).net


def infonce_estimate(f: MlpClassifier, eval_ds: PairedDataset, batch_size: int, seed=None) -> MiEstimate:
    """``log B - loss`` averaged over held-out chunks of ``B`` pairs; never exceeds ``log B``."""
    if eval_ds.n < 2:
        raise EmptyEvaluationSet("InfoNCE needs at least two evaluation pairs")
    vals = [math.log(b) - loss for b, loss in infonce_chunks(f, eval_ds, batch_size)]
    return MiEstimate(float(np.mean(vals)), "infonce", "infonce", eval_ds.n, seed)


# ---------------------------------------------------------------- generative


def gaussian_entropy(cov: np.ndarray) -> float:
    d = cov.shape[0]
    try:
        L = cholesky(0.5 * (cov + cov.T), sym_tol=np.inf)
    except NotPositiveDefinite:
        raise SingularCovariance("covariance is not positive definite") from None
    return 0.5 * d * math.log(2 * math.pi * math.e) + float(np.sum(np.log(np.diag(L))))


def doe_estimate(ds: PairedDataset, cfg: EstimatorConfig | None = None, seed: int = 0) -> MiEstimate:
    """H[Y] - H[Y|X] under a full-covariance Gaussian fitted on the training split."""
    cfg = cfg or EstimatorConfig()
    dim = ds.dx + ds.dy
    if ds.n < dim * dim:
        raise TooFewSamples(f"need at least {dim * dim} pairs to fit a {dim}-D Gaussian")
    splits = split_dataset(ds, split_rng(make_rng(seed), 1)[0], cfg.val_fraction, cfg.eval_fraction)
    xy = splits.train.joined()
    cov = np.cov(xy, rowvar=False).reshape(dim, dim)
    dx = ds.dx
    sxx, sxy, syy = cov[:dx, :dx], cov[:dx, dx:], cov[dx:, dx:]
    try:
        cond = syy - sxy.T @ np.linalg.solve(sxx, sxy)
    except np.linalg.LinAlgError:
        raise SingularCovariance("x-block covariance is singular") from None
    value = gaussian_entropy(syy) - gaussian_entropy(cond)
    return MiEstimate(value, "doe-gaussian", "gaussian", splits.train.n, seed)


# ---------------------------------------------------------------- uniform interface


class Estimator:
    """``Estimator(name, config).train(ds, seed).estimate()``."""

    def __init__(self, name: str, config: EstimatorConfig | None = None):
        name = ALIASES.get(name, name)
        if name not in ESTIMATORS:
            raise ConfigInvalid(f"unknown estimator {name!r}; valid: {', '.join(ESTIMATORS)}")
        self.name = name
        self.config = config or EstimatorConfig()
        self.net: MlpClassifier | None = None
        self.reference = None

    def train(self, ds: PairedDataset, seed: int) -> "Estimator":
        self.seed = int(seed)
        self.ds = ds
        if self.name == "doe-gaussian":
            return self
        cfg = self.config
        split_r, fit_r, _ = split_rng(make_rng(self.seed), 3)
        self.splits = split_dataset(ds, split_r, cfg.val_fraction, cfg.eval_fraction)
        tr, va = self.splits.train, self.splits.val
        if self.name in ("mime", "mre"):
            self.reference = fit_copula(tr) if self.name == "mime" else fit_gaussian_reference(tr)
            self.net = mime_train(tr, self.reference, cfg, fit_r, val_ds=va)
        elif self.name == "mine":
            self.net = mine_train(tr, va, cfg, fit_r)
        elif self.name == "nwj":
            self.net = nwj_train(tr, va, cfg, fit_r)
        else:
            self.net = infonce_train(tr, va, cfg, fit_r)
        return self

    def estimate(self, mode: str | None = None) -> MiEstimate:
        cfg = self.config
        if self.name == "doe-gaussian":
            return doe_estimate(self.ds, cfg, self.seed)
        if self.net is None:
            raise RuntimeError("call train() first")
        ev = self.splits.eval
        # a fresh copy of the same stream: repeated calls give identical values
        rng = split_rng(make_rng(self.seed), 3)[2]
        if self.name in ("mime", "mre"):
            mode = mode or cfg.mode
            if mode == "dv":
                return dv_estimate_from_ratio(self.net, ev, _shuffled(ev, rng), self.name, self.seed)
            return mime_estimate(self.net, ev, self.name, self.seed)
        if self.name == "mine":
            return mine_estimate(self.net, ev, rng, self.seed)
        if self.name == "nwj":
            return nwj_estimate(self.net, ev, rng, self.seed)
        return infonce_estimate(self.net, ev, cfg.batch_size, self.seed)


def run_estimator(name: str, ds: PairedDataset, config: EstimatorConfig | None = None, seed: int = 0, mode=None) -> MiEstimate:
    return Estimator(name, config).train(ds, seed).estimate(mode)
