"""Synthetic paired datasets with known ground-truth mutual information.

Three families:

* non-linear transforms of a correlated Gaussian (closed-form MI),
* mixtures of Gaussians sharing the same sparse block structure
  (Monte-Carlo MI oracle),
* the Swiss-roll embedding of a bivariate Gaussian (closed-form MI).

All MI values are in nats.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ShapeMismatch, TooFewSamples
from .ndmath import logsumexp, make_rng

__all__ = [
    "PairedDataset",
    "NonlinearGaussianSpec",
    "MogSpec",
    "SwissRollSpec",
    "MOG1",
    "MOG2",
    "TRANSFORMS",
    "gen_nonlinear_gaussian",
    "true_mi_nonlinear_gaussian",
    "gaussian_mi",
    "gen_mog",
    "mog_logdensities",
    "mog_true_mi",
    "gen_swiss_roll",
    "true_mi_swiss_roll",
    "shuffle_marginals",
    "transform_matrices",
]

# default seed for the fixed mixing matrices A, B
MATRIX_SEED = 20240601

_BINARY_MAGIC = b"MIMEST-DS\x00"


@dataclass(frozen=True)
class PairedDataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2 or len(x) != len(y):
            raise ShapeMismatch(f"x {x.shape} and y {y.shape} must be 2-D with equal rows")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def dx(self) -> int:
        return self.x.shape[1]

    @property
    def dy(self) -> int:
        return self.y.shape[1]

    def joined(self) -> np.ndarray:
        return np.hstack([self.x, self.y])

    def subset(self, idx) -> "PairedDataset":
        return PairedDataset(self.x[idx], self.y[idx])

    @classmethod
    def from_joined(cls, xy: np.ndarray, dx: int) -> "PairedDataset":
        return cls(xy[:, :dx], xy[:, dx:])

    def header(self) -> list[str]:
        return [f"x_{i}" for i in range(self.dx)] + [f"y_{i}" for i in range(self.dy)]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.joined():
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "PairedDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        dx = sum(h.startswith("x_") for h in header)
        if dx == 0 or dx == len(header):
            raise ValueError("dataset CSV needs both x_* and y_* columns")
        xy = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
        return cls.from_joined(xy, dx)

    def save_binary(self, path: str | Path) -> None:
        """Header (magic, JSON with n/dx/dy) then little-endian float64 rows."""
        meta = json.dumps({"version": 1, "n": self.n, "dx": self.dx, "dy": self.dy}).encode()
        with open(path, "wb") as fh:
            fh.write(_BINARY_MAGIC)
            fh.write(len(meta).to_bytes(4, "little"))
            fh.write(meta)
            fh.write(self.joined().astype("<f8").tobytes())

    @classmethod
    def load_binary(cls, path: str | Path) -> "PairedDataset":
        raw = Path(path).read_bytes()
        if not raw.startswith(_BINARY_MAGIC):
            raise ValueError("not a mimest binary dataset")
        off = len(_BINARY_MAGIC)
        size = int.from_bytes(raw[off : off + 4], "little")
        meta = json.loads(raw[off + 4 : off + 4 + size])
        data = np.frombuffer(raw[off + 4 + size :], dtype="<f8").astype(np.float64)
        xy = data.reshape(meta["n"], meta["dx"] + meta["dy"])
        return cls.from_joined(xy, meta["dx"])

    def save(self, path: str | Path) -> None:
        if str(path).endswith(".csv"):
            self.to_csv(path)
        else:
            self.save_binary(path)

    @classmethod
    def load(cls, path: str | Path) -> "PairedDataset":
        return cls.from_csv(path) if str(path).endswith(".csv") else cls.load_binary(path)


def _check_rho(rho: float) -> None:
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")


def block_covariance(d: int, rho: float) -> np.ndarray:
    """``[[I, rho I], [rho I, I]]``: unit variances, x_i paired with y_i only."""
    eye = np.eye(d)
    return np.block([[eye, rho * eye], [rho * eye, eye]])


# element-wise maps applied before the mixing matrix: x = A @ f(eps)
_ELEMENTWISE = {
    "identity": lambda e: e,
    "tanh": np.tanh,
    "cube": lambda e: e**3,
    "exp": np.exp,
}

# preset name -> (f kind, g kind); "tanh_exp" is the A tanh(x), B e^y pair
TRANSFORMS = {
    "identity": ("identity", "identity"),
    "tanh": ("tanh", "tanh"),
    "cube": ("cube", "cube"),
    "exp": ("exp", "exp"),
    "tanh_exp": ("tanh", "exp"),
}


def transform_matrices(d: int, matrix_seed: int = MATRIX_SEED, max_cond: float = 100.0):
    """Fixed invertible mixing matrices ``A, B`` for dimension ``d``.

    Gaussian entries scaled by ``1/sqrt(d)``, redrawn until the condition
    number is below ``max_cond``. The stream depends only on ``(matrix_seed,
    d)`` so every estimator sees the same task.
    """
    rng = make_rng(matrix_seed * 1000 + d)
    out = []
    while len(out) < 2:
        m = rng.standard_normal((d, d)) / math.sqrt(d)
        if np.linalg.cond(m) < max_cond:
            out.append(m)
    return out[0], out[1]


@dataclass(frozen=True)
class NonlinearGaussianSpec:
    d: int
    rho: float
    transform: str = "identity"
    matrix_seed: int = MATRIX_SEED

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        _check_rho(self.rho)
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}; choose from {sorted(TRANSFORMS)}")


def gen_nonlinear_gaussian(spec: NonlinearGaussianSpec, n: int, rng: np.random.Generator) -> PairedDataset:
    d, rho = spec.d, spec.rho
    ex = rng.standard_normal((n, d))
    # y-side latent with corr(ex_i, ey_i) = rho and no other dependence
    ey = rho * ex + math.sqrt(1.0 - rho * rho) * rng.standard_normal((n, d))
    if spec.transform == "identity":
        return PairedDataset(ex, ey)
    fk, gk = TRANSFORMS[spec.transform]
    A, B = transform_matrices(d, spec.matrix_seed)
    return PairedDataset(_ELEMENTWISE[fk](ex) @ A.T, _ELEMENTWISE[gk](ey) @ B.T)


def gaussian_mi(d: int, rho: float) -> float:
    """``-d/2 log(1 - rho^2)``."""
    return -0.5 * d * math.log1p(-rho * rho)


def true_mi_nonlinear_gaussian(spec: NonlinearGaussianSpec) -> float:
    # bijections on each side leave MI unchanged
    return gaussian_mi(spec.d, spec.rho)


@dataclass(frozen=True)
class MogSpec:
    """Equal-weight mixture; component k has mean ``means[k] * 1`` and the
    block covariance with dependence ``rhos[k]``."""

    d: int
    means: tuple[float, ...] = (0.0,)
    rhos: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if len(self.means) != len(self.rhos) or not self.means:
            raise ValueError("means and rhos must be nonempty and of equal length")
        for r in self.rhos:
            _check_rho(r)
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))

    @property
    def m(self) -> int:
        return len(self.means)


MOG1 = dict(means=(-0.4, -0.1, 0.0, 0.1, 0.4), rhos=(0.5, 0.6, 0.7, 0.8, 0.9))
MOG2 = dict(means=(-0.2, -0.1, 0.0, 0.3, 0.4), rhos=(-0.2, -0.1, 0.0, 0.3, 0.4))


def gen_mog(spec: MogSpec, n: int, rng: np.random.Generator) -> PairedDataset:
    k = rng.integers(spec.m, size=n)
    mu = np.asarray(spec.means)[k][:, None]
    rho = np.asarray(spec.rhos)[k][:, None]
    ex = rng.standard_normal((n, spec.d))
    ey = rho * ex + np.sqrt(1.0 - rho * rho) * rng.standard_normal((n, spec.d))
    return PairedDataset(mu + ex, mu + ey)


_LOG2PI = math.log(2.0 * math.pi)


def mog_logdensities(spec: MogSpec, points: np.ndarray):
    """Per-point ``(log p(x,y), log p(x), log p(y))`` for an ``(n, 2d)`` array.

    Each component factorizes over the d coordinate pairs (x_i, y_i), and the
    marginal of either block is an M-component mixture of ``N(m_k 1, I)``.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 * spec.d:
        raise ShapeMismatch(f"points must have shape (n, {2 * spec.d})")
    d = spec.d
    x, y = points[:, :d], points[:, d:]
    logw = -math.log(spec.m)
    joint, px, py = [], [], []
    for mk, rk in zip(spec.means, spec.rhos):
        u, v = x - mk, y - mk
        one_m = 1.0 - rk * rk
        q = (u * u - 2.0 * rk * u * v + v * v) / one_m
        joint.append(logw - d * _LOG2PI - 0.5 * d * math.log(one_m) - 0.5 * q.sum(axis=1))
        px.append(logw - 0.5 * d * _LOG2PI - 0.5 * (u * u).sum(axis=1))
        py.append(logw - 0.5 * d * _LOG2PI - 0.5 * (v * v).sum(axis=1))
    return (
        logsumexp(np.stack(joint, axis=1), axis=1),
        logsumexp(np.stack(px, axis=1), axis=1),
        logsumexp(np.stack(py, axis=1), axis=1),
    )


def mog_true_mi(
    spec: MogSpec, samples: int = 1_000_000, rng: np.random.Generator | None = None, chunk: int = 200_000
) -> tuple[float, float]:
    """Monte-Carlo MI with its standard error ``std / sqrt(S)``."""
    if samples < 1000:
        raise TooFewSamples("the MC oracle needs at least 1000 samples")
    rng = make_rng(0) if rng is None else rng
    vals = []
    left = samples
    while left:
        m = min(chunk, left)
        ds = gen_mog(spec, m, rng)
        lj, lx, ly = mog_logdensities(spec, ds.joined())
        vals.append(lj - lx - ly)
        left -= m
    v = np.concatenate(vals)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples))


@dataclass(frozen=True)
class SwissRollSpec:
    rho: float

    def __post_init__(self):
        _check_rho(self.rho)


def gen_swiss_roll(spec: SwissRollSpec, n: int, rng: np.random.Generator) -> PairedDataset:
    ex = rng.standard_normal(n)
    ey = spec.rho * ex + math.sqrt(1.0 - spec.rho**2) * rng.standard_normal(n)
    t = 1.5 * math.pi * (1.0 + 2.0 * ndtr(ex))
    x = np.stack([t * np.cos(t) / 21.0, t * np.sin(t) / 21.0], axis=1)
    return PairedDataset(x, ndtr(ey)[:, None])


def true_mi_swiss_roll(spec: SwissRollSpec) -> float:
    return gaussian_mi(1, spec.rho)


def shuffle_marginals(ds: PairedDataset, rng: np.random.Generator) -> PairedDataset:
    """Keep x, permute y: a sample from the product of the empirical marginals."""
    if ds.n < 2:
        raise TooFewSamples("shuffling needs at least two pairs")
    return PairedDataset(ds.x, ds.y[rng.permutation(ds.n)])


@dataclass(frozen=True)
class TaskSpec:
    """A named benchmark task, the unit the CLI and sweep harness work with."""

    task: str
    d: int = 1
    rho: float = 0.0
    transform: str = "identity"
    matrix_seed: int = MATRIX_SEED

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {sorted(TASKS)}")
        _check_rho(self.rho)
        if self.d < 1:
            raise ValueError("d must be >= 1")

    def model(self):
        if self.task == "gauss":
            return NonlinearGaussianSpec(self.d, self.rho, self.transform, self.matrix_seed)
        if self.task == "swissroll":
            return SwissRollSpec(self.rho)
        if self.task == "mog":
            return MogSpec(self.d, (0.0,), (self.rho,))
        return MogSpec(self.d, **(MOG1 if self.task == "mog1" else MOG2))

    def generate(self, n: int, rng: np.random.Generator) -> PairedDataset:
        m = self.model()
        if isinstance(m, NonlinearGaussianSpec):
            return gen_nonlinear_gaussian(m, n, rng)
        if isinstance(m, SwissRollSpec):
            return gen_swiss_roll(m, n, rng)
        return gen_mog(m, n, rng)

    @property
    def analytic(self) -> bool:
        return self.task in ("gauss", "swissroll")

    def true_mi(self, mc_samples: int = 1_000_000, rng: np.random.Generator | None = None) -> tuple[float, float]:
        """``(mi, std_error)``; the error is 0 for closed-form tasks."""
        m = self.model()
        if isinstance(m, NonlinearGaussianSpec):
            return true_mi_nonlinear_gaussian(m), 0.0
        if isinstance(m, SwissRollSpec):
            return true_mi_swiss_roll(m), 0.0
        return mog_true_mi(m, mc_samples, rng)


# "mog" is a single shared-mean component with dependence rho
TASKS = ("gauss", "mog", "mog1", "mog2", "swissroll")
