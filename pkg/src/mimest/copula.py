"""Marginal-preserving Gaussian-copula reference distribution.

Each coordinate is Gaussianized through its empirical CDF (probit of
``rank / (n + 1)``); the latent scores give a correlation matrix. Sampling
runs the map backwards: draw latent Gaussians, turn each coordinate into a
rank ``ceil(n * Phi(eps))`` and read the value of that rank from the stored
sorted column. Every sampled value is therefore an observed data value, so
per-coordinate marginals are reproduced exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .errors import DegenerateDimension, NotPositiveDefinite, SingularCovariance, TooFewSamples
from .ndmath import cholesky, nearest_correlation
from .synth import PairedDataset

COPULA_FORMAT = "mimest-copula"
COPULA_FORMAT_VERSION = 1
MIN_FIT_SAMPLES = 100


def normal_scores(col: np.ndarray) -> np.ndarray:
    """Probit of average ranks over ``n + 1``; finite for every sample."""
    return ndtri(rankdata(col, method="average") / (len(col) + 1.0))


def rank_map(eps, table: np.ndarray):
    """``table[clamp(ceil(n * Phi(eps)), 1, n)]`` with 1-based ranks."""
    n = len(table)
    r = np.clip(np.ceil(n * ndtr(eps)), 1, n).astype(np.int64)
    out = table[r - 1]
    return out if np.ndim(eps) else float(out)


@dataclass(frozen=True)
class CopulaModel:
    tables: tuple[np.ndarray, ...]
    sigma: np.ndarray
    dx: int

    @property
    def dim(self) -> int:
        return len(self.tables)

    @property
    def dy(self) -> int:
        return self.dim - self.dx

    def product_sigma(self) -> np.ndarray:
        """Sigma with the x-y cross blocks zeroed."""
        s = self.sigma.copy()
        s[: self.dx, self.dx :] = 0.0
        s[self.dx :, : self.dx] = 0.0
        return s

    @cached_property
    def _chol_joint(self) -> np.ndarray:
        return cholesky(self.sigma)

    @cached_property
    def _chol_product(self) -> np.ndarray:
        return cholesky(self.product_sigma())

    def _sample(self, L: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal((n, self.dim)) @ L.T
        out = np.empty_like(eps)
        for j, table in enumerate(self.tables):
            out[:, j] = rank_map(eps[:, j], table)
        return out

    def sample_joint(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` rows of ``[x, y]`` from q(x, y)."""
        return self._sample(self._chol_joint, n, rng)

    def sample_product(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` rows of ``[x, y]`` from q(x) q(y)."""
        return self._sample(self._chol_product, n, rng)

    def gaussian_mi(self) -> float:
        """MI of the latent Gaussian, which equals the MI of q itself."""
        s, dx = self.sigma, self.dx
        ld = np.linalg.slogdet
        return 0.5 * (ld(s[:dx, :dx])[1] + ld(s[dx:, dx:])[1] - ld(s)[1])

    def to_dict(self) -> dict:
        return {
            "format": COPULA_FORMAT,
            "version": COPULA_FORMAT_VERSION,
            "dx": self.dx,
            "sigma": self.sigma.tolist(),
            "tables": [t.tolist() for t in self.tables],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CopulaModel":
        if d.get("format") != COPULA_FORMAT or d.get("version") != COPULA_FORMAT_VERSION:
            raise ValueError("not a mimest-copula v1 file")
        return cls(
            tables=tuple(np.asarray(t, dtype=np.float64) for t in d["tables"]),
            sigma=np.asarray(d["sigma"], dtype=np.float64),
            dx=int(d["dx"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "CopulaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_copula(ds: PairedDataset, eig_floor: float = 1e-6) -> CopulaModel:
    if ds.n < MIN_FIT_SAMPLES:
        raise TooFewSamples(f"copula fit needs at least {MIN_FIT_SAMPLES} pairs, got {ds.n}")
    xy = ds.joined()
    const = np.flatnonzero(np.ptp(xy, axis=0) == 0)
    if const.size:
        raise DegenerateDimension(f"constant coordinate(s) {const.tolist()}")
    eps = np.column_stack([normal_scores(xy[:, j]) for j in range(xy.shape[1])])
    sigma = nearest_correlation(eps.T @ eps / ds.n, eig_floor)
    tables = tuple(np.sort(xy[:, j]) for j in range(xy.shape[1]))
    return CopulaModel(tables, sigma, ds.dx)


@dataclass(frozen=True)
class GaussianReference:
    """Moment-matched Gaussian references: N(mean, cov) and the same with the
    cross-covariance zeroed. Not marginal-preserving for non-Gaussian data."""

    mean: np.ndarray
    cov: np.ndarray
    dx: int

    @cached_property
    def _chol_joint(self) -> np.ndarray:
        return cholesky(self.cov)

    @cached_property
    def _chol_product(self) -> np.ndarray:
        c = self.cov.copy()
        c[: self.dx, self.dx :] = 0.0
        c[self.dx :, : self.dx] = 0.0
        return cholesky(c)

    def _sample(self, L, n, rng):
        return self.mean + rng.standard_normal((n, len(self.mean))) @ L.T

    def sample_joint(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._sample(self._chol_joint, n, rng)

    def sample_product(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._sample(self._chol_product, n, rng)


def fit_gaussian_reference(ds: PairedDataset, eig_floor: float = 1e-6) -> GaussianReference:
    """Moment-match a Gaussian; a singular covariance is eigen-floored (relative to its scale)."""
    xy = ds.joined()
    mean = xy.mean(axis=0)
    cov = np.cov(xy, rowvar=False).reshape(xy.shape[1], xy.shape[1])
    cov = 0.5 * (cov + cov.T)
    try:
        cholesky(cov)
    except NotPositiveDefinite:
        sd = np.sqrt(np.clip(np.diag(cov), 0, None))
        if np.any(sd == 0):
            raise SingularCovariance("a coordinate has zero variance") from None
        cov = nearest_correlation(cov / np.outer(sd, sd), eig_floor) * np.outer(sd, sd)
    return GaussianReference(mean, cov, ds.dx)
