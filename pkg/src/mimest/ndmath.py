"""Small numerical core: factorizations, log-domain reductions and seeded sampling.

Matrices are plain float64 ``numpy.ndarray`` objects; random streams are
``numpy.random.Generator`` instances over the counter-based Philox bit
generator, created and split explicitly (there is no global RNG state).
"""
from __future__ import annotations

import ctypes
import sys
from typing import Sequence

import numpy as np

from .errors import EmptyInput, NotPositiveDefinite, ShapeMismatch

__all__ = [
    "as_matrix",
    "make_rng",
    "split_rng",
    "derive_seed",
    "cholesky",
    "nearest_correlation",
    "logsumexp",
    "logmeanexp",
    "sample_mvn",
    "tune_allocator",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array, raising otherwise."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` statistically independent child streams."""
    return rng.spawn(n)


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integers into a 64-bit seed.

    Used to give every sweep cell its own stream that depends only on the
    cell coordinates, never on execution order.
    """
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def cholesky(m, sym_tol: float = 1e-10) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``m = L @ L.T``.

    Raises
    ------
    NotPositiveDefinite
        If ``m`` has a non-positive pivot. Callers holding an estimated
        correlation matrix should pass it through :func:`nearest_correlation`.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"cholesky needs a square matrix, got {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > sym_tol:
        raise ValueError("cholesky needs a symmetric matrix")
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if np.any(np.diag(L) <= 0):
        raise NotPositiveDefinite("zero pivot")
    return L


def nearest_correlation(m, eig_floor: float = 1e-6, max_passes: int = 50) -> np.ndarray:
    """Project a symmetric matrix onto unit-diagonal matrices with eigenvalues >= eig_floor.

    One symmetrize / eigen-clip / rescale pass is enough for the near-valid
    matrices met in practice; the rescale can push the smallest eigenvalue a
    hair below the floor, so passes repeat until it sits on the floor (two or
    three at most).
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"nearest_correlation needs a square matrix, got {m.shape}")
    c = 0.5 * (m + m.T)
    for _ in range(max_passes):
        w, v = np.linalg.eigh(c)
        if w[0] < eig_floor:
            c = (v * np.maximum(w, eig_floor)) @ v.T
            c = 0.5 * (c + c.T)
        d = np.sqrt(np.diag(c))
        c = c / np.outer(d, d)
        np.fill_diagonal(c, 1.0)
        if np.linalg.eigvalsh(c)[0] >= eig_floor * (1.0 - 1e-12):
            break
    return c


def logsumexp(v, axis: int | None = None) -> np.ndarray | float:
    """``log(sum(exp(v)))`` along ``axis`` without overflow."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("logsumexp of an empty input")
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def logmeanexp(v, axis: int | None = None) -> np.ndarray | float:
    v = np.asarray(v, dtype=np.float64)
    n = v.size if axis is None else v.shape[axis]
    return logsumexp(v, axis=axis) - np.log(n)


def sample_mvn(
    rng: np.random.Generator,
    mean: Sequence[float] | np.ndarray,
    chol_lower,
    n: int,
) -> np.ndarray:
    """Draw ``n`` rows from ``N(mean, L L^T)`` given the Cholesky factor ``L``."""
    L = as_matrix(chol_lower, "chol_lower")
    if L.shape[0] != L.shape[1] or np.any(np.triu(L, 1) != 0):
        raise ShapeMismatch("chol_lower must be square lower-triangular")
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (L.shape[0],))
    z = rng.standard_normal((int(n), L.shape[0]))
    return mean + z @ L.T


def tune_allocator(threshold: int = 1 << 30) -> bool:
    """Keep large temporaries on the glibc heap instead of fresh ``mmap`` pages.

    Training allocates and frees the same few megabyte-sized arrays every
    step; above the default mmap threshold each of them costs page faults,
    which dominates small-network runtime (InfoNCE epochs run about twice as
    fast with this). Process-wide, so only entry points call it. Returns
    False where glibc ``mallopt`` is unavailable.
    """
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6")
    except OSError:
        return False
    m_trim_threshold, m_mmap_threshold = -1, -3
    return bool(libc.mallopt(m_mmap_threshold, threshold)) and bool(libc.mallopt(m_trim_threshold, 2 * threshold))
