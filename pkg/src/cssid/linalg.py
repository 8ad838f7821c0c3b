"""Small linear-algebra helpers: column-major vectorization and rank tests."""

from __future__ import annotations

import numpy as np

# Relative singular-value threshold used for every numerical rank decision.
RANK_RTOL = 1e-10


def vec(M: np.ndarray) -> np.ndarray:
    """Column-major vectorization: stack the columns of ``M`` into one vector."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape ``v`` into ``rows x cols``, column-major.

    The result is C-contiguous so downstream matrix products are bitwise
    reproducible regardless of how the vector was produced.
    """
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape vector of length {v.size} into {rows}x{cols}")
    return np.ascontiguousarray(v.reshape((rows, cols), order="F"))


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank of ``M`` counting singular values >= rtol * sigma_max."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv >= rtol * sv[0]))


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))
