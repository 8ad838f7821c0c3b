"""Mapping between state equality constraints and parameter constraints.

A linear state-space model whose trajectories all satisfy ``S x_k = s`` must
have matrices obeying ``S A = S``, ``S B = 0`` and ``S G = 0``.  This module
checks those conditions on a candidate model and rewrites them, first as a
constraint on the stacked parameter matrix ``Theta = [A^T; B^T]`` and then,
via Kronecker products, as a standard linear constraint ``D theta = d`` on
the vectorized parameters ``theta = [vec(A); vec(B)]`` that any
equality-constrained least-squares routine can consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, RankDeficiencyError
from .linalg import numerical_rank, vec

DEFAULT_COMPATIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class StateConstraint:
    """Linear state equality constraint ``S x = s``.

    ``S`` has one row per scalar constraint; ``s`` is the constant right-hand
    side.  ``S`` must have full row rank (checked with a scale-relative
    singular-value tolerance).
    """

    S: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        if s.ndim != 1 or s.shape[0] != S.shape[0]:
            raise DimensionError(
                f"right-hand side s has length {s.shape}, expected ({S.shape[0]},) "
                f"to match the {S.shape[0]} rows of S"
            )
        rank = numerical_rank(S)
        if rank != S.shape[0]:
            raise RankDeficiencyError(
                f"constraint matrix S ({S.shape[0]}x{S.shape[1]}) has numerical rank {rank}; "
                "rows must be independent",
                rank,
            )
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "s", s)

    @property
    def n_r(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class MatrixParamConstraint:
    """Constraint ``Theta D1 = D2`` on the parameter matrix ``Theta = [A^T; B^T]``."""

    D1: np.ndarray
    D2: np.ndarray


@dataclass(frozen=True)
class VectorizedConstraint:
    """Constraint ``D theta = d`` on ``theta = [vec(A); vec(B)]``."""

    D: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class CompatibilityReport:
    """Max-norm residuals of the three compatibility conditions.

    ``compatible`` is true iff all of ``|SA - S|``, ``|SB|`` and ``|SG|``
    stay within the tolerance used for the check.
    """

    sa_residual: float
    sb_residual: float
    sg_residual: float
    compatible: bool


def check_compatibility(model, constraint: StateConstraint,
                        tol: float = DEFAULT_COMPATIBILITY_TOL) -> CompatibilityReport:
    """Check whether a model can keep trajectories on the constraint plane.

    Computes the max-norm residuals of ``S A = S``, ``S B = 0`` and
    ``S G = 0``.  All three vanish exactly if and only if every noise-driven
    trajectory started on the plane stays on it.  Pure function; ``model``
    only needs ``A``, ``B``, ``G`` attributes.
    """
    S = constraint.S
    A = np.asarray(model.A, dtype=float)
    if A.shape[1] != S.shape[1]:
        raise DimensionError(
            f"model state dimension n={A.shape[1]} does not match the "
            f"{S.shape[1]} columns of S"
        )
    B = np.asarray(model.B, dtype=float)
    G = np.asarray(model.G, dtype=float)
    sa = float(np.max(np.abs(S @ A - S)))
    sb = float(np.max(np.abs(S @ B))) if B.size else 0.0
    sg = float(np.max(np.abs(S @ G))) if G.size else 0.0
    return CompatibilityReport(
        sa_residual=sa,
        sb_residual=sb,
        sg_residual=sg,
        compatible=bool(max(sa, sb, sg) <= tol),
    )


def build_matrix_constraint(constraint: StateConstraint, p: int) -> MatrixParamConstraint:
    """Rewrite ``SA = S`` and ``SB = 0`` as ``Theta D1 = D2``.

    ``D1 = S^T`` and ``D2`` stacks ``S^T`` over a ``p x n_r`` zero block, so
    ``Theta D1 = D2`` holds exactly when the model is compatible with the
    state constraint (noise matrix aside).
    """
    if p < 0:
        raise ValueError("input dimension p must be non-negative")
    St = constraint.S.T.copy()
    D2 = np.vstack([St, np.zeros((p, constraint.n_r))]) if p else St.copy()
    return MatrixParamConstraint(D1=St, D2=D2)


def vectorize_constraint(constraint: StateConstraint, n: int, p: int) -> VectorizedConstraint:
    """Kronecker form of the parameter constraint, acting on ``[vec(A); vec(B)]``.

    ``D`` is block diagonal with blocks ``I_n (x) S`` and ``I_p (x) S``;
    ``d`` stacks ``vec(S)`` over zeros.  ``D theta = d`` is equivalent to
    ``Theta D1 = D2`` from :func:`build_matrix_constraint`.
    """
    if constraint.n != n:
        raise DimensionError(
            f"S has {constraint.n} columns but the model state dimension is n={n}"
        )
    if p < 0:
        raise ValueError("input dimension p must be non-negative")
    S = constraint.S
    D_a = np.kron(np.eye(n), S)
    if p:
        D = scipy.linalg.block_diag(D_a, np.kron(np.eye(p), S))
        d = np.concatenate([vec(S), np.zeros(constraint.n_r * p)])
    else:
        D, d = D_a, vec(S)
    return VectorizedConstraint(D=D, d=d)


def vec_kron_identity_check(M: np.ndarray, N: np.ndarray, O: np.ndarray) -> float:
    """Residual ``|vec(M N O) - (O^T (x) M) vec(N)|_max``.

    Test oracle for the vectorization identity that underpins
    :func:`vectorize_constraint` and the regression assembly; should be at
    floating-point level for any conformable triple.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    O = np.atleast_2d(np.asarray(O, dtype=float))
    if M.shape[1] != N.shape[0]:
        raise DimensionError(
            f"inner dimensions of M ({M.shape}) and N ({N.shape}) do not match"
        )
    if N.shape[1] != O.shape[0]:
        raise DimensionError(
            f"inner dimensions of N ({N.shape}) and O ({O.shape}) do not match"
        )
    lhs = vec(M @ N @ O)
    rhs = np.kron(O.T, M) @ vec(N)
    return float(np.max(np.abs(lhs - rhs)))
