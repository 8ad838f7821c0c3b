"""Batch and recursive least-squares estimators in the vectorized parameter space.

Six estimators operate on the stacked regression ``Z = Psi theta``:

* ``ls_batch``        -- ordinary least squares
* ``cls_batch``       -- equality-constrained LS (projector + offset form)
* ``rcls_relaxed``    -- penalty relaxation of the constraint, weight ``mu``
* ``rls_step``        -- recursive LS; with :func:`rls_init_constrained` the
                         estimates satisfy the constraint at every step
* ``rwls``/``rwcls``  -- forgetting-factor recursion, optionally with an
                         explicit per-step projection onto a (possibly
                         time-varying) constraint

Batch solves use QR factorizations rather than explicit normal-equation
inverses; the closed-form expressions with ``(Psi^T Psi)^{-1}`` are the
mathematical definition, not the algorithm.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .constraint_map import VectorizedConstraint
from .exceptions import ConstraintSingularError, DimensionError, RankDeficiencyError
from .linalg import numerical_rank, unvec

FORGETTING_MIN = 0.5  # smaller factors blow up the covariance too fast to be useful


class IdentifiabilityWarning(UserWarning):
    """Data record too short for the parameters to be identifiable."""


@dataclass
class RegressionData:
    """Stacked regression built from one measured record.

    ``Psi`` (``N*n x n^2+n*p``) and ``Z`` (``N*n``) are the vectorized
    regressors/targets; ``X_mat`` (``N x n+p``) and ``Y_mat`` (``N x n``)
    are the equivalent matrix forms.  Row block ``k`` of ``Psi`` is
    ``[y_{k-1}^T kron I_n, u_{k-1}^T kron I_n]`` and the matching block of
    ``Z`` is ``y_k``.
    """

    Psi: np.ndarray
    Z: np.ndarray
    X_mat: np.ndarray
    Y_mat: np.ndarray
    N: int
    n: int
    p: int

    @property
    def n_theta(self) -> int:
        return self.n**2 + self.n * self.p


@dataclass
class ParamEstimate:
    """Estimated parameter vector and its matrix form.

    ``B_hat`` is ``None`` for autonomous models (p = 0).
    ``constraint_residual`` is ``max|D theta - d|`` when the estimator was
    given a constraint, else ``None``.
    """

    theta: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray | None
    method: str
    constraint_residual: float | None = None


@dataclass
class RecursiveState:
    """State of a recursive estimator: parameters, covariance, last gain."""

    theta: np.ndarray
    P: np.ndarray
    K_last: np.ndarray
    k: int = 0


@dataclass
class RecursiveRunResult:
    """Outcome of feeding a full record through a recursive estimator."""

    estimate: ParamEstimate
    final_state: RecursiveState
    snapshots: dict
    max_step_residual: float | None = None


def build_regression(traj) -> RegressionData:
    """Assemble the stacked regression from a trajectory's measured outputs.

    Accepts any object with ``y`` (``N+1 x n``) and optional ``u``
    (``N x p`` or ``None``).  Both the vectorized and the matrix forms are
    returned; they describe the same least-squares problem.
    """
    y = np.asarray(traj.y, dtype=float)
    u = getattr(traj, "u", None)
    if y.ndim != 2:
        raise DimensionError(f"y must be 2-D (N+1, n), got shape {y.shape}")
    N = y.shape[0] - 1
    n = y.shape[1]
    if N < 1:
        raise DimensionError("need at least two output samples to form a regression")
    if u is None:
        X = y[:-1]
        p = 0
    else:
        u = np.asarray(u, dtype=float)
        if u.ndim != 2 or u.shape[0] != N:
            raise DimensionError(
                f"u must have shape (N, p) = ({N}, p), got {u.shape}"
            )
        p = u.shape[1]
        X = np.hstack([y[:-1], u])
    if N < n + p:
        warnings.warn(
            f"record length N={N} is below the identifiability minimum {n + p}; "
            "batch solves will fail the rank check",
            IdentifiabilityWarning,
            stacklevel=2,
        )
    Psi = np.kron(X, np.eye(n))
    Y = y[1:]
    return RegressionData(Psi=Psi, Z=Y.ravel(), X_mat=X, Y_mat=Y, N=N, n=n, p=p)


def unvectorize(theta: np.ndarray, n: int, p: int):
    """Split ``theta = [vec(A); vec(B)]`` back into ``(A, B)``; ``B`` is None if p=0."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != n * n + n * p:
        raise DimensionError(
            f"theta has length {theta.size}, expected n^2 + n*p = {n * n + n * p}"
        )
    A = unvec(theta[: n * n], n, n)
    B = unvec(theta[n * n:], n, p) if p else None
    return A, B


def _estimate(theta, reg: RegressionData, method: str, residual=None) -> ParamEstimate:
    A, B = unvectorize(theta, reg.n, reg.p)
    return ParamEstimate(theta=theta, A_hat=A, B_hat=B, method=method,
                         constraint_residual=residual)


def _qr_solve(Psi, Z):
    Q, R = np.linalg.qr(Psi)
    return scipy.linalg.solve_triangular(R, Q.T @ Z), R


def _require_full_column_rank(Psi, what="Psi"):
    rank = numerical_rank(Psi)
    if rank != Psi.shape[1]:
        raise RankDeficiencyError(
            f"{what} has numerical rank {rank} < {Psi.shape[1]} columns; "
            "the least-squares problem is not identifiable",
            rank,
        )


def ls_batch(reg: RegressionData) -> ParamEstimate:
    """Ordinary least squares on the stacked regression, solved by QR."""
    _require_full_column_rank(reg.Psi)
    theta, _ = _qr_solve(reg.Psi, reg.Z)
    return _estimate(theta, reg, "LS")


def cls_batch(reg: RegressionData, vc: VectorizedConstraint) -> ParamEstimate:
    """Equality-constrained least squares: minimize the LS cost s.t. ``D theta = d``.

    Equivalent to projecting the LS solution onto the null space of ``D``
    and adding the offset that restores feasibility; computed from the QR
    factor of ``Psi`` so no Gram matrix is ever formed.  Raises when the
    constraint rows are redundant.
    """
    D, d = vc.D, vc.d
    if D.shape[1] != reg.n_theta:
        raise DimensionError(
            f"constraint has {D.shape[1]} columns, expected n_theta={reg.n_theta}"
        )
    rank_D = numerical_rank(D)
    if rank_D != D.shape[0]:
        raise RankDeficiencyError(
            f"D has numerical rank {rank_D} < {D.shape[0]} rows", rank_D)
    _require_full_column_rank(reg.Psi)
    theta_ls, R = _qr_solve(reg.Psi, reg.Z)
    # W = R^{-T} D^T, so W^T W = D (Psi^T Psi)^{-1} D^T
    W = scipy.linalg.solve_triangular(R.T, D.T, lower=True)
    M = W.T @ W
    try:
        cf = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise ConstraintSingularError(
            "D (Psi^T Psi)^{-1} D^T is singular: redundant constraint rows"
        ) from exc
    # theta_cls = theta_ls - L (D theta_ls - d), L = (Psi^T Psi)^{-1} D^T M^{-1}
    correction = scipy.linalg.solve_triangular(
        R, W @ scipy.linalg.cho_solve(cf, D @ theta_ls - d))
    theta = theta_ls - correction
    return _estimate(theta, reg, "CLS", residual=float(np.max(np.abs(D @ theta - d))))


def rcls_relaxed(reg: RegressionData, vc: VectorizedConstraint, mu: float) -> ParamEstimate:
    """Penalty relaxation: minimize ``|Z - Psi theta|^2 + mu |D theta - d|^2``.

    Solved as an augmented least-squares problem with rows
    ``sqrt(mu) D -> sqrt(mu) d``, whose normal equations are
    ``(Psi^T Psi + mu D^T D) theta = Psi^T Z + mu D^T d``.  At ``mu = 0``
    this is ordinary LS; as ``mu`` grows the solution approaches the hard
    constrained one.  Suited to uncertain constraints.
    """
    if mu < 0:
        raise ValueError("relaxation weight mu must be non-negative")
    D, d = vc.D, vc.d
    if D.shape[1] != reg.n_theta:
        raise DimensionError(
            f"constraint has {D.shape[1]} columns, expected n_theta={reg.n_theta}"
        )
    root = np.sqrt(mu)
    aug = np.vstack([reg.Psi, root * D])
    rhs = np.concatenate([reg.Z, root * d])
    rank = numerical_rank(aug)
    if rank != reg.n_theta:
        raise RankDeficiencyError(
            f"Psi^T Psi + mu D^T D is singular (numerical rank {rank} of "
            f"{reg.n_theta})", rank)
    theta, _ = _qr_solve(aug, rhs)
    return _estimate(theta, reg, "rCLS", residual=float(np.max(np.abs(D @ theta - d))))


# ---------------------------------------------------------------------------
# Recursive estimators
# ---------------------------------------------------------------------------

def null_space_projector(D: np.ndarray, weight: np.ndarray | None = None) -> np.ndarray:
    """Projector onto the null space of ``D``: ``I - W D^T (D W D^T)^{-1} D``.

    ``weight`` is an SPD matrix (identity if omitted); any choice yields an
    idempotent map with ``D P = 0``.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n_p = D.shape[1]
    WDt = D.T if weight is None else weight @ D.T
    M = D @ WDt
    try:
        sol = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "D does not have full row rank; projector undefined",
            numerical_rank(D)) from exc
    return np.eye(n_p) - WDt @ scipy.linalg.cho_solve(sol, D)


def constraint_offset(D: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Minimum-norm feasible point ``D^T (D D^T)^{-1} d`` of ``D theta = d``."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    try:
        sol = scipy.linalg.cho_factor(D @ D.T)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "D does not have full row rank; offset undefined",
            numerical_rank(D)) from exc
    return D.T @ scipy.linalg.cho_solve(sol, d)


def rls_init_constrained(theta0: np.ndarray, P0: np.ndarray,
                         vc: VectorizedConstraint) -> RecursiveState:
    """Project an initial guess so the RLS recursion preserves the constraint.

    Returns a state with ``theta = P_N theta0 + d_bar`` and ``P = P_N P0``
    where ``P_N`` is the (unweighted) null-space projector of ``D``.  The
    projected state satisfies ``D theta = d`` and ``D P = 0``, which is all
    the plain recursion needs to keep every subsequent estimate, gain and
    covariance aligned with the constraint.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    P0 = np.asarray(P0, dtype=float)
    n_p = theta0.shape[0]
    if P0.shape != (n_p, n_p):
        raise DimensionError(f"P0 must be {n_p}x{n_p}, got {P0.shape}")
    if vc.D.shape[1] != n_p:
        raise DimensionError(
            f"constraint has {vc.D.shape[1]} columns, expected {n_p}")
    scale = max(1.0, float(np.max(np.abs(P0))))
    if np.max(np.abs(P0 - P0.T)) > 1e-10 * scale:
        raise ValueError("P0 must be symmetric")
    if np.min(scipy.linalg.eigvalsh(P0)) < -1e-10 * scale:
        raise ValueError("P0 must be positive semidefinite")
    proj = null_space_projector(vc.D)
    theta_c = proj @ theta0 + constraint_offset(vc.D, vc.d)
    return RecursiveState(theta=theta_c, P=proj @ P0, K_last=np.zeros(n_p), k=0)


def _wls_update(theta, P, psi, z, lam):
    Ppsi = P @ psi
    K = Ppsi / (float(psi @ Ppsi) + lam)
    theta_new = theta + K * (float(z) - float(psi @ theta))
    P_new = (P - np.outer(K, psi @ P)) / lam
    P_new = 0.5 * (P_new + P_new.T)
    return theta_new, P_new, K


def rls_step(state: RecursiveState, psi_k: np.ndarray, z_k: float) -> RecursiveState:
    """One scalar recursive least-squares update (unit forgetting).

    Vector outputs are fed one scalar row at a time, in row order within
    each time step.  Functional: returns a fresh state.
    """
    psi = np.asarray(psi_k, dtype=float).reshape(-1)
    theta, P, K = _wls_update(state.theta, state.P, psi, z_k, 1.0)
    return RecursiveState(theta=theta, P=P, K_last=K, k=state.k + 1)


def _check_forgetting(lam: float):
    if not FORGETTING_MIN <= lam <= 1.0:
        raise ValueError(
            f"forgetting factor {lam} outside [{FORGETTING_MIN}, 1]")


def rwls_step(state: RecursiveState, psi_k: np.ndarray, z_k: float,
              lam: float) -> RecursiveState:
    """One forgetting-factor recursive LS update (no constraint)."""
    _check_forgetting(lam)
    psi = np.asarray(psi_k, dtype=float).reshape(-1)
    theta, P, K = _wls_update(state.theta, state.P, psi, z_k, lam)
    return RecursiveState(theta=theta, P=P, K_last=K, k=state.k + 1)


def _project_onto_constraint(theta, P, D, d):
    PDt = P @ D.T
    try:
        cf = scipy.linalg.cho_factor(D @ PDt)
    except np.linalg.LinAlgError as exc:
        raise ConstraintSingularError(
            "D P D^T is singular; cannot project onto the constraint "
            "(degenerate covariance in the constrained directions)") from exc
    theta_c = theta - PDt @ scipy.linalg.cho_solve(cf, D @ theta - d)
    # one refinement pass keeps the residual at round-off even when P is
    # badly scaled by covariance wind-up
    return theta_c - PDt @ scipy.linalg.cho_solve(cf, D @ theta_c - d)


def rwcls_step(state: RecursiveState, psi_k: np.ndarray, z_k: float,
               Dk: np.ndarray, dk: np.ndarray, lam: float):
    """Forgetting-factor update followed by projection onto ``Dk theta = dk``.

    Returns ``(wls_state, theta_wcls)``: the unprojected state that
    propagates to the next step, and the constrained estimate produced as
    output.  The projection uses the updated covariance, so the constrained
    estimate satisfies the (possibly time-varying) constraint at every step.
    """
    _check_forgetting(lam)
    psi = np.asarray(psi_k, dtype=float).reshape(-1)
    Dk = np.atleast_2d(np.asarray(Dk, dtype=float))
    dk = np.asarray(dk, dtype=float).reshape(-1)
    theta, P, K = _wls_update(state.theta, state.P, psi, z_k, lam)
    theta_wcls = _project_onto_constraint(theta, P, Dk, dk)
    return RecursiveState(theta=theta, P=P, K_last=K, k=state.k + 1), theta_wcls


# ---------------------------------------------------------------------------
# Whole-record drivers
# ---------------------------------------------------------------------------

def _snapshot_set(snapshot_rows, total):
    if snapshot_rows is None:
        return {total - 1}
    return set(int(r) for r in snapshot_rows)


def rcls_run(reg: RegressionData, vc: VectorizedConstraint, theta0, P0,
             snapshot_rows=None) -> RecursiveRunResult:
    """Feed the whole record through constraint-preserving RLS.

    Initializes with :func:`rls_init_constrained`, then applies the plain
    recursion row by row.  Tracks the worst per-step constraint residual.
    """
    state = rls_init_constrained(theta0, P0, vc)
    snaps_at = _snapshot_set(snapshot_rows, reg.Psi.shape[0])
    snapshots = {}
    max_res = float(np.max(np.abs(vc.D @ state.theta - vc.d)))
    for j in range(reg.Psi.shape[0]):
        state = rls_step(state, reg.Psi[j], reg.Z[j])
        res = float(np.max(np.abs(vc.D @ state.theta - vc.d)))
        max_res = max(max_res, res)
        if j in snaps_at:
            snapshots[j] = state.theta.copy()
    est = _estimate(state.theta, reg, "RCLS",
                    residual=float(np.max(np.abs(vc.D @ state.theta - vc.d))))
    return RecursiveRunResult(estimate=est, final_state=state,
                              snapshots=snapshots, max_step_residual=max_res)


def rwls_run(reg: RegressionData, theta0, P0, lam: float,
             snapshot_rows=None) -> RecursiveRunResult:
    """Feed the whole record through forgetting-factor RLS (unconstrained)."""
    state = RecursiveState(theta=np.asarray(theta0, dtype=float).reshape(-1).copy(),
                           P=np.asarray(P0, dtype=float).copy(),
                           K_last=np.zeros(reg.n_theta))
    snaps_at = _snapshot_set(snapshot_rows, reg.Psi.shape[0])
    snapshots = {}
    for j in range(reg.Psi.shape[0]):
        state = rwls_step(state, reg.Psi[j], reg.Z[j], lam)
        if j in snaps_at:
            snapshots[j] = state.theta.copy()
    est = _estimate(state.theta, reg, "RWLS")
    return RecursiveRunResult(estimate=est, final_state=state, snapshots=snapshots)


def rwcls_run(reg: RegressionData, vc: VectorizedConstraint, theta0, P0,
              lam: float, snapshot_rows=None) -> RecursiveRunResult:
    """Feed the whole record through forgetting-factor RLS with projection.

    Snapshots hold the constrained output at the requested rows; the
    unconstrained state is what propagates.  ``max_step_residual`` is the
    worst ``max|D theta_wcls - d|`` seen across the record.
    """
    state = RecursiveState(theta=np.asarray(theta0, dtype=float).reshape(-1).copy(),
                           P=np.asarray(P0, dtype=float).copy(),
                           K_last=np.zeros(reg.n_theta))
    snaps_at = _snapshot_set(snapshot_rows, reg.Psi.shape[0])
    snapshots = {}
    max_res = 0.0
    theta_wcls = state.theta
    for j in range(reg.Psi.shape[0]):
        state, theta_wcls = rwcls_step(state, reg.Psi[j], reg.Z[j], vc.D, vc.d, lam)
        max_res = max(max_res, float(np.max(np.abs(vc.D @ theta_wcls - vc.d))))
        if j in snaps_at:
            snapshots[j] = theta_wcls.copy()
    est = _estimate(theta_wcls, reg, "RWCLS",
                    residual=float(np.max(np.abs(vc.D @ theta_wcls - vc.d))))
    return RecursiveRunResult(estimate=est, final_state=state,
                              snapshots=snapshots, max_step_residual=max_res)
