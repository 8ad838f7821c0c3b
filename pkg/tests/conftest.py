import numpy as np
import pytest

from cssid import StateConstraint, StateSpaceModel


def project_onto_plane_conditions(S, A, B, G):
    """Force SA = S, SB = 0, SG = 0 by removing the row-space component."""
    S = np.atleast_2d(S)
    corr = S.T @ np.linalg.solve(S @ S.T, np.eye(S.shape[0]))
    A_c = A - corr @ (S @ A - S)
    B_c = B - corr @ (S @ B) if B.size else B
    G_c = G - corr @ (S @ G) if G.size else G
    return A_c, B_c, G_c


def random_compatible_system(rng, n=3, p=0, q=1, n_r=1, max_tries=500):
    """Random system satisfying the plane-invariance conditions, stable in-plane.

    Draws random matrices and projects them onto the conditions.  Any
    compatible system has ``n_r`` eigenvalues pinned at one (the conserved
    directions); draws whose remaining eigenvalues are not safely inside
    the unit circle are rejected so long simulations stay bounded.  Also
    returns a random initial state on the plane.
    """
    for _ in range(max_tries):
        S = rng.normal(size=(n_r, n))
        if np.linalg.norm(S) < 0.5:
            continue
        A = rng.normal(scale=0.45 / np.sqrt(n), size=(n, n))
        B = rng.normal(size=(n, p))
        G = rng.normal(size=(n, q))
        A_c, B_c, G_c = project_onto_plane_conditions(S, A, B, G)
        mags = np.sort(np.abs(np.linalg.eigvals(A_c)))[::-1]
        if np.max(np.abs(mags[:n_r] - 1.0)) > 1e-9 or (n > n_r and mags[n_r] > 0.95):
            continue
        s = rng.normal(size=n_r)
        x0 = S.T @ np.linalg.solve(S @ S.T, s) + (
            np.eye(n) - S.T @ np.linalg.solve(S @ S.T, S)) @ rng.normal(size=n)
        model = StateSpaceModel(A_c, B_c, G_c)
        return model, StateConstraint(S=S, s=s), x0
    raise RuntimeError("could not draw a stable compatible system")


@pytest.fixture(scope="session")
def ti_regression():
    """One seeded identification record of the compartmental scenario."""
    import cssid

    spec = cssid.scenario_compartmental_ti()
    traj = cssid.simulate_scenario(spec)
    return spec, cssid.build_regression(traj)
