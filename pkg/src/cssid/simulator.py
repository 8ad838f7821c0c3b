"""Data generation for constrained state-space identification experiments.

Simulates ``x_{k+1} = A x_k + B u_k + G w_k``, ``y_k = x_k + v_k`` (all
states measured) with seeded Gaussian noise, optionally switching the model
matrices along a schedule of time windows.  Ships the three benchmark
scenarios used throughout the test harness: a mass-conserving compartmental
system, its three-mode switching variant, and a five-compartment nitrogen
flow model with a persistent random input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .constraint_map import StateConstraint
from .exceptions import DimensionError
from .linalg import spectral_radius

# Validation records are drawn from a seed offset far outside the
# base_seed + run_index range used for identification data.
VALIDATION_SEED_OFFSET = 2**32


@dataclass(frozen=True)
class StateSpaceModel:
    """Plant matrices. ``B`` may have zero columns (autonomous system)."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        G = np.asarray(self.G, dtype=float).reshape(n, -1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.G.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise levels and RNG seed.

    Process noise ``w ~ N(0, sigma_w^2 I_q)`` enters through ``G`` (effective
    covariance ``sigma_w^2 G G^T``, singular for constraint-compatible
    models); measurement noise ``v ~ N(0, sigma_v^2 I_n)`` is added to every
    state.  Draws are deterministic given ``seed``.
    """

    sigma_w: float
    sigma_v: float
    seed: int

    def __post_init__(self):
        if self.sigma_w < 0 or self.sigma_v < 0:
            raise ValueError("noise standard deviations must be non-negative")

    def Q(self, q: int) -> np.ndarray:
        return self.sigma_w**2 * np.eye(q)

    def R(self, n: int) -> np.ndarray:
        return self.sigma_v**2 * np.eye(n)


@dataclass(frozen=True)
class InputSpec:
    """White input ``u_k = mean + sigma * e_k`` with standard normal ``e_k``."""

    mean: float = 0.0
    sigma: float = 0.0


@dataclass
class Trajectory:
    """Simulated record: states ``x``, measurements ``y = x + v``, inputs ``u``.

    ``u`` is ``None`` for autonomous systems.  ``mode_schedule`` lists
    ``(start_index, model_index)`` pairs for switching runs.
    """

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray | None = None
    mode_schedule: list[tuple[int, int]] | None = None

    @property
    def N(self) -> int:
        return self.x.shape[0] - 1

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return 0 if self.u is None else self.u.shape[1]

    def mode_at(self, k: int) -> int:
        """Index of the model generating the transition from step ``k``."""
        if not self.mode_schedule:
            return 0
        idx = 0
        for start, m in self.mode_schedule:
            if k >= start:
                idx = m
        return idx


def simulate(models, x0, noise: NoiseSpec, N: int, inputs=None,
             mode_windows=None) -> Trajectory:
    """Run the state recursion for ``N`` steps from ``x0``.

    ``models`` is a single :class:`StateSpaceModel` or a list of them; in the
    latter case ``mode_windows`` gives the number of steps spent in each mode
    (must sum to ``N``).  ``inputs`` is an ``(N, p)`` array, an
    :class:`InputSpec` drawn from the same seeded generator, or ``None`` for
    autonomous models.

    The generator consumes, in order: the input draws (if an InputSpec),
    the process noise ``w`` and the measurement noise ``v``.  The noise
    arrays are always drawn, even at zero sigma, so records produced with
    and without noise from the same seed share the same input sequence.
    """
    single = isinstance(models, StateSpaceModel)
    mode_list = [models] if single else list(models)
    first = mode_list[0]
    n, p, q = first.n, first.p, first.q
    for m in mode_list[1:]:
        if (m.n, m.p, m.q) != (n, p, q):
            raise DimensionError("all modes must share the same (n, p, q) dimensions")

    if single or len(mode_list) == 1:
        windows = [N]
    else:
        if mode_windows is None or sum(mode_windows) != N:
            raise ValueError("mode_windows must be given and sum to N for switching runs")
        windows = list(mode_windows)
    starts = np.cumsum([0] + windows[:-1])
    schedule = [(int(s), i) for i, s in enumerate(starts)]
    mode_of_step = np.searchsorted(np.cumsum(windows), np.arange(N), side="right")

    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != n:
        raise DimensionError(f"x0 has length {x0.shape[0]}, expected n={n}")

    rng = np.random.default_rng(noise.seed)
    if isinstance(inputs, InputSpec):
        u = inputs.mean + inputs.sigma * rng.standard_normal((N, p))
    elif inputs is None:
        if p != 0:
            raise DimensionError(f"model expects p={p} inputs but none were given")
        u = np.zeros((N, 0))
    else:
        u = np.asarray(inputs, dtype=float).reshape(N, -1)
        if u.shape[1] != p:
            raise DimensionError(f"inputs have {u.shape[1]} channels, expected p={p}")
    w = noise.sigma_w * rng.standard_normal((N, q))
    v = noise.sigma_v * rng.standard_normal((N + 1, n))

    x = np.empty((N + 1, n))
    x[0] = x0
    for k in range(N):
        m = mode_list[mode_of_step[k]]
        x[k + 1] = m.A @ x[k] + m.B @ u[k] + m.G @ w[k]

    return Trajectory(
        x=x,
        y=x + v,
        u=u if p else None,
        mode_schedule=schedule if len(mode_list) > 1 else None,
    )


# ---------------------------------------------------------------------------
# Scenario presets
# ---------------------------------------------------------------------------

@dataclass
class ScenarioSpec:
    """Everything needed to reproduce one identification experiment."""

    name: str
    modes: list[StateSpaceModel]
    constraint: StateConstraint
    sigma_w: float
    sigma_v: float
    x0_id: np.ndarray
    x0_val: np.ndarray
    N: int
    seed: int
    mode_windows: list[int] | None = None
    uncertain_constraint: StateConstraint | None = None
    input_spec: InputSpec | None = None
    forgetting: float | None = None
    mu: tuple[float, float] | None = None
    theta0: np.ndarray | None = None        # None -> zeros
    theta0_sigma: float | None = None       # if set, theta0 ~ N(0, sigma^2) per run
    P0_scale: float = 1e3
    meta: dict = field(default_factory=dict)

    @property
    def model(self) -> StateSpaceModel:
        if len(self.modes) != 1:
            raise ValueError(f"scenario '{self.name}' is time-varying; pick a mode explicitly")
        return self.modes[0]

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def p(self) -> int:
        return self.modes[0].p

    @property
    def n_theta(self) -> int:
        return self.n**2 + self.n * self.p


def simulate_scenario(spec: ScenarioSpec, kind: str = "id", seed=None,
                      with_noise: bool = True) -> Trajectory:
    """Simulate the scenario's identification or validation record.

    ``kind`` selects the initial state (``"id"`` or ``"val"``).  With
    ``with_noise=False`` the process and measurement noises are zeroed but
    the input sequence (when the scenario has one) is still drawn from the
    same stream, so noisy and noise-free records from one seed share inputs.
    """
    if kind not in ("id", "val"):
        raise ValueError("kind must be 'id' or 'val'")
    x0 = spec.x0_id if kind == "id" else spec.x0_val
    use_seed = spec.seed if seed is None else seed
    noise = NoiseSpec(
        sigma_w=spec.sigma_w if with_noise else 0.0,
        sigma_v=spec.sigma_v if with_noise else 0.0,
        seed=use_seed,
    )
    return simulate(
        spec.modes if len(spec.modes) > 1 else spec.modes[0],
        x0,
        noise,
        spec.N,
        inputs=spec.input_spec,
        mode_windows=spec.mode_windows,
    )


def _check_preset(spec: ScenarioSpec, rho_tol: float = 1e-9):
    for m in spec.modes:
        rho = spectral_radius(m.A)
        if rho > 1.0 + rho_tol:
            raise ValueError(
                f"scenario '{spec.name}': mode spectral radius {rho} exceeds 1"
            )
    return spec


_COMPARTMENTAL_A1 = np.array([
    [0.94, 0.028, 0.019],
    [0.038, 0.95, 0.001],
    [0.022, 0.022, 0.98],
])
_COMPARTMENTAL_G = np.array([
    [0.05, -0.03],
    [-0.02, 0.01],
    [-0.03, 0.02],
])


def scenario_compartmental_ti(estimate_b: bool = False, N: int = 200,
                              seed: int = 20260811) -> ScenarioSpec:
    """Three-compartment mass-conserving system, time-invariant dynamics.

    The input matrix is zero, so by default no input channel is carried and
    only ``A`` is estimated (9 parameters).  With ``estimate_b=True`` a unit
    white-noise input is wired to the (zero) input column so that the full
    ``[vec(A); vec(B)]`` machinery, including the input block of the
    parameter constraint, gets exercised; the estimated ``B`` should be
    close to zero.

    Carries the exactly known constraint (unit row sums, total mass 3) and
    the deliberately wrong variant used in the uncertain-prior study,
    together with its two relaxation weights.
    """
    if estimate_b:
        model = StateSpaceModel(_COMPARTMENTAL_A1, np.zeros((3, 1)), _COMPARTMENTAL_G)
        input_spec = InputSpec(mean=0.0, sigma=1.0)
    else:
        model = StateSpaceModel(_COMPARTMENTAL_A1, np.zeros((3, 0)), _COMPARTMENTAL_G)
        input_spec = None
    spec = ScenarioSpec(
        name="compartmental-ti",
        modes=[model],
        constraint=StateConstraint(S=[[1.0, 1.0, 1.0]], s=[3.0]),
        uncertain_constraint=StateConstraint(S=[[1.4, 0.9, 1.2]], s=[3.5]),
        sigma_w=1.0,
        sigma_v=0.1,
        x0_id=np.array([1.0, 1.0, 1.0]),
        x0_val=np.array([2.0, 1.0, 0.0]),
        N=N,
        seed=seed,
        input_spec=input_spec,
        mu=(5e3, 5e4),
        theta0=np.zeros(model.n**2 + model.n * model.p),
        P0_scale=1e3,
    )
    return _check_preset(spec)


def scenario_compartmental_tv(window: int = 200, seed: int = 20260812) -> ScenarioSpec:
    """Three-compartment system switching between three mass-conserving modes.

    Equal-length windows, one per mode, in fixed order.  Total mass is 50.
    Recursive estimators use forgetting factor 0.95, initial covariance
    1e4*I and a standard-normal random initial parameter vector drawn per
    realization.  The noise shaping matrix is shared with the time-invariant
    scenario (only the dynamics switch).
    """
    A2 = np.array([
        [0.84, 0.028, 0.019],
        [0.138, 0.85, 0.001],
        [0.022, 0.122, 0.98],
    ])
    A3 = np.array([
        [0.80, 0.018, 0.119],
        [0.178, 0.76, 0.201],
        [0.022, 0.222, 0.68],
    ])
    B = np.zeros((3, 0))
    modes = [StateSpaceModel(A, B, _COMPARTMENTAL_G) for A in (_COMPARTMENTAL_A1, A2, A3)]
    spec = ScenarioSpec(
        name="compartmental-tv",
        modes=modes,
        mode_windows=[window] * 3,
        constraint=StateConstraint(S=[[1.0, 1.0, 1.0]], s=[50.0]),
        sigma_w=10.0,
        sigma_v=1.0,
        x0_id=np.array([20.0, 20.0, 10.0]),
        x0_val=np.array([15.0, 10.0, 25.0]),
        N=3 * window,
        seed=seed,
        forgetting=0.95,
        theta0_sigma=1.0,
        P0_scale=1e4,
    )
    return _check_preset(spec)


def scenario_forest(N: int = 400, seed: int = 20260813) -> ScenarioSpec:
    """Five-compartment nitrogen-flow model with a persistent random input.

    Matrices are the published discrete-time values (four-decimal rounding;
    column sums of ``A`` are within 2e-4 of one, so the constraint holds
    only to that rounding level).  The entry ``A[4, 3]`` is 0.0005: the
    commonly printed 0.005 breaks mass conservation by 4.5e-3 and pushes the
    spectral radius above one, inconsistent with the stated properties of
    the model.

    The initial identification state follows the published affine formula
    with scale factor 1.5; its total is used as the authoritative
    constraint level ``s`` so the constraint is exactly consistent with the
    simulated data (the published rounded total is kept as metadata).
    """
    A = np.array([
        [0.9003, 0.0, 0.0005, 0.0, 0.0093],
        [0.0935, 0.8807, 0.0, 0.0, 0.0005],
        [0.0054, 0.0978, 0.6697, 0.0, 0.0],
        [0.0005, 0.0154, 0.2372, 0.9995, 0.0],
        [0.0002, 0.0060, 0.0927, 0.0005, 0.9902],
    ])
    B = np.array([[0.5505], [0.0282], [-0.2625], [-0.3003], [-0.0159]])
    G = np.array([
        [0.1220, 0.1634, 0.0249, -0.0383],
        [-0.0420, -0.0048, -0.1430, 0.0235],
        [0.1640, -0.0317, -0.0057, 0.0571],
        [-0.1871, -0.0877, 0.1697, -0.0098],
        [-0.0569, -0.0392, -0.0459, -0.0325],
    ])
    x0_id = (np.array([-3.5, -2.52, 0.0, 520.0, 26.5])
             + 1.5 * np.array([3.82, 316.0, 1.0, 576.0, 41.0]))
    spec = ScenarioSpec(
        name="forest",
        modes=[StateSpaceModel(A, B, G)],
        constraint=StateConstraint(S=[[1.0] * 5], s=[float(x0_id.sum())]),
        sigma_w=1.0,
        sigma_v=1.0,
        x0_id=x0_id,
        x0_val=np.array([72.2, 381.5, 101.5, 1264.0, 128.0]),
        N=N,
        seed=seed,
        input_spec=InputSpec(mean=1.0, sigma=0.1),
        theta0=np.zeros(30),
        P0_scale=1e3,
        meta={"sampling_period_years": 0.1, "published_s": 1.9472e3},
    )
    return _check_preset(spec)


BUILTIN_SCENARIOS = {
    "compartmental-ti": scenario_compartmental_ti,
    "compartmental-tv": scenario_compartmental_tv,
    "forest": scenario_forest,
}


# ---------------------------------------------------------------------------
# Scenario JSON and trajectory CSV round-trips
# ---------------------------------------------------------------------------

def scenario_to_dict(spec: ScenarioSpec) -> dict:
    out = {
        "name": spec.name,
        "B": spec.modes[0].B.tolist(),
        "G": spec.modes[0].G.tolist(),
        "S": spec.constraint.S.tolist(),
        "s": spec.constraint.s.tolist(),
        "sigma_w": spec.sigma_w,
        "sigma_v": spec.sigma_v,
        "x0_id": spec.x0_id.tolist(),
        "x0_val": spec.x0_val.tolist(),
        "N": spec.N,
        "seed": spec.seed,
    }
    if len(spec.modes) > 1:
        out["modes"] = [m.A.tolist() for m in spec.modes]
        out["mode_windows"] = list(spec.mode_windows)
    else:
        out["A"] = spec.modes[0].A.tolist()
    if spec.uncertain_constraint is not None:
        out["S_uncertain"] = spec.uncertain_constraint.S.tolist()
        out["s_uncertain"] = spec.uncertain_constraint.s.tolist()
    if spec.input_spec is not None:
        out["input_mean"] = spec.input_spec.mean
        out["sigma_u"] = spec.input_spec.sigma
    if spec.forgetting is not None:
        out["lambda"] = spec.forgetting
    if spec.mu is not None:
        out["mu"] = list(spec.mu)
    if spec.theta0 is not None:
        out["theta0"] = np.asarray(spec.theta0).tolist()
    if spec.theta0_sigma is not None:
        out["theta0"] = {"dist": "normal", "sigma": spec.theta0_sigma}
    out["P0_scale"] = spec.P0_scale
    if spec.meta:
        out["meta"] = spec.meta
    return out


def scenario_from_dict(data: dict) -> ScenarioSpec:
    B = np.asarray(data["B"], dtype=float)
    G = np.asarray(data["G"], dtype=float)
    if "modes" in data:
        modes = [StateSpaceModel(np.asarray(A, dtype=float), B, G) for A in data["modes"]]
        windows = [int(w) for w in data["mode_windows"]]
    else:
        modes = [StateSpaceModel(np.asarray(data["A"], dtype=float), B, G)]
        windows = None
    uncertain = None
    if "S_uncertain" in data:
        uncertain = StateConstraint(S=data["S_uncertain"], s=data["s_uncertain"])
    input_spec = None
    if "sigma_u" in data or "input_mean" in data:
        input_spec = InputSpec(mean=float(data.get("input_mean", 0.0)),
                               sigma=float(data.get("sigma_u", 0.0)))
    theta0, theta0_sigma = None, None
    t0 = data.get("theta0")
    if isinstance(t0, dict):
        theta0_sigma = float(t0["sigma"])
    elif t0 is not None:
        theta0 = np.asarray(t0, dtype=float)
    mu = tuple(float(v) for v in data["mu"]) if "mu" in data else None
    return ScenarioSpec(
        name=data["name"],
        modes=modes,
        mode_windows=windows,
        constraint=StateConstraint(S=data["S"], s=data["s"]),
        uncertain_constraint=uncertain,
        sigma_w=float(data["sigma_w"]),
        sigma_v=float(data["sigma_v"]),
        x0_id=np.asarray(data["x0_id"], dtype=float),
        x0_val=np.asarray(data["x0_val"], dtype=float),
        N=int(data["N"]),
        seed=int(data["seed"]),
        input_spec=input_spec,
        forgetting=float(data["lambda"]) if "lambda" in data else None,
        mu=mu,
        theta0=theta0,
        theta0_sigma=theta0_sigma,
        P0_scale=float(data.get("P0_scale", 1e3)),
        meta=dict(data.get("meta", {})),
    )


def load_scenario(path_or_name) -> ScenarioSpec:
    """Load a scenario JSON file, or instantiate a builtin by name."""
    name = str(path_or_name)
    import os

    if name in BUILTIN_SCENARIOS and not os.path.exists(name):
        return BUILTIN_SCENARIOS[name]()
    with open(name, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(spec: ScenarioSpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(spec), fh, indent=2)
        fh.write("\n")


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    return replace(spec, seed=int(seed))


def save_trajectory_csv(traj: Trajectory, path):
    """Write the record as CSV: k, x_1..x_n, y_1..y_n, u_1..u_p, mode.

    Floats use 17 significant digits so a read-back is bit-exact.  The input
    column of the final row is empty (there are N inputs for N+1 states).
    """
    n, p, N = traj.n, traj.p, traj.N
    header = (["k"] + [f"x_{i+1}" for i in range(n)] + [f"y_{i+1}" for i in range(n)]
              + [f"u_{i+1}" for i in range(p)] + ["mode"])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(N + 1):
            row = [str(k)]
            row += [format(val, ".17g") for val in traj.x[k]]
            row += [format(val, ".17g") for val in traj.y[k]]
            if p:
                row += [format(val, ".17g") for val in traj.u[k]] if k < N else [""] * p
            row.append(str(traj.mode_at(min(k, N - 1))))
            fh.write(",".join(row) + "\n")


def load_trajectory_csv(path) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    n = sum(1 for c in header if c.startswith("x_"))
    p = sum(1 for c in header if c.startswith("u_"))
    N = len(rows) - 1
    x = np.empty((N + 1, n))
    y = np.empty((N + 1, n))
    u = np.empty((N, p)) if p else None
    modes = []
    for k, row in enumerate(rows):
        x[k] = [float(v) for v in row[1:1 + n]]
        y[k] = [float(v) for v in row[1 + n:1 + 2 * n]]
        if p and k < N:
            u[k] = [float(v) for v in row[1 + 2 * n:1 + 2 * n + p]]
        modes.append(int(row[-1]))
    schedule = [(0, modes[0])]
    for k in range(1, N):
        if modes[k] != modes[k - 1]:
            schedule.append((k, modes[k]))
    return Trajectory(x=x, y=y, u=u,
                      mode_schedule=schedule if len(schedule) > 1 else None)
