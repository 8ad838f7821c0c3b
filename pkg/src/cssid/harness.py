"""Experiment orchestration: simulate, identify, validate, aggregate.

Monte Carlo studies redraw the identification noise every run (run ``i``
uses seed ``base_seed + i``), fit each configured estimator, free-run the
identified model on a shared validation record and accumulate per-state
RMSE.  The validation record is drawn once from seed
``base_seed + 2**32`` (outside the per-run range) and is noise-free: the
reference trajectory is the true model's deterministic response.

Per-run random initializations for recursive estimators come from the
dedicated stream ``default_rng([base_seed + i, 1])`` so results do not
depend on the order in which methods are listed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .constraint_map import vectorize_constraint
from .estimators import (
    ParamEstimate,
    build_regression,
    cls_batch,
    ls_batch,
    rcls_relaxed,
    rcls_run,
    rwcls_run,
    rwls_run,
    unvectorize,
)
from .exceptions import DimensionError
from .linalg import vec
from .simulator import VALIDATION_SEED_OFFSET, ScenarioSpec, simulate_scenario

HISTOGRAM_BINS = 30
DEFAULT_VALIDATION_STEPS = 200
# Per-mode validation horizon for switching studies.  Recursive estimates
# carry steady-state error at lambda < 1 and the constrained ones have an
# eigenvalue pinned at one, so long free runs amplify rare near-unit-circle
# realizations exponentially and the run mean stops reflecting typical
# behaviour; a short horizon keeps it representative.
DEFAULT_VALIDATION_STEPS_TV = 20

BATCH_METHODS = ("ls", "cls", "rcls-relaxed", "rcls", "true")
RECURSIVE_TV_METHODS = ("rwls", "rwcls")
KNOWN_METHODS = BATCH_METHODS + RECURSIVE_TV_METHODS


@dataclass(frozen=True)
class MethodSpec:
    """One estimator entry of a Monte Carlo configuration.

    ``constraint`` picks which of the scenario's constraints the estimator
    sees: the exactly known one or the deliberately uncertain variant.
    ``mu`` (relaxation weight) and ``lam`` (forgetting factor) default to
    the scenario values where those exist.
    """

    name: str
    mu: float | None = None
    lam: float | None = None
    constraint: str = "known"
    label: str | None = None

    def __post_init__(self):
        if self.name not in KNOWN_METHODS:
            raise ValueError(f"unknown method '{self.name}'; expected one of {KNOWN_METHODS}")
        if self.constraint not in ("known", "uncertain"):
            raise ValueError("constraint must be 'known' or 'uncertain'")

    @property
    def display(self) -> str:
        if self.label:
            return self.label
        parts = []
        if self.mu is not None:
            parts.append(f"mu={self.mu:g}")
        if self.lam is not None:
            parts.append(f"lam={self.lam:g}")
        if self.constraint == "uncertain":
            parts.append("uncertain")
        return self.name if not parts else f"{self.name}({','.join(parts)})"


def parse_method_spec(text: str) -> MethodSpec:
    """Parse ``name[:key=value...]`` strings, e.g. ``rcls-relaxed:mu=5e4``."""
    parts = text.strip().split(":")
    kwargs = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ValueError(f"malformed method option '{part}' in '{text}'")
        key, value = part.split("=", 1)
        key = key.strip()
        if key in ("mu", "lam", "lambda"):
            kwargs["lam" if key == "lambda" else key] = float(value)
        elif key == "constraint":
            kwargs["constraint"] = value.strip()
        elif key == "label":
            kwargs["label"] = value.strip()
        else:
            raise ValueError(f"unknown method option '{key}' in '{text}'")
    return MethodSpec(name=parts[0].strip(), **kwargs)


@dataclass
class MonteCarloConfig:
    """A Monte Carlo study: scenario, number of runs, estimators, seeds."""

    scenario: ScenarioSpec
    runs: int
    methods: list[MethodSpec]
    base_seed: int | None = None
    N_id: int | None = None
    N_val: int | None = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")

    @property
    def seed(self) -> int:
        return self.scenario.seed if self.base_seed is None else self.base_seed


@dataclass
class RmseSummary:
    """Per-method, per-mode, per-state Monte Carlo validation summary.

    ``rmse_mean``/``rmse_std`` have shape ``(methods, modes, states)``;
    ``std`` is the population standard deviation over the runs.  Histograms
    use  equal-width bins over the range pooled across methods for each
    (mode, state).  ``constraint_violation_max`` is NaN for unconstrained
    methods.  ``samples`` keeps the raw per-run RMSE values (NaN for failed
    runs).
    """

    labels: list[str]
    runs: int
    rmse_mean: np.ndarray
    rmse_std: np.ndarray
    samples: np.ndarray
    constraint_violation_max: np.ndarray
    failures: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    traj_var_mean: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return self.rmse_mean.shape[1]

    @property
    def n_states(self) -> int:
        return self.rmse_mean.shape[2]

    def mean(self, label: str, mode: int = 0) -> np.ndarray:
        return self.rmse_mean[self.labels.index(label), mode]

    def row_name(self, i: int, mode: int) -> str:
        if self.n_modes == 1:
            return self.labels[i]
        return f"{self.labels[i]}@mode{mode + 1}"


def _pooled_histograms(samples: np.ndarray):
    """Equal-width bin edges pooled over methods, counts per method."""
    n_methods, _, n_modes, n_states = samples.shape
    edges = np.empty((n_modes, n_states, HISTOGRAM_BINS + 1))
    counts = np.zeros((n_methods, n_modes, n_states, HISTOGRAM_BINS), dtype=int)
    for m in range(n_modes):
        for s in range(n_states):
            pooled = samples[:, :, m, s]
            pooled = pooled[np.isfinite(pooled)]
            if pooled.size == 0:
                lo, hi = 0.0, 1.0
            else:
                lo, hi = float(pooled.min()), float(pooled.max())
                if hi <= lo:
                    hi = lo + 1.0
            edges[m, s] = np.linspace(lo, hi, HISTOGRAM_BINS + 1)
            for i in range(n_methods):
                vals = samples[i, :, m, s]
                vals = vals[np.isfinite(vals)]
                counts[i, m, s], _ = np.histogram(vals, bins=edges[m, s])
    return edges, counts


def _summarize(labels, samples, violations, failures, traj_var=None, meta=None):
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(samples, axis=1)
        std = np.nanstd(samples, axis=1)
    edges, counts = _pooled_histograms(samples)
    return RmseSummary(
        labels=list(labels),
        runs=samples.shape[1],
        rmse_mean=mean,
        rmse_std=std,
        samples=samples,
        constraint_violation_max=violations,
        failures=failures,
        hist_edges=edges,
        hist_counts=counts,
        traj_var_mean=traj_var,
        meta=meta or {},
    )


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------

def free_run(estimate, x0, N: int, inputs=None) -> np.ndarray:
    """Simulate the identified model forward with no noise and no feedback.

    ``estimate`` needs ``A_hat``/``B_hat`` attributes (a
    :class:`~cssid.estimators.ParamEstimate`).  ``inputs`` is an ``(N, p)``
    array when the model has an input channel.
    """
    A = np.asarray(estimate.A_hat, dtype=float)
    B = getattr(estimate, "B_hat", None)
    n = A.shape[0]
    xs = np.empty((N + 1, n))
    xs[0] = np.asarray(x0, dtype=float).reshape(-1)
    if B is not None:
        B = np.asarray(B, dtype=float)
        if inputs is None:
            raise DimensionError("model has an input channel but no inputs were given")
        u = np.asarray(inputs, dtype=float).reshape(N, -1)
        for k in range(N):
            xs[k + 1] = A @ xs[k] + B @ u[k]
    else:
        for k in range(N):
            xs[k + 1] = A @ xs[k]
    return xs


def rmse(true_states: np.ndarray, est_states: np.ndarray) -> np.ndarray:
    """Per-state root-mean-square error between two equally long sequences."""
    x = np.asarray(true_states, dtype=float)
    xh = np.asarray(est_states, dtype=float)
    if x.shape != xh.shape:
        raise DimensionError(f"sequence shapes differ: {x.shape} vs {xh.shape}")
    if x.ndim == 1:
        x = x[:, None]
        xh = xh[:, None]
    return np.sqrt(np.mean((x - xh) ** 2, axis=0))


# ---------------------------------------------------------------------------
# Method dispatch
# ---------------------------------------------------------------------------

def _constraint_for(ms: MethodSpec, spec: ScenarioSpec):
    if ms.constraint == "uncertain":
        if spec.uncertain_constraint is None:
            raise ValueError(f"scenario '{spec.name}' has no uncertain constraint variant")
        return spec.uncertain_constraint
    return spec.constraint


def _theta_true(spec: ScenarioSpec) -> np.ndarray:
    m = spec.model
    parts = [vec(m.A)]
    if m.p:
        parts.append(vec(m.B))
    return np.concatenate(parts)


def _init_values(spec: ScenarioSpec, reg, theta0_run):
    if spec.theta0_sigma is not None:
        theta0 = theta0_run
    elif spec.theta0 is not None:
        theta0 = np.asarray(spec.theta0, dtype=float)
    else:
        theta0 = np.zeros(reg.n_theta)
    return theta0, spec.P0_scale * np.eye(reg.n_theta)


def fit_method(reg, ms: MethodSpec, spec: ScenarioSpec, theta0_run=None):
    """Fit one estimator on a built regression.

    Returns ``(estimate, worst_step_residual)``; the residual is ``None``
    for batch methods.
    """
    if ms.name == "ls":
        return ls_batch(reg), None
    if ms.name == "true":
        theta = _theta_true(spec)
        A, B = unvectorize(theta, reg.n, reg.p)
        return ParamEstimate(theta=theta, A_hat=A, B_hat=B, method="true"), None

    vc = vectorize_constraint(_constraint_for(ms, spec), reg.n, reg.p)
    if ms.name == "cls":
        return cls_batch(reg, vc), None
    if ms.name == "rcls-relaxed":
        mu = ms.mu
        if mu is None:
            if spec.mu is None:
                raise ValueError("rcls-relaxed needs a relaxation weight mu")
            mu = spec.mu[0]
        return rcls_relaxed(reg, vc, mu), None

    theta0, P0 = _init_values(spec, reg, theta0_run)
    if ms.name == "rcls":
        run = rcls_run(reg, vc, theta0, P0)
        return run.estimate, run.max_step_residual
    lam = ms.lam if ms.lam is not None else spec.forgetting
    if lam is None:
        raise ValueError(f"method '{ms.name}' needs a forgetting factor")
    if ms.name == "rwls":
        run = rwls_run(reg, theta0, P0, lam)
        return run.estimate, None
    run = rwcls_run(reg, vc, theta0, P0, lam)
    return run.estimate, run.max_step_residual


def _draw_theta0(spec: ScenarioSpec, run_seed: int):
    if spec.theta0_sigma is None:
        return None
    rng = np.random.default_rng([run_seed, 1])
    return spec.theta0_sigma * rng.standard_normal(spec.n_theta)


# ---------------------------------------------------------------------------
# Monte Carlo studies
# ---------------------------------------------------------------------------

def monte_carlo(config: MonteCarloConfig) -> RmseSummary:
    """Validation study for time-invariant scenarios.

    Each run draws fresh identification noise, fits every method and
    free-runs the identified model from the validation initial state over
    the shared validation inputs; RMSE is measured against the true model's
    noise-free validation trajectory.  Failed fits are counted and their
    samples left NaN.
    """
    spec = config.scenario
    if len(spec.modes) != 1:
        raise ValueError("monte_carlo handles single-mode scenarios; use monte_carlo_tv")
    base = config.seed
    N_id = config.N_id or spec.N
    N_val = config.N_val or DEFAULT_VALIDATION_STEPS

    val_traj = simulate_scenario(replace(spec, N=N_val), kind="val",
                                 seed=base + VALIDATION_SEED_OFFSET, with_noise=False)
    x_true, u_val = val_traj.x, val_traj.u

    labels = [ms.display for ms in config.methods]
    n = spec.n
    samples = np.full((len(labels), config.runs, 1, n), np.nan)
    violations = np.full(len(labels), np.nan)
    failures = np.zeros(len(labels), dtype=int)
    failure_reasons: list[str] = []

    id_spec = replace(spec, N=N_id)
    for i in range(config.runs):
        run_seed = base + i
        traj = simulate_scenario(id_spec, kind="id", seed=run_seed)
        reg = build_regression(traj)
        theta0_run = _draw_theta0(spec, run_seed)
        for j, ms in enumerate(config.methods):
            try:
                est, step_res = fit_method(reg, ms, spec, theta0_run)
            except Exception as exc:  # noqa: BLE001 - failures are data here
                failures[j] += 1
                failure_reasons.append(f"run {i}, {ms.display}: {exc}")
                continue
            xh = free_run(est, x_true[0], N_val, u_val)
            samples[j, i, 0] = rmse(x_true[1:], xh[1:])
            worst = step_res if step_res is not None else est.constraint_residual
            if worst is not None:
                violations[j] = worst if np.isnan(violations[j]) else max(violations[j], worst)

    return _summarize(labels, samples, violations, failures,
                      meta={"scenario": spec.name, "N_id": N_id, "N_val": N_val,
                            "base_seed": base, "failure_reasons": failure_reasons})


def monte_carlo_tv(config: MonteCarloConfig) -> RmseSummary:
    """Validation study for switching scenarios with recursive estimators.

    The estimators run once over the full switching record; the parameter
    vector held at each mode's final step is frozen and validated by a
    short free run from the validation initial state against that mode's
    true response.  Also accumulates the across-run variance of the
    validation trajectories (averaged over time) per method, mode and
    state.
    """
    spec = config.scenario
    if spec.mode_windows is None:
        raise ValueError("monte_carlo_tv needs a scenario with mode windows")
    for ms in config.methods:
        if ms.name not in RECURSIVE_TV_METHODS:
            raise ValueError(
                f"monte_carlo_tv supports {RECURSIVE_TV_METHODS}, got '{ms.name}'")
    base = config.seed
    N_val = config.N_val or DEFAULT_VALIDATION_STEPS_TV
    n = spec.n
    n_modes = len(spec.modes)
    snap_rows = [int(b) * n - 1 for b in np.cumsum(spec.mode_windows)]

    truths = []
    for m in spec.modes:
        est_true = ParamEstimate(theta=vec(m.A), A_hat=m.A, B_hat=None, method="true")
        truths.append(free_run(est_true, spec.x0_val, N_val))

    labels = [ms.display for ms in config.methods]
    samples = np.full((len(labels), config.runs, n_modes, n), np.nan)
    violations = np.full(len(labels), np.nan)
    failures = np.zeros(len(labels), dtype=int)
    failure_reasons: list[str] = []
    traj_sum = np.zeros((len(labels), n_modes, N_val, n))
    traj_sumsq = np.zeros_like(traj_sum)
    traj_count = np.zeros(len(labels), dtype=int)

    for i in range(config.runs):
        run_seed = base + i
        traj = simulate_scenario(spec, kind="id", seed=run_seed)
        reg = build_regression(traj)
        theta0_run = _draw_theta0(spec, run_seed)
        theta0, P0 = _init_values(spec, reg, theta0_run)
        for j, ms in enumerate(config.methods):
            lam = ms.lam if ms.lam is not None else spec.forgetting
            try:
                if ms.name == "rwls":
                    run = rwls_run(reg, theta0, P0, lam, snapshot_rows=snap_rows)
                else:
                    vc = vectorize_constraint(_constraint_for(ms, spec), reg.n, reg.p)
                    run = rwcls_run(reg, vc, theta0, P0, lam, snapshot_rows=snap_rows)
                    worst = run.max_step_residual
                    violations[j] = (worst if np.isnan(violations[j])
                                     else max(violations[j], worst))
            except Exception as exc:  # noqa: BLE001
                failures[j] += 1
                failure_reasons.append(f"run {i}, {ms.display}: {exc}")
                continue
            for m, row in enumerate(snap_rows):
                A_hat, _ = unvectorize(run.snapshots[row], n, 0)
                est = ParamEstimate(theta=run.snapshots[row], A_hat=A_hat,
                                    B_hat=None, method=ms.name.upper())
                xh = free_run(est, spec.x0_val, N_val)
                samples[j, i, m] = rmse(truths[m][1:], xh[1:])
                traj_sum[j, m] += xh[1:]
                traj_sumsq[j, m] += xh[1:] ** 2
            traj_count[j] += 1

    traj_var = np.full((len(labels), n_modes, n), np.nan)
    for j in range(len(labels)):
        if traj_count[j]:
            mean = traj_sum[j] / traj_count[j]
            var = traj_sumsq[j] / traj_count[j] - mean**2
            traj_var[j] = var.mean(axis=1)

    return _summarize(labels, samples, violations, failures, traj_var=traj_var,
                      meta={"scenario": spec.name, "N_val": N_val, "base_seed": base,
                            "mode_windows": list(spec.mode_windows),
                            "failure_reasons": failure_reasons})


# ---------------------------------------------------------------------------
# Bias study
# ---------------------------------------------------------------------------

@dataclass
class BiasStudy:
    """Empirical bias of the ordinary LS estimator over repeated realizations.

    ``bias`` is the mean estimate minus the true parameter; ``std_error``
    the standard error of that mean; a component is flagged when its bias
    exceeds three standard errors.
    """

    component: list[str]
    theta_true: np.ndarray
    mean_estimate: np.ndarray
    bias: np.ndarray
    std_error: np.ndarray
    flagged: np.ndarray
    runs: int
    sigma_v: float

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.flagged))


def _component_labels(n: int, p: int) -> list[str]:
    labels = [f"A[{i + 1},{j + 1}]" for j in range(n) for i in range(n)]
    labels += [f"B[{i + 1},{j + 1}]" for j in range(p) for i in range(n)]
    return labels


def bias_study(scenario: ScenarioSpec, runs: int, base_seed: int | None = None) -> BiasStudy:
    """Estimate the LS parameter bias at the scenario's noise levels.

    Fits ordinary LS on ``runs`` independent identification records and
    compares the empirical mean of the estimates with the true parameters.
    With measurement noise on the outputs the regressors correlate with the
    equation error, so a systematic offset is expected.
    """
    if len(scenario.modes) != 1:
        raise ValueError("bias_study needs a time-invariant scenario")
    base = scenario.seed if base_seed is None else base_seed
    theta_true = _theta_true(scenario)
    thetas = np.empty((runs, theta_true.size))
    for i in range(runs):
        traj = simulate_scenario(scenario, kind="id", seed=base + i)
        reg = build_regression(traj)
        thetas[i] = ls_batch(reg).theta
    mean = thetas.mean(axis=0)
    bias = mean - theta_true
    se = thetas.std(axis=0, ddof=1) / np.sqrt(runs)
    flagged = np.abs(bias) > 3.0 * se
    return BiasStudy(
        component=_component_labels(scenario.n, scenario.p),
        theta_true=theta_true,
        mean_estimate=mean,
        bias=bias,
        std_error=se,
        flagged=flagged,
        runs=runs,
        sigma_v=scenario.sigma_v,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def summary_to_csv(summary: RmseSummary, path):
    """Fixed-schema summary table, one row per method and state (and mode)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,state,rmse_mean,rmse_std,constraint_violation_max,failures\n")
        for i in range(len(summary.labels)):
            for m in range(summary.n_modes):
                for s in range(summary.n_states):
                    fh.write(",".join([
                        summary.row_name(i, m),
                        str(s + 1),
                        _fmt(summary.rmse_mean[i, m, s]),
                        _fmt(summary.rmse_std[i, m, s]),
                        _fmt(summary.constraint_violation_max[i]),
                        str(int(summary.failures[i])),
                    ]) + "\n")


def histograms_to_csv(summary: RmseSummary, path):
    """Binned RMSE counts, plot-ready: method,mode,state,bin_left,bin_right,count."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,mode,state,bin_left,bin_right,count\n")
        for i in range(len(summary.labels)):
            for m in range(summary.n_modes):
                for s in range(summary.n_states):
                    edges = summary.hist_edges[m, s]
                    for b in range(HISTOGRAM_BINS):
                        fh.write(",".join([
                            summary.labels[i], str(m + 1), str(s + 1),
                            _fmt(edges[b]), _fmt(edges[b + 1]),
                            str(int(summary.hist_counts[i, m, s, b])),
                        ]) + "\n")


def bias_to_csv(study: BiasStudy, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("component,true_value,mean_estimate,bias,std_error,flagged\n")
        for i, name in enumerate(study.component):
            fh.write(",".join([
                name,
                _fmt(study.theta_true[i]),
                _fmt(study.mean_estimate[i]),
                _fmt(study.bias[i]),
                _fmt(study.std_error[i]),
                str(bool(study.flagged[i])).lower(),
            ]) + "\n")


def save_estimate(est: ParamEstimate, path):
    data = {
        "method": est.method,
        "A_hat": est.A_hat.tolist(),
        "B_hat": est.B_hat.tolist() if est.B_hat is not None else None,
        "theta": est.theta.tolist(),
        "constraint_residual": est.constraint_residual,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def load_estimate(path) -> ParamEstimate:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    B = data.get("B_hat")
    return ParamEstimate(
        theta=np.asarray(data["theta"], dtype=float),
        A_hat=np.asarray(data["A_hat"], dtype=float),
        B_hat=np.asarray(B, dtype=float) if B is not None else None,
        method=data["method"],
        constraint_residual=data.get("constraint_residual"),
    )
