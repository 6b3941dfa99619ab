"""Experiment cells, regret accounting, scaling fits, and CSV/SVG output.

A cell is one (environment, algorithm, seed) triple.  Environments are
piecewise-linear comparators with a controlled second-difference budget
plus bounded noise; every cell reports regret against the generating
comparator and against the offline optimal at the matching budget (the
strongest comparator of the class, and the quantity scaling fits use).
Cells are pure functions of their task description, so serial and parallel
execution produce identical records.
"""

from __future__ import annotations

import csv
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines, envgen, flh, oracle
from .config import ConfigError, load_config

__all__ = [
    "AlgorithmSpec",
    "ExperimentConfig",
    "RegretRecord",
    "load_experiment_config",
    "run_cells",
    "fit_scaling_slope",
    "write_records_csv",
    "RECORD_COLUMNS",
]

WORKERS_ENV_VAR = "TRENDOCO_WORKERS"

RECORD_COLUMNS = [
    "cell_id", "algorithm", "n", "d", "budget", "seed",
    "total_loss", "comparator_loss", "offline_objective",
    "regret_comparator", "regret_offline",
    "max_abs_prediction", "weight_slack", "note", "status", "error",
    "wall_time_s",
]


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm column of the grid; ``params`` are algorithm-specific."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ("flh_trend", "flh_constant", "ogd"):
            raise ConfigError(f"unknown algorithm {self.name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    ns: tuple
    budgets: tuple
    seeds: tuple
    algorithms: tuple
    d: int = 1
    kinks: int = 8
    noise: float = 0.05
    oracle_tol: float = 1e-4
    oracle_inner_tol: float = 1e-7
    oracle_max_iter: int = 50_000

    def __post_init__(self):
        if not self.ns:
            object.__setattr__(self, "ns", tuple())
        for n in self.ns:
            if n < 8:
                raise ConfigError(f"every n must be at least 8, got {n}")
        if any(b < 0 for b in self.budgets):
            raise ConfigError("budgets must be nonnegative")
        if self.d < 1:
            raise ConfigError("d must be positive")


def load_experiment_config(path) -> ExperimentConfig:
    """Load and validate a config file before any cell runs."""
    raw = load_config(path)
    exp = raw.get("experiment", {})
    if not isinstance(exp, dict) or not exp:
        raise ConfigError("config needs an [experiment] table")

    def take(key, default=None, required=False):
        if key not in exp:
            if required:
                raise ConfigError(f"[experiment] is missing {key!r}")
            return default
        return exp[key]

    ns = take("ns", required=True)
    budgets = take("budgets", required=True)
    seeds = take("seeds", default=[0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    algorithms = []
    algo_tables = raw.get("algorithms", {})
    if not algo_tables:
        raise ConfigError("config needs at least one [algorithms.<name>] table")
    for name, params in algo_tables.items():
        if not isinstance(params, dict):
            raise ConfigError(f"[algorithms.{name}] must be a table")
        params = dict(params)
        kind = params.pop("kind", name)
        algorithms.append(AlgorithmSpec(name=kind, params=params))
    oracle_table = raw.get("oracle", {})
    return ExperimentConfig(
        ns=tuple(int(n) for n in ns),
        budgets=tuple(float(b) for b in budgets),
        seeds=tuple(int(s) for s in seeds),
        algorithms=tuple(algorithms),
        d=int(take("d", 1)),
        kinks=int(take("kinks", 8)),
        noise=float(take("noise", 0.05)),
        oracle_tol=float(oracle_table.get("tol", 1e-4)),
        oracle_inner_tol=float(oracle_table.get("inner_tol", 1e-7)),
        oracle_max_iter=int(oracle_table.get("max_iter", 50_000)),
    )


@dataclass
class RegretRecord:
    cell_id: str
    algorithm: str
    n: int
    d: int
    budget: float
    seed: int
    total_loss: float = np.nan
    comparator_loss: float = np.nan
    offline_objective: float = np.nan
    regret_comparator: float = np.nan
    regret_offline: float = np.nan
    max_abs_prediction: float = np.nan
    weight_slack: float = np.nan
    note: str = ""
    status: str = "ok"
    error: str = ""
    wall_time_s: float = 0.0


# -- environments ------------------------------------------------------------


def _make_environment(n: int, d: int, budget: float, seed: int,
                      kinks: int, noise: float):
    """Deterministic environment; infeasible draws retry derived seeds."""
    last = None
    for attempt in range(64):
        spec = envgen.PiecewiseLinearSpec(
            n=n, d=d, kinks=min(kinks, n - 2), budget=budget,
            seed=seed + 7919 * attempt,
        )
        try:
            return envgen.gen_piecewise_linear(spec, noise=noise)
        except envgen.InfeasibleSpecError as exc:
            last = exc
    raise envgen.InfeasibleSpecError(
        f"no feasible draw for n={n} budget={budget} seed={seed}: {last}"
    )


def _env_key(n, budget, seed):
    return (int(n), float(budget), int(seed))


def _solve_env_offline(args):
    (n, budget, seed), config = args
    w, losses = _make_environment(n, config.d, budget, seed,
                                  config.kinks, config.noise)
    comparator = np.array([losses[t].value(w[t]) for t in range(n)])
    solution = oracle.solve_offline(
        losses, oracle.VariationBudget(c_n=budget, n=n),
        tol=config.oracle_tol, inner_tol=config.oracle_inner_tol,
        max_iter=config.oracle_max_iter,
    )
    offline = np.array([losses[t].value(solution.u[t]) for t in range(n)])
    return _env_key(n, budget, seed), comparator, offline


def _ogd_grid(n: int) -> list:
    steps = set()
    for c in (0.5, 1.0, 2.0, 4.0):
        for a in (0.0, 0.25, 0.5):
            steps.add(min(max(c * n ** (-a), 1e-4), 0.95))
    return sorted(steps)


def _run_algorithm(spec: AlgorithmSpec, losses, d: int):
    """Return (total_loss, max_abs_prediction, weight_slack, note)."""
    sigma = float(spec.params.get("sigma", losses[0].constants.sigma))
    if spec.name in ("flh_trend", "flh_constant"):
        mode = "trend" if spec.name == "flh_trend" else "constant"
        config = flh.FlhConfig(
            sigma=sigma, d=d, epsilon=float(spec.params.get("epsilon", 2.0)),
            clip_c=float(spec.params.get("clip", 20.0)), covariate_mode=mode,
        )
        traj = flh.flh_run(config, losses)
        slack = abs(float(traj.ensemble.weights.sum()) - 1.0)
        return (float(traj.loss_values.sum()),
                float(np.abs(traj.predictions).max()), slack, f"sigma={sigma:.6g}")
    if spec.name == "ogd":
        steps = spec.params.get("steps") or _ogd_grid(len(losses))
        box = float(spec.params.get("box", 1.0))
        best = None
        for step in steps:
            traj = baselines.run_ogd(losses, step=float(step), box=box)
            total = float(traj.loss_values.sum())
            if best is None or total < best[0]:
                best = (total, float(np.abs(traj.predictions).max()), step)
        return best[0], best[1], np.nan, f"step={best[2]:.6g}"
    raise ValueError(f"unknown algorithm {spec.name!r}")


def _run_cell(args):
    (n, budget, seed), spec, config, comparator_loss, offline_objective = args
    cell_id = f"n{n}-b{budget:g}-s{seed}-{spec.name}"
    record = RegretRecord(cell_id=cell_id, algorithm=spec.name, n=n,
                          d=config.d, budget=budget, seed=seed)
    start = time.perf_counter()
    try:
        w, losses = _make_environment(n, config.d, budget, seed,
                                      config.kinks, config.noise)
        total, max_pred, slack, note = _run_algorithm(spec, losses, config.d)
        record.total_loss = total
        record.comparator_loss = comparator_loss
        record.offline_objective = offline_objective
        record.regret_comparator = total - comparator_loss
        record.regret_offline = total - offline_objective
        record.max_abs_prediction = max_pred
        record.weight_slack = slack
        record.note = note
    except Exception as exc:  # cell isolation: one failure must not stop the grid
        record.status = "error"
        record.error = f"{type(exc).__name__}: {exc}"
    record.wall_time_s = time.perf_counter() - start
    return record


def _worker_count(workers) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_cells(config: ExperimentConfig, out_dir=None, workers=None):
    """Execute the full grid; returns records in deterministic order."""
    env_keys = [
        _env_key(n, budget, seed)
        for n in config.ns for budget in config.budgets for seed in config.seeds
    ]
    workers = _worker_count(workers)

    env_info = {}
    env_args = [(key, config) for key in env_keys]
    if workers > 1 and len(env_args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, comp, obj in pool.map(_solve_env_offline, env_args):
                env_info[key] = (comp, obj)
    else:
        for arg in env_args:
            key, comp, obj = _solve_env_offline(arg)
            env_info[key] = (comp, obj)

    tasks = [
        (key, spec, config, env_info[key][0], env_info[key][1])
        for key in env_keys for spec in config.algorithms
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, tasks))
    else:
        records = [_run_cell(task) for task in tasks]
    records.sort(key=lambda r: (r.n, r.budget, r.seed, r.algorithm))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_records_csv(records, os.path.join(out_dir, "records.csv"))
    return records


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, col) for col in RECORD_COLUMNS])


def fit_scaling_slope(records):
    """OLS of log(median regret vs offline) on log n.

    Records must belong to one algorithm; nonpositive regrets are excluded
    with a warning.  Returns ``(slope, intercept, r_squared)``.
    """
    by_n = {}
    for r in records:
        if r.status != "ok":
            continue
        if not (r.regret_offline > 0):
            warnings.warn(
                f"excluding cell {r.cell_id}: nonpositive regret {r.regret_offline}"
            )
            continue
        by_n.setdefault(r.n, []).append(r.regret_offline)
    if len(by_n) < 4:
        raise ValueError(f"need at least 4 distinct horizons, have {len(by_n)}")
    ns = np.array(sorted(by_n))
    medians = np.array([np.median(by_n[n]) for n in ns])
    x = np.log(ns)
    y = np.log(medians)
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[1]), float(coef[0]), r2
