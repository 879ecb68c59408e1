"""Simulation harness: sweeps, trial aggregation, validation-based model selection.

Every simulation is a deterministic function of its config (master seed
included). Trials run in a bounded process pool; results are folded in
trial-index order and every trial runs with BLAS pinned to one thread, so the
CSV bytes do not depend on ``jobs``.

Test MSE is always measured against the noiseless target ``g``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from kreboot.baselines import (
    KRRConfig,
    LassoConfig,
    krr_fit,
    lasso_fit,
    least_squares_fit,
    spectral_norm_sq,
)
from kreboot.boosting import (
    ConstantAlpha,
    Dictionary,
    EpsilonBoosting,
    HarmonicAlpha,
    History,
    KReBooT,
    LogarithmicEll,
    Rboosting,
    RTboosting,
    Schedules,
    fit_dictionary,
)
from kreboot.datagen import DataGenConfig, Dataset, InputLaw, derive_seed, generate
from kreboot.errors import InputDomainError
from kreboot.kernels import RadialKernel, cross_gram

log = logging.getLogger(__name__)

# trajectory grid: every iteration up to DENSE_UNTIL, then every RECORD_EVERY-th
DENSE_UNTIL = 1000
RECORD_EVERY = 10

# validation grids for KRR's lambda and the lasso radius
PARAM_GRID = tuple(np.logspace(-4, 2, 30))

C0_GRID = tuple(np.logspace(np.log10(0.1), np.log10(80.0), 50))

BOOSTING_METHODS = ("kreboot", "rboosting", "rtboosting", "epsilon")
ALL_METHODS = ("kreboot", "rboosting", "rtboosting", "epsilon", "klasso", "krr")

# seed roles within a trial
TRAIN, VALIDATION, TEST = 0, 1, 2


@dataclass
class TrialResult:
    method: str
    params: dict[str, Any]
    test_mse: float
    risk_trajectory: list[float] | None = None
    l1_trajectory: list[float] | None = None
    wall_time: float = 0.0

    def __post_init__(self):
        if not self.test_mse >= 0:
            raise ValueError(f"test MSE must be nonnegative, got {self.test_mse}")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]
    trials_per_value: int = 20
    base: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.values:
            raise InputDomainError("sweep values must be non-empty")
        if self.trials_per_value < 1:
            raise InputDomainError("trials_per_value must be >= 1")


# --------------------------------------------------------------------------
# evaluation helpers


def test_mse(model, test_set: Dataset) -> float:
    """MSE of ``model`` against ``test_set.clean``.

    ``model`` is anything with ``predict(X)`` or an array of predictions.
    """
    pred = model.predict(test_set.X) if hasattr(model, "predict") else np.asarray(model, dtype=float)
    if pred.shape != test_set.clean.shape:
        raise InputDomainError(f"{pred.shape[0]} predictions for {test_set.clean.size} test points")
    d = pred - test_set.clean
    return float(d @ d) / d.size


test_mse.__test__ = False  # not a pytest test


def select_model(curve: Sequence[float], iterations: Sequence[int] | None = None) -> int:
    """``argmin`` of a validation curve with ties to the earliest entry.

    Returns the matching entry of ``iterations`` when given, else the position.
    """
    values = np.asarray(curve, dtype=float)
    if values.size == 0:
        raise InputDomainError("cannot select from an empty history")
    i = int(np.argmin(values))
    return int(iterations[i]) if iterations is not None else i


def select_from_history(history: History, monitor: str = "validation") -> int:
    """Index into ``history`` records minimizing the named monitor's MSE."""
    if monitor not in history.monitors:
        raise InputDomainError(f"history has no {monitor!r} monitor")
    return select_model(history.monitors[monitor])


def mean_std(values: Iterable[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator; 0 for one value)."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise InputDomainError("no values to aggregate")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def trajectory_kwargs() -> dict[str, int]:
    return {"record_every": RECORD_EVERY, "dense_until": DENSE_UNTIL}


def run_trials(fn: Callable, tasks: Sequence, jobs: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally in a process pool; order is preserved."""
    if jobs is None or jobs < 1:
        raise InputDomainError("jobs must be >= 1")
    if jobs == 1 or len(tasks) <= 1:
        return [_pinned(fn, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_pinned, [fn] * len(tasks), tasks))


def _pinned(fn, task):
    with threadpool_limits(limits=1):
        return fn(task)


def _dataset(trial_seed: int, role: int, m: int, noise: float, law: InputLaw) -> Dataset:
    return generate(DataGenConfig(m, noise, derive_seed(trial_seed, role), law))


def _boosting_policy(method: str, params: dict[str, Any]):
    if method == "kreboot":
        return KReBooT(), Schedules(HarmonicAlpha(), LogarithmicEll(params.get("c0", 0.5)))
    if method == "rboosting":
        return Rboosting(), Schedules(HarmonicAlpha(), LogarithmicEll(1.0))
    if method == "rtboosting":
        return RTboosting(params.get("rt_c0", 1.0)), Schedules(ConstantAlpha(0.0), LogarithmicEll(1.0))
    if method == "epsilon":
        return EpsilonBoosting(params.get("eps", 1e-2)), Schedules(ConstantAlpha(0.0), LogarithmicEll(1.0))
    raise InputDomainError(f"unknown boosting method {method!r}")


def write_rows(path, header: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
    """CSV with a fixed header; floats are written with ``repr`` (round-trip exact)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h, "")) for h in header])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# --------------------------------------------------------------------------
# Simulation I: c0 sweep


@dataclass(frozen=True)
class Sim1Config:
    c0_grid: SweepSpec = SweepSpec("c0", C0_GRID, 20)
    noise_levels: tuple[float, ...] = (1.0, 2.0)
    m: int = 500
    n_test: int = 500
    k_max: int = 2000
    seed: int = 0
    input_law: InputLaw = InputLaw.UNIFORM_BALL3


SIM1_HEADER = ("simulation", "method", "noise_variance", "m", "c0", "k", "seed", "trials", "test_mse_mean", "test_mse_std")


def _sim1_trial(task):
    cfg, trial = task
    ts = derive_seed(cfg.seed, trial)
    kernel = RadialKernel.wendland31()
    out = {}
    test = _dataset(ts, TEST, cfg.n_test, 0.0, cfg.input_law)
    for noise in cfg.noise_levels:
        train = _dataset(ts, TRAIN, cfg.m, noise, cfg.input_law)
        if not out:
            dictionary = Dictionary.build(train.X, kernel)
            K_test = cross_gram(test.X, train.X, kernel)
        curves = []
        for c0 in cfg.c0_grid.values:
            st = fit_dictionary(
                dictionary, train.y, Schedules(HarmonicAlpha(), LogarithmicEll(c0)), KReBooT(), cfg.k_max,
                monitors={"test": (K_test, test.clean)}, **trajectory_kwargs(),
            )
            curves.append(st.history.monitors["test"])
        out[noise] = (st.history.iteration, np.array(curves))
    return out


def simulation_1(cfg: Sim1Config = Sim1Config(), jobs: int = 1) -> list[dict[str, Any]]:
    """Mean test MSE over the (k, c0) grid for each noise level."""
    trials = cfg.c0_grid.trials_per_value
    results = run_trials(_sim1_trial, [(cfg, t) for t in range(trials)], jobs)
    rows = []
    for noise in cfg.noise_levels:
        iterations = results[0][noise][0]
        stack = np.stack([r[noise][1] for r in results])  # trial x c0 x k
        mean = stack.mean(axis=0)
        std = stack.std(axis=0, ddof=1) if trials > 1 else np.zeros_like(mean)
        for ci, c0 in enumerate(cfg.c0_grid.values):
            for ki, k in enumerate(iterations):
                rows.append({
                    "simulation": "sim1", "method": "kreboot", "noise_variance": float(noise), "m": cfg.m,
                    "c0": float(c0), "k": k, "seed": cfg.seed, "trials": trials,
                    "test_mse_mean": mean[ci, ki], "test_mse_std": std[ci, ki],
                })
    return rows


# --------------------------------------------------------------------------
# Simulation II: test MSE against training size


@dataclass(frozen=True)
class Sim2Config:
    m_grid: tuple[int, ...] = (300, 900, 1500, 4500)
    noise_levels: tuple[float, ...] = (1.0, 2.0)
    trials: int = 20
    n_test: int = 500
    c0: float = 0.5
    k_max: int | None = None  # None: max(2000, 2 m)
    seed: int = 0
    input_law: InputLaw = InputLaw.UNIFORM_BALL3

    def iterations_for(self, m: int) -> int:
        return self.k_max if self.k_max is not None else max(2000, 2 * m)


FULL_M_GRID = (300, 900, 1500, 4500, 12000)

SIM2_HEADER = ("simulation", "method", "noise_variance", "m", "c0", "k", "seed", "trials", "test_mse_mean", "test_mse_std")


def _sim2_trial(task):
    cfg, m, trial = task
    ts = derive_seed(cfg.seed, trial)
    kernel = RadialKernel.wendland31()
    test = _dataset(ts, TEST, cfg.n_test, 0.0, cfg.input_law)
    schedules = Schedules(HarmonicAlpha(), LogarithmicEll(cfg.c0))
    k_max = cfg.iterations_for(m)
    out = {}
    dictionary = K_test = None
    for noise in cfg.noise_levels:
        train = _dataset(ts, TRAIN, m, noise, cfg.input_law)
        if dictionary is None:
            dictionary = Dictionary.build(train.X, kernel)
            K_test = cross_gram(test.X, train.X, kernel)
        st = fit_dictionary(dictionary, train.y, schedules, KReBooT(), k_max, record_every=k_max)
        out[noise] = test_mse(K_test @ st.coefficients, test)
    return out


def simulation_2(cfg: Sim2Config = Sim2Config(), jobs: int = 1) -> list[dict[str, Any]]:
    """Mean test MSE at ``k_max`` for each training size and noise level.

    Noise levels are paired: the same inputs and standard-normal draws, scaled.
    """
    tasks = [(cfg, m, t) for m in cfg.m_grid for t in range(cfg.trials)]
    results = run_trials(_sim2_trial, tasks, jobs)
    rows = []
    for noise in cfg.noise_levels:
        for i, m in enumerate(cfg.m_grid):
            vals = [r[noise] for r in results[i * cfg.trials:(i + 1) * cfg.trials]]
            mean, std = mean_std(vals)
            rows.append({
                "simulation": "sim2", "method": "kreboot", "noise_variance": float(noise), "m": m,
                "c0": cfg.c0, "k": cfg.iterations_for(m), "seed": cfg.seed, "trials": cfg.trials,
                "test_mse_mean": mean, "test_mse_std": std,
            })
    return rows


# --------------------------------------------------------------------------
# Simulation III: method comparison table


@dataclass(frozen=True)
class Sim3Config:
    settings: tuple[tuple[int, float], ...] = ((300, 1.0), (300, 2.0), (1000, 1.0), (1000, 2.0))
    methods: tuple[str, ...] = ALL_METHODS
    trials: int = 20
    n_validation: int = 500
    n_test: int = 500
    k_max: int = 5000
    c0: float = 0.5
    rt_c0: float = 1.0
    eps: float = 1e-2
    lasso_max_iters: int = 2000
    lasso_tolerance: float = 1e-9
    seed: int = 0
    input_law: InputLaw = InputLaw.UNIFORM_BALL3

    def __post_init__(self):
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise InputDomainError(f"unknown methods {sorted(unknown)}")


SIM3_HEADER = ("simulation", "method", "m", "noise_variance", "seed", "trials", "test_mse_mean", "test_mse_std", "selected_mean")
SIM3_TRIAL_HEADER = ("simulation", "method", "m", "noise_variance", "seed", "trial", "selected", "test_mse")


def _grid_select(fit_one: Callable[[float, Any], tuple[np.ndarray, Any]], K_val, K_test, val: Dataset, test: Dataset):
    """Fit across ``PARAM_GRID`` (warm-started in grid order), pick by validation MSE."""
    best = None
    warm = None
    for p in PARAM_GRID:
        coef, warm = fit_one(p, warm)
        v = test_mse(K_val @ coef, val)
        if best is None or v < best[0]:
            best = (v, p, coef)
    _, p, coef = best
    return float(p), test_mse(K_test @ coef, test)


def _sim3_trial(task):
    cfg, m, noise, trial = task
    ts = derive_seed(cfg.seed, trial)
    kernel = RadialKernel.wendland31()
    train = _dataset(ts, TRAIN, m, noise, cfg.input_law)
    val = _dataset(ts, VALIDATION, cfg.n_validation, noise, cfg.input_law)
    test = _dataset(ts, TEST, cfg.n_test, 0.0, cfg.input_law)
    dictionary = Dictionary.build(train.X, kernel)
    G = dictionary.gram
    K_val = cross_gram(val.X, train.X, kernel)
    K_test = cross_gram(test.X, train.X, kernel)
    params = {"c0": cfg.c0, "rt_c0": cfg.rt_c0, "eps": cfg.eps}
    # validation MSE is taken against noisy y: the clean target is unknown at tuning time
    monitors = {"validation": (K_val, val.y), "test": (K_test, test.clean)}
    out = {}
    for method in cfg.methods:
        t0 = time.perf_counter()
        if method in BOOSTING_METHODS:
            policy, schedules = _boosting_policy(method, params)
            st = fit_dictionary(dictionary, train.y, schedules, policy, cfg.k_max, monitors=monitors, **trajectory_kwargs())
            i = select_from_history(st.history)
            selected, mse = float(st.history.iteration[i]), st.history.monitors["test"][i]
        elif method == "krr":
            selected, mse = _grid_select(
                lambda lam, _: (krr_fit(train, kernel, KRRConfig(lam), G=G), None), K_val, K_test, val, test
            )
        else:
            op_sq = spectral_norm_sq(G)

            def fit_lasso(L, warm):
                res = lasso_fit(
                    train, kernel, LassoConfig(L, cfg.lasso_max_iters, None, cfg.lasso_tolerance),
                    G=G, start=warm, keep_trace=False, gram_sq=dictionary.gram_sq, op_norm_sq=op_sq,
                )
                return res.coefficients, res.coefficients
            selected, mse = _grid_select(fit_lasso, K_val, K_test, val, test)
        out[method] = TrialResult(method, {"selected": selected}, mse, wall_time=time.perf_counter() - t0)
    return out


def simulation_3(cfg: Sim3Config = Sim3Config(), jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Mean and sample std of test MSE per (setting, method); also per-trial rows.

    ``selected`` is the validation-chosen iteration for boosting methods,
    lambda for KRR and the l1 radius for the lasso.
    """
    tasks = [(cfg, m, noise, t) for (m, noise) in cfg.settings for t in range(cfg.trials)]
    results = run_trials(_sim3_trial, tasks, jobs)
    table, per_trial = [], []
    for s, (m, noise) in enumerate(cfg.settings):
        chunk = results[s * cfg.trials:(s + 1) * cfg.trials]
        for method in cfg.methods:
            trs = [r[method] for r in chunk]
            mean, std = mean_std(t.test_mse for t in trs)
            table.append({
                "simulation": "sim3", "method": method, "m": m, "noise_variance": float(noise),
                "seed": cfg.seed, "trials": cfg.trials, "test_mse_mean": mean, "test_mse_std": std,
                "selected_mean": float(np.mean([t.params["selected"] for t in trs])),
            })
            for t, tr in enumerate(trs):
                per_trial.append({
                    "simulation": "sim3", "method": method, "m": m, "noise_variance": float(noise),
                    "seed": cfg.seed, "trial": t, "selected": tr.params["selected"], "test_mse": tr.test_mse,
                })
    return table, per_trial


def table_layout(table: list[dict]) -> tuple[list[str], list[dict[str, Any]]]:
    """Pivot ``simulation_3`` output into one row per setting and one column per method."""
    methods = list(dict.fromkeys(r["method"] for r in table))
    settings = list(dict.fromkeys((r["m"], r["noise_variance"]) for r in table))
    header = ["m", "noise_variance"] + methods
    rows = []
    for m, noise in settings:
        row: dict[str, Any] = {"m": m, "noise_variance": noise}
        for r in table:
            if (r["m"], r["noise_variance"]) == (m, noise):
                row[r["method"]] = f"{r['test_mse_mean']:.4f} (std {r['test_mse_std']:.4f})"
        rows.append(row)
    return header, rows


# --------------------------------------------------------------------------
# Simulations IV and V: trajectories


@dataclass(frozen=True)
class Sim45Config:
    methods: tuple[str, ...] = ("kreboot", "rboosting", "rtboosting")
    noise_levels: tuple[float, ...] = (1.0, 2.0)
    trials: int = 20
    m: int = 500
    n_test: int = 500
    k_max: int = 10000
    c0: float = 0.5
    rt_c0: float = 1.0
    seed: int = 0
    input_law: InputLaw = InputLaw.UNIFORM_BALL3


SIM45_HEADER = ("simulation", "method", "noise_variance", "m", "k", "seed", "trials", "test_mse_mean", "test_mse_std", "l1_mean", "l1_std", "ell_k")


def _sim45_trial(task):
    cfg, trial = task
    ts = derive_seed(cfg.seed, trial)
    kernel = RadialKernel.wendland31()
    test = _dataset(ts, TEST, cfg.n_test, 0.0, cfg.input_law)
    params = {"c0": cfg.c0, "rt_c0": cfg.rt_c0}
    out = {}
    dictionary = K_test = None
    for noise in cfg.noise_levels:
        train = _dataset(ts, TRAIN, cfg.m, noise, cfg.input_law)
        if dictionary is None:
            dictionary = Dictionary.build(train.X, kernel)
            K_test = cross_gram(test.X, train.X, kernel)
        for method in cfg.methods:
            policy, schedules = _boosting_policy(method, params)
            st = fit_dictionary(dictionary, train.y, schedules, policy, cfg.k_max,
                                monitors={"test": (K_test, test.clean)}, **trajectory_kwargs())
            out[(noise, method)] = (st.history.iteration, st.history.monitors["test"], st.history.l1)
    return out


def simulation_4_5(cfg: Sim45Config = Sim45Config(), jobs: int = 1) -> list[dict[str, Any]]:
    """Trial-averaged test-MSE and l1-norm series per method and noise level."""
    results = run_trials(_sim45_trial, [(cfg, t) for t in range(cfg.trials)], jobs)
    rows = []
    for noise in cfg.noise_levels:
        for method in cfg.methods:
            iterations = results[0][(noise, method)][0]
            mse = np.array([r[(noise, method)][1] for r in results])
            l1 = np.array([r[(noise, method)][2] for r in results])
            ddof = 1 if cfg.trials > 1 else 0
            for i, k in enumerate(iterations):
                rows.append({
                    "simulation": "sim45", "method": method, "noise_variance": float(noise), "m": cfg.m,
                    "k": k, "seed": cfg.seed, "trials": cfg.trials,
                    "test_mse_mean": mse[:, i].mean(), "test_mse_std": mse[:, i].std(ddof=ddof),
                    "l1_mean": l1[:, i].mean(), "l1_std": l1[:, i].std(ddof=ddof),
                    "ell_k": cfg.c0 * math.log(k + 1) if method == "kreboot" else "",
                })
    return rows


def series(rows: list[dict], method: str, noise: float, column: str) -> tuple[np.ndarray, np.ndarray]:
    """Extract ``(k, column)`` arrays for one method and noise level from trajectory rows."""
    sel = [r for r in rows if r["method"] == method and r["noise_variance"] == noise]
    return np.array([r["k"] for r in sel]), np.array([r[column] for r in sel], dtype=float)


# --------------------------------------------------------------------------
# numerical convergence rate


@dataclass(frozen=True)
class RateConfig:
    m: int = 50
    c0: float = 5.0
    noise_variance: float = 0.0
    window: tuple[int, int] = (100, 10_000)
    alpha: float | None = None  # None: 2 / (k + 2); otherwise a constant
    seed: int = 42
    input_law: InputLaw = InputLaw.UNIFORM_BALL3


@dataclass
class RateReport:
    slope: float
    intercept: float
    r_squared: float
    points: int
    optimum_risk: float
    first_unclipped: int | None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
            "points": self.points, "optimum_risk": self.optimum_risk,
            "first_unclipped": self.first_unclipped, "warnings": self.warnings,
        }


def loglog_fit(k, excess) -> tuple[float, float, float]:
    """Least-squares line through ``(log k, log excess)``: slope, intercept, R^2.

    R^2 is NaN for a perfectly flat series.
    """
    x = np.log(np.asarray(k, dtype=float))
    y = np.log(np.asarray(excess, dtype=float))
    if x.size < 2 or np.ptp(x) == 0:
        raise InputDomainError("rate fit needs at least two distinct iterations")
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - (slope * x + intercept)) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return float(slope), float(intercept), r2


def convergence_rate(cfg: RateConfig = RateConfig()) -> tuple[RateReport, History]:
    """Slope of log excess empirical risk against log k over ``cfg.window``.

    The excess is measured against the least-squares optimum over the whole
    dictionary.
    """
    lo, hi = cfg.window
    if not 1 <= lo < hi:
        raise InputDomainError(f"rate window {cfg.window} must satisfy 1 <= start < end")
    data = generate(DataGenConfig(cfg.m, cfg.noise_variance, cfg.seed, cfg.input_law))
    kernel = RadialKernel.wendland31()
    dictionary = Dictionary.build(data.X, kernel)
    G = dictionary.gram
    a_ls = least_squares_fit(data, kernel, G=G)
    r = G @ a_ls - data.y
    optimum = float(r @ r) / data.m
    alpha = HarmonicAlpha() if cfg.alpha is None else ConstantAlpha(cfg.alpha)
    st = fit_dictionary(dictionary, data.y, Schedules(alpha, LogarithmicEll(cfg.c0)), KReBooT(), hi)
    hist = st.history
    ks = np.array(hist.iteration)
    excess = np.array(hist.risk) - optimum
    warnings = []
    sel = (ks >= lo) & (ks <= hi)
    positive = sel & (excess > 0)
    if positive.sum() < sel.sum():
        warnings.append(f"dropped {int(sel.sum() - positive.sum())} iterations at or below the optimum")
    slope, intercept, r2 = loglog_fit(ks[positive], excess[positive])
    if abs(slope) < 1e-12:
        warnings.append("flat excess-risk trajectory: the iterate is not moving")
    return RateReport(slope, intercept, r2, int(positive.sum()), optimum, hist.first_unclipped(), warnings), hist
