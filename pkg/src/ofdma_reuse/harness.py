"""Monte Carlo experiments: limit curves, optimal vs fixed-pivot, pivot sensitivity, convergence in K.

Every trial draws its users from a stream derived from ``(seed, K, trial)``,
so runs are reproducible and the same user draws are reused across rates.
Aggregates use compensated sums, and CSV floats carry 17 significant digits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .asymptotic import (AsymptoticScenario, SearchSpec, optimum_row, reuse_factor_sweep,
                         write_sweep_csv)
from .optimal import InfeasibleError, optimal_allocate, simplified_allocate
from .system import PathLossModel, SystemParams, generate_scenario, rate_per_user_nats

# one trial in this many is re-checked for rate tightness and band budgets
CHECK_EVERY = 100

KINDS = ("asymptotic_sweep", "compare", "sensitivity", "mse_convergence", "allocate")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "compare"
    system: SystemParams = field(default_factory=SystemParams)
    k_per_cell: list = field(default_factory=lambda: [25, 50])
    r_t_bps: list = field(default_factory=lambda: [2e6, 5e6, 10e6, 15e6, 20e6])
    trials: int = 200
    seed: int = 0
    alpha_grid: list = field(default_factory=lambda: [i / 10 for i in range(11)])
    output_dir: str = "results"
    # path-loss exponents swept by the limit curves
    exponents: list = field(default_factory=lambda: [2, 3])
    # initial bracket width of the per-trial alpha search for the optimal arm
    trial_alpha_step: float = 0.05
    d_grid_points: int = 26

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: must be one of {KINDS}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials: must be an integer >= 1")
        if not self.r_t_bps or any(not r > 0 for r in self.r_t_bps):
            raise ConfigError("r_t_bps: all rates must be positive")
        if not self.k_per_cell or any(int(k) != k or k < 1 for k in self.k_per_cell):
            raise ConfigError("k_per_cell: entries must be positive integers")
        if len(self.alpha_grid) < 3 or any(not 0 <= a <= 1 for a in self.alpha_grid):
            raise ConfigError("alpha_grid: need at least 3 values in [0, 1]")
        if not 0 < self.trial_alpha_step <= 0.5:
            raise ConfigError("trial_alpha_step: must lie in (0, 0.5]")
        if self.d_grid_points < 2:
            raise ConfigError("d_grid_points: must be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown config field")
        if "system" in d:
            try:
                d["system"] = SystemParams.from_dict(d["system"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"system: {exc}") from exc
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


def trial_seed(seed: int, k: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(k), int(trial)])


def _params_for(config: ExperimentConfig, exponent=None, alpha=None) -> SystemParams:
    p = config.system
    if exponent is not None and exponent != p.path_loss.exponent:
        p = replace(p, path_loss=PathLossModel.for_exponent(exponent))
    if alpha is not None:
        p = p.with_alpha(alpha)
    return p


def limit_optimum(r_t_bps: float, params: SystemParams, alpha_grid, spec: SearchSpec | None = None):
    sc = AsymptoticScenario.from_sum_rate(r_t_bps, params)
    return reuse_factor_sweep(sc, alpha_grid, spec=spec, r_t_bps=r_t_bps)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# -- limit curves --------------------------------------------------------------------------


def run_asymptotic(config: ExperimentConfig, out_dir=None):
    """alpha_opt, d_opt and Q_T against r_t for each path-loss exponent."""
    results = {}
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    for s in config.exponents:
        params = _params_for(config, s)
        sweeps = [limit_optimum(r, params, config.alpha_grid) for r in config.r_t_bps]
        results[s] = sweeps
        if out_dir is not None:
            write_sweep_csv(Path(out_dir) / f"asymptotic_s{s}.csv", [optimum_row(sw) for sw in sweeps])
            write_sweep_csv(Path(out_dir) / f"asymptotic_s{s}_curve.csv",
                            [row for sw in sweeps for row in sw.rows()])
    return results


# -- optimal vs simplified -------------------------------------------------------------------


@dataclass
class TrialRecord:
    r_t_bps: float
    k_per_cell: int
    trial: int
    q_opt: float
    alpha_opt_trial: float
    q_subopt: float
    q_naive: float
    feasible: bool


@dataclass
class CompareRow:
    r_t_bps: float
    k_per_cell: int
    mean_q_opt: float
    mean_q_subopt: float
    var_q_subopt: float
    q_t_asymptotic: float
    mean_gap: float
    trials: int
    failed: int


COMPARE_HEADER = ["r_t_bps", "k_per_cell", "mean_q_opt", "mean_q_subopt", "var_q_subopt",
                  "q_t_asymptotic", "mean_gap", "trials", "failed"]
TRIAL_HEADER = ["r_t_bps", "k_per_cell", "trial", "q_opt", "alpha_opt_trial", "q_subopt", "q_naive", "feasible"]


def best_over_alpha(cell_a, cell_b, params: SystemParams, center: float, start_distance=None,
                    step: float = 0.05, xtol: float = 2e-3):
    """min over alpha of the optimal total power; returns (q, alpha, result).

    Brackets the minimum by walking from ``center`` in ``step`` increments,
    then refines with Brent.  Infeasible or out-of-range alphas count as +inf.
    """
    cache = {}

    def q_of(a):
        a = round(float(a), 12)
        if a not in cache:
            r = None
            if 0.0 <= a <= 1.0:
                try:
                    r = optimal_allocate(cell_a, cell_b, params.with_alpha(a), start_distance=start_distance)
                except (InfeasibleError, ArithmeticError):
                    r = None
            cache[a] = (r.q_total if r is not None else math.inf, r)
        return cache[a][0]

    lo, mid, hi = center - step, center, center + step
    # walk downhill until the middle point is lowest
    for _ in range(int(1.0 / step) + 2):
        fl, fm, fh = q_of(lo), q_of(mid), q_of(hi)
        if fm <= fl and fm <= fh:
            break
        if fl < fh or (fl == fh and lo > 0):
            lo, mid, hi = lo - step, lo, mid
        else:
            lo, mid, hi = mid, hi, hi + step
    if math.isfinite(q_of(mid)) and math.isfinite(q_of(lo)) and math.isfinite(q_of(hi)):
        minimize_scalar(q_of, bracket=(lo, mid, hi), method="brent", options={"xtol": xtol / max(mid, xtol)})
    a_best = min(cache, key=lambda a: cache[a][0])
    q, r = cache[a_best]
    return q, (a_best if r is not None else math.nan), r


def verify_allocation(result, cells, params: SystemParams, rate_rtol=1e-6, band_tol=1e-9):
    """Re-check rate tightness and band budgets; raises ArithmeticError on violation."""
    for sol, cell in zip((result.cell_a, result.cell_b), cells):
        if not len(cell):
            continue
        target = cell.normalized_rates(params)
        got = sol.delivered_rates()
        if np.max(np.abs(got - target) / target) > rate_rtol:
            raise ArithmeticError(f"cell {cell.cell_id}: delivered rate misses its target")
        s1, s2 = math.fsum(sol.gamma1), math.fsum(sol.gamma2)
        if np.any(sol.gamma1 > 0) and abs(s1 - params.alpha) > band_tol:
            raise ArithmeticError(f"cell {cell.cell_id}: shared band budget violated")
        if np.any(sol.gamma2 > 0) and abs(s2 - params.protected_share) > band_tol:
            raise ArithmeticError(f"cell {cell.cell_id}: protected band budget violated")


def run_trial(r_t: float, k: int, trial: int, config: ExperimentConfig, alpha_opt: float, d_opt: float,
              params: SystemParams) -> TrialRecord:
    from .optimal import naive_benchmark

    rate = rate_per_user_nats(r_t, k)
    cell_a, cell_b = generate_scenario(k, rate, trial_seed(config.seed, k, trial), params)
    p_opt = params.with_alpha(alpha_opt)
    sub = None
    try:
        sub = simplified_allocate(cell_a, cell_b, d_opt, d_opt, p_opt)
        q_sub = sub.q_total
    except (InfeasibleError, ArithmeticError):
        q_sub = math.nan
    q_opt, a_opt, opt = best_over_alpha(cell_a, cell_b, params, alpha_opt, d_opt, config.trial_alpha_step)
    if trial % CHECK_EVERY == 0:
        if sub is not None:
            verify_allocation(sub, (cell_a, cell_b), p_opt)
        if opt is not None:
            verify_allocation(opt, (cell_a, cell_b), params.with_alpha(a_opt))
    q_naive = naive_benchmark(cell_a, cell_b, p_opt)
    ok = math.isfinite(q_opt) and math.isfinite(q_sub)
    return TrialRecord(r_t, k, trial, q_opt, a_opt, q_sub, q_naive, ok)


def _aggregate(records):
    ok = [r for r in records if r.feasible]
    n = len(ok)
    if n == 0:
        nan = math.nan
        return nan, nan, nan, nan
    qo = [r.q_opt for r in ok]
    qs = [r.q_subopt for r in ok]
    mo, ms = math.fsum(qo) / n, math.fsum(qs) / n
    var = math.fsum((q - ms) ** 2 for q in qs) / n
    gap = math.fsum((s - o) / o for s, o in zip(qs, qo)) / n
    return mo, ms, var, gap


def run_compare(config: ExperimentConfig, out_dir=None):
    """Mean optimal and fixed-pivot powers per (r_t, K), with per-trial records."""
    params = config.system
    rows, records = [], []
    for r_t in config.r_t_bps:
        sweep = limit_optimum(r_t, params, config.alpha_grid)
        if sweep.best is None:
            raise ArithmeticError(f"no feasible reuse factor at r_t = {r_t}")
        a_opt, d_opt, q_inf = sweep.alpha_opt, sweep.d_opt, sweep.best.q_t
        for k in config.k_per_cell:
            recs = [run_trial(r_t, k, t, config, a_opt, d_opt, params) for t in range(config.trials)]
            records.extend(recs)
            mo, ms, var, gap = _aggregate(recs)
            rows.append(CompareRow(r_t, k, mo, ms, var, q_inf, gap, config.trials,
                                   sum(not r.feasible for r in recs)))
    if out_dir is not None:
        _write_csv(Path(out_dir) / "compare.csv", COMPARE_HEADER, [list(asdict(r).values()) for r in rows])
        _write_csv(Path(out_dir) / "compare_trials.csv", TRIAL_HEADER, [list(asdict(r).values()) for r in records])
    return rows, records


# -- pivot sensitivity -----------------------------------------------------------------------


@dataclass
class SensitivityCurve:
    d_grid: np.ndarray
    mean_q: np.ndarray
    feasible_trials: np.ndarray
    trials: int
    d_opt: float
    alpha_opt: float

    @property
    def d_argmin(self):
        return float(self.d_grid[int(np.nanargmin(self.mean_q))])

    @property
    def grid_step(self):
        return float(self.d_grid[1] - self.d_grid[0])


def run_sensitivity(config: ExperimentConfig, out_dir=None) -> SensitivityCurve:
    """Mean fixed-pivot power against the pivot distance (first r_t and K of the config)."""
    params = config.system
    r_t, k = config.r_t_bps[0], config.k_per_cell[0]
    sweep = limit_optimum(r_t, params, config.alpha_grid)
    a_opt, d_opt = sweep.alpha_opt, sweep.d_opt
    p = params.with_alpha(a_opt)
    d_grid = np.linspace(params.epsilon_m, params.cell_radius_m, config.d_grid_points)
    sums = [[] for _ in d_grid]
    rate = rate_per_user_nats(r_t, k)
    for t in range(config.trials):
        cell_a, cell_b = generate_scenario(k, rate, trial_seed(config.seed, k, t), params)
        for i, d in enumerate(d_grid):
            try:
                sums[i].append(simplified_allocate(cell_a, cell_b, d, d, p).q_total)
            except (InfeasibleError, ArithmeticError):
                pass
    feas = np.array([len(s) for s in sums])
    # a pivot distance counts only if every trial was served
    mean_q = np.array([math.fsum(s) / len(s) if len(s) == config.trials else math.nan for s in sums])
    curve = SensitivityCurve(d_grid, mean_q, feas, config.trials, d_opt, a_opt)
    if out_dir is not None:
        _write_csv(Path(out_dir) / "sensitivity.csv", ["d_m", "mean_q_subopt", "feasible_trials", "trials"],
                   [(d, q, int(n), config.trials) for d, q, n in zip(d_grid, mean_q, feas)])
        _write_csv(Path(out_dir) / "sensitivity_summary.csv",
                   ["r_t_bps", "k_per_cell", "alpha_opt", "d_opt_m", "d_argmin_m", "grid_step_m"],
                   [(r_t, k, a_opt, d_opt, curve.d_argmin, curve.grid_step)])
    return curve


# -- convergence in K -------------------------------------------------------------------------


@dataclass
class MSEPoint:
    k_per_cell: int
    nmse: float
    stderr: float
    mean_q: float
    q_t_asymptotic: float
    trials: int
    failed: int


def run_mse_convergence(config: ExperimentConfig, out_dir=None):
    """Normalized mean squared error of the optimal finite-K power around its limit."""
    params = config.system
    r_t = config.r_t_bps[0]
    sweep = limit_optimum(r_t, params, config.alpha_grid)
    a_opt, d_opt, q_inf = sweep.alpha_opt, sweep.d_opt, sweep.best.q_t
    out = []
    for k in sorted(config.k_per_cell):
        rate = rate_per_user_nats(r_t, k)
        errs = []
        qs = []
        for t in range(config.trials):
            cell_a, cell_b = generate_scenario(k, rate, trial_seed(config.seed, k, t), params)
            q, _, _ = best_over_alpha(cell_a, cell_b, params, a_opt, d_opt, config.trial_alpha_step)
            if math.isfinite(q):
                qs.append(q)
                errs.append(((q - q_inf) / q_inf) ** 2)
        n = len(errs)
        nmse = math.fsum(errs) / n if n else math.nan
        se = math.sqrt(math.fsum((e - nmse) ** 2 for e in errs) / (n * max(n - 1, 1))) if n else math.nan
        out.append(MSEPoint(k, nmse, se, math.fsum(qs) / n if n else math.nan, q_inf, config.trials,
                            config.trials - n))
    if out_dir is not None:
        _write_csv(Path(out_dir) / "mse.csv",
                   ["k_per_cell", "nmse", "stderr", "mean_q_opt", "q_t_asymptotic", "trials", "failed"],
                   [list(asdict(p).values()) for p in out])
    return out


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    return ExperimentConfig.from_dict(doc)
