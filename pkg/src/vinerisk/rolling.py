"""Rolling-window risk forecasting engine.

The panel of T daily log returns is split into overlapping fitting windows:
marginal models are refitted every `gamma` days on the trailing `Gamma`
observations, dependence models every `kappa` days on the trailing `Psi`
rows of copula-scale data, and each forecast day t in Gamma+1..T is served
by exactly one window of each kind. Simulation forecasts the one-step-ahead
portfolio return distribution either unconditionally or conditionally on
one or two stress indices, and the per-day VaR/ES estimates are collected
into a RiskSeries ready for backtesting.

Determinism contract: every random draw derives its seed from
(seed, vine window, day, strategy, level, shard), and Monte Carlo sampling
always proceeds in fixed-size shards, so results are bit-identical for any
worker configuration.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .copulas import FAMILY_ORDER, SECOND_GIVEN_FIRST, h_inverse
from .distributions import ParameterError, pit
from .dvine import (
    fit_dvine,
    model_to_dict,
    sample_conditional_one,
    sample_conditional_two,
    sample_unconditional,
    select_order,
)
from .margins import FitError, filter_series, fit_arma_garch, ljung_box
from .risk import es_mc, es_mean, es_median, var_estimate

SHARD_SIZE = 2500
DIAGNOSTIC_LB_LAGS = (5, 10)
STRATEGY_KINDS = ("QuantileBased", "PriorResidual", "RealizedResidual")
UNCONDITIONAL = "Unconditional"
DEFAULT_MEASURES = ("VaR", "ES_mean")


class ConfigError(ValueError):
    """Invalid run parameters; carries the offending parameter's name."""

    def __init__(self, parameter: str, message: str):
        super().__init__(message)
        self.parameter = parameter


class WindowAlignmentWarning(UserWarning):
    """Window lengths do not tile the forecast range evenly."""


# ---------------------------------------------------------------------------
# window arithmetic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowPlan:
    """Rolling-window layout over a T-day panel.

    Gamma/gamma are the marginal fitting/usage window lengths, Psi/kappa the
    dependence-model ones. Days are 1-based throughout; ranges inclusive.
    """

    T: int
    Gamma: int
    gamma: int
    Psi: int
    kappa: int

    def __post_init__(self):
        for name in ("T", "Gamma", "gamma", "Psi", "kappa"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
                raise ConfigError(name, f"{name} must be an integer, got {val!r}")
            if val < 1:
                raise ConfigError(name, f"{name} must be >= 1, got {val}")
        if not self.Gamma < self.T:
            raise ConfigError("Gamma", f"Gamma must be < T ({self.Gamma} >= {self.T})")
        if not self.Psi <= self.Gamma:
            raise ConfigError("Psi", f"Psi must be <= Gamma ({self.Psi} > {self.Gamma})")
        if not self.gamma <= self.T - self.Gamma:
            raise ConfigError(
                "gamma", f"gamma must be <= T - Gamma ({self.gamma} > {self.T - self.Gamma})"
            )
        if not self.kappa <= self.gamma:
            raise ConfigError(
                "kappa", f"kappa must be <= gamma ({self.kappa} > {self.gamma})"
            )
        horizon = self.T - self.Gamma
        if horizon % self.gamma != 0:
            warnings.warn(
                f"forecast range {horizon} is not a multiple of gamma={self.gamma}; "
                "the last marginal window is truncated",
                WindowAlignmentWarning,
                stacklevel=2,
            )
        if self.gamma % self.kappa != 0:
            warnings.warn(
                f"gamma={self.gamma} is not a multiple of kappa={self.kappa}; "
                "vine windows straddle marginal usage boundaries",
                WindowAlignmentWarning,
                stacklevel=2,
            )

    @property
    def n_marginal_windows(self) -> int:
        return math.ceil((self.T - self.Gamma) / self.gamma)

    @property
    def n_vine_windows(self) -> int:
        return math.ceil((self.T - self.Gamma) / self.kappa)

    def marginal_window(self, t: int) -> int:
        self._check_day(t)
        return math.ceil((t - self.Gamma) / self.gamma)

    def vine_window(self, t: int) -> int:
        self._check_day(t)
        return math.ceil((t - self.Gamma) / self.kappa)

    def owner_marginal(self, v: int) -> int:
        """Marginal window whose quantities vine window v consumes."""
        if not 1 <= v <= self.n_vine_windows:
            raise ParameterError(f"vine window {v} out of range")
        return math.ceil(self.kappa * v / self.gamma)

    def marginal_fit_days(self, m: int) -> tuple:
        if not 1 <= m <= self.n_marginal_windows:
            raise ParameterError(f"marginal window {m} out of range")
        start = 1 + self.gamma * (m - 1)
        return start, start + self.Gamma - 1

    def marginal_span_days(self, m: int) -> tuple:
        """Fit window plus the usage days it serves (filter output span)."""
        start, _ = self.marginal_fit_days(m)
        return start, min(self.T, self.Gamma + self.gamma * m)

    def vine_fit_days(self, v: int) -> tuple:
        if not 1 <= v <= self.n_vine_windows:
            raise ParameterError(f"vine window {v} out of range")
        end = self.Gamma + self.kappa * (v - 1)
        return end - self.Psi + 1, end

    def vine_usage_days(self, v: int) -> tuple:
        if not 1 <= v <= self.n_vine_windows:
            raise ParameterError(f"vine window {v} out of range")
        start = self.Gamma + self.kappa * (v - 1) + 1
        return start, min(self.T, self.Gamma + self.kappa * v)

    def _check_day(self, t: int):
        if not self.Gamma < t <= self.T:
            raise ParameterError(f"day {t} outside the forecast range")


def plan_windows(T: int, Gamma: int, gamma: int, Psi: int, kappa: int) -> WindowPlan:
    """Validate window parameters and derive the rolling layout."""
    return WindowPlan(T=T, Gamma=Gamma, gamma=gamma, Psi=Psi, kappa=kappa)


# ---------------------------------------------------------------------------
# strategies and output types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditioningStrategy:
    """How the conditioning value of a stress index is chosen each day.

    QuantileBased fixes the copula-scale value at each level in `levels`;
    PriorResidual uses the index's previous-day copula-scale residual;
    RealizedResidual uses the same-day realized residual, which leaks
    information and is flagged as an oracle in run metadata.
    """

    kind: str
    levels: tuple = ()
    n_cond: int = 1

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError("strategy", f"unknown strategy kind {self.kind!r}")
        if self.n_cond not in (1, 2):
            raise ConfigError("n_cond", "n_cond must be 1 or 2")
        levels = tuple(float(a) for a in self.levels)
        if self.kind == "QuantileBased":
            if not levels:
                raise ConfigError("alpha_I", "QuantileBased needs at least one level")
            if any(not 0.0 < a < 1.0 for a in levels):
                raise ConfigError("alpha_I", "levels must lie in (0, 1)")
            if len(set(levels)) != len(levels):
                raise ConfigError("alpha_I", "levels must be distinct")
        elif levels:
            raise ConfigError("alpha_I", f"{self.kind} takes no levels")
        object.__setattr__(self, "levels", levels)

    @property
    def is_oracle(self) -> bool:
        return self.kind == "RealizedResidual"


@dataclass(frozen=True)
class RiskRow:
    date: str
    measure: str
    alpha: float
    strategy: str
    alpha_i: Optional[float]
    estimate: float
    realized_return: float
    cond_value_return_scale: Optional[float]


@dataclass(frozen=True)
class RiskSeries:
    """Per-day risk estimates over the forecast range plus run metadata."""

    rows: tuple
    meta: dict = field(default_factory=dict)

    def series(self, measure: str, alpha: float, strategy: Optional[str] = None,
               alpha_i: Optional[float] = None) -> tuple:
        """(dates, estimates, realized returns) for one measure/level slice."""
        dates, est, real = [], [], []
        for row in self.rows:
            if row.measure != measure or row.alpha != alpha:
                continue
            if strategy is not None and row.strategy != strategy:
                continue
            if alpha_i is not None and row.alpha_i != alpha_i:
                continue
            dates.append(row.date)
            est.append(row.estimate)
            real.append(row.realized_return)
        return dates, np.array(est), np.array(real)


def aggregate_portfolio(asset_samples, weights, raw_weights: bool = False) -> np.ndarray:
    """Weighted row sums; weights normalized to total 1 unless raw."""
    x = np.atleast_2d(np.asarray(asset_samples, dtype=float))
    w = _portfolio_weights(weights, x.shape[1], raw_weights)
    return x @ w


def _portfolio_weights(weights, d, raw_weights):
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != d:
        raise ConfigError("weights", f"need {d} weights, got {w.size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("weights", "weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ConfigError("weights", "at least one weight must be positive")
    return w if raw_weights else w / total


# ---------------------------------------------------------------------------
# parallel work items (top level so process pools can pickle them)
# ---------------------------------------------------------------------------


def _marginal_task(args):
    m, j, name, fit_series, span_series, family = args
    try:
        fit = fit_arma_garch(fit_series, family)
    except FitError as err:
        raise FitError(f"marginal window {m}, column {name!r}: {err}") from err
    mu, sigma = filter_series(fit, span_series)
    mu, sigma = mu[:-1], sigma[:-1]
    z = (span_series - mu) / sigma
    u = pit(z, fit.innovation)
    lb = ljung_box(z[: fit_series.size], DIAGNOSTIC_LB_LAGS)
    diag = {
        "mean_params": list(fit.mean_params),
        "vol_params": list(fit.vol_params),
        "innovation": type(fit.innovation).__name__,
        "loglik": fit.loglik,
        "ljung_box": {
            str(h): {"Q": q, "p_value": p} for h, q, p in lb.rows()
        },
    }
    return m, j, fit.innovation, mu, sigma, u, diag


def _shard_task(args):
    (model, u_inner, u_outer, n, entropy, asset_cols, mu, sigma, innovs, w) = args
    rng_seed = np.random.SeedSequence(entropy)
    if model.n_cond == 0:
        u = sample_unconditional(model, n, rng_seed)
    elif model.n_cond == 1:
        u = sample_conditional_one(model, u_inner, n, rng_seed)
    else:
        u = sample_conditional_two(model, u_outer, u_inner, n, rng_seed)
    r = np.empty((n, len(asset_cols)))
    for j, col in enumerate(asset_cols):
        r[:, j] = mu[j] + sigma[j] * innovs[j].quantile(u[:, col])
    return r @ w


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


def run_unconditional(panel, weights, plan: WindowPlan,
                      families: Sequence[str] = FAMILY_ORDER, S: int = 10_000,
                      alpha_levels: Sequence[float] = (0.05,), seed: int = 0, *,
                      measures: Sequence[str] = DEFAULT_MEASURES,
                      innovation_family: str = "skewed_student_t",
                      cutoff_depth: Optional[int] = None,
                      workers: tuple = (1, 1), dates: Optional[Sequence[str]] = None,
                      raw_weights: bool = False,
                      column_names: Optional[Sequence[str]] = None,
                      es_mc_draws: int = 1000) -> RiskSeries:
    """Rolling one-step-ahead unconditional VaR/ES over the forecast range."""
    return _run(panel, None, weights, plan, families, S, alpha_levels, (), None,
                seed, measures, innovation_family, cutoff_depth, workers, dates,
                raw_weights, column_names, es_mc_draws)


def run_conditional(panel, index_series, weights, plan: WindowPlan,
                    families: Sequence[str] = FAMILY_ORDER, S: int = 10_000,
                    alpha_levels: Sequence[float] = (0.05,),
                    strategies: Sequence[ConditioningStrategy] = (),
                    cutoff_depth: Optional[int] = None, seed: int = 0, *,
                    measures: Sequence[str] = DEFAULT_MEASURES,
                    innovation_family: str = "skewed_student_t",
                    workers: tuple = (1, 1), dates: Optional[Sequence[str]] = None,
                    raw_weights: bool = False,
                    column_names: Optional[Sequence[str]] = None,
                    es_mc_draws: int = 1000) -> RiskSeries:
    """Rolling VaR/ES conditional on one or two stress indices."""
    idx = np.asarray(index_series, dtype=float)
    if idx.ndim == 1:
        idx = idx[:, None]
    if idx.ndim != 2 or idx.shape[1] not in (1, 2):
        raise ConfigError("conditioning", "need 1 or 2 index columns")
    if not strategies:
        raise ConfigError("strategy", "need at least one conditioning strategy")
    strategies = tuple(strategies)
    for s in strategies:
        if s.n_cond != idx.shape[1]:
            raise ConfigError(
                "n_cond",
                f"strategy {s.kind} declares n_cond={s.n_cond} but "
                f"{idx.shape[1]} index column(s) were supplied",
            )
    return _run(panel, idx, weights, plan, families, S, alpha_levels, strategies,
                idx.shape[1], seed, measures, innovation_family, cutoff_depth,
                workers, dates, raw_weights, column_names, es_mc_draws)


def _run(panel, indices, weights, plan, families, S, alpha_levels, strategies,
         n_cond, seed, measures, innovation_family, cutoff_depth, workers,
         dates, raw_weights, column_names, es_mc_draws):
    x_assets = np.asarray(panel, dtype=float)
    if x_assets.ndim == 1:
        x_assets = x_assets[:, None]
    if x_assets.ndim != 2:
        raise ConfigError("data", "panel must be a T x d matrix")
    if not np.all(np.isfinite(x_assets)):
        raise ConfigError("data", "panel contains non-finite values")
    d = x_assets.shape[1]
    n_cond = 0 if indices is None else int(n_cond)
    if indices is None:
        x = x_assets
    else:
        if indices.shape[0] != x_assets.shape[0]:
            raise ConfigError("conditioning", "index series length differs from panel")
        if not np.all(np.isfinite(indices)):
            raise ConfigError("conditioning", "index series contains non-finite values")
        x = np.hstack([x_assets, indices])
    T, p = x.shape
    if plan.T != T:
        raise ConfigError("T", f"plan is for T={plan.T} but panel has {T} rows")
    w = _portfolio_weights(weights, d, raw_weights)
    if dates is None:
        dates = [str(t) for t in range(1, T + 1)]
    dates = [str(s) for s in dates]
    if len(dates) != T:
        raise ConfigError("data", "dates length differs from panel")
    if column_names is None:
        column_names = [f"col{j}" for j in range(p)]
    column_names = [str(s) for s in column_names]
    if len(column_names) != p:
        raise ConfigError("data", "column_names length differs from panel width")
    measures = tuple(measures)
    for mname in measures:
        if mname not in ("VaR", "ES_mean", "ES_median", "ES_mc"):
            raise ConfigError("measures", f"unknown measure {mname!r}")
    alpha_levels = tuple(float(a) for a in alpha_levels)
    if not alpha_levels or any(not 0.0 < a < 1.0 for a in alpha_levels):
        raise ConfigError("alpha", "alpha levels must lie in (0, 1)")
    if int(seed) < 0:
        raise ConfigError("seed", "seed must be a nonnegative integer")
    seed = int(seed)
    l1, l2 = int(workers[0]), int(workers[1])
    if l1 < 1 or l2 < 1:
        raise ConfigError("workers", "worker counts must be >= 1")
    n_workers = l1 * l2

    pool = ProcessPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        return _run_with_pool(
            x, d, n_cond, w, plan, families, S, alpha_levels, strategies, seed,
            measures, innovation_family, cutoff_depth, dates, column_names,
            es_mc_draws, pool, n_workers,
        )
    finally:
        if pool is not None:
            pool.shutdown()


def _pool_map(pool, n_workers, fn, tasks):
    tasks = list(tasks)
    if pool is None or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (n_workers * 4))
    return list(pool.map(fn, tasks, chunksize=chunk))


def _run_with_pool(x, d, n_cond, w, plan, families, S, alpha_levels, strategies,
                   seed, measures, innovation_family, cutoff_depth, dates,
                   column_names, es_mc_draws, pool, n_workers):
    T, p = x.shape

    # marginal pass: fit every column in every marginal window
    marg_tasks = []
    for m in range(1, plan.n_marginal_windows + 1):
        f_lo, f_hi = plan.marginal_fit_days(m)
        s_lo, s_hi = plan.marginal_span_days(m)
        for j in range(p):
            marg_tasks.append((
                m, j, column_names[j],
                x[f_lo - 1: f_hi, j].copy(),
                x[s_lo - 1: s_hi, j].copy(),
                innovation_family,
            ))
    marg = {}
    marg_diag = {}
    for m, j, innov, mu, sigma, u, diag in _pool_map(
            pool, n_workers, _marginal_task, marg_tasks):
        marg[(m, j)] = (innov, mu, sigma, u)
        marg_diag.setdefault(str(m), {})[column_names[j]] = diag

    # vine pass: one D-vine per vine window on the owner's copula data
    vine_models = {}
    vine_diag = {}
    map_fn = pool.map if pool is not None else None
    for v in range(1, plan.n_vine_windows + 1):
        m = plan.owner_marginal(v)
        span_lo, _ = plan.marginal_span_days(m)
        r_lo, r_hi = plan.vine_fit_days(v)
        if r_lo < span_lo:
            warnings.warn(
                f"vine window {v} asks for copula data before marginal window "
                f"{m} starts; clipping {span_lo - r_lo} row(s)",
                WindowAlignmentWarning,
                stacklevel=3,
            )
            r_lo = span_lo
        cols = []
        for j in range(p):
            _, _, _, u = marg[(m, j)]
            cols.append(u[r_lo - span_lo: r_hi - span_lo + 1])
        u_mat = np.column_stack(cols)
        order = select_order(u_mat, n_cond=n_cond, cutoff_depth=cutoff_depth)
        model = fit_dvine(u_mat, order, families, n_cond=n_cond, map_fn=map_fn)
        vine_models[v] = model
        vine_diag[str(v)] = {
            "order": [column_names[i] for i in order],
            "model": model_to_dict(model),
            "n_obs": int(u_mat.shape[0]),
        }

    # simulation pass: fixed-size shards keyed by (window, day, strategy, level)
    n_shards = math.ceil(S / SHARD_SIZE)
    shard_sizes = [min(SHARD_SIZE, S - i * SHARD_SIZE) for i in range(n_shards)]
    groups = []  # one per (day, strategy, level): metadata for assembly
    tasks = []
    for v in range(1, plan.n_vine_windows + 1):
        model = vine_models[v]
        m = plan.owner_marginal(v)
        span_lo, _ = plan.marginal_span_days(m)
        asset_cols = [model.order.index(j) for j in range(d)]
        inner_id = model.order[-1] if n_cond == 1 else (
            model.order[-2] if n_cond == 2 else None)
        outer_id = model.order[-1] if n_cond == 2 else None
        u_lo, u_hi = plan.vine_usage_days(v)
        for t in range(u_lo, u_hi + 1):
            at = t - span_lo  # filter arrays cover the span, day t included
            mu_t = np.array([marg[(m, j)][1][at] for j in range(p)])
            sigma_t = np.array([marg[(m, j)][2][at] for j in range(p)])
            innovs = [marg[(m, j)][0] for j in range(p)]
            realized = float(x[t - 1, :d] @ w)
            if n_cond == 0:
                strat_values = [(UNCONDITIONAL, 0, 0, None, None, None)]
            else:
                strat_values = _conditioning_values(
                    strategies, n_cond, model, marg, m, span_lo, t,
                    inner_id, outer_id)
            for strat_name, s_idx, l_idx, alpha_i, u_inner, u_outer in strat_values:
                cond_value = None
                if n_cond > 0:
                    cond_value = float(
                        mu_t[inner_id]
                        + sigma_t[inner_id] * innovs[inner_id].quantile(u_inner)
                    )
                groups.append({
                    "t": t, "strategy": strat_name, "alpha_i": alpha_i,
                    "realized": realized, "cond_value": cond_value,
                    "es_seed": int(np.random.SeedSequence(
                        (seed, v, t, s_idx, l_idx, 1 + n_shards)).generate_state(1)[0]),
                })
                for sh, n_sh in enumerate(shard_sizes):
                    tasks.append((
                        model, u_inner, u_outer, n_sh,
                        (seed, v, t, s_idx, l_idx, sh),
                        asset_cols, mu_t[:d], sigma_t[:d], innovs[:d], w,
                    ))

    shard_results = _pool_map(pool, n_workers, _shard_task, tasks)

    rows = []
    for g_idx, g in enumerate(groups):
        samples = np.concatenate(
            shard_results[g_idx * n_shards: (g_idx + 1) * n_shards])
        for mname in measures:
            for a in alpha_levels:
                if mname == "VaR":
                    val = var_estimate(samples, a)
                elif mname == "ES_mean":
                    val = es_mean(samples, a)
                elif mname == "ES_median":
                    val = es_median(samples, a)
                else:
                    val = es_mc(samples, a, n_mc=es_mc_draws, seed=g["es_seed"])
                rows.append(RiskRow(
                    date=dates[g["t"] - 1],
                    measure=mname,
                    alpha=a,
                    strategy=g["strategy"],
                    alpha_i=g["alpha_i"],
                    estimate=val,
                    realized_return=g["realized"],
                    cond_value_return_scale=g["cond_value"],
                ))

    meta = {
        "kind": "conditional" if n_cond else "unconditional",
        "n_cond": n_cond,
        "strategies": [
            {"kind": s.kind, "levels": list(s.levels), "oracle": s.is_oracle}
            for s in strategies
        ],
        "measures": list(measures),
        "alpha_levels": list(alpha_levels),
        "seed": seed,
        "S": int(S),
        "shard_size": SHARD_SIZE,
        "plan": {"T": plan.T, "Gamma": plan.Gamma, "gamma": plan.gamma,
                 "Psi": plan.Psi, "kappa": plan.kappa},
        "columns": list(column_names),
        "n_assets": d,
        "diagnostics": {"marginal_windows": marg_diag, "vine_windows": vine_diag},
    }
    return RiskSeries(rows=tuple(rows), meta=meta)


def _conditioning_values(strategies, n_cond, model, marg, m, span_lo, t,
                         inner_id, outer_id):
    """Per-strategy copula-scale conditioning values for forecast day t.

    Returns tuples (label, strategy index, level index, alpha_i, u_inner,
    u_outer). Residual-based strategies read the owner marginal window's
    copula-scale series; day t-1 is always inside its span (the first
    forecast day falls back to the last in-sample residual).
    """
    out = []
    for s_idx, strat in enumerate(strategies):
        if strat.kind == "QuantileBased":
            for l_idx, a_i in enumerate(strat.levels):
                u_inner = float(a_i)
                u_outer = None
                if n_cond == 2:
                    edge = model.edge(1, model.dim - 1)
                    u_outer = float(h_inverse(
                        edge, SECOND_GIVEN_FIRST, u_inner, u_inner))
                out.append((strat.kind, s_idx, l_idx, float(a_i), u_inner, u_outer))
        else:
            shift = 0 if strat.kind == "RealizedResidual" else 1
            u_inner = float(marg[(m, inner_id)][3][t - shift - span_lo])
            u_outer = None
            if n_cond == 2:
                u_outer = float(marg[(m, outer_id)][3][t - shift - span_lo])
            out.append((strat.kind, s_idx, 0, None, u_inner, u_outer))
    return out
