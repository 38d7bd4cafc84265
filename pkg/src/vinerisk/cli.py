"""Command-line front end: panel loading, JSON config, run orchestration.

Three subcommands:

    vinerisk run      --config cfg.json [--workers L1xL2] [--seed N] [--out DIR]
    vinerisk backtest --risk-series risk_series.csv --config cfg.json
    vinerisk validate --config cfg.json

`run` writes four files into the output directory: ``risk_series.csv`` (the
per-day estimates), ``backtests.json`` (coverage/calibration/comparative test
reports), ``diagnostics.json`` (marginal fits and serialized vine models) and
``manifest.json`` (config echo, seed, version, wall-clock). Exit status is 0
on success, 2 on a configuration or data problem, 3 on a fitting failure.
Partially written outputs are removed when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
import time
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .backtest import (
    STATUS_NOT_APPLICABLE,
    TestReport,
    comparative_backtest,
    conditional_calibration_test,
    exceedance_residual_test,
    lr_conditional_coverage,
    lr_independence,
    lr_unconditional_coverage,
    violation_process,
)
from .copulas import FAMILY_ORDER
from .distributions import ParameterError
from .margins import INNOVATION_FAMILIES, FitError
from .rolling import (
    ConditioningStrategy,
    ConfigError,
    RiskRow,
    RiskSeries,
    STRATEGY_KINDS,
    plan_windows,
    run_conditional,
    run_unconditional,
)

OUTPUT_NAMES = ("risk_series.csv", "backtests.json", "diagnostics.json",
                "manifest.json")
RISK_SERIES_HEADER = ("date", "measure", "alpha", "strategy", "alpha_I",
                      "estimate", "realized_return", "cond_value_return_scale")
# The measure set is fixed: every run emits all four estimators so the
# backtest stage always has a VaR column to pair each ES variant with.
RUN_MEASURES = ("VaR", "ES_mean", "ES_median", "ES_mc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3


class PanelError(ValueError):
    """Malformed return/price panel (bad dates, missing or non-numeric cells)."""


# ---------------------------------------------------------------------------
# panel ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnPanel:
    """Log-return panel: ISO dates, unique column names, dense float matrix."""

    dates: tuple
    names: tuple
    values: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def _parse_date(text: str, row: int) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        raise PanelError(f"row {row}: {text!r} is not an ISO-8601 date") from None


def load_panel(path, mode: str = "returns") -> ReturnPanel:
    """Read a CSV panel; `prices` mode converts to log returns ln(p_t/p_{t-1}).

    The first column must be named `date`. Rows are numbered from 1 (the line
    after the header) in error messages.
    """
    if mode not in ("returns", "prices"):
        raise PanelError(f"unknown panel mode {mode!r}")
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as err:
        raise PanelError(f"cannot read panel {path}: {err}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelError("panel file is empty") from None
        if not header or header[0] != "date":
            raise PanelError("first column must be named 'date'")
        names = tuple(h.strip() for h in header[1:])
        if not names:
            raise PanelError("panel has no value columns")
        if len(set(names)) != len(names):
            dupe = next(n for n in names if names.count(n) > 1)
            raise PanelError(f"duplicated column name {dupe!r}")
        dates, prev, rows = [], None, []
        for i, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise PanelError(
                    f"row {i}: {len(rec)} fields, expected {len(header)}")
            day = _parse_date(rec[0], i)
            if prev is not None:
                if day == prev:
                    raise PanelError(f"duplicated date {rec[0]}")
                if day < prev:
                    raise PanelError(
                        f"row {i}: date {rec[0]} does not increase")
            prev = day
            dates.append(rec[0])
            vals = np.empty(len(names))
            for j, cell in enumerate(rec[1:]):
                if cell.strip() == "":
                    raise PanelError(
                        f"missing value at row {i}, column {names[j]!r}")
                try:
                    vals[j] = float(cell)
                except ValueError:
                    raise PanelError(
                        f"non-numeric value {cell!r} at row {i}, "
                        f"column {names[j]!r}") from None
                if not math.isfinite(vals[j]):
                    raise PanelError(
                        f"non-finite value at row {i}, column {names[j]!r}")
            rows.append(vals)
        if not rows:
            raise PanelError("panel has no data rows")
        values = np.vstack(rows)
    if mode == "prices":
        if len(rows) < 2:
            raise PanelError("prices mode needs at least 2 rows")
        if np.any(values <= 0.0):
            i, j = map(int, np.argwhere(values <= 0.0)[0])
            raise PanelError(
                f"non-positive price at row {i + 1}, column {names[j]!r}")
        values = np.log(values[1:] / values[:-1])
        dates = dates[1:]
    return ReturnPanel(dates=tuple(dates), names=names, values=values)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Parsed and validated run configuration (strict JSON schema)."""

    data: str
    assets: tuple
    weights: tuple
    Gamma: int
    gamma: int
    Psi: int
    kappa: int
    S: int
    alpha_levels: tuple
    seed: int
    out: str
    mode: str = "returns"
    conditioning: tuple = ()
    alpha_I_levels: tuple = ()
    strategies: tuple = ()
    families: tuple = FAMILY_ORDER
    cutoff_depth: Optional[int] = None
    innovation_family: str = "skewed_student_t"
    workers: tuple = (1, 1)
    raw_weights: bool = False

    def echo(self) -> dict:
        doc = {}
        for f in fields(self):
            v = getattr(self, f.name)
            doc[f.name] = list(v) if isinstance(v, tuple) else v
        return doc


_REQUIRED_KEYS = ("data", "assets", "weights", "Gamma", "gamma", "Psi",
                  "kappa", "S", "alpha_levels", "seed", "out")
_OPTIONAL_KEYS = ("mode", "conditioning", "alpha_I_levels", "strategies",
                  "families", "cutoff_depth", "innovation_family", "workers",
                  "raw_weights")


def _want_int(doc, key, minimum=None):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"{key} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"{key} must be >= {minimum}")
    return v


def _want_str(doc, key, allowed=None):
    v = doc[key]
    if not isinstance(v, str):
        raise ConfigError(key, f"{key} must be a string")
    if allowed is not None and v not in allowed:
        raise ConfigError(key, f"{key} must be one of {sorted(allowed)}, got {v!r}")
    return v


def _want_str_list(doc, key):
    v = doc[key]
    if not isinstance(v, list) or any(not isinstance(s, str) for s in v):
        raise ConfigError(key, f"{key} must be a list of strings")
    return tuple(v)


def _want_level_list(doc, key):
    v = doc[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(key, f"{key} must be a non-empty list of numbers")
    out = []
    for a in v:
        if isinstance(a, bool) or not isinstance(a, (int, float)):
            raise ConfigError(key, f"{key} entries must be numbers")
        if not 0.0 < float(a) < 1.0:
            raise ConfigError(key, f"{key} entries must lie in (0, 1)")
        out.append(float(a))
    return tuple(out)


def parse_config(doc: dict) -> RunConfig:
    """Validate a JSON document against the strict schema; reject unknowns."""
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    for key in doc:
        if key not in known:
            raise ConfigError(key, f"unknown config key {key!r}")
    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise ConfigError(key, f"missing required config key {key!r}")

    assets = _want_str_list(doc, "assets")
    if not assets:
        raise ConfigError("assets", "need at least one asset column")
    if len(set(assets)) != len(assets):
        raise ConfigError("assets", "asset columns must be unique")
    weights = doc["weights"]
    if (not isinstance(weights, list)
            or any(isinstance(w, bool) or not isinstance(w, (int, float))
                   for w in weights)):
        raise ConfigError("weights", "weights must be a list of numbers")
    if len(weights) != len(assets):
        raise ConfigError(
            "weights",
            f"{len(weights)} weights for {len(assets)} assets")
    weights = tuple(float(w) for w in weights)
    if any(not math.isfinite(w) for w in weights):
        raise ConfigError("weights", "weights must be finite")

    conditioning = ()
    if "conditioning" in doc:
        conditioning = _want_str_list(doc, "conditioning")
        if len(conditioning) > 2:
            raise ConfigError("conditioning", "at most 2 conditioning columns")
        if len(set(conditioning)) != len(conditioning):
            raise ConfigError("conditioning", "conditioning columns must be unique")
        overlap = set(conditioning) & set(assets)
        if overlap:
            raise ConfigError(
                "conditioning",
                f"column {sorted(overlap)[0]!r} is both asset and conditioning")

    strategies = ("QuantileBased",) if conditioning else ()
    if "strategies" in doc:
        strategies = _want_str_list(doc, "strategies")
        for kind in strategies:
            if kind not in STRATEGY_KINDS:
                raise ConfigError("strategies", f"unknown strategy kind {kind!r}")
        if len(set(strategies)) != len(strategies):
            raise ConfigError("strategies", "strategy kinds must be unique")
        if strategies and not conditioning:
            raise ConfigError(
                "strategies", "strategies need conditioning columns")
    if conditioning and not strategies:
        raise ConfigError("strategies", "conditional run needs strategies")

    alpha_i = ()
    if doc.get("alpha_I_levels", []) != []:  # empty list == key absent
        alpha_i = _want_level_list(doc, "alpha_I_levels")
        if len(set(alpha_i)) != len(alpha_i):
            raise ConfigError("alpha_I_levels", "levels must be distinct")
    if "QuantileBased" in strategies and not alpha_i:
        raise ConfigError(
            "alpha_I_levels", "QuantileBased strategy needs alpha_I_levels")

    families = FAMILY_ORDER
    if "families" in doc:
        families = _want_str_list(doc, "families")
        if not families:
            raise ConfigError("families", "need at least one copula family")
        for name in families:
            if name not in FAMILY_ORDER:
                raise ConfigError("families", f"unknown copula family {name!r}")

    cutoff = None
    if "cutoff_depth" in doc and doc["cutoff_depth"] is not None:
        cutoff = _want_int(doc, "cutoff_depth", minimum=1)

    workers = (1, 1)
    if "workers" in doc:
        w = doc["workers"]
        if (not isinstance(w, list) or len(w) != 2
                or any(isinstance(x, bool) or not isinstance(x, int) for x in w)
                or any(x < 1 for x in w)):
            raise ConfigError("workers", "workers must be [level1, level2] >= 1")
        workers = (w[0], w[1])

    raw = False
    if "raw_weights" in doc:
        if not isinstance(doc["raw_weights"], bool):
            raise ConfigError("raw_weights", "raw_weights must be a boolean")
        raw = doc["raw_weights"]

    return RunConfig(
        data=_want_str(doc, "data"),
        assets=assets,
        weights=weights,
        Gamma=_want_int(doc, "Gamma", minimum=1),
        gamma=_want_int(doc, "gamma", minimum=1),
        Psi=_want_int(doc, "Psi", minimum=1),
        kappa=_want_int(doc, "kappa", minimum=1),
        S=_want_int(doc, "S", minimum=1),
        alpha_levels=_want_level_list(doc, "alpha_levels"),
        seed=_want_int(doc, "seed"),
        out=_want_str(doc, "out"),
        mode=(_want_str(doc, "mode", allowed=("returns", "prices"))
              if "mode" in doc else "returns"),
        conditioning=conditioning,
        alpha_I_levels=alpha_i,
        strategies=strategies,
        families=families,
        cutoff_depth=cutoff,
        innovation_family=(
            _want_str(doc, "innovation_family", allowed=INNOVATION_FAMILIES)
            if "innovation_family" in doc else "skewed_student_t"),
        workers=workers,
        raw_weights=raw,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError("config", f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"invalid JSON in {path}: {err}") from None
    return parse_config(doc)


def build_strategies(cfg: RunConfig) -> tuple:
    n_cond = len(cfg.conditioning)
    out = []
    for kind in cfg.strategies:
        levels = cfg.alpha_I_levels if kind == "QuantileBased" else ()
        out.append(ConditioningStrategy(kind, levels, n_cond=n_cond))
    return tuple(out)


def _select_columns(panel: ReturnPanel, cfg: RunConfig):
    for name in cfg.assets + cfg.conditioning:
        if name not in panel.names:
            raise ConfigError(
                "assets" if name in cfg.assets else "conditioning",
                f"column {name!r} not in panel (has {list(panel.names)})")
    a_idx = [panel.names.index(n) for n in cfg.assets]
    c_idx = [panel.names.index(n) for n in cfg.conditioning]
    assets = panel.values[:, a_idx]
    indices = panel.values[:, c_idx] if c_idx else None
    return assets, indices


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_risk_series(rs: RiskSeries, path) -> None:
    """Tidy CSV, UTF-8, '.' decimals, LF endings, full-precision floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RISK_SERIES_HEADER)
        for row in rs.rows:
            w.writerow([row.date, row.measure, _fmt(row.alpha), row.strategy,
                        _fmt(row.alpha_i), _fmt(row.estimate),
                        _fmt(row.realized_return),
                        _fmt(row.cond_value_return_scale)])


def read_risk_series(path) -> RiskSeries:
    """Parse a risk_series.csv written by `run` back into a RiskSeries."""
    def num(cell):
        return None if cell == "" else float(cell)

    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as err:
        raise ConfigError("risk_series", f"cannot read {path}: {err}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RISK_SERIES_HEADER:
            raise ConfigError(
                "risk_series", f"unexpected header {header!r} in {path}")
        rows = []
        for rec in reader:
            if len(rec) != len(RISK_SERIES_HEADER):
                raise ConfigError(
                    "risk_series", f"malformed row in {path}: {rec!r}")
            rows.append(RiskRow(
                date=rec[0], measure=rec[1], alpha=float(rec[2]),
                strategy=rec[3], alpha_i=num(rec[4]), estimate=float(rec[5]),
                realized_return=float(rec[6]),
                cond_value_return_scale=num(rec[7])))
    if not rows:
        raise ConfigError("risk_series", f"no rows in {path}")
    return RiskSeries(rows=tuple(rows), meta={"source": str(path)})


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


# ---------------------------------------------------------------------------
# backtest battery over a risk series
# ---------------------------------------------------------------------------


def _series_key(row: RiskRow) -> tuple:
    return (row.strategy, row.alpha_i)


def _strategy_label(key: tuple) -> dict:
    return {"strategy": key[0], "alpha_I": key[1]}


def compute_backtests(rs: RiskSeries) -> list:
    """Standard battery over every (measure, alpha, strategy) slice.

    VaR slices get the coverage LR tests plus conditional calibration;
    ES slices get the exceedance-residual bootstrap and the joint
    (VaR, ES) calibration test, pairing each ES series with the VaR series
    of the same strategy and level. Strategy pairs sharing a measure and
    level are compared with the three-zone comparative backtest. Tests
    whose preconditions fail (too few observations, no violations, scores
    undefined) are reported with NOT_APPLICABLE status instead of dying.
    """
    groups = {}
    for row in rs.rows:
        groups.setdefault(
            (row.measure, row.alpha, _series_key(row)), []).append(row)
    for rows in groups.values():
        rows.sort(key=lambda r: r.date)

    def arrays(measure, alpha, key):
        rows = groups[(measure, alpha, key)]
        est = np.array([r.estimate for r in rows])
        real = np.array([r.realized_return for r in rows])
        return est, real

    docs = []
    alphas = sorted({(a, k) for (_, a, k) in groups})

    def attach(measure, alpha, key, report):
        doc = {"measure": measure, "alpha": alpha}
        doc.update(_strategy_label(key))
        doc.update(report.to_dict())
        docs.append(doc)

    def not_applicable(name, err):
        return TestReport(test=name, statistic=float("nan"),
                          p_value=float("nan"), sided="two",
                          status=STATUS_NOT_APPLICABLE,
                          aux={"reason": str(err)})

    for alpha, key in alphas:
        var_key = ("VaR", alpha, key)
        if var_key not in groups:
            continue
        var_est, realized = arrays("VaR", alpha, key)
        vp = violation_process(realized, var_est, alpha)
        for fn, name in ((lr_unconditional_coverage, "lr_uc"),
                         (lr_independence, "lr_ind"),
                         (lr_conditional_coverage, "lr_cc")):
            try:
                attach("VaR", alpha, key, fn(vp))
            except ParameterError as err:
                attach("VaR", alpha, key, not_applicable(name, err))
        try:
            attach("VaR", alpha, key, conditional_calibration_test(
                realized, var_est, None, alpha, sided="two"))
        except ParameterError as err:
            attach("VaR", alpha, key,
                   not_applicable("conditional_calibration", err))
        for measure in ("ES_mean", "ES_median", "ES_mc"):
            es_key = (measure, alpha, key)
            if es_key not in groups:
                continue
            es_est, real_es = arrays(measure, alpha, key)
            try:
                attach(measure, alpha, key, exceedance_residual_test(
                    real_es, var_est, es_est))
            except ParameterError as err:
                attach(measure, alpha, key,
                       not_applicable("exceedance_residual", err))
            try:
                attach(measure, alpha, key, conditional_calibration_test(
                    real_es, var_est, es_est, alpha, sided="two"))
            except ParameterError as err:
                attach(measure, alpha, key,
                       not_applicable("conditional_calibration", err))

    # pairwise three-zone comparisons, internal = first key in sort order
    measures_present = sorted({m for (m, _, _) in groups})
    for measure in measures_present:
        levels = sorted({a for (m, a, _) in groups if m == measure})
        for alpha in levels:
            keys = sorted(
                (k for (m, a, k) in groups if m == measure and a == alpha),
                key=lambda k: (k[0], -1.0 if k[1] is None else k[1]))
            for i in range(len(keys)):
                for j in range(i + 1, len(keys)):
                    k_int, k_std = keys[i], keys[j]
                    doc = {"measure": measure, "alpha": alpha,
                           "internal": _strategy_label(k_int),
                           "standard": _strategy_label(k_std)}
                    try:
                        if measure == "VaR":
                            vi, r = arrays("VaR", alpha, k_int)
                            vs, _ = arrays("VaR", alpha, k_std)
                            res = comparative_backtest(
                                r, vi, None, vs, None, "VaR", alpha)
                        else:
                            need = [("VaR", alpha, k_int), ("VaR", alpha, k_std)]
                            if any(nk not in groups for nk in need):
                                raise ParameterError(
                                    "no matching VaR series for joint score")
                            ei, r = arrays(measure, alpha, k_int)
                            es, _ = arrays(measure, alpha, k_std)
                            vi, _ = arrays("VaR", alpha, k_int)
                            vs, _ = arrays("VaR", alpha, k_std)
                            res = comparative_backtest(
                                r, vi, ei, vs, es, measure, alpha)
                        doc.update(res.to_dict())
                    except ParameterError as err:
                        doc.update({"test": "comparative", "statistic": None,
                                    "phi": None, "zone": None,
                                    "status": STATUS_NOT_APPLICABLE,
                                    "reason": str(err)})
                    docs.append(doc)
    return docs


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _remove_outputs(written) -> None:
    for path in written:
        try:
            os.remove(path)
        except OSError:
            pass


def _prepare(cfg: RunConfig):
    """Load the panel, check columns and length, derive the window plan."""
    panel = load_panel(cfg.data, cfg.mode)
    assets, indices = _select_columns(panel, cfg)
    if panel.n_rows < cfg.Gamma + cfg.gamma:
        raise ConfigError(
            "data",
            f"panel has {panel.n_rows} rows, need at least Gamma + gamma = "
            f"{cfg.Gamma + cfg.gamma}")
    plan = plan_windows(panel.n_rows, cfg.Gamma, cfg.gamma, cfg.Psi, cfg.kappa)
    return panel, assets, indices, plan


def cmd_run(cfg: RunConfig) -> int:
    t_start = time.perf_counter()
    panel, assets, indices, plan = _prepare(cfg)
    strategies = build_strategies(cfg)
    common = dict(S=cfg.S, alpha_levels=cfg.alpha_levels, seed=cfg.seed,
                  measures=RUN_MEASURES, families=cfg.families,
                  innovation_family=cfg.innovation_family,
                  cutoff_depth=cfg.cutoff_depth, workers=cfg.workers,
                  dates=panel.dates, raw_weights=cfg.raw_weights,
                  column_names=cfg.assets + cfg.conditioning)
    weights = np.asarray(cfg.weights, dtype=float)
    if indices is None:
        rs = run_unconditional(assets, weights, plan, **common)
    else:
        rs = run_conditional(assets, indices, weights, plan,
                             strategies=strategies, **common)
    backtests = compute_backtests(rs)

    os.makedirs(cfg.out, exist_ok=True)
    written = []
    try:
        path = os.path.join(cfg.out, "risk_series.csv")
        write_risk_series(rs, path)
        written.append(path)
        path = os.path.join(cfg.out, "backtests.json")
        _write_json(backtests, path)
        written.append(path)
        path = os.path.join(cfg.out, "diagnostics.json")
        _write_json(rs.meta["diagnostics"], path)
        written.append(path)
        manifest = {
            "config": cfg.echo(),
            "seed": cfg.seed,
            "version": _version(),
            "wall_clock_seconds": round(time.perf_counter() - t_start, 3),
            "n_rows": len(rs.rows),
        }
        _write_json(manifest, os.path.join(cfg.out, "manifest.json"))
    except BaseException:
        _remove_outputs(written)
        raise
    return EXIT_OK


def cmd_backtest(risk_series_path, cfg: RunConfig) -> int:
    rs = read_risk_series(risk_series_path)
    docs = compute_backtests(rs)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(docs, os.path.join(cfg.out, "backtests.json"))
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    panel, _, _, plan = _prepare(cfg)
    build_strategies(cfg)
    print(f"config ok: {panel.n_rows} rows, {len(cfg.assets)} asset(s), "
          f"{len(cfg.conditioning)} conditioning column(s)")
    print(f"windows: {plan.n_marginal_windows} marginal, "
          f"{plan.n_vine_windows} vine, forecast days "
          f"{plan.Gamma + 1}..{plan.T}")
    return EXIT_OK


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def parse_workers(text: str) -> tuple:
    """'4x2' -> (4, 2); a bare integer means level-2 workers of 1."""
    parts = text.lower().split("x")
    if len(parts) == 1:
        parts = [parts[0], "1"]
    if len(parts) != 2:
        raise ConfigError("workers", f"cannot parse workers {text!r}")
    try:
        l1, l2 = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError("workers", f"cannot parse workers {text!r}") from None
    if l1 < 1 or l2 < 1:
        raise ConfigError("workers", "worker counts must be >= 1")
    return l1, l2


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    if getattr(args, "workers", None):
        updates["workers"] = parse_workers(args.workers)
    elif os.environ.get("VINERISK_WORKERS"):
        updates["workers"] = parse_workers(os.environ["VINERISK_WORKERS"])
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None):
        updates["out"] = args.out
    if not updates:
        return cfg
    doc = cfg.echo()
    doc.update({k: list(v) if isinstance(v, tuple) else v
                for k, v in updates.items()})
    return parse_config(doc)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vinerisk",
        description="Rolling-window portfolio VaR/ES with vine-copula dependence")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="fit, simulate, write outputs")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--workers", help="worker counts, e.g. 4x1")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help="output directory override")

    p_bt = sub.add_parser("backtest", help="re-run backtests on a risk series")
    p_bt.add_argument("--risk-series", required=True, dest="risk_series")
    p_bt.add_argument("--config", required=True)

    p_val = sub.add_parser("validate", help="check config and panel, no outputs")
    p_val.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "backtest":
            return cmd_backtest(args.risk_series, cfg)
        return cmd_validate(cfg)
    except (ConfigError, PanelError) as err:
        name = getattr(err, "parameter", None)
        prefix = f"config error ({name}): " if name else "config error: "
        print(prefix + str(err), file=sys.stderr)
        return EXIT_CONFIG
    except FitError as err:
        print(f"fit error: {err}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
