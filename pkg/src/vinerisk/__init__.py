"""Rolling-window portfolio risk forecasting with vine-copula dependence.

The package fits ARMA(1,1)-GARCH(1,1) marginal models and a D-vine copula to
a panel of log returns, simulates one-step-ahead portfolio returns either
unconditionally or conditionally on one or two stress indices, estimates VaR
and Expected Shortfall day by day in a rolling refit scheme, and backtests
the resulting series. `vinerisk.cli` is the batch front end.
"""

from .backtest import (
    ComparativeResult,
    TestReport,
    comparative_backtest,
    conditional_calibration_test,
    exceedance_residual_test,
    joint_var_es_score,
    lr_conditional_coverage,
    lr_independence,
    lr_unconditional_coverage,
    pinball_score,
    violation_process,
)
from .copulas import (
    FAMILY_ORDER,
    PairCopula,
    PairFitResult,
    empirical_kendall_tau,
    fit_pair,
    h_function,
    h_inverse,
    kendall_tau,
    pair_cdf,
    pair_density,
    pair_log_density,
    sample_pair,
)
from .distributions import (
    ChiSquare,
    Normal,
    ParameterError,
    SkewedStudentT,
    StudentT,
    Uniform01,
)
from .dvine import (
    DVineModel,
    fit_dvine,
    model_from_dict,
    model_to_dict,
    sample_conditional_one,
    sample_conditional_two,
    sample_unconditional,
    select_order,
)
from .margins import (
    ArmaGarchFit,
    FitError,
    MarginFitWarning,
    fit_arma_garch,
    filter_series,
    forecast_one_step,
    ljung_box,
)
from .risk import MEASURES, RiskEstimate, es_mc, es_mean, es_median, estimate_risk, var_estimate
from .rolling import (
    ConditioningStrategy,
    ConfigError,
    RiskRow,
    RiskSeries,
    WindowAlignmentWarning,
    WindowPlan,
    plan_windows,
    run_conditional,
    run_unconditional,
)

__all__ = [name for name in dir() if not name.startswith("_")]
