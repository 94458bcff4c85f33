"""Hybrid short-term wind speed and wind power forecasting.

Local sensor history is combined with numerical weather prediction channels
through sparse linear models and Nystrom kernel ridge regression, with HSIC
based variable selection and a rolling-origin evaluation harness.
"""
from .data import (
    DataError,
    Role,
    Channel,
    TimeSeriesFrame,
    WindowSpec,
    FeatureLabel,
    SupervisedDataset,
    Standardizer,
    Split,
    SplitPlan,
    ingest_csv,
    resample_linear,
    encode_direction,
    average_turbines,
    join_frames,
    mask_time_ranges,
    build_supervised,
    fit_standardizer,
    make_rolling_splits,
)
from .linear_models import (
    ConvergenceWarning,
    LinearModel,
    VariableScoreTable,
    ols_fit,
    linear_predict,
    forward_stepwise_fit,
    lasso_lambda_max,
    lasso_fit,
    lasso_path,
    lasso_kkt_violation,
    lasso_variable_scores,
    average_over_farms,
)
from .kernel_models import (
    KernelSpec,
    KernelRidgeModel,
    NystromKrrModel,
    NystromPath,
    gaussian_gram,
    krr_fit_exact,
    nystrom_krr_fit,
    krr_predict,
)
from .hsic_select import HsicConfig, EliminationTrace, hsic_exact, nystrom_hsic, bahsic_rank, hsic_importance
from .power_curve import PowerCurve, fit_power_curve, apply_power_curve, export_power_curve
from .evaluation import (
    ScoreEntry,
    ScoreReport,
    persistence_forecast,
    nwp_forecast,
    nrmse,
    delta_nrmse,
    nrmse_degradation,
    rank_by_degradation,
    average_rank,
)
from .synthetic import SyntheticFarmSpec, synth_generate
from .pipeline import (
    ExperimentConfig,
    ExperimentError,
    geometric_grid,
    run_experiment,
    run_selection,
    check_provenance,
    emit_report,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Role",
    "Channel",
    "TimeSeriesFrame",
    "WindowSpec",
    "FeatureLabel",
    "SupervisedDataset",
    "Standardizer",
    "Split",
    "SplitPlan",
    "ingest_csv",
    "resample_linear",
    "encode_direction",
    "average_turbines",
    "join_frames",
    "mask_time_ranges",
    "build_supervised",
    "fit_standardizer",
    "make_rolling_splits",
    "ConvergenceWarning",
    "LinearModel",
    "VariableScoreTable",
    "ols_fit",
    "linear_predict",
    "forward_stepwise_fit",
    "lasso_lambda_max",
    "lasso_fit",
    "lasso_path",
    "lasso_kkt_violation",
    "lasso_variable_scores",
    "average_over_farms",
    "KernelSpec",
    "KernelRidgeModel",
    "NystromKrrModel",
    "NystromPath",
    "gaussian_gram",
    "krr_fit_exact",
    "nystrom_krr_fit",
    "krr_predict",
    "HsicConfig",
    "EliminationTrace",
    "hsic_exact",
    "nystrom_hsic",
    "bahsic_rank",
    "hsic_importance",
    "PowerCurve",
    "fit_power_curve",
    "apply_power_curve",
    "export_power_curve",
    "ScoreEntry",
    "ScoreReport",
    "persistence_forecast",
    "nwp_forecast",
    "nrmse",
    "delta_nrmse",
    "nrmse_degradation",
    "rank_by_degradation",
    "average_rank",
    "SyntheticFarmSpec",
    "synth_generate",
    "ExperimentConfig",
    "ExperimentError",
    "geometric_grid",
    "run_experiment",
    "run_selection",
    "check_provenance",
    "emit_report",
    "__version__",
]
