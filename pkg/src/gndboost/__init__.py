"""Boosted generalized normal location/scale forecasting.

Fits the location and log-scale of a generalized normal distribution as tree
ensembles on a power-transformed response via a two-stage, sample-split
procedure; ships classical parametric baselines and a distributional
scoring suite.
"""

from .baselines import (
    HistoricalAverage,
    LinearExpModel,
    LinearLogNormalModel,
    fit_exp_glm,
    fit_historical_average,
    fit_lognormal_mle,
)
from .bgnd import BgndConfig, BgndModel, fit, load_model, predict_params, save_model
from .boost_location import Ensemble, FitConfig, fit_location, predict_location
from .boost_scale import (
    ScaleFitConfig,
    empirical_risk,
    eps_gradient,
    fit_scale,
    lambert_w,
    line_search,
    predict_log_scale,
    risk_gradient,
)
from .common import DataError, FitReport, NumericalError
from .data import Dataset, SimConfig, encode_cyclic, load_csv, simulate_dataset
from .evaluation import (
    EvalReport,
    crps_mean,
    evaluate_models,
    long_wait_analysis,
    pinball_loss,
    population_nll_normal,
)
from .gnd import (
    GndParams,
    crps_normal,
    crps_quadrature,
    gnd_cdf,
    gnd_logpdf,
    gnd_pdf,
    gnd_quantile,
    gnd_sample,
    reg_inc_gamma_lower,
)
from .transforms import (
    PowerTransform,
    crps_lognormal,
    pushforward_cdf,
    pushforward_crps,
    pushforward_quantile,
)
from .trees import BinnedMatrix, SplitGrid, Tree, bin_features, build_grid, fit_tree_ls, tree_predict

__version__ = "0.1.0"

__all__ = [
    "BgndConfig", "BgndModel", "BinnedMatrix", "DataError", "Dataset",
    "Ensemble", "EvalReport", "FitConfig", "FitReport", "GndParams",
    "HistoricalAverage", "LinearExpModel", "LinearLogNormalModel",
    "NumericalError", "PowerTransform", "ScaleFitConfig", "SimConfig",
    "SplitGrid", "Tree", "bin_features", "build_grid", "crps_lognormal",
    "crps_mean", "crps_normal", "crps_quadrature", "empirical_risk",
    "encode_cyclic", "eps_gradient", "evaluate_models", "fit", "fit_exp_glm",
    "fit_historical_average", "fit_location", "fit_lognormal_mle",
    "fit_scale", "fit_tree_ls", "gnd_cdf", "gnd_logpdf", "gnd_pdf",
    "gnd_quantile", "gnd_sample", "lambert_w", "line_search", "load_csv",
    "load_model", "long_wait_analysis", "pinball_loss", "population_nll_normal",
    "predict_location", "predict_log_scale", "predict_params",
    "pushforward_cdf", "pushforward_crps", "pushforward_quantile",
    "reg_inc_gamma_lower", "risk_gradient", "save_model", "simulate_dataset",
    "tree_predict",
]
