"""Non-stationary online convex optimization with piecewise-linear trend tracking.

The learner is an adaptive ensemble: one online-Newton expert is started
per round with monomial covariates, so each expert tracks one candidate
linear segment and the multiplicative-weights layer follows whichever
recent history fits best.  The package ships the matching offline oracle
(budgeted trend fitting with KKT certificates), partition and residual
analysis of its output, baseline learners, synthetic environments, and an
experiment harness with a CLI.
"""

from .baselines import (LinsmoothEnvironment, OgdState, flh_constant_experts_run,
                        linsmooth_environment, ogd_step, run_ogd)
from .envgen import PiecewiseLinearSpec, Series, gen_piecewise_linear, ingest_csv
from .flh import FlhConfig, FlhEnsemble, adaptive_overhead_bound, flh_run
from .losses import (CurvatureConstants, QuadraticLoss, quadratic_loss,
                     scaled_squared_loss, verify_constants)
from .ons import NewtonConfig, NewtonExpert, lift_gradient, static_regret_bound
from .oracle import (KktReport, OfflineSolution, VariationBudget, kkt_check,
                     l1_trend_filter, solve_offline, tv_variation)
from .partition import (Bin, PartitionReport, bin_count_bound, greedy_partition,
                        linear_fit_residuals, refine_boundary_touches,
                        residual_slope_decomposition, split_monotonic)
from .psd import CorrectionMatrix, Slab, SlabSet, covariate_slabs, mahalanobis_project

__version__ = "0.1.0"

__all__ = [
    "CurvatureConstants", "QuadraticLoss", "scaled_squared_loss", "quadratic_loss",
    "verify_constants",
    "CorrectionMatrix", "Slab", "SlabSet", "covariate_slabs", "mahalanobis_project",
    "NewtonConfig", "NewtonExpert", "lift_gradient", "static_regret_bound",
    "FlhConfig", "FlhEnsemble", "flh_run", "adaptive_overhead_bound",
    "OgdState", "ogd_step", "run_ogd", "flh_constant_experts_run",
    "LinsmoothEnvironment", "linsmooth_environment",
    "VariationBudget", "OfflineSolution", "KktReport", "tv_variation",
    "solve_offline", "kkt_check", "l1_trend_filter",
    "Bin", "PartitionReport", "greedy_partition", "refine_boundary_touches",
    "split_monotonic", "linear_fit_residuals", "residual_slope_decomposition",
    "bin_count_bound",
    "PiecewiseLinearSpec", "Series", "gen_piecewise_linear", "ingest_csv",
]
