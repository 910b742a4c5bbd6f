"""Penalised sieve estimation of varying-coefficient panel regressions with
interactive fixed effects: group-LASSO variable selection, Hermite sieve
coefficient curves and principal-component factors."""

from .basis import SieveConfig, default_truncation, design_row, eval_coef_fn, hermite_basis
from .estimator import (CoefficientMatrix, FactorEstimate, FitConfig, FitResult, SieveDesign,
                        SingularDesignError, fit, objective_value, post_selection_fit,
                        residual_projector_apply, update_coefficients, update_factors)
from .inference import (BootstrapBands, CurveEstimate, VarianceDecomposition, bootstrap_bands,
                        coefficient_curves, default_grid, variance_decomposition)
from .panel import PanelData, PanelError, load_panel_csv, write_panel_csv
from .selection import (LambdaPath, PipelineConfig, SelectionResult, adaptive_weights, bic_value,
                        count_df, pic_value, run_pipeline, select_lambda, select_num_factors,
                        unpenalized_baseline)
from .simulate import DgpConfig, McReport, SimTruth, generate, monte_carlo, true_beta

__version__ = "0.1.0"
