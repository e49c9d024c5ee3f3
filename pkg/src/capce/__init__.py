"""Instrumental-variable estimation of conditional average partial causal effects.

The library estimates the derivative effect surface E[d/dx Y_x | W = w]
of a continuous treatment under unmeasured confounding, from two-sample
IV data, via three estimator families (parametric, sieve, RKHS), with
classic two-stage-least-squares and kernel-IV comparators, a synthetic
benchmark harness, and bootstrap inference for observational data.
"""

from .basis import (BasisSpec, InstrumentBasis, explicit_terms, hermite,
                    hermite_product, monomial_product)
from .baselines import StructuralModel, fit_kernel_iv, fit_ntsls, fit_ptsls
from .bench import (BenchmarkPlan, BenchmarkResults, BootstrapReport,
                    EstimatorConfig, bootstrap, bootstrap_estimator,
                    emit_report, evaluate_mse, standard_estimators, run_benchmark)
from .data import (ColumnSchema, TwoSampleDataset, load_joint_csv,
                   load_two_sample_csvs, split_train_test, write_joint_csv)
from .estimators import (CapceModel, KernelConfig, LambdaConfig, RkhsGrids,
                         fit_parametric, fit_rkhs, fit_sieve,
                         monte_carlo_lambda, rkhs_select)
from .scm import (EvalGrid, ScmSetting, SETTINGS, default_grid, get_setting,
                  make_grid, simulate, true_capce)
from .stage1 import Stage1Fit, fit_stage1, predict_differences

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "InstrumentBasis", "explicit_terms", "hermite",
    "hermite_product", "monomial_product",
    "StructuralModel", "fit_kernel_iv", "fit_ntsls", "fit_ptsls",
    "BenchmarkPlan", "BenchmarkResults", "BootstrapReport", "EstimatorConfig",
    "bootstrap", "bootstrap_estimator", "emit_report", "evaluate_mse",
    "standard_estimators", "run_benchmark",
    "ColumnSchema", "TwoSampleDataset", "load_joint_csv",
    "load_two_sample_csvs", "split_train_test", "write_joint_csv",
    "CapceModel", "KernelConfig", "LambdaConfig", "RkhsGrids",
    "fit_parametric", "fit_rkhs", "fit_sieve", "monte_carlo_lambda",
    "rkhs_select",
    "EvalGrid", "ScmSetting", "SETTINGS", "default_grid", "get_setting",
    "make_grid", "simulate", "true_capce",
    "Stage1Fit", "fit_stage1", "predict_differences",
    "__version__",
]
