"""CAPCE estimators: series (sieve and parametric) and RKHS."""

from .model import CapceModel
from .series import (
    LambdaConfig,
    LambdaMatrix,
    LambdaMoments,
    KappaTooSmall,
    SingularSystem,
    fit_parametric,
    fit_sieve,
    monte_carlo_lambda,
    ridge_solve,
)
from .rkhs import (
    GramSingular,
    KernelConfig,
    RkhsGrids,
    fit_rkhs,
    polynomial_gram,
    rkhs_select,
)

__all__ = [
    "CapceModel",
    "LambdaConfig",
    "LambdaMatrix",
    "LambdaMoments",
    "KappaTooSmall",
    "SingularSystem",
    "GramSingular",
    "KernelConfig",
    "RkhsGrids",
    "fit_parametric",
    "fit_sieve",
    "fit_rkhs",
    "monte_carlo_lambda",
    "polynomial_gram",
    "ridge_solve",
    "rkhs_select",
]
