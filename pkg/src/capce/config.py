"""TOML configuration loading for the command-line tools.

A config file is a key-value tree with one optional section per concern:

    [data]
    treatment = "educ"
    outcome = "wage"
    instrument = "meduc"
    covariates = ["IQ"]

    [estimator]
    kind = "parametric"            # parametric|sieve|rkhs|ptsls|ntsls|kernel_iv
    basis = { terms = ["1", "W", "X"] }
    p_degree = 3
    z0 = -1.0
    zeta_grid = [1.0, 0.1, 0.01, 0.001]

    [estimator.lambda_mc]          # sieve only
    box = [-4.0, 4.0, -2.0, 2.0]
    kappa = 2.0
    order_l = 1
    n_mc = 100000

    [estimator.kernel]             # fixed kernel parameters (rkhs/kernel_iv)
    kz_params = [4.0, 5]
    kxw_params = [1.0, 2]
    lambdas = [0.01, 0.01, 1.0, 100.0]

    [benchmark]
    settings = ["A", "B"]
    sample_sizes = [1000, 10000]
    replications = 100
    estimators = ["P-CAPCE", "PTSLS"]   # named presets, or inline tables
"""

from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bench import DEFAULT_ZETA_GRID, BenchmarkPlan, EstimatorConfig, standard_estimators
from .data import ColumnSchema
from .estimators import KernelConfig, LambdaConfig, RkhsGrids
from .scm import make_grid


def load_config(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def schema_from_config(cfg, args=None):
    """Column schema from the [data] section, overridable by CLI args."""
    data = dict(cfg.get("data", {}))
    if args is not None:
        if getattr(args, "treatment", None):
            data["treatment"] = args.treatment
        if getattr(args, "outcome", None):
            data["outcome"] = args.outcome
        if getattr(args, "instrument", None):
            data["instrument"] = args.instrument
        if getattr(args, "covariates", None):
            data["covariates"] = [c for c in args.covariates.split(",") if c]
    if not all(k in data for k in ("treatment", "outcome", "instrument")):
        raise ValueError("data schema needs treatment, outcome and instrument columns")
    return ColumnSchema(treatment_col=data["treatment"],
                        outcome_col=data["outcome"],
                        instrument_col=data["instrument"],
                        covariate_cols=tuple(data.get("covariates", ())))


def _lambda_cfg(section):
    if not section:
        return None
    return LambdaConfig(box=tuple(section.get("box", LambdaConfig.box)),
                        kappa=float(section.get("kappa", 2.0)),
                        order_l=int(section.get("order_l", 1)),
                        n_mc=int(section.get("n_mc", 100_000)),
                        seed=int(section.get("seed", 0)))


def _kernel_cfg(section):
    if not section:
        return None
    return KernelConfig.from_config(section)


def _grids_cfg(section):
    if not section:
        return None
    kwargs = {}
    for key in ("c1_grid", "c2_grid", "c3_grid", "c4_grid", "lambda1_grid",
                "lambda2_grid", "lambda3_grid", "xi_grid"):
        if key in section:
            kwargs[key] = tuple(section[key])
    if "n_select" in section:
        kwargs["n_select"] = int(section["n_select"])
    return RkhsGrids(**kwargs)


# Default bases for single-covariate data, by estimator kind.
DEFAULT_BASES = {
    "parametric": {"terms": ["1", "W", "X"]},
    "ptsls": {"terms": ["1", "W", "X", "WX", "X2"]},
    "sieve": {"kind": "hermite_product", "x_deg": 2, "w_deg": 2},
    "ntsls": {"kind": "hermite_product", "x_deg": 2, "w_deg": 2},
}


def estimator_from_config(section, label=None):
    """Build an EstimatorConfig from an [estimator] table."""
    kind = section["kind"]
    kwargs = dict(
        kind=kind,
        label=label or section.get("label", kind),
        p_degree=int(section.get("p_degree", 3)),
        zeta_grid=tuple(section.get("zeta_grid", DEFAULT_ZETA_GRID)),
    )
    if kind in DEFAULT_BASES and "basis" not in section:
        kwargs["basis_cfg"] = dict(DEFAULT_BASES[kind])
    if "z0" in section:
        kwargs["z0"] = float(section["z0"])
    if "basis" in section:
        kwargs["basis_cfg"] = dict(section["basis"])
    if "lambda_mc" in section:
        kwargs["lambda_cfg"] = _lambda_cfg(section["lambda_mc"])
    if "kernel" in section:
        kwargs["kernel"] = _kernel_cfg(section["kernel"])
    if "grids" in section:
        kwargs["grids"] = _grids_cfg(section["grids"])
    if "select" in section:
        kwargs["select"] = section["select"]
    return EstimatorConfig(**kwargs)


def plan_from_config(cfg, args=None):
    """Benchmark plan from the [benchmark] section plus CLI overrides."""
    bench = dict(cfg.get("benchmark", {}))
    presets = {e.label: e for e in standard_estimators()}
    estimators = []
    for item in bench.get("estimators", list(presets)):
        if isinstance(item, str):
            if item not in presets:
                raise ValueError(f"unknown estimator preset {item!r}; "
                                 f"known: {sorted(presets)}")
            estimators.append(presets[item])
        else:
            estimators.append(estimator_from_config(item))
    grid = None
    if "grid" in bench:
        g = bench["grid"]
        grid = make_grid(tuple(g["box"]), int(g.get("nx", 41)), int(g.get("nw", 21)))
    kwargs = dict(
        settings=tuple(bench.get("settings", ("A", "B"))),
        sample_sizes=tuple(int(n) for n in bench.get("sample_sizes", (1000, 10000))),
        replications=int(bench.get("replications", 100)),
        estimators=tuple(estimators),
        grid=grid,
        base_seed=int(bench.get("base_seed", 0)),
        n_jobs=int(bench.get("n_jobs", 1)),
    )
    if args is not None:
        if getattr(args, "seed", None) is not None:
            kwargs["base_seed"] = args.seed
        if getattr(args, "settings", None):
            kwargs["settings"] = tuple(args.settings.split(","))
        if getattr(args, "sizes", None):
            kwargs["sample_sizes"] = tuple(int(n) for n in args.sizes.split(","))
        if getattr(args, "reps", None) is not None:
            kwargs["replications"] = args.reps
        if getattr(args, "estimators", None):
            kwargs["estimators"] = tuple(presets[name]
                                         for name in args.estimators.split(","))
    return BenchmarkPlan(**kwargs)
