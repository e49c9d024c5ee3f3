"""Benchmark orchestration, oracle MSE evaluation, bootstrap, and reports.

A benchmark plan crosses synthetic settings, sample sizes, and estimator
configurations over seeded replications.  Each replication simulates an
independent train and test draw, fits every estimator, and records the
grid MSE against the closed-form effect oracle plus (for series models)
the fitted coefficients.  Results are pure functions of the plan, so
rerunning a plan reproduces its tables byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisSpec, InstrumentBasis
from .baselines import fit_kernel_iv, fit_ntsls, fit_ptsls, kernel_iv_select
from .data import split_train_test
from .estimators import (KernelConfig, LambdaConfig, LambdaMoments, RkhsGrids,
                         fit_parametric, fit_rkhs, fit_sieve, rkhs_select)
from .scm import EvalGrid, default_grid, get_setting, simulate, true_capce


class NonFiniteEstimate(ValueError):
    """Estimated surface is non-finite on the evaluation grid."""

    def __init__(self, x, w):
        super().__init__(f"non-finite estimate at (x={x}, w={w})")
        self.x = x
        self.w = w


def evaluate_mse(model, setting, grid):
    """Mean squared error of a fitted surface against the setting oracle.

    ``model`` is anything exposing ``capce(x, w)`` (CAPCE models do
    directly; structural baselines expose their level derivative under
    the same name).
    """
    xg, wg = grid.mesh()
    est = np.asarray(model.capce(xg, wg), dtype=float).ravel()
    bad = ~np.isfinite(est)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteEstimate(xg[i], wg[i])
    truth = true_capce(setting, xg, wg)
    return float(np.mean((est - truth) ** 2))


DEFAULT_ZETA_GRID = (1.0, 1e-1, 1e-2, 1e-3)


@dataclass(frozen=True)
class EstimatorConfig:
    """One estimator entry of a benchmark plan.

    Series estimators need a basis config and an instrument degree;
    kernel estimators either carry a fixed KernelConfig or selection
    grids plus a selection mode ("per_cell" reuses the replication-0
    selection across a (setting, N) cell; "per_rep" reselects every
    replication).
    """

    kind: str
    label: str
    basis_cfg: dict | None = None
    p_degree: int = 3
    z0: float | None = None
    zeta_grid: tuple = DEFAULT_ZETA_GRID
    lambda_cfg: LambdaConfig | None = None
    kernel: KernelConfig | None = None
    grids: RkhsGrids | None = None
    select: str = "per_cell"

    def __post_init__(self):
        kinds = ("parametric", "sieve", "rkhs", "ptsls", "ntsls", "kernel_iv")
        if self.kind not in kinds:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind in ("parametric", "sieve", "ptsls", "ntsls"):
            if self.basis_cfg is None:
                raise ValueError(f"{self.kind} config needs a basis")
        if self.kind == "sieve" and self.lambda_cfg is None:
            object.__setattr__(self, "lambda_cfg", LambdaConfig())
        if self.kind in ("rkhs", "kernel_iv") and self.kernel is None and self.grids is None:
            object.__setattr__(self, "grids", RkhsGrids())

    def basis(self):
        return BasisSpec.from_config(self.basis_cfg)

    def qbasis(self):
        return InstrumentBasis(self.p_degree)


def standard_estimators(reduced_kernel_grids=True):
    """The six stock estimator configurations of the benchmark.

    Series bases: explicit terms {1, W, X} (parametric CAPCE) and
    {1, W, X, WX, X2} (PTSLS); Hermite products of degree <= 2 in both
    coordinates for the sieve pair; cubic instrument features for the
    Hermite pair, quadratic for the explicit-term pair; anchor z0 = -1.
    Kernel methods select hyperparameters on held-out data; by default
    the kernel-degree grids are trimmed to keep selection affordable.
    """
    kgrids = RkhsGrids(c1_grid=(1.0, 4.0), c3_grid=(1.0, 4.0)) \
        if reduced_kernel_grids else RkhsGrids()
    return (
        EstimatorConfig(kind="ptsls", label="PTSLS",
                        basis_cfg={"terms": ["1", "W", "X", "WX", "X2"]},
                        p_degree=3),
        EstimatorConfig(kind="ntsls", label="NTSLS",
                        basis_cfg={"kind": "hermite_product", "x_deg": 2, "w_deg": 2},
                        p_degree=4),
        EstimatorConfig(kind="kernel_iv", label="KernelIV", grids=kgrids),
        EstimatorConfig(kind="parametric", label="P-CAPCE",
                        basis_cfg={"terms": ["1", "W", "X"]},
                        p_degree=3, z0=-1.0),
        EstimatorConfig(kind="sieve", label="S-CAPCE",
                        basis_cfg={"kind": "hermite_product", "x_deg": 2, "w_deg": 2},
                        p_degree=4, z0=-1.0, lambda_cfg=LambdaConfig()),
        EstimatorConfig(kind="rkhs", label="RKHS-CAPCE", grids=kgrids, z0=-1.0),
    )


@dataclass(frozen=True)
class BenchmarkPlan:
    """Settings x sizes x replications x estimators, with one seed."""

    settings: tuple = ("A", "B")
    sample_sizes: tuple = (1000, 10000)
    replications: int = 100
    estimators: tuple = ()
    grid: EvalGrid | None = None
    base_seed: int = 0
    curve_w: float = 1.0
    n_jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.grid is None:
            object.__setattr__(self, "grid", default_grid())
        object.__setattr__(self, "settings",
                           tuple(get_setting(s) for s in self.settings))
        object.__setattr__(self, "estimators", tuple(self.estimators))


def _rep_seeds(base_seed, si, n, rep):
    root = np.random.SeedSequence([int(base_seed), si, int(n), rep])
    train_ss, test_ss, sel_ss = root.spawn(3)
    return train_ss, test_ss, sel_ss


def _fit_one(cfg, train, test, kernel_cfg, sel_seed, moments_cache):
    """Fit a single estimator config; returns the fitted model."""
    if cfg.kind == "parametric":
        return fit_parametric(train, cfg.basis(), cfg.qbasis(), cfg.z0,
                              cfg.zeta_grid, test)
    if cfg.kind == "sieve":
        key = (id(cfg), cfg.lambda_cfg)
        moments = moments_cache.get(key)
        if moments is None:
            moments = LambdaMoments(cfg.basis(), cfg.lambda_cfg)
            moments_cache[key] = moments
        return fit_sieve(train, cfg.basis(), cfg.qbasis(), cfg.z0,
                         cfg.zeta_grid, test, cfg.lambda_cfg,
                         lambda_moments=moments)
    if cfg.kind == "ptsls":
        return fit_ptsls(train, cfg.basis(), cfg.qbasis(), cfg.zeta_grid, test)
    if cfg.kind == "ntsls":
        return fit_ntsls(train, cfg.basis(), cfg.qbasis(), cfg.zeta_grid, test)
    if cfg.kind == "rkhs":
        return fit_rkhs(train, kernel_cfg, z0=cfg.z0)
    if cfg.kind == "kernel_iv":
        return fit_kernel_iv(train, kernel_cfg)
    raise ValueError(cfg.kind)


def _resolve_kernel(cfg, train, test, sel_seed):
    if cfg.kind not in ("rkhs", "kernel_iv"):
        return None
    if cfg.kernel is not None:
        return cfg.kernel
    if cfg.kind == "rkhs":
        return rkhs_select(train, test, cfg.grids, z0=cfg.z0, seed=sel_seed)
    return kernel_iv_select(train, test, cfg.grids, seed=sel_seed)


def _coef_dict(model):
    try:
        if model.kind in ("ptsls", "ntsls"):
            dspec, coefs = model.dx_coefficients()
            return dict(zip(dspec.term_labels(), (float(c) for c in coefs)))
        return {k: float(v) for k, v in model.coefficient_table()}
    except (ValueError, AttributeError):
        return None


def _run_cell(plan, si, setting, n):
    """All replications of one (setting, N) cell."""
    moments_cache = {}
    cell_kernels = {}
    records = []
    for rep in range(plan.replications):
        train_ss, test_ss, sel_ss = _rep_seeds(plan.base_seed, si, n, rep)
        train = simulate(setting, n, train_ss)
        test = simulate(setting, n, test_ss)
        sel_seed = sel_ss.generate_state(1)[0] % (2**31)
        for cfg in plan.estimators:
            rec = {"setting": setting.name, "n": int(n), "estimator": cfg.label,
                   "rep": rep, "ok": False, "mse": math.nan, "coefficients": None,
                   "curve": None, "error": None}
            try:
                kernel_cfg = None
                if cfg.kind in ("rkhs", "kernel_iv"):
                    if cfg.kernel is not None:
                        kernel_cfg = cfg.kernel
                    elif cfg.select == "per_rep" or cfg.label not in cell_kernels:
                        kernel_cfg = _resolve_kernel(cfg, train, test, sel_seed)
                        cell_kernels[cfg.label] = kernel_cfg
                    else:
                        kernel_cfg = cell_kernels[cfg.label]
                model = _fit_one(cfg, train, test, kernel_cfg, sel_seed,
                                 moments_cache)
                rec["mse"] = evaluate_mse(model, setting, plan.grid)
                rec["coefficients"] = _coef_dict(model)
                if rep == 0:
                    rec["curve"] = [float(v) for v in
                                    np.asarray(model.capce(plan.grid.x_points,
                                                           plan.curve_w)).ravel()]
                if kernel_cfg is not None:
                    rec["kernel"] = kernel_cfg.to_config()
                rec["ok"] = True
            except Exception as exc:  # noqa: BLE001 - cell failures are data
                rec["error"] = f"{type(exc).__name__}: {exc}"
            records.append(rec)
    return records


@dataclass
class BenchmarkResults:
    """Raw per-replication records plus aggregation helpers."""

    plan: BenchmarkPlan
    records: list = field(default_factory=list)

    def summary_rows(self):
        """Per-(setting, N, estimator) mean/sd MSE and failure counts."""
        rows = []
        for setting in self.plan.settings:
            for n in self.plan.sample_sizes:
                for cfg in self.plan.estimators:
                    cell = [r for r in self.records
                            if r["setting"] == setting.name and r["n"] == n
                            and r["estimator"] == cfg.label]
                    ok = [r["mse"] for r in cell if r["ok"]]
                    rows.append({
                        "setting": setting.name, "n": int(n), "estimator": cfg.label,
                        "reps": len(cell), "failures": len(cell) - len(ok),
                        "mse_mean": float(np.mean(ok)) if ok else math.nan,
                        "mse_sd": float(np.std(ok, ddof=1)) if len(ok) > 1 else 0.0
                        if ok else math.nan,
                    })
        return rows

    def mean_mse(self, setting, n, label):
        for row in self.summary_rows():
            if (row["setting"], row["n"], row["estimator"]) == (setting, int(n), label):
                return row["mse_mean"]
        raise KeyError((setting, n, label))

    def coefficient_means(self, setting, n, label):
        """Mean fitted coefficient per term over successful replications."""
        vals = {}
        for r in self.records:
            if (r["setting"], r["n"], r["estimator"]) != (setting, int(n), label):
                continue
            if r["ok"] and r["coefficients"]:
                for k, v in r["coefficients"].items():
                    vals.setdefault(k, []).append(v)
        return {k: float(np.mean(v)) for k, v in vals.items()}

    def coefficient_sds(self, setting, n, label):
        vals = {}
        for r in self.records:
            if (r["setting"], r["n"], r["estimator"]) != (setting, int(n), label):
                continue
            if r["ok"] and r["coefficients"]:
                for k, v in r["coefficients"].items():
                    vals.setdefault(k, []).append(v)
        return {k: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
                for k, v in vals.items()}


def run_benchmark(plan):
    """Execute a benchmark plan; deterministic given plan.base_seed.

    Per-cell failures are recorded, not raised; the run always completes.
    Cells may run in parallel (plan.n_jobs > 1) with identical output
    because every replication derives its own seed from the plan.
    """
    cells = [(si, s, n) for si, s in enumerate(plan.settings)
             for n in plan.sample_sizes]
    results = BenchmarkResults(plan=plan)
    if plan.n_jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=plan.n_jobs) as pool:
            futs = [pool.submit(_run_cell, plan, si, s, n) for si, s, n in cells]
            chunks = [f.result() for f in futs]
    else:
        chunks = [_run_cell(plan, si, s, n) for si, s, n in cells]
    for chunk in chunks:
        results.records.extend(chunk)
    return results


# ---------------------------------------------------------------------------
# Bootstrap inference on observational data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapReport:
    """Resampling statistics of a fitted estimator.

    ``coefficient_stats`` maps term label -> {min, q1, median, q3, max,
    mean, sd}; ``predicted`` is the mean resampled effect surface over
    the report grid; ``point`` holds the full-data fit.
    """

    b_requested: int
    b_successful: int
    coefficient_stats: dict
    grid: EvalGrid
    predicted: np.ndarray
    point_coefficients: dict
    point_predicted: np.ndarray
    zeta: float

    def to_json_dict(self):
        return {
            "b_requested": self.b_requested,
            "b_successful": self.b_successful,
            "zeta": self.zeta,
            "coefficient_stats": self.coefficient_stats,
            "x_points": [float(v) for v in self.grid.x_points],
            "w_points": [float(v) for v in self.grid.w_points],
            "predicted_mean": [[float(v) for v in row] for row in self.predicted],
            "point_coefficients": self.point_coefficients,
            "point_predicted": [[float(v) for v in row]
                                for row in self.point_predicted],
        }


def _stats(values):
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"min": float(v.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v.max()), "mean": float(v.mean()),
            "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0}


def _surface(model, grid):
    xg, wg = grid.mesh()
    return np.asarray(model.capce(xg, wg), dtype=float).reshape(
        grid.x_points.size, grid.w_points.size)


def bootstrap(ds, fit_fn, b, seed, grid, select_fn=None):
    """Nonparametric bootstrap of an estimator over B resamples.

    Joint datasets are resampled at paired-row level so the dependence
    between the two samples is preserved; otherwise each sample is
    resampled independently.  Hyperparameters (the ridge multiplier or
    kernel config) are selected once on the full data via ``select_fn``
    and held fixed across resamples.

    Parameters
    ----------
    ds : TwoSampleDataset
    fit_fn : callable(dataset, selected) -> model
        Fits the estimator with the pre-selected hyperparameters.
    b : int
        Resample count (>= 1).
    seed : int
    grid : EvalGrid
        Where the predicted surface is tabulated.
    select_fn : callable(dataset) -> selected, optional
        One-shot hyperparameter selection on the full data.

    Returns
    -------
    BootstrapReport
        Per-resample failures are counted, never raised.
    """
    if b < 1:
        raise ValueError("bootstrap needs B >= 1")
    selected = select_fn(ds) if select_fn is not None else None
    point = fit_fn(ds, selected)
    point_coefs = _coef_dict(point) or {}
    point_surface = _surface(point, grid)

    root = np.random.SeedSequence([int(seed), 0xB007])
    coef_draws = {k: [] for k in point_coefs}
    surfaces = []
    successes = 0
    for child in root.spawn(b):
        rng = np.random.default_rng(child)
        try:
            if ds.joint:
                idx = rng.integers(0, ds.n1, size=ds.n1)
                res = ds.take(idx)
            else:
                res = ds.take(rng.integers(0, ds.n1, size=ds.n1),
                              rng.integers(0, ds.n2, size=ds.n2))
            model = fit_fn(res, selected)
            surf = _surface(model, grid)
            if not np.all(np.isfinite(surf)):
                raise NonFiniteEstimate(math.nan, math.nan)
        except Exception:  # noqa: BLE001 - resample failures are counted
            continue
        successes += 1
        surfaces.append(surf)
        for k, v in (_coef_dict(model) or {}).items():
            coef_draws.setdefault(k, []).append(v)
    coef_stats = {k: _stats(v) for k, v in coef_draws.items() if v}
    predicted = (np.mean(surfaces, axis=0) if surfaces
                 else np.full_like(point_surface, math.nan))
    zeta = point.metadata.get("zeta", math.nan) if hasattr(point, "metadata") else math.nan
    return BootstrapReport(b_requested=int(b), b_successful=successes,
                           coefficient_stats=coef_stats, grid=grid,
                           predicted=predicted, point_coefficients=point_coefs,
                           point_predicted=point_surface, zeta=float(zeta))


def bootstrap_estimator(ds, cfg, b, seed, grid, test_fraction=0.2):
    """Bootstrap an estimator configuration on observational data.

    Hyperparameter selection happens once on the full data with a seeded
    train/test split (fraction ``test_fraction`` held out); resamples
    reuse the selected value.
    """
    split_seed = int(np.random.SeedSequence([int(seed), 0x5E1]).generate_state(1)[0])
    moments_cache = {}

    if cfg.kind in ("rkhs", "kernel_iv"):
        def select(full):
            if cfg.kernel is not None:
                return cfg.kernel
            tr, te = split_train_test(full, test_fraction, split_seed)
            if cfg.kind == "rkhs":
                return rkhs_select(tr, te, cfg.grids, z0=cfg.z0, seed=split_seed)
            return kernel_iv_select(tr, te, cfg.grids, seed=split_seed)

        def fit(sample, kernel_cfg):
            if cfg.kind == "rkhs":
                return fit_rkhs(sample, kernel_cfg, z0=cfg.z0)
            return fit_kernel_iv(sample, kernel_cfg)
    else:
        def select(full):
            if len(cfg.zeta_grid) == 1:
                return float(cfg.zeta_grid[0])
            tr, te = split_train_test(full, test_fraction, split_seed)
            model = _fit_one(cfg, tr, te, None, split_seed, moments_cache)
            return float(model.metadata["zeta"])

        def fit(sample, zeta):
            single = replace(cfg, zeta_grid=(zeta,))
            return _fit_one(single, sample, None, None, split_seed, moments_cache)

    return bootstrap(ds, fit, b, seed, grid, select_fn=select)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

class IoError(OSError):
    """Report files could not be written."""


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.3f}" if isinstance(v, float) else str(v)


def results_csv_text(results):
    rows = results.summary_rows()
    header = ["setting", "n", "estimator", "reps", "failures", "mse_mean", "mse_sd"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in header))
    return "\n".join(lines) + "\n"


def results_markdown_text(results):
    rows = results.summary_rows()
    header = ["setting", "n", "estimator", "reps", "failures", "mse_mean", "mse_sd"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(row[k]) for k in header) + " |")
    return "\n".join(lines) + "\n"


def svg_curves(x, series, title="", width=640, height=420):
    """Minimal deterministic SVG line chart: one polyline per named series."""
    x = np.asarray(x, dtype=float)
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    finite = all_y[np.isfinite(all_y)]
    y_lo, y_hi = (float(finite.min()), float(finite.max())) if finite.size else (0, 1)
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = float(x.min()), float(x.max())
    margin = 50.0

    def sx(v):
        return margin + (v - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    colors = ["#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e",
              "#8c564b", "#7f7f7f"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
             f'font-size="14">{title}</text>']
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, ys)
                       if np.isfinite(b))
        color = colors[i % len(colors)]
        dash = ' stroke-dasharray="6,4"' if name.lower() == "oracle" else ""
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"'
                     f'{dash} points="{pts}"/>')
        parts.append(f'<text x="{width - margin + 4:.0f}" '
                     f'y="{30 + 16 * i}" font-size="11" fill="{color}" '
                     f'text-anchor="end">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_report(results, out_dir, formats=("csv", "markdown", "svg-curves")):
    """Write results.csv / results.md / curves_*.svg / report.json.

    Returns the list of written paths.  Column order and 3-decimal
    formatting are stable so repeated runs produce identical bytes.
    An empty run (no estimators) writes header-only tables.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        if "csv" in formats:
            path = os.path.join(out_dir, "results.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(results_csv_text(results))
            written.append(path)
        if "markdown" in formats:
            path = os.path.join(out_dir, "results.md")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(results_markdown_text(results))
            written.append(path)
        if "svg-curves" in formats:
            written.extend(_emit_curves(results, out_dir))
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_diagnostics(results), fh, indent=1, sort_keys=True)
            fh.write("\n")
        written.append(path)
        return written
    except OSError as exc:
        raise IoError(str(exc)) from exc


def _emit_curves(results, out_dir):
    plan = results.plan
    written = []
    for setting in plan.settings:
        for n in plan.sample_sizes:
            series = {}
            xs = plan.grid.x_points
            oracle = true_capce(setting, xs, np.full_like(xs, plan.curve_w))
            series["oracle"] = oracle
            for r in results.records:
                if (r["setting"] == setting.name and r["n"] == n and r["rep"] == 0
                        and r["ok"] and r["curve"] is not None):
                    series[r["estimator"]] = r["curve"]
            if len(series) < 2:
                continue
            path = os.path.join(out_dir, f"curves_{setting.name}_{n}.svg")
            title = (f"Estimated effect at w={plan.curve_w:g} "
                     f"(setting {setting.name}, N={n})")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(svg_curves(xs, series, title=title))
            written.append(path)
    return written


def _diagnostics(results):
    recs = []
    for r in results.records:
        rec = {k: r.get(k) for k in ("setting", "n", "estimator", "rep", "ok",
                                     "mse", "error", "coefficients", "kernel")}
        if rec["mse"] is not None and isinstance(rec["mse"], float) \
                and math.isnan(rec["mse"]):
            rec["mse"] = None
        recs.append(rec)
    return {"summary": results.summary_rows(), "records": recs}
