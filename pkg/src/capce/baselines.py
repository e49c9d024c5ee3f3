"""Comparator estimators of the level surface E[Y_x | w].

PTSLS and NTSLS are two-stage least squares with series first stages:
each level basis term is regressed on the instrument features over
sample 1, the outcome over sample 2, and the smoothed outcome is
ridge-regressed on the smoothed terms.  No anchor value enters; the
comparable partial-effect surface is the analytic x-derivative of the
fitted level model.

Kernel IV is the kernel analogue: the same Gram machinery as the RKHS
estimator but regressing the outcome on un-anchored conditional-mean
embeddings; its derivative surface comes from central finite
differences because general kernels have no closed-form derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import broadcast_points, differentiate_terms, eval_basis, eval_basis_dx
from .estimators.rkhs import (KernelConfig, RkhsGrids, GramSingular,
                              _argmin_with_ties, _points1, _subsample,
                              embedding_operator, regularized_solve)
from .estimators.series import _select_ridge
from .stage1 import fit_stage1_levels, predict_levels


@dataclass(frozen=True)
class StructuralModel:
    """A fitted level surface and its x-derivative.

    For series kinds ("ptsls", "ntsls") the derivative is exact; for
    "kernel_iv" it is a central finite difference with the step recorded
    in ``fd_step``.
    """

    kind: str
    coefficients: np.ndarray
    basis: object | None = None
    kernel: KernelConfig | None = None
    anchors: np.ndarray | None = field(default=None, repr=False)
    fd_step: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def evaluate_level(self, x, w):
        """Fitted E[Y_x | w] at points (x, w)."""
        x, w, shape = broadcast_points(x, w, self.d)
        if self.kind == "kernel_iv":
            pts = np.column_stack([x, w])
            vals = self.coefficients @ self.kernel.kxw(self.anchors, pts)
        else:
            vals = eval_basis(self.basis, x, w) @ self.coefficients
        return vals.reshape(shape) if shape else float(vals[0])

    def evaluate_dx(self, x, w):
        """x-derivative of the level surface (the comparable effect)."""
        x, w, shape = broadcast_points(x, w, self.d)
        if self.kind == "kernel_iv":
            h = self.fd_step
            vals = np.asarray(self.evaluate_level(x + h, w)
                              - self.evaluate_level(x - h, w)) / (2.0 * h)
            vals = vals.ravel()
        else:
            vals = eval_basis_dx(self.basis, x, w) @ self.coefficients
        return vals.reshape(shape) if shape else float(vals[0])

    # Same entry point the CAPCE models expose, so benchmark code can
    # treat both uniformly.
    capce = evaluate_dx

    @property
    def d(self):
        if self.kind == "kernel_iv":
            return self.anchors.shape[1] - 1
        return self.basis.d

    def dx_coefficients(self):
        """Coefficients of the derivative surface in the derivative basis.

        Only for series kinds: term (p, q) differentiates to p * (p-1, q),
        so each surviving term's coefficient is p * c_(p,q).
        """
        if self.kind == "kernel_iv":
            raise ValueError("kernel models have no closed-form derivative terms")
        dspec, scales, src = differentiate_terms(self.basis)
        return dspec, scales * self.coefficients[src]

    def coefficient_table(self):
        if self.kind == "kernel_iv":
            raise ValueError("kernel models have no named coefficients")
        return list(zip(self.basis.term_labels(), self.coefficients))


def structural_from_json_dict(payload):
    """Rebuild a StructuralModel from its kind-tagged JSON form."""
    kind = payload["kind"]
    coef = np.asarray(payload["coefficients"], dtype=float)
    if kind == "kernel_iv":
        return StructuralModel(kind=kind, coefficients=coef,
                               kernel=KernelConfig.from_config(payload["kernel"]),
                               anchors=np.asarray(payload["anchors"], dtype=float),
                               fd_step=float(payload["fd_step"]))
    from .basis import BasisSpec

    return StructuralModel(kind=kind, coefficients=coef,
                           basis=BasisSpec.from_config(payload["basis"]))


def _level_risk(test, spec, qbasis):
    s1 = fit_stage1_levels(test, spec, qbasis, z0=0.0)
    c_te, e_te = predict_levels(s1)

    def risk(coef):
        return float(np.mean((c_te - e_te @ coef) ** 2))

    return risk


def _fit_tsls(ds, spec, qbasis, zeta_grid, test, kind):
    zeta_grid = list(zeta_grid)
    s1 = fit_stage1_levels(ds, spec, qbasis, z0=0.0)
    c_hat, e_hat = predict_levels(s1)
    if test is not None:
        risk_fn = _level_risk(test, spec, qbasis)
    elif len(zeta_grid) == 1:
        risk_fn = lambda coef: 0.0
    else:
        raise ValueError("a test dataset is required to select among several zetas")
    zeta, coef, risks = _select_ridge(e_hat, c_hat, np.ones(spec.size),
                                      zeta_grid, risk_fn)
    meta = {"zeta": zeta, "risks": risks, "n1": ds.n1, "n2": ds.n2,
            "stage1": s1.diagnostics()}
    return StructuralModel(kind=kind, basis=spec, coefficients=coef, metadata=meta)


def fit_ptsls(ds, level_terms, qbasis, zeta_grid, test):
    """Parametric TSLS on explicit level terms (e.g. {1, W, X, WX, X2})."""
    return _fit_tsls(ds, level_terms, qbasis, zeta_grid, test, "ptsls")


def fit_ntsls(ds, hermite_spec, qbasis, zeta_grid, test):
    """Sieve TSLS on a Hermite product level basis."""
    return _fit_tsls(ds, hermite_spec, qbasis, zeta_grid, test, "ntsls")


FD_STEP_FRACTION = 1e-3


def fit_kernel_iv(ds, kcfg, fd_step=None):
    """Standard two-stage kernel IV (level surface, no anchoring).

    alpha = (O O^T + N2 xi K_XW + N2 l3 I)^{-1} O y with un-anchored
    embeddings O; the derivative uses central differences with step
    ``FD_STEP_FRACTION`` times the observed x-range.
    """
    o_mat, k_xw = embedding_operator(ds, kcfg, z0=None)
    lam3, xi = kcfg.lambdas[2], kcfg.lambdas[3]
    m = o_mat @ o_mat.T + ds.n2 * xi * k_xw + ds.n2 * lam3 * np.eye(ds.n1)
    alpha = regularized_solve(m, 0.0, o_mat @ ds.y)
    if fd_step is None:
        x_range = float(ds.x.max() - ds.x.min()) or 1.0
        fd_step = FD_STEP_FRACTION * x_range
    return StructuralModel(kind="kernel_iv", coefficients=alpha, kernel=kcfg,
                           anchors=_points1(ds), fd_step=float(fd_step),
                           metadata={"n1": ds.n1, "n2": ds.n2,
                                     "kernel": kcfg.to_config()})


def _kiv_outcome_smoother(ds, kcfg, z_eval):
    k22 = kcfg.kz(ds.z2, ds.z2)
    smoother = regularized_solve(k22, ds.n2 * kcfg.lambdas[1], ds.y)
    return smoother @ kcfg.kz(ds.z2, z_eval)


def kernel_iv_select(train, validation, grids=None, seed=0):
    """Hyperparameter selection for kernel IV, mirroring the RKHS protocol.

    The final loss compares the fitted level surface at validation
    treatment points against the validation outcome smoother's
    predictions at the paired instruments.
    """
    from .estimators.rkhs import _embedding_loss, _outcome_regression_loss

    grids = grids or RkhsGrids()
    train = _subsample(train, grids.n_select, seed)
    validation = _subsample(validation, grids.n_select, seed + 1)

    cands = []
    for lam2 in sorted(grids.lambda2_grid, reverse=True):
        for deg in sorted(grids.c2_grid):
            for c1 in sorted(grids.c1_grid, reverse=True):
                cfg = KernelConfig(kz_params=(c1, deg), lambdas=(0.0, lam2, 0.0, 0.0))
                try:
                    loss = _outcome_regression_loss(train, validation, cfg)
                except GramSingular:
                    loss = float("inf")
                cands.append(((c1, deg, lam2), loss))
    c1_star, c2_star, lam2_star = _argmin_with_ties(cands)

    lam1_for = {}
    for c3 in grids.c3_grid:
        for deg in grids.c4_grid:
            cands = []
            for lam1 in sorted(grids.lambda1_grid, reverse=True):
                cfg = KernelConfig(kz_params=(c1_star, c2_star), kxw_params=(c3, deg),
                                   lambdas=(lam1, lam2_star, 0.0, 0.0))
                try:
                    loss = _embedding_loss(train, validation, cfg)
                except GramSingular:
                    loss = float("inf")
                cands.append((lam1, loss))
            lam1_for[(c3, deg)] = _argmin_with_ties(cands)

    cands = []
    for lam3 in sorted(grids.lambda3_grid, reverse=True):
        for xi in sorted(grids.xi_grid, reverse=True):
            for deg in sorted(grids.c4_grid):
                for c3 in sorted(grids.c3_grid, reverse=True):
                    cfg = KernelConfig(kz_params=(c1_star, c2_star),
                                       kxw_params=(c3, deg),
                                       lambdas=(lam1_for[(c3, deg)], lam2_star,
                                                lam3, xi))
                    try:
                        model = fit_kernel_iv(train, cfg)
                        target = _kiv_outcome_smoother(validation, cfg, validation.z1)
                        pred = model.coefficients @ cfg.kxw(model.anchors,
                                                            _points1(validation))
                        loss = float(np.mean((target - pred) ** 2))
                    except GramSingular:
                        loss = float("inf")
                    cands.append(((c3, deg, lam3, xi), loss))
    c3_star, c4_star, lam3_star, xi_star = _argmin_with_ties(cands)

    return KernelConfig(kz_params=(c1_star, c2_star),
                        kxw_params=(c3_star, c4_star),
                        lambdas=(lam1_for[(c3_star, c4_star)], lam2_star,
                                 lam3_star, xi_star))
