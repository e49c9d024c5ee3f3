"""RKHS CAPCE estimator: closed-form dual solution and model selection.

Stage 1 learns kernel ridge regressions of the treatment-side features
on the instrument (sample 1) and of the outcome on the instrument
(sample 2).  Stage 2 regresses the anchored outcome predictions

    u_i = y^T (K_Z2Z2 + N2 l2 I)^{-1} (K_Z2 z_i - K_Z2 z0)

on the anchored conditional-mean embeddings

    O = K_XW (K_Z1Z1 + N1 l1 I)^{-1} (K_Z1Z2 - K_Z1 z0),

giving dual coefficients over the N1 sample-1 anchor points

    alpha = (O O^T + N2 xi K_XW + N2 l3 I)^{-1} O u.

The estimated surface is alpha^T k_XW(anchors, (x, w)).  Both kernels
are polynomial, k(a, b) = (a.b + C)^degree.

Note on dimensions: with N1 != N2 the printed closed form is ambiguous
about whether the stage-2 inverse lives in the sample-1 or sample-2 dual
space; since the evaluated kernel vector has length N1, the solve here
is the N1-sized one, which is the unique reading consistent with the
stage-2 objective (verified against direct numerical minimization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class GramSingular(np.linalg.LinAlgError):
    """Regularized Gram system still singular after jitter."""


def polynomial_gram(a, b, offset, degree):
    """Polynomial kernel Gram matrix (a_i . b_j + offset)^degree.

    ``a`` and ``b`` are (n, k) and (m, k) point arrays; returns (n, m).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return (a @ b.T + offset) ** degree


@dataclass(frozen=True)
class KernelConfig:
    """Polynomial kernel parameters and regularization strengths.

    kz_params = (C1, C2) for the instrument kernel, kxw_params = (C3, C4)
    for the treatment-covariate kernel, lambdas = (l1, l2, l3, xi).
    """

    kz_params: tuple = (1.0, 2)
    kxw_params: tuple = (1.0, 2)
    lambdas: tuple = (0.01, 0.01, 1.0, 100.0)

    def __post_init__(self):
        c1, deg_z = self.kz_params
        c3, deg_xw = self.kxw_params
        if int(deg_z) < 1 or int(deg_xw) < 1:
            raise ValueError("polynomial kernel degrees must be positive integers")
        if any(v < 0 for v in self.lambdas):
            raise ValueError("regularization parameters must be >= 0")
        object.__setattr__(self, "kz_params", (float(c1), int(deg_z)))
        object.__setattr__(self, "kxw_params", (float(c3), int(deg_xw)))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    def kz(self, a, b):
        return polynomial_gram(np.reshape(a, (-1, 1)), np.reshape(b, (-1, 1)),
                               *self.kz_params)

    def kxw(self, a, b):
        return polynomial_gram(a, b, *self.kxw_params)

    def to_config(self):
        return {"kz_params": list(self.kz_params),
                "kxw_params": list(self.kxw_params),
                "lambdas": list(self.lambdas)}

    @classmethod
    def from_config(cls, cfg):
        return cls(kz_params=tuple(cfg.get("kz_params", (1.0, 2))),
                   kxw_params=tuple(cfg.get("kxw_params", (1.0, 2))),
                   lambdas=tuple(cfg.get("lambdas", (0.01, 0.01, 1.0, 100.0))))


def regularized_solve(gram, ridge, rhs):
    """Solve (gram + ridge*I) sol = rhs for a PSD Gram matrix.

    Falls back to a diagonal jitter of 1e-10 * trace/n when the Cholesky
    factorization fails (polynomial kernels on duplicated points are
    exactly singular).

    Raises
    ------
    GramSingular
        If the system cannot be solved even after jitter.
    """
    n = gram.shape[0]
    a = gram + ridge * np.eye(n)
    for attempt in range(2):
        try:
            factor = scipy.linalg.cho_factor(a, check_finite=False)
            return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        except scipy.linalg.LinAlgError:
            if attempt == 0:
                a = a + (1e-10 * np.trace(gram) / n) * np.eye(n)
    try:
        sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    except np.linalg.LinAlgError as exc:
        raise GramSingular("regularized Gram solve failed") from exc
    if not np.all(np.isfinite(sol)):
        raise GramSingular("regularized Gram solve returned non-finite values")
    return sol


def _points1(ds):
    return np.column_stack([ds.x, ds.w])


def anchored_outcome_targets(ds, kcfg, z0, z_eval=None):
    """Smoothed anchored targets u(z) from the outcome sample.

    u(z) = y^T (K_Z2Z2 + N2 l2 I)^{-1} (K_Z2 z - K_Z2 z0); evaluated at
    z_eval (default: the outcome sample's own instruments).
    """
    lam2 = kcfg.lambdas[1]
    z_eval = ds.z2 if z_eval is None else np.asarray(z_eval, dtype=float)
    k22 = kcfg.kz(ds.z2, ds.z2)
    smoother = regularized_solve(k22, ds.n2 * lam2, ds.y)
    k_right = kcfg.kz(ds.z2, z_eval) - kcfg.kz(ds.z2, [z0])
    return smoother @ k_right


def embedding_operator(ds, kcfg, z0=None, z_eval=None):
    """Stage-1 embedding block O (and the treatment Gram K_XW).

    Columns are the conditional-mean embedding coordinates of the
    evaluation instruments (default: z^(2)); when z0 is given the
    embeddings are anchored by subtracting the z0 column.
    """
    lam1 = kcfg.lambdas[0]
    pts = _points1(ds)
    k_xw = kcfg.kxw(pts, pts)
    k11 = kcfg.kz(ds.z1, ds.z1)
    z_eval = ds.z2 if z_eval is None else np.asarray(z_eval, dtype=float)
    k_right = kcfg.kz(ds.z1, z_eval)
    if z0 is not None:
        k_right = k_right - kcfg.kz(ds.z1, [z0])
    gamma = regularized_solve(k11, ds.n1 * lam1, k_right)
    return k_xw @ gamma, k_xw


def _stage2_alpha(o_mat, k_xw, targets, n2, lam3, xi):
    m = o_mat @ o_mat.T + n2 * xi * k_xw + n2 * lam3 * np.eye(o_mat.shape[0])
    return regularized_solve(m, 0.0, o_mat @ targets)


def fit_rkhs(ds, kcfg, z0=None):
    """Fit the RKHS estimator with a fully specified kernel config.

    Parameters
    ----------
    ds : TwoSampleDataset
    kcfg : KernelConfig
    z0 : float, optional
        Anchor instrument value (None: smallest observed z).

    Raises
    ------
    GramSingular
        If a regularized Gram system cannot be solved.
    """
    if ds.n1 < 2 or ds.n2 < 2:
        raise ValueError("rkhs estimator needs at least 2 records per sample")
    if z0 is None:
        z0 = float(ds.z_combined().min())
    lam3, xi = kcfg.lambdas[2], kcfg.lambdas[3]
    o_mat, k_xw = embedding_operator(ds, kcfg, z0=z0)
    u = anchored_outcome_targets(ds, kcfg, z0)
    alpha = _stage2_alpha(o_mat, k_xw, u, ds.n2, lam3, xi)
    from .model import CapceModel

    return CapceModel(kind="rkhs", coefficients=alpha, kernel=kcfg,
                      anchors=_points1(ds),
                      metadata={"z0": float(z0), "n1": ds.n1, "n2": ds.n2,
                                "kernel": kcfg.to_config()})


@dataclass(frozen=True)
class RkhsGrids:
    """Search grids for sequential model selection.

    Kernel parameter grids (C1, C2) and (C3, C4) default to {1..5} each;
    l1 and l2 to {1, 1e-1, 1e-2, 1e-3}; (l3, xi) to {100, 10, 1}^2.
    ``n_select`` caps the number of records used during selection
    (selection losses are stable at modest sizes and cubic solves are
    not).
    """

    c1_grid: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    c2_grid: tuple = (1, 2, 3, 4, 5)
    c3_grid: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    c4_grid: tuple = (1, 2, 3, 4, 5)
    lambda1_grid: tuple = (1.0, 1e-1, 1e-2, 1e-3)
    lambda2_grid: tuple = (1.0, 1e-1, 1e-2, 1e-3)
    lambda3_grid: tuple = (100.0, 10.0, 1.0)
    xi_grid: tuple = (100.0, 10.0, 1.0)
    n_select: int = 600


def _subsample(ds, n_max, seed):
    if max(ds.n1, ds.n2) <= n_max:
        return ds
    rng = np.random.default_rng(seed)
    idx1 = np.sort(rng.choice(ds.n1, size=min(ds.n1, n_max), replace=False))
    idx2 = np.sort(rng.choice(ds.n2, size=min(ds.n2, n_max), replace=False))
    return ds.take(idx1, idx2)


def _argmin_with_ties(candidates):
    """Pick min loss; on (near-exact) ties keep the earlier candidate.

    Candidates must be ordered so the preferred (more regularized)
    option comes first.
    """
    best_key, best_loss = None, float("inf")
    for key, loss in candidates:
        if np.isfinite(loss) and loss < best_loss * (1.0 - 1e-12):
            best_key, best_loss = key, loss
    if best_key is None:
        raise GramSingular("no selection candidate produced a finite loss")
    return best_key


def _outcome_regression_loss(train, val, kcfg):
    """Validation MSE of the outcome-on-instrument kernel ridge (trace form)."""
    k22 = kcfg.kz(train.z2, train.z2)
    smoother = regularized_solve(k22, train.n2 * kcfg.lambdas[1], train.y)
    pred = smoother @ kcfg.kz(train.z2, val.z2)
    return float(np.mean((val.y - pred) ** 2))


def _embedding_loss(train, val, kcfg):
    """Validation feature-space distance of the stage-1 embedding (trace form)."""
    pts_tr = _points1(train)
    pts_va = _points1(val)
    k11 = kcfg.kz(train.z1, train.z1)
    s = regularized_solve(k11, train.n1 * kcfg.lambdas[0], kcfg.kz(train.z1, val.z1))
    k_vt = kcfg.kxw(pts_va, pts_tr)
    k_tt = kcfg.kxw(pts_tr, pts_tr)
    diag_vv = ((np.sum(pts_va * pts_va, axis=1) + kcfg.kxw_params[0])
               ** kcfg.kxw_params[1])
    cross = np.einsum("ij,ji->i", k_vt, s)
    quad = np.einsum("ji,jk,ki->i", s, k_tt, s, optimize=True)
    return float(np.mean(diag_vv - 2.0 * cross + quad))


def _final_loss(train, val, kcfg, z0):
    """Held-out stage-2 error: fitted surface vs anchored validation targets."""
    model = fit_rkhs(train, kcfg, z0=z0)
    u_val = anchored_outcome_targets(val, kcfg, z0, z_eval=val.z1)
    pred = model.coefficients @ kcfg.kxw(model.anchors, _points1(val))
    return float(np.mean((u_val - pred) ** 2))


def rkhs_select(train, validation, grids=None, z0=None, seed=0):
    """Sequential hyperparameter selection on held-out data.

    Order follows the estimator's structure: first the instrument kernel
    and l2 by outcome-regression validation loss; then l1 per candidate
    treatment kernel by embedding validation loss; finally the treatment
    kernel, l3 and xi jointly by the held-out stage-2 error.  Ties prefer
    stronger regularization (larger lambda, then lower kernel degree).

    Returns a fully populated KernelConfig.
    """
    grids = grids or RkhsGrids()
    train = _subsample(train, grids.n_select, seed)
    validation = _subsample(validation, grids.n_select, seed + 1)
    if z0 is None:
        z0 = float(min(train.z_combined().min(), validation.z_combined().min()))

    # Instrument kernel and outcome smoother: scalar-target regression, so
    # losses are comparable across (C1, C2).
    cands = []
    for lam2 in sorted(grids.lambda2_grid, reverse=True):
        for deg in sorted(grids.c2_grid):
            for c1 in sorted(grids.c1_grid, reverse=True):
                cfg = KernelConfig(kz_params=(c1, deg),
                                   lambdas=(0.0, lam2, 0.0, 0.0))
                try:
                    loss = _outcome_regression_loss(train, validation, cfg)
                except GramSingular:
                    loss = float("inf")
                cands.append(((c1, deg, lam2), loss))
    c1_star, c2_star, lam2_star = _argmin_with_ties(cands)

    # Embedding regularizer per treatment-kernel candidate (the embedding
    # loss is not comparable across different k_XW, so keep it per-kernel).
    lam1_for = {}
    for c3 in grids.c3_grid:
        for deg in grids.c4_grid:
            cands = []
            for lam1 in sorted(grids.lambda1_grid, reverse=True):
                cfg = KernelConfig(kz_params=(c1_star, c2_star),
                                   kxw_params=(c3, deg),
                                   lambdas=(lam1, lam2_star, 0.0, 0.0))
                try:
                    loss = _embedding_loss(train, validation, cfg)
                except GramSingular:
                    loss = float("inf")
                cands.append((lam1, loss))
            lam1_for[(c3, deg)] = _argmin_with_ties(cands)

    # Treatment kernel and stage-2 regularizers by held-out final error.
    cands = []
    for lam3 in sorted(grids.lambda3_grid, reverse=True):
        for xi in sorted(grids.xi_grid, reverse=True):
            for deg in sorted(grids.c4_grid):
                for c3 in sorted(grids.c3_grid, reverse=True):
                    lam1 = lam1_for[(c3, deg)]
                    cfg = KernelConfig(kz_params=(c1_star, c2_star),
                                       kxw_params=(c3, deg),
                                       lambdas=(lam1, lam2_star, lam3, xi))
                    try:
                        loss = _final_loss(train, validation, cfg, z0)
                    except GramSingular:
                        loss = float("inf")
                    cands.append(((c3, deg, lam3, xi), loss))
    c3_star, c4_star, lam3_star, xi_star = _argmin_with_ties(cands)

    return KernelConfig(kz_params=(c1_star, c2_star),
                        kxw_params=(c3_star, c4_star),
                        lambdas=(lam1_for[(c3_star, c4_star)], lam2_star,
                                 lam3_star, xi_star))
