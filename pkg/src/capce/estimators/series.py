"""Sieve and parametric CAPCE estimators.

Both reduce the identifying integral equation to the linear moment
system c = coef^T d built from stage-1 anchored prediction differences,
then solve a ridge problem

    coef = (D^T D + zeta * Pen)^{-1} D^T c

with Pen = diag(Lambda) for the sieve (a Monte Carlo approximation of
the weighted-Sobolev penalty) and Pen = I for the parametric model.
The multiplier zeta is picked from a grid by held-out empirical risk.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iter_product

import numpy as np
import scipy.linalg

from ..basis import eval_basis_partial
from ..stage1 import fit_stage1, predict_differences
from .model import CapceModel


class KappaTooSmall(ValueError):
    """Weight exponent violates kappa > (1 + d) / 2."""


class SingularSystem(np.linalg.LinAlgError):
    """Every ridge candidate on the grid produced a non-finite solution."""


@dataclass(frozen=True)
class LambdaConfig:
    """Monte Carlo settings for the sieve penalty matrix.

    The integration box defaults to x in [-4, 4], w in [-2, 2] per
    covariate, with weight exponent kappa = 2 and derivative order 1.
    """

    box: tuple = (-4.0, 4.0, -2.0, 2.0)
    kappa: float = 2.0
    order_l: int = 1
    n_mc: int = 100_000
    seed: int = 0
    allow_small_kappa: bool = False

    def bounds(self, d):
        """Per-coordinate (lo, hi) bounds: x first, then each covariate."""
        vals = list(self.box)
        if len(vals) == 4 and d >= 1:
            x_lo, x_hi, w_lo, w_hi = vals
            return [(x_lo, x_hi)] + [(w_lo, w_hi)] * d
        if len(vals) == 2 * (d + 1):
            return [(vals[2 * i], vals[2 * i + 1]) for i in range(d + 1)]
        if len(vals) == 2 and d == 0:
            return [(vals[0], vals[1])]
        raise ValueError(f"box {self.box} incompatible with d={d}")


@dataclass(frozen=True)
class LambdaMatrix:
    """Monte Carlo estimate of the sieve penalty matrix (symmetrized)."""

    values: np.ndarray
    mc_samples: int
    box: tuple
    kappa: float
    order_l: int
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def diagonal(self):
        return np.diag(self.values).copy()


def _multi_indices(d, order):
    """All derivative multi-indices with |lambda| <= order, zero first."""
    out = []
    for lam in iter_product(*([range(order + 1)] * (d + 1))):
        if sum(lam) <= order:
            out.append(lam)
    out.sort(key=sum)
    return out


class LambdaMoments:
    """Cached Monte Carlo moments for penalty-matrix assembly.

    The anchor predictions E[Phi_j | z0] enter the penalty integrand only
    through the zero-order term, so the integral decomposes into moments
    that do not depend on the fitted stage 1:

        Lambda_ij = V * [ cross_ij - a_i lin_j - a_j lin_i + a_i a_j w0 ]

    where cross sums mean(D^lam Phi_i * D^lam Phi_j * weight) over all
    |lam| <= l, lin_j = mean(Phi_j * weight), w0 = mean(weight), V is the
    box volume and a is the anchor vector.  One set of moments therefore
    serves every replication that shares a basis and box.
    """

    def __init__(self, spec, cfg):
        if not cfg.allow_small_kappa and cfg.kappa <= (1 + spec.d) / 2:
            raise KappaTooSmall(
                f"kappa={cfg.kappa} must exceed (1+d)/2 = {(1 + spec.d) / 2}")
        self.spec = spec
        self.cfg = cfg
        bounds = cfg.bounds(spec.d)
        rng = np.random.default_rng(cfg.seed)
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        pts = rng.uniform(lo, hi, size=(int(cfg.n_mc), spec.d + 1))
        xs = pts[:, 0]
        ws = pts[:, 1:]
        weight = (1.0 + np.sum(pts**2, axis=1)) ** cfg.kappa
        self.volume = float(np.prod(hi - lo))
        self.weight_mean = float(weight.mean())
        cross = np.zeros((spec.size, spec.size))
        lin = None
        for lam in _multi_indices(spec.d, cfg.order_l):
            dmat = eval_basis_partial(spec, lam, xs, ws)
            wd = dmat * weight[:, None]
            cross += dmat.T @ wd / pts.shape[0]
            if sum(lam) == 0:
                lin = wd.mean(axis=0)
        self.cross = cross
        self.lin = lin

    def assemble(self, anchor):
        """Penalty matrix for a given anchor-prediction vector."""
        a = np.asarray(anchor, dtype=float)
        mat = (self.cross - np.outer(a, self.lin) - np.outer(self.lin, a)
               + np.outer(a, a) * self.weight_mean)
        mat = self.volume * 0.5 * (mat + mat.T)
        return LambdaMatrix(values=mat, mc_samples=int(self.cfg.n_mc),
                            box=tuple(self.cfg.box), kappa=self.cfg.kappa,
                            order_l=self.cfg.order_l, seed=self.cfg.seed)


def monte_carlo_lambda(spec, fit, box=None, kappa=2.0, order_l=1,
                       n_mc=100_000, seed=0, allow_small_kappa=False):
    """Monte Carlo penalty matrix for a basis spec and stage-1 fit.

    ``fit`` supplies the anchor predictions E[Phi_j | z0]; pass None to
    anchor at zero (useful for closed-form checks).

    Raises
    ------
    KappaTooSmall
        If kappa <= (1+d)/2 and ``allow_small_kappa`` is not set.
    """
    kwargs = dict(kappa=kappa, order_l=order_l, n_mc=n_mc, seed=seed,
                  allow_small_kappa=allow_small_kappa)
    if box is not None:
        kwargs["box"] = tuple(box)
    moments = LambdaMoments(spec, LambdaConfig(**kwargs))
    anchor = np.zeros(spec.size) if fit is None else fit.anchor_targets()
    return moments.assemble(anchor)


def ridge_solve(gram, rhs, penalty_diag, zeta):
    """Solve (gram + zeta * diag(penalty)) beta = rhs with refinement.

    One step of iterative refinement keeps the normal-equation residual
    near machine precision even for moderately ill-conditioned systems.
    Returns None when the system is numerically singular or the solution
    is non-finite.
    """
    a = gram + zeta * np.diag(penalty_diag)
    try:
        factor = scipy.linalg.cho_factor(a, check_finite=False)
        beta = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        beta += scipy.linalg.cho_solve(factor, rhs - a @ beta, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        try:
            beta = np.linalg.lstsq(a, rhs, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
    if not np.all(np.isfinite(beta)):
        return None
    return beta


def _select_ridge(design, target, penalty_diag, zeta_grid, risk_fn):
    """Ridge path over the zeta grid; returns the held-out-risk minimizer.

    Ties prefer the larger zeta (stronger regularization).
    """
    if len(zeta_grid) == 0:
        raise ValueError("zeta_grid must be nonempty")
    gram = design.T @ design
    rhs = design.T @ target
    candidates = []
    for zeta in sorted({float(z) for z in zeta_grid}, reverse=True):
        beta = ridge_solve(gram, rhs, penalty_diag, zeta)
        risk = float("inf") if beta is None else risk_fn(beta)
        if not np.isfinite(risk):
            risk = float("inf")
        candidates.append((zeta, beta, risk))
    best = None
    for zeta, beta, risk in candidates:  # descending zeta: first win = largest
        if beta is not None and (best is None or risk < best[2]):
            best = (zeta, beta, risk)
    if best is None:
        raise SingularSystem("no zeta on the grid yielded a finite solution")
    risks = {z: r for z, _, r in candidates}
    return best[0], best[1], risks


def _anchored_risk(test, spec, qbasis, z0):
    """Held-out empirical risk from stage-1 quantities refit on test data."""
    fit = fit_stage1(test, spec, qbasis, z0=z0)
    c_te, d_te = predict_differences(fit)

    def risk(beta):
        return float(np.mean((c_te - d_te @ beta) ** 2))

    return risk


def _fit_series(ds, spec, qbasis, z0, zeta_grid, test, penalty_diag_fn, kind):
    zeta_grid = list(zeta_grid)
    s1 = fit_stage1(ds, spec, qbasis, z0=z0)
    c_hat, d_hat = predict_differences(s1)
    pen, pen_meta = penalty_diag_fn(s1)
    if test is not None:
        risk_fn = _anchored_risk(test, spec, qbasis, s1.z0)
    elif len(zeta_grid) == 1:
        risk_fn = lambda beta: 0.0
    else:
        raise ValueError("a test dataset is required to select among several zetas")
    zeta, beta, risks = _select_ridge(d_hat, c_hat, pen, zeta_grid, risk_fn)
    meta = {"zeta": zeta, "z0": s1.z0, "risks": risks,
            "n1": ds.n1, "n2": ds.n2, "stage1": s1.diagnostics()}
    meta.update(pen_meta)
    return CapceModel(kind=kind, basis=spec, coefficients=beta, metadata=meta)


def fit_sieve(ds, spec, qbasis, z0, zeta_grid, test, lambda_cfg,
              lambda_moments=None):
    """Sieve estimator with the Monte Carlo diag(Lambda) penalty.

    Parameters
    ----------
    ds, test : TwoSampleDataset
        Training data and held-out data for multiplier selection (test
        may be None when the grid has a single value).
    spec : BasisSpec
    qbasis : InstrumentBasis
    z0 : float or None
        Anchor instrument value (None: smallest observed z).
    zeta_grid : sequence of float
    lambda_cfg : LambdaConfig
    lambda_moments : LambdaMoments, optional
        Precomputed Monte Carlo moments (reused across replications).

    Raises
    ------
    SingularSystem
        If every grid point yields a non-finite solution.
    """
    moments = lambda_moments or LambdaMoments(spec, lambda_cfg)

    def penalty(s1):
        lam = moments.assemble(s1.anchor_targets())
        return lam.diagonal(), {"lambda_diag": lam.diagonal(),
                                "lambda_cfg": {"box": list(moments.cfg.box),
                                               "kappa": moments.cfg.kappa,
                                               "order_l": moments.cfg.order_l,
                                               "n_mc": int(moments.cfg.n_mc),
                                               "seed": moments.cfg.seed}}

    return _fit_series(ds, spec, qbasis, z0, zeta_grid, test, penalty, "sieve")


def fit_parametric(ds, terms, qbasis, z0, zeta_grid, test):
    """Parametric estimator: identity ridge penalty over known terms."""

    def penalty(_s1):
        return np.ones(terms.size), {}

    return _fit_series(ds, terms, qbasis, z0, zeta_grid, test, penalty, "parametric")
