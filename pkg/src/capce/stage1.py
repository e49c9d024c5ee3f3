"""Instrument-stage series regressions and anchored prediction differences.

Stage 1 regresses the outcome (over sample 2) and each basis
antiderivative Phi_j(x, w) (over sample 1) on power-series instrument
features q(z).  With second-moment matrices M = mean(q q^T) and their
generalized inverses, the anchored prediction differences are

    c_i   = (q(z_i) - q(z_0))^T  M2^-  mean(q(z^(2)) y)
    d_i^j = (q(z_i) - q(z_0))^T  M1^-  mean(q(z^(1)) Phi_j)

evaluated by default at the concatenated instrument values of both
samples (N = N1 + N2 rows).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import eval_antiderivative, eval_basis

PINV_RCOND = 1e-10


class TooFewSamples(ValueError):
    """Fewer observations than instrument features."""


class RankDeficientWarning(UserWarning):
    """Instrument feature moment matrix is rank deficient (pinv proceeds)."""


def pseudo_inverse(m, rcond=PINV_RCOND):
    """SVD pseudo-inverse with relative cutoff; satisfies M M^- M = M.

    Returns the inverse together with the numerical rank.
    """
    u, s, vt = np.linalg.svd(m, hermitian=True)
    cutoff = rcond * (s[0] if s.size else 0.0)
    keep = s > cutoff
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (vt.T * inv_s) @ u.T, int(keep.sum())


def _series_lsq(qmat, targets):
    """Least-squares coefficients of each target column on the q features.

    Solves via the moment-matrix pseudo-inverse (M^- b with
    M = Q^T Q / n, b = Q^T T / n) so rank-deficient designs are handled
    by the generalized-inverse contract.

    Returns (coefficients (P, J), M, M^-, rank).
    """
    n = qmat.shape[0]
    m = qmat.T @ qmat / n
    b = qmat.T @ targets / n
    m_pinv, rank = pseudo_inverse(m)
    return m_pinv @ b, m, m_pinv, rank


@dataclass(frozen=True)
class Stage1Fit:
    """Fitted instrument-stage regressions.

    ``omega`` holds the outcome-on-q coefficients, ``nu`` one column per
    antiderivative target.  The moment matrices and their pseudo-inverses
    are kept for diagnostics and tests of the generalized-inverse
    contract.
    """

    qbasis: object
    z0: float
    omega: np.ndarray
    nu: np.ndarray
    m1: np.ndarray = field(repr=False)
    m2: np.ndarray = field(repr=False)
    m1_pinv: np.ndarray = field(repr=False)
    m2_pinv: np.ndarray = field(repr=False)
    rank1: int = 0
    rank2: int = 0
    r2_outcome: float = float("nan")
    r2_targets: np.ndarray = field(default=None, repr=False)
    z_train: np.ndarray = field(default=None, repr=False)

    def predict_outcome(self, z):
        """Fitted E[Y | Z=z] levels."""
        return self.qbasis.eval(z) @ self.omega

    def predict_targets(self, z):
        """Fitted E[Phi_j | Z=z] levels, shape (n, J)."""
        return self.qbasis.eval(z) @ self.nu

    def anchor_targets(self):
        """Predictions of each target at the anchor z0 (length J)."""
        return self.qbasis.eval([self.z0])[0] @ self.nu

    def diagnostics(self):
        return {
            "p_degree": self.qbasis.degree,
            "z0": self.z0,
            "rank_m1": self.rank1,
            "rank_m2": self.rank2,
            "cond_m1": float(np.linalg.cond(self.m1)),
            "cond_m2": float(np.linalg.cond(self.m2)),
            "r2_outcome": self.r2_outcome,
            "r2_targets": None if self.r2_targets is None else list(self.r2_targets),
        }


def _r2(actual, fitted):
    ss_res = np.sum((actual - fitted) ** 2, axis=0)
    centered = actual - actual.mean(axis=0)
    ss_tot = np.sum(centered**2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 1.0 - ss_res / ss_tot
    return np.where(ss_tot > 0, out, 1.0)


def fit_stage1(ds, spec, qbasis, z0=None, targets=None):
    """Fit the stage-1 regressions for a basis spec.

    Parameters
    ----------
    ds : TwoSampleDataset
    spec : BasisSpec
        Targets default to its antiderivatives Phi_j over sample 1.
    qbasis : InstrumentBasis
    z0 : float, optional
        Anchor instrument value; defaults to the smallest observed z
        across both samples.
    targets : ndarray, optional
        Precomputed (N1, J) target matrix overriding the antiderivatives
        (the TSLS baselines pass level terms here).

    Raises
    ------
    TooFewSamples
        If either sample is smaller than the number of q features.

    Warns
    -----
    RankDeficientWarning
        When a moment matrix is numerically rank deficient; the
        pseudo-inverse solution still proceeds.
    """
    p = qbasis.size
    if ds.n1 < p or ds.n2 < p:
        raise TooFewSamples(f"need at least P={p} records per sample")
    if z0 is None:
        z0 = float(ds.z_combined().min())
    if not np.isfinite(z0):
        raise ValueError("z0 must be finite")
    if targets is None:
        targets = eval_antiderivative(spec, ds.x, ds.w)
    q1 = qbasis.eval(ds.z1)
    q2 = qbasis.eval(ds.z2)
    nu, m1, m1_pinv, rank1 = _series_lsq(q1, targets)
    omega, m2, m2_pinv, rank2 = _series_lsq(q2, ds.y[:, None])
    omega = omega[:, 0]
    if rank1 < p or rank2 < p:
        warnings.warn(
            f"instrument moment matrix rank deficient (ranks {rank1}/{rank2} of {p})",
            RankDeficientWarning, stacklevel=2)
    return Stage1Fit(
        qbasis=qbasis, z0=float(z0), omega=omega, nu=nu,
        m1=m1, m2=m2, m1_pinv=m1_pinv, m2_pinv=m2_pinv,
        rank1=rank1, rank2=rank2,
        r2_outcome=float(_r2(ds.y[:, None], q2 @ omega[:, None])[0]),
        r2_targets=_r2(targets, q1 @ nu),
        z_train=ds.z_combined(),
    )


def fit_stage1_levels(ds, spec, qbasis, z0=None):
    """Stage-1 fit whose targets are the level terms phi_j (baselines)."""
    return fit_stage1(ds, spec, qbasis, z0=z0,
                      targets=eval_basis(spec, ds.x, ds.w))


def predict_differences(fit, z_values=None):
    """Anchored prediction differences at given instrument values.

    Parameters
    ----------
    fit : Stage1Fit
    z_values : array-like, optional
        Defaults to the concatenated training instruments (z^(1), z^(2)),
        length N = N1 + N2.

    Returns
    -------
    (ndarray, ndarray)
        c_hat of shape (N,) and D_hat of shape (N, J).  The row for
        z = z0 is exactly zero.
    """
    if z_values is None:
        z_values = fit.z_train
    qdiff = fit.qbasis.eval(z_values) - fit.qbasis.eval([fit.z0])
    return qdiff @ fit.omega, qdiff @ fit.nu


def predict_levels(fit, z_values=None):
    """Un-anchored stage-1 predictions (outcome and targets) at z values."""
    if z_values is None:
        z_values = fit.z_train
    q = fit.qbasis.eval(z_values)
    return q @ fit.omega, q @ fit.nu
