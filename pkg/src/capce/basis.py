"""Scalar basis families on (x, w) with exact x-antiderivatives.

Two polynomial families are supported: probabilists' Hermite products
``He_p(x) * He_q1(w_1) * ... * He_qd(w_d)`` and plain monomial products
``x^p * w_1^q1 * ... * w_d^qd``.  Both are closed under integration and
differentiation in every coordinate, which is what the downstream moment
equations need: each basis function ``phi_j`` has an antiderivative
``Phi_j(x, w) = \\int phi_j dx`` inside the same family, and every mixed
partial of ``Phi_j`` is again a family member times a constant.

The antiderivative's integration constant is fixed so the result stays a
pure family term (``He_{p+1}/(p+1)`` resp. ``x^{p+1}/(p+1)``).  This is
harmless because consumers only ever use differences of conditional
expectations of ``Phi_j``, which cancel any constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
import re

import numpy as np

HERMITE_MAX_DEGREE = 30


class DegreeTooHigh(ValueError):
    """Hermite degree beyond the implemented maximum."""


class DimensionMismatch(ValueError):
    """Covariate vector length does not match the basis dimension."""


class OrderTooHigh(ValueError):
    """Requested mixed-partial order exceeds the configured limit."""


def hermite(p, t):
    """Probabilists' Hermite polynomial He_p evaluated at t.

    Uses the recurrence He_{p+1}(t) = t*He_p(t) - p*He_{p-1}(t) with
    He_0 = 1, He_1 = t (so He_2(t) = t^2 - 1).  Accepts scalars or
    arrays and broadcasts.

    Raises
    ------
    DegreeTooHigh
        If p exceeds HERMITE_MAX_DEGREE (or is negative).
    """
    if p < 0 or p > HERMITE_MAX_DEGREE:
        raise DegreeTooHigh(f"Hermite degree {p} outside [0, {HERMITE_MAX_DEGREE}]")
    t = np.asarray(t, dtype=float)
    prev = np.ones_like(t)
    if p == 0:
        return prev if prev.ndim else float(prev)
    cur = t.copy()
    for k in range(1, p):
        prev, cur = cur, t * cur - k * prev
    return cur if cur.ndim else float(cur)


def hermite_derivative_factor(p, order):
    """Constant in He_p^{(order)} = factor * He_{p-order} (0 if order > p)."""
    if order > p:
        return 0.0
    fac = 1.0
    for i in range(order):
        fac *= p - i
    return fac


def _monomial_derivative_factor(p, order):
    # d^order/dt^order t^p = p(p-1)...(p-order+1) t^{p-order}
    if order > p:
        return 0.0
    fac = 1.0
    for i in range(order):
        fac *= p - i
    return fac


_TERM_TOKEN = re.compile(r"([XW])(\d*)")


def parse_term(text):
    """Parse a monomial term string like "1", "X", "W2", "XW", "X2W2".

    Digits after a letter are the exponent (default 1).  Only a single
    covariate is supported by the string syntax; multi-covariate terms
    must be given as (x_exp, w_exps) tuples directly.

    Returns ``(x_exp, (w_exp,))``.
    """
    s = text.strip().upper()
    if s == "1":
        return (0, (0,))
    if not s or not re.fullmatch(r"(?:[XW]\d*)+", s):
        raise ValueError(f"cannot parse basis term {text!r}")
    x_exp = 0
    w_exp = 0
    for letter, digits in _TERM_TOKEN.findall(s):
        e = int(digits) if digits else 1
        if letter == "X":
            x_exp += e
        else:
            w_exp += e
    return (x_exp, (w_exp,))


@dataclass(frozen=True)
class BasisSpec:
    """An enumerated family of basis terms phi_j(x, w).

    Parameters
    ----------
    kind : {"hermite_product", "monomial_product", "explicit_terms"}
        Family of the univariate factors.  ``explicit_terms`` is a
        monomial family with a hand-picked term list.
    terms : tuple of (int, tuple of int)
        One ``(p, (q_1, ..., q_d))`` exponent/index pair per term, in
        evaluation order.
    d : int
        Covariate dimension (may be 0).
    max_partial_order : int
        Largest |lambda| accepted by :func:`eval_basis_partial`.
    """

    kind: str
    terms: tuple = ()
    d: int = 1
    max_partial_order: int = 4
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in ("hermite_product", "monomial_product", "explicit_terms"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        for p, q in self.terms:
            if len(q) != self.d:
                raise DimensionMismatch(
                    f"term {(p, q)} has {len(q)} covariate exponents, expected {self.d}"
                )

    @property
    def size(self):
        return len(self.terms)

    @property
    def hermite_factors(self):
        return self.kind == "hermite_product"

    def term_labels(self):
        if self.labels:
            return list(self.labels)
        return [_term_label(self.kind, p, q) for p, q in self.terms]

    def to_config(self):
        """Plain-dict form for config files and model serialization."""
        return {
            "kind": self.kind,
            "d": self.d,
            "terms": [[p, list(q)] for p, q in self.terms],
        }

    @classmethod
    def from_config(cls, cfg):
        """Build a spec from a config mapping.

        Accepts either the explicit-term form ``{"terms": ["1","W","X"]}``
        (or exponent pairs), or the degree form
        ``{"kind": "hermite_product", "x_deg": 2, "w_deg": 2}``.
        """
        if "terms" in cfg and "kind" not in cfg:
            return explicit_terms(cfg["terms"])
        kind = cfg["kind"]
        if kind == "explicit_terms" or "terms" in cfg:
            raw = cfg["terms"]
            if raw and isinstance(raw[0], str):
                return explicit_terms(raw)
            terms = tuple((int(p), tuple(int(e) for e in q)) for p, q in raw)
            d = cfg.get("d", len(terms[0][1]) if terms else 1)
            return cls(kind=kind, terms=terms, d=d)
        x_deg = int(cfg["x_deg"])
        w_deg = cfg.get("w_deg", 0)
        d = int(cfg.get("d", 1 if w_deg or "w_deg" in cfg else 0))
        maker = hermite_product if kind == "hermite_product" else monomial_product
        return maker(x_deg, w_deg, d=d)


def _term_label(kind, p, q):
    if kind == "hermite_product":
        parts = [f"h{p}(X)"] + [f"h{e}(W{i + 1})" for i, e in enumerate(q)]
        return "*".join(parts)
    parts = []
    if p:
        parts.append("X" if p == 1 else f"X{p}")
    for i, e in enumerate(q):
        if e:
            name = "W" if len(q) == 1 else f"W{i + 1}"
            parts.append(name if e == 1 else f"{name}{e}")
    return "*".join(parts) if parts else "1"


def hermite_product(x_deg, w_deg, d=1):
    """Tensor Hermite basis He_p(x) * prod He_{q_k}(w_k), row-major in (p, q).

    ``w_deg`` may be a single bound shared by all covariates or one bound
    per covariate.
    """
    w_degs = _per_covariate(w_deg, d)
    terms = tuple(
        (p, q)
        for p in range(x_deg + 1)
        for q in product(*(range(b + 1) for b in w_degs))
    )
    return BasisSpec(kind="hermite_product", terms=terms, d=d)


def monomial_product(x_deg, w_deg, d=1):
    """Tensor monomial basis x^p * prod w_k^{q_k}, row-major in (p, q)."""
    w_degs = _per_covariate(w_deg, d)
    terms = tuple(
        (p, q)
        for p in range(x_deg + 1)
        for q in product(*(range(b + 1) for b in w_degs))
    )
    return BasisSpec(kind="monomial_product", terms=terms, d=d)


def explicit_terms(items):
    """Monomial basis from an explicit term list.

    ``items`` may be strings ("1", "W", "X", "XW2", ...) or
    ``(x_exp, w_exps)`` pairs.  String syntax implies d = 1.
    """
    parsed = []
    labels = []
    for it in items:
        if isinstance(it, str):
            parsed.append(parse_term(it))
            labels.append(it)
        else:
            p, q = it
            parsed.append((int(p), tuple(int(e) for e in q)))
            labels.append(_term_label("explicit_terms", *parsed[-1]))
    d = len(parsed[0][1]) if parsed else 1
    return BasisSpec(kind="explicit_terms", terms=tuple(parsed), d=d, labels=tuple(labels))


def _per_covariate(bound, d):
    if np.isscalar(bound):
        return [int(bound)] * d
    bounds = [int(b) for b in bound]
    if len(bounds) != d:
        raise DimensionMismatch(f"{len(bounds)} covariate degree bounds for d={d}")
    return bounds


def broadcast_points(x, w, d):
    """Align treatment/covariate inputs to flat (n,) and (n, d) arrays.

    For d = 1 the two inputs broadcast against each other (scalars,
    vectors, or meshes); for d > 1 ``w`` must supply rows of length d and
    a scalar x is tiled.  Returns (x_flat, w_rows, original_shape).
    """
    x = np.asarray(x, dtype=float)
    if d == 0:
        shape = x.shape
        xf = np.atleast_1d(x).ravel()
        return xf, np.zeros((xf.size, 0)), shape
    w = np.asarray(w, dtype=float)
    if d == 1 and not (w.ndim == 2 and w.shape[-1] == 1):
        xb, wb = np.broadcast_arrays(x, w)
        return xb.ravel(), wb.reshape(-1, 1), xb.shape
    w = w.reshape(-1, d)
    if x.ndim == 0:
        x = np.full(w.shape[0], float(x))
    x = x.ravel()
    if x.size != w.shape[0]:
        raise DimensionMismatch(
            f"{x.size} treatment values vs {w.shape[0]} covariate rows")
    return x, w, x.shape


def _check_points(spec, x, w):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.asarray(w, dtype=float)
    if spec.d == 0:
        w = w.reshape(x.shape[0], 0)
    else:
        if w.ndim == 1:
            w = w[:, None] if spec.d == 1 and w.shape[0] == x.shape[0] else w[None, :]
        if w.shape != (x.shape[0], spec.d):
            raise DimensionMismatch(
                f"covariates have shape {w.shape}, expected ({x.shape[0]}, {spec.d})"
            )
    return x, w


def _factor(kind, degree, t, deriv=0):
    # One univariate factor D^deriv f_degree(t) for the family's f.
    if kind == "hermite_product":
        fac = hermite_derivative_factor(degree, deriv)
        return fac * hermite(degree - deriv, t) if fac else np.zeros_like(t)
    fac = _monomial_derivative_factor(degree, deriv)
    return fac * t ** (degree - deriv) if fac else np.zeros_like(t)


def eval_basis(spec, x, w):
    """Evaluate all phi_j at points (x, w).

    Parameters
    ----------
    spec : BasisSpec
    x : array-like, shape (n,)
    w : array-like, shape (n, d)

    Returns
    -------
    ndarray, shape (n, J)
    """
    x, w = _check_points(spec, x, w)
    out = np.empty((x.shape[0], spec.size))
    for j, (p, q) in enumerate(spec.terms):
        col = _factor(spec.kind, p, x)
        for k, e in enumerate(q):
            col = col * _factor(spec.kind, e, w[:, k])
        out[:, j] = col
    return out


def eval_antiderivative(spec, x, w):
    """Evaluate the x-antiderivatives Phi_j = \\int phi_j dx at (x, w).

    Hermite terms integrate to He_{p+1}(x)/(p+1) times the w factors;
    monomial terms to x^{p+1}/(p+1) times the w factors.
    """
    return eval_basis_partial(spec, (0,) * (spec.d + 1), x, w)


def eval_basis_partial(spec, lam, x, w):
    """Mixed partial D^lam Phi_j of the antiderivatives, per term.

    ``lam`` is a (d+1)-vector of derivative orders, x first.  lam = 0
    returns the antiderivatives themselves; lam = (1, 0, ..., 0) returns
    phi_j back (the defining relation d/dx Phi_j = phi_j).

    Raises
    ------
    OrderTooHigh
        If |lam| exceeds ``spec.max_partial_order``.
    """
    lam = tuple(int(v) for v in lam)
    if len(lam) != spec.d + 1:
        raise DimensionMismatch(f"multi-index length {len(lam)}, expected {spec.d + 1}")
    if any(v < 0 for v in lam):
        raise ValueError("derivative orders must be non-negative")
    if sum(lam) > spec.max_partial_order:
        raise OrderTooHigh(f"|lambda|={sum(lam)} exceeds limit {spec.max_partial_order}")
    x, w = _check_points(spec, x, w)
    out = np.empty((x.shape[0], spec.size))
    for j, (p, q) in enumerate(spec.terms):
        # Antiderivative raises the x factor to degree p+1 with weight 1/(p+1).
        col = _factor(spec.kind, p + 1, x, deriv=lam[0]) / (p + 1)
        for k, e in enumerate(q):
            col = col * _factor(spec.kind, e, w[:, k], deriv=lam[k + 1])
        out[:, j] = col
    return out


def eval_basis_dx(spec, x, w):
    """x-derivative of the level terms, d/dx phi_j(x, w), per term.

    Used by the TSLS-style baselines, whose fitted level surfaces are
    differentiated analytically.
    """
    x, w = _check_points(spec, x, w)
    out = np.empty((x.shape[0], spec.size))
    for j, (p, q) in enumerate(spec.terms):
        col = _factor(spec.kind, p, x, deriv=1)
        for k, e in enumerate(q):
            col = col * _factor(spec.kind, e, w[:, k])
        out[:, j] = col
    return out


def differentiate_terms(spec):
    """Symbolic x-derivative of a level basis, as (new_spec, scale factors).

    Each term (p, q) maps to (p-1, q) with multiplier p; zero-derivative
    terms (p = 0) are dropped.  Works for both families because
    d/dt He_p = p He_{p-1} and d/dt t^p = p t^{p-1}.

    Returns
    -------
    (BasisSpec, ndarray, ndarray)
        The derivative basis, the per-source-term multiplier, and the
        index of each surviving source term.
    """
    new_terms = []
    scales = []
    src = []
    for j, (p, q) in enumerate(spec.terms):
        if p == 0:
            continue
        new_terms.append((p - 1, q))
        scales.append(float(p))
        src.append(j)
    out = BasisSpec(kind=spec.kind, terms=tuple(new_terms), d=spec.d,
                    max_partial_order=spec.max_partial_order)
    return out, np.array(scales), np.array(src, dtype=int)


@dataclass(frozen=True)
class InstrumentBasis:
    """Power-series instrument features q(z) = (1, z, ..., z^{P-1})."""

    degree: int

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("instrument basis needs P >= 1")

    @property
    def size(self):
        return self.degree

    def eval(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return np.vander(z, N=self.degree, increasing=True)
