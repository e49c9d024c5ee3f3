"""Synthetic structural causal models with analytic effect oracles.

Six named settings share the upstream equations

    W := U + E1,    X := Z + W + U + E2,

with Z, U, E1, E2, E3 i.i.d. Uniform[-1, 1], and differ in the outcome
equation:

    A:  Y := 10 X^2 + WX + X + W + 50 f(W) U + E3
    B:  Y := exp(X) exp(W)         + 25 f(W) U + E3
    C:  Y := 10 X^2 + WX + X + W + 50 U        + E3
    D:  Y := exp(X) exp(W)         + 50 U      + E3
    E:  Y := 10 X^2 + WX + X + W + 10 f(W) U + E3
    F:  Y := exp(X) exp(W)         +  5 f(W) U + E3

where f(W) = W^5 + W^4 + W^3 + W^2.  Settings with the f(W)U term carry
an interaction between the covariate and the unobserved confounder; C
and D replace it with a plain additive confounder.  The true conditional
average partial effect is 20x + w + 1 for the polynomial outcomes
(A, C, E) and exp(x)exp(w) for the exponential ones (B, D, F).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TwoSampleDataset


class UnknownSetting(KeyError):
    """No synthetic setting registered under that name."""


class BadBox(ValueError):
    """Degenerate evaluation box."""


@dataclass(frozen=True)
class ScmSetting:
    """One named data-generating process.

    ``confounder_gain`` multiplies the confounding term; ``interaction``
    selects f(W)*U over plain U; ``polynomial_outcome`` selects the
    quadratic outcome over the exponential one.
    """

    name: str
    confounder_gain: float
    interaction: bool
    polynomial_outcome: bool


SETTINGS = {
    "A": ScmSetting("A", 50.0, True, True),
    "B": ScmSetting("B", 25.0, True, False),
    "C": ScmSetting("C", 50.0, False, True),
    "D": ScmSetting("D", 50.0, False, False),
    "E": ScmSetting("E", 10.0, True, True),
    "F": ScmSetting("F", 5.0, True, False),
}


def get_setting(name):
    """Look up a setting by name (accepts an ScmSetting and passes it through)."""
    if isinstance(name, ScmSetting):
        return name
    try:
        return SETTINGS[str(name).upper()]
    except KeyError:
        raise UnknownSetting(f"unknown SCM setting {name!r}; known: A-F") from None


def _interaction_poly(w):
    return w**5 + w**4 + w**3 + w**2


def structural_outcome(setting, x, w, u, e3):
    """Evaluate the outcome equation at given values (vectorized)."""
    setting = get_setting(setting)
    if setting.polynomial_outcome:
        base = 10.0 * x**2 + w * x + x + w
    else:
        base = np.exp(x) * np.exp(w)
    conf = _interaction_poly(w) * u if setting.interaction else u
    return base + setting.confounder_gain * conf + e3


def simulate(setting, n, seed, *, debug_draws=None, return_latent=False):
    """Draw a synthetic two-sample dataset of size n from a setting.

    One joint draw feeds both samples: row i of sample 1 and row i of
    sample 2 come from the same (z, u, e1, e2, e3) tuple, matching the
    single-N benchmark convention N = N1 = N2.

    Parameters
    ----------
    setting : str or ScmSetting
    n : int
        Number of joint draws (>= 1).
    seed : int or numpy SeedSequence
        Generator seed; the draw is deterministic given (setting, n, seed).
    debug_draws : dict, optional
        Debug hook overriding exogenous draws by name ("z", "u", "e1",
        "e2", "e3").  Values broadcast to length n; e.g. zeros silence
        the noise entirely.
    return_latent : bool
        Also return the exogenous draws (for confounding diagnostics).
    """
    setting = get_setting(setting)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    draws = {k: rng.uniform(-1.0, 1.0, size=n) for k in ("z", "u", "e1", "e2", "e3")}
    if debug_draws:
        for k, v in debug_draws.items():
            if k not in draws:
                raise KeyError(f"unknown exogenous variable {k!r}")
            draws[k] = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    z, u, e1, e2, e3 = (draws[k] for k in ("z", "u", "e1", "e2", "e3"))
    # Structural equations in topological order.
    w = u + e1
    x = z + w + u + e2
    y = structural_outcome(setting, x, w, u, e3)
    ds = TwoSampleDataset(x=x, w=w[:, None], z1=z, y=y, z2=z.copy(), joint=True)
    if return_latent:
        return ds, draws
    return ds


def true_capce(setting, x, w):
    """Closed-form true conditional average partial effect surface.

    20x + w + 1 for polynomial outcomes (A, C, E); exp(x)exp(w) for
    exponential outcomes (B, D, F).  Broadcasts over array inputs.
    """
    setting = get_setting(setting)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if setting.polynomial_outcome:
        return 20.0 * x + w + 1.0
    return np.exp(x) * np.exp(w)


@dataclass(frozen=True)
class EvalGrid:
    """A rectangular evaluation grid over (x, w)."""

    x_points: np.ndarray
    w_points: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_points, dtype=float)
        w = np.asarray(self.w_points, dtype=float)
        for name, arr in (("x_points", x), ("w_points", w)):
            if arr.ndim != 1 or arr.size == 0:
                raise BadBox(f"{name} must be a nonempty 1-d array")
            if not np.all(np.diff(arr) > 0):
                raise BadBox(f"{name} must be strictly increasing")
        object.__setattr__(self, "x_points", x)
        object.__setattr__(self, "w_points", w)

    def mesh(self):
        """All grid pairs as flat arrays (x first index varying slowest)."""
        xg, wg = np.meshgrid(self.x_points, self.w_points, indexing="ij")
        return xg.ravel(), wg.ravel()

    @property
    def size(self):
        return self.x_points.size * self.w_points.size


def make_grid(box, nx, nw):
    """Equally spaced EvalGrid over box = (x_lo, x_hi, w_lo, w_hi).

    Both endpoints are included; nx, nw >= 2.
    """
    x_lo, x_hi, w_lo, w_hi = box
    if not (x_lo < x_hi and w_lo < w_hi):
        raise BadBox(f"degenerate box {box}")
    if nx < 2 or nw < 2:
        raise BadBox("need at least 2 points per axis")
    return EvalGrid(np.linspace(x_lo, x_hi, nx), np.linspace(w_lo, w_hi, nw))


# Default benchmark evaluation grid: 41 x 21 over the stable plotting range.
DEFAULT_EVAL_BOX = (-2.0, 2.0, -1.0, 1.0)


def default_grid():
    return make_grid(DEFAULT_EVAL_BOX, 41, 21)
