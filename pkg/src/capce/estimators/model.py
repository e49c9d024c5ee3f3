"""Fitted CAPCE surface shared by the three estimator families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..basis import BasisSpec, broadcast_points, eval_basis


@dataclass(frozen=True)
class CapceModel:
    """A fitted conditional average partial effect surface.

    Series models (kind "sieve" or "parametric") store a basis and a
    coefficient vector; the surface is ``sum_j coef_j * phi_j(x, w)``.
    RKHS models store dual coefficients over the sample-1 anchor points
    and evaluate as ``alpha^T k(anchors, (x, w))``.
    """

    kind: str
    coefficients: np.ndarray
    basis: BasisSpec | None = None
    kernel: object | None = None
    anchors: np.ndarray | None = field(default=None, repr=False)
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        if self.kind in ("sieve", "parametric"):
            if self.basis is None or coef.shape != (self.basis.size,):
                raise ValueError("series model needs one coefficient per basis term")
        elif self.kind == "rkhs":
            if self.kernel is None or self.anchors is None:
                raise ValueError("rkhs model needs a kernel config and anchor points")
            if coef.shape != (self.anchors.shape[0],):
                raise ValueError("rkhs model needs one dual coefficient per anchor")
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")

    def capce(self, x, w):
        """Estimated effect surface at points (x, w); broadcasts arrays."""
        xf, wf, shape = broadcast_points(x, w, self.d)
        if self.kind == "rkhs":
            pts = np.column_stack([xf, wf])
            k = self.kernel.kxw(self.anchors, pts)
            vals = self.coefficients @ k
        else:
            vals = eval_basis(self.basis, xf, wf) @ self.coefficients
        return vals.reshape(shape) if shape else float(vals[0])

    @property
    def d(self):
        if self.kind == "rkhs":
            return self.anchors.shape[1] - 1
        return self.basis.d

    def coefficient_table(self):
        """(label, value) pairs for series models."""
        if self.kind == "rkhs":
            raise ValueError("rkhs models have no named coefficients")
        return list(zip(self.basis.term_labels(), self.coefficients))

    def to_json_dict(self):
        out = {"kind": self.kind,
               "coefficients": [float(v) for v in self.coefficients],
               "metadata": _plain(self.metadata)}
        if self.kind == "rkhs":
            out["kernel"] = self.kernel.to_config()
            out["anchors"] = [[float(v) for v in row] for row in self.anchors]
        else:
            out["basis"] = self.basis.to_config()
        return out

    @classmethod
    def from_json_dict(cls, payload):
        kind = payload["kind"]
        coef = np.asarray(payload["coefficients"], dtype=float)
        meta = payload.get("metadata", {})
        if kind == "rkhs":
            from .rkhs import KernelConfig

            return cls(kind=kind, coefficients=coef,
                       kernel=KernelConfig.from_config(payload["kernel"]),
                       anchors=np.asarray(payload["anchors"], dtype=float),
                       metadata=meta)
        return cls(kind=kind, coefficients=coef,
                   basis=BasisSpec.from_config(payload["basis"]), metadata=meta)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
