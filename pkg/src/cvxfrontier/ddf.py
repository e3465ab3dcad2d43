"""Directional-distance formulations for multi-output data.

These models trade the single regression output for a direction-normalized
hyperplane system: each observation gets output weights gamma_i (and
delta_i for undesirable outputs) next to the input slopes, tied by the
normalization gamma_i'gy + beta_i'gx (+ delta_i'gb) = 1 that secures the
translation property.

Residual sign conventions follow the source systems: the squared-loss
model defines eps_i = alpha_i + beta_i'x_i (+ delta_i'b_i) - gamma_i'y_i
(positive toward the frontier), while the quantile/expectile models keep
the regression orientation gamma_i'y_i = ... + eps+ - eps-, so their net
residual is the negative of the squared-loss one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _problems as pb
from .cnls import FrontierEstimate, run_fit
from .data import Dataset, ValidationError, validate
from .solver import ToleranceConfig

__all__ = ["DdfSpec", "fit_cnls_ddf", "fit_cqer_ddf"]


@dataclass(frozen=True)
class DdfSpec:
    """Direction vectors and loss flavor for one DDF estimation.

    Directions are per-model constants; zero components are allowed but at
    least one entry across (gx, gy, gb) must be strictly positive so the
    normalization row is satisfiable. ``gb`` must be given exactly when the
    dataset carries undesirable outputs.
    """

    gx: tuple[float, ...]
    gy: tuple[float, ...]
    gb: tuple[float, ...] | None = None
    flavor: Literal["cnls", "quantile", "expectile"] = "cnls"
    tau: float | None = None
    function_type: Literal["production", "cost"] = "production"

    def __post_init__(self):
        object.__setattr__(self, "gx", tuple(float(g) for g in np.atleast_1d(self.gx)))
        object.__setattr__(self, "gy", tuple(float(g) for g in np.atleast_1d(self.gy)))
        if self.gb is not None:
            object.__setattr__(self, "gb", tuple(float(g) for g in np.atleast_1d(self.gb)))
        if self.flavor not in ("cnls", "quantile", "expectile"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.function_type not in ("production", "cost"):
            raise ValueError(f"unknown function_type {self.function_type!r}")
        if self.flavor in ("quantile", "expectile"):
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ValueError("quantile/expectile DDF fits need tau in (0, 1)")
        everything = self.gx + self.gy + (self.gb or ())
        if all(g == 0.0 for g in everything):
            raise ValueError("direction vectors must not all be zero")
        if max(everything) <= 0.0:
            raise ValueError("at least one strictly positive direction entry is required "
                             "for the normalization row to be satisfiable")


def _axes_for(ds: Dataset, spec: DdfSpec) -> pb.ModelAxes:
    problems = []
    if len(spec.gx) != ds.m:
        problems.append(f"gx has {len(spec.gx)} entries for {ds.m} inputs")
    if len(spec.gy) != ds.q:
        problems.append(f"gy has {len(spec.gy)} entries for {ds.q} outputs")
    if (spec.gb is None) != (ds.b is None):
        problems.append("gb must be present exactly when the dataset has undesirable outputs")
    elif spec.gb is not None and len(spec.gb) != ds.s:
        problems.append(f"gb has {len(spec.gb)} entries for {ds.s} undesirable outputs")
    if problems:
        raise ValidationError(problems)
    loss = {"cnls": "sse", "quantile": "quantile", "expectile": "expectile"}[spec.flavor]
    return pb.ModelAxes(
        loss=loss,
        tau=spec.tau if spec.tau is not None else 0.5,
        cet="additive",
        fun=spec.function_type,
        rts="vrs",
        ddf=True,
        gx=np.asarray(spec.gx, dtype=float),
        gy=np.asarray(spec.gy, dtype=float),
        gb=None if spec.gb is None else np.asarray(spec.gb, dtype=float),
    )


def fit_cnls_ddf(ds: Dataset, spec: DdfSpec, *, tol: ToleranceConfig | None = None) -> FrontierEstimate:
    """Squared-loss directional-distance fit; gamma (and delta) populated."""
    if spec.flavor != "cnls":
        raise ValueError("fit_cnls_ddf requires flavor='cnls'")
    validate(ds, require_b=spec.gb is not None)
    return run_fit(ds, _axes_for(ds, spec), spec, tol=tol)


def fit_cqer_ddf(ds: Dataset, spec: DdfSpec, *, tol: ToleranceConfig | None = None) -> FrontierEstimate:
    """Quantile or expectile directional-distance fit."""
    if spec.flavor not in ("quantile", "expectile"):
        raise ValueError("fit_cqer_ddf requires flavor='quantile' or 'expectile'")
    validate(ds, require_b=spec.gb is not None)
    return run_fit(ds, _axes_for(ds, spec), spec, tol=tol)
