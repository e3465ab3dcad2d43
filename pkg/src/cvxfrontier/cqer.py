"""Convex quantile (LP) and expectile (QP) regression, additive and multiplicative."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

from . import _problems as pb
from .cnls import FrontierEstimate, run_fit
from .data import Dataset, validate
from .solver import ToleranceConfig

__all__ = ["CqerSpec", "fit_cqr", "fit_cer"]


@dataclass(frozen=True)
class CqerSpec:
    """Axes for an asymmetric-loss convex regression.

    ``tau`` is the quantile level for flavor "quantile" and the expectile
    level for flavor "expectile"; no conversion between the two is applied.
    The remaining axes mirror CnlsSpec.
    """

    tau: float
    flavor: Literal["quantile", "expectile"] = "quantile"
    error_composition: Literal["additive", "multiplicative"] = "additive"
    function_type: Literal["production", "cost"] = "production"
    rts: Literal["vrs", "crs"] = "vrs"
    use_contextual: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie strictly inside (0, 1), got {self.tau}")
        if self.flavor not in ("quantile", "expectile"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.error_composition not in ("additive", "multiplicative"):
            raise ValueError(f"unknown error_composition {self.error_composition!r}")
        if self.function_type not in ("production", "cost"):
            raise ValueError(f"unknown function_type {self.function_type!r}")
        if self.rts not in ("vrs", "crs"):
            raise ValueError(f"unknown rts {self.rts!r}")
        if self.use_contextual and self.error_composition != "multiplicative":
            raise ValueError("contextual variables are only supported in the multiplicative model")


def _axes_for(spec: CqerSpec) -> pb.ModelAxes:
    return pb.ModelAxes(
        loss=spec.flavor,
        tau=spec.tau,
        cet=spec.error_composition,
        fun=spec.function_type,
        rts=spec.rts,
        use_z=spec.use_contextual,
    )


def _fit(ds: Dataset, spec: CqerSpec, tol: ToleranceConfig | None) -> FrontierEstimate:
    validate(
        ds,
        require_positive_y=spec.error_composition == "multiplicative",
        require_z=spec.use_contextual,
    )
    if ds.q != 1:
        raise ValueError("quantile/expectile fits handle a single output; use the DDF models for q > 1")
    return run_fit(ds, _axes_for(spec), spec, tol=tol)


def fit_cqr(ds: Dataset, spec: CqerSpec, *, tol: ToleranceConfig | None = None) -> FrontierEstimate:
    """Estimate a convex quantile frontier by asymmetric absolute deviations.

    The positive/negative deviation pair is reported as solved; their
    complementarity holds at LP optima but is asserted by callers, not
    imposed. Only the objective value and fitted values are comparable
    across runs (the LP may have multiple optimal coefficient
    representations).
    """
    if spec.flavor != "quantile":
        raise ValueError("fit_cqr requires flavor='quantile'")
    return _fit(ds, spec, tol)


def fit_cer(ds: Dataset, spec: CqerSpec, *, tol: ToleranceConfig | None = None) -> FrontierEstimate:
    """Estimate a convex expectile frontier by asymmetric squared deviations.

    The quadratic loss makes the fitted values unique; at tau = 0.5 the
    residuals reproduce the plain squared-loss fit.
    """
    if spec.flavor != "expectile":
        raise ValueError("fit_cer requires flavor='expectile'")
    return _fit(ds, spec, tol)
