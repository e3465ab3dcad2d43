"""Convex nonparametric least squares and the corrected two-stage variant."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _problems as pb
from .data import Dataset, validate
from .solver import Solution, SolverError, ToleranceConfig, solve_affine, solve_smooth

__all__ = ["CnlsSpec", "FrontierEstimate", "fit_cnls", "c2nls_adjust"]


@dataclass(frozen=True)
class CnlsSpec:
    """Model axes for a convex-regression fit.

    ``error_composition`` picks the additive QP or the multiplicative
    (log-transformed) smooth problem; ``function_type`` the concave
    production or convex cost shape; ``rts`` frees or zeroes the
    intercepts. ``use_contextual`` appends the contextual-variable term to
    the multiplicative regression equation (the additive contextual model
    is intentionally unsupported).
    """

    error_composition: Literal["additive", "multiplicative"] = "additive"
    function_type: Literal["production", "cost"] = "production"
    rts: Literal["vrs", "crs"] = "vrs"
    use_contextual: bool = False

    def __post_init__(self):
        if self.error_composition not in ("additive", "multiplicative"):
            raise ValueError(f"unknown error_composition {self.error_composition!r}")
        if self.function_type not in ("production", "cost"):
            raise ValueError(f"unknown function_type {self.function_type!r}")
        if self.rts not in ("vrs", "crs"):
            raise ValueError(f"unknown rts {self.rts!r}")
        if self.use_contextual and self.error_composition != "multiplicative":
            raise ValueError("contextual variables are only supported in the multiplicative model")


@dataclass(frozen=True)
class FrontierEstimate:
    """Per-observation hyperplane coefficients and residual components.

    Residual vectors are canonical for comparisons; alpha/beta may differ
    across equally optimal representations. ``residuals`` is populated for
    squared-loss fits, ``residual_pos``/``residual_neg`` for quantile and
    expectile fits. ``phi`` carries the multiplicative frontier values
    minus one; ``gamma``/``delta`` appear only for the
    directional-distance models.
    """

    alpha: np.ndarray
    beta: np.ndarray
    residuals: np.ndarray | None
    residual_pos: np.ndarray | None
    residual_neg: np.ndarray | None
    z_coefficients: np.ndarray | None
    phi: np.ndarray | None
    gamma: np.ndarray | None
    delta: np.ndarray | None
    objective_value: float
    solve_diagnostics: Solution
    spec: object
    axes: pb.ModelAxes

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def fitted_frontier(self, ds: Dataset) -> np.ndarray:
        """alpha_i + beta_i'x_i at each observation (phi_i + 1 in the
        multiplicative model, the y-scale frontier otherwise)."""
        return self.alpha + (self.beta * ds.x).sum(axis=1)

    def net_residuals(self) -> np.ndarray:
        if self.residuals is not None:
            return self.residuals
        return self.residual_pos - self.residual_neg


def _axes_for(spec: CnlsSpec) -> pb.ModelAxes:
    return pb.ModelAxes(
        loss="sse",
        cet=spec.error_composition,
        fun=spec.function_type,
        rts=spec.rts,
        use_z=spec.use_contextual,
    )


def _require_clean_solve(sol: Solution, what: str) -> None:
    if sol.status != "optimal":
        raise SolverError(f"{what}: solver returned status {sol.status} ({sol.message})")


def run_fit(
    ds: Dataset,
    axes: pb.ModelAxes,
    spec: object,
    pairs: np.ndarray | None = None,
    tol: ToleranceConfig | None = None,
) -> FrontierEstimate:
    """Build, solve, and extract one estimate; shared by every model module.

    ``pairs`` restricts the pairwise shape rows (dominance gating,
    constraint generation); None means all ordered pairs.
    """
    tol = tol or ToleranceConfig()
    if pairs is None:
        pairs = pb.all_pairs(ds.n)
    if axes.cet == "multiplicative":
        prob, lay = pb.build_smooth_problem(ds, axes, pairs, tol)
        sol = solve_smooth(prob, tol)
        _require_clean_solve(sol, "multiplicative fit")
        return _extract_smooth(ds, axes, lay, sol, prob, spec)
    prob, lay = pb.build_affine_problem(ds, axes, pairs)
    sol = solve_affine(prob, tol)
    _require_clean_solve(sol, "affine fit")
    return _extract_affine(ds, axes, lay, sol, spec)


def _loss_value(axes: pb.ModelAxes, pos: np.ndarray, neg: np.ndarray) -> float:
    if axes.loss == "sse":
        r = pos - neg
        return float(r @ r)
    if axes.loss == "expectile":
        return float(axes.tau * pos @ pos + (1 - axes.tau) * neg @ neg)
    return float(axes.tau * pos.sum() + (1 - axes.tau) * neg.sum())


def _extract_affine(ds, axes, lay, sol, spec) -> FrontierEstimate:
    v = sol.v
    alpha = lay.alpha_of(v)
    beta = lay.beta_of(v)
    gamma = lay.gamma_of(v)
    delta = lay.delta_of(v)

    if axes.ddf:
        # make the direction normalization exact: divide each observation's
        # coefficient block by its realized normalization value (~1 + 1e-10)
        norm = gamma @ axes.gy + beta @ axes.gx
        if delta is not None:
            norm = norm + delta @ axes.gb
        alpha = alpha / norm
        beta = beta / norm[:, None]
        gamma = gamma / norm[:, None]
        if delta is not None:
            delta = delta / norm[:, None]

    signed_fit = alpha + (beta * ds.x).sum(axis=1)
    if gamma is not None:
        signed_fit = signed_fit - (gamma * ds.y).sum(axis=1)
    if delta is not None:
        signed_fit = signed_fit + (delta * ds.b).sum(axis=1)

    if axes.loss == "sse":
        # recompute from the identity so it holds exactly
        resid = signed_fit if axes.ddf else ds.y[:, 0] - signed_fit
        pos, neg = np.maximum(resid, 0), np.maximum(-resid, 0)
        residuals, rp, rn = resid, None, None
    else:
        n = lay.n
        rp = np.asarray(v[lay.eps.start: lay.eps.start + n])
        rn = np.asarray(v[lay.eps.start + n: lay.eps.stop])
        pos, neg = rp, rn
        residuals = None
    return FrontierEstimate(
        alpha=alpha, beta=beta,
        residuals=residuals, residual_pos=rp, residual_neg=rn,
        z_coefficients=lay.lam_of(v), phi=None,
        gamma=gamma, delta=delta,
        objective_value=_loss_value(axes, pos, neg),
        solve_diagnostics=sol, spec=spec, axes=axes,
    )


def _extract_smooth(ds, axes, lay, sol, prob, spec) -> FrontierEstimate:
    v = sol.v
    alpha = lay.alpha_of(v)
    beta = lay.beta_of(v)
    lam = lay.lam_of(v)
    fit = alpha + (beta * ds.x).sum(axis=1)
    phi = fit - 1.0
    r, _ = prob.residual(v)
    if axes.loss == "sse":
        residuals, rp, rn = r, None, None
        pos, neg = np.maximum(r, 0), np.maximum(-r, 0)
    else:
        rp, rn = np.maximum(r, 0.0), np.maximum(-r, 0.0)
        pos, neg = rp, rn
        residuals = None
    return FrontierEstimate(
        alpha=alpha, beta=beta,
        residuals=residuals, residual_pos=rp, residual_neg=rn,
        z_coefficients=lam, phi=phi,
        gamma=None, delta=None,
        objective_value=_loss_value(axes, pos, neg),
        solve_diagnostics=sol, spec=spec, axes=axes,
    )


def fit_cnls(ds: Dataset, spec: CnlsSpec | None = None, *, tol: ToleranceConfig | None = None) -> FrontierEstimate:
    """Estimate the shape-constrained conditional-mean frontier.

    Additive fits solve the pairwise-constrained QP; multiplicative fits
    solve the log-transformed smooth problem with the fitted value guarded
    away from zero. Contextual variables require ``spec.use_contextual``
    and a dataset with a z block.
    """
    spec = spec or CnlsSpec()
    validate(
        ds,
        require_positive_y=spec.error_composition == "multiplicative",
        require_z=spec.use_contextual,
    )
    if ds.q != 1:
        raise ValueError("fit_cnls handles a single output; use the DDF models for q > 1")
    return run_fit(ds, _axes_for(spec), spec, tol=tol)


def c2nls_adjust(est: FrontierEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Shift squared-loss residuals so the best performer sits on the frontier.

    Returns ``(adjusted_residuals, adjusted_alpha)`` with
    adjusted = residuals - max(residuals) and alpha shifted up by the same
    constant; slope coefficients carry over unchanged. Only defined for
    additive squared-loss estimates (a +/- residual pair has no single
    vector to shift).
    """
    if est.residuals is None:
        raise ValueError("c2nls_adjust needs a single residual vector; quantile/expectile fits have none")
    if est.axes.cet != "additive":
        raise ValueError("c2nls_adjust is defined for the additive model")
    shift = float(np.max(est.residuals))
    return est.residuals - shift, est.alpha + shift
