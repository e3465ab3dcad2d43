"""Residual decomposition into inefficiency and noise, and firm-level scores.

The second stage takes the squared-loss residuals of a shape-constrained
fit, estimates the scale of a half-normal inefficiency term against normal
noise (by moments, quasi-likelihood, or kernel deconvolution), and then
conditions on each firm's residual to score it.

Sign handling is centralized: every method computes in the production
orientation (negatively skewed composite error) and mirrors cost-frontier
residuals on entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import optimize, special

from .cnls import FrontierEstimate
from .data import Dataset

__all__ = [
    "DecompositionError",
    "WrongSkewError",
    "DecompositionResult",
    "EfficiencyResult",
    "decompose_mom",
    "decompose_qle",
    "decompose_kde",
    "jlms_conditional",
    "technical_efficiency",
    "unconditional_expected_inefficiency",
]

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


class DecompositionError(RuntimeError):
    """Raised when a residual vector cannot be decomposed."""


class WrongSkewError(DecompositionError):
    """Raised when the residual skewness has the wrong sign for the frontier."""


@dataclass(frozen=True)
class DecompositionResult:
    """Variance split of the composite error and the expected inefficiency.

    For the kernel method only ``mu`` is defined; the scale fields are None
    because the estimator never identifies them.
    """

    sigma_u: float | None
    sigma_v: float | None
    mu: float
    method: Literal["mom", "qle", "kde"]
    function_type: Literal["production", "cost"]

    @property
    def sigma(self) -> float | None:
        if self.sigma_u is None or self.sigma_v is None:
            return None
        return float(np.hypot(self.sigma_u, self.sigma_v))

    @property
    def signal_to_noise(self) -> float | None:
        if self.sigma_u is None or self.sigma_v is None:
            return None
        return float(self.sigma_u / self.sigma_v)


@dataclass(frozen=True)
class EfficiencyResult:
    """Firm-level conditional inefficiency and its intermediates."""

    conditional_inefficiency: np.ndarray
    mu_star: np.ndarray
    sigma_star: float
    technical_efficiency: np.ndarray | None = None


def _as_production(residuals: np.ndarray, function_type: str) -> np.ndarray:
    e = np.asarray(residuals, dtype=float).ravel()
    if e.size < 1 or not np.all(np.isfinite(e)):
        raise DecompositionError("residuals must be a finite vector")
    if function_type not in ("production", "cost"):
        raise ValueError(f"unknown function_type {function_type!r}")
    return e if function_type == "production" else -e


def decompose_mom(residuals: np.ndarray, function_type: str = "production") -> DecompositionResult:
    """Method-of-moments split of the composite error.

    Matches the second and third central moments of the residuals to the
    half-normal/normal composition. The third moment must be negative in
    the production orientation (positive for cost); otherwise the skewness
    carries no inefficiency signal and a WrongSkewError is raised.
    """
    e = _as_production(residuals, function_type)
    if e.size < 3:
        raise DecompositionError("method of moments needs at least 3 residuals")
    centred = e - e.mean()
    m2 = float(np.mean(centred**2))
    m3 = float(np.mean(centred**3))
    denom = SQRT_2_OVER_PI * (1.0 - 4.0 / np.pi)  # negative constant
    if m3 >= 0:
        expected = "negative" if function_type == "production" else "positive"
        raise WrongSkewError(
            f"third central moment has the wrong sign for a {function_type} frontier "
            f"(expected {expected} skew, got M3={m3 if function_type == 'production' else -m3:.6g})"
        )
    sigma_u = float(np.cbrt(m3 / denom))
    var_v = m2 - (np.pi - 2.0) / np.pi * sigma_u**2
    if var_v < 0:
        raise DecompositionError(
            f"noise variance underflow: M2={m2:.6g} is too small for sigma_u={sigma_u:.6g}"
        )
    sigma_v = float(np.sqrt(var_v))
    return DecompositionResult(
        sigma_u=sigma_u, sigma_v=sigma_v, mu=sigma_u * SQRT_2_OVER_PI,
        method="mom", function_type=function_type,
    )


def _qle_loglik(lam: float, e: np.ndarray) -> float:
    n = e.size
    mean_sq = float(np.mean(e**2))
    shrink = 1.0 - 2.0 * lam**2 / (np.pi * (1.0 + lam**2))
    sigma = np.sqrt(mean_sq / shrink)
    adj = e - np.sqrt(2.0) * lam * sigma / np.sqrt(np.pi * (1.0 + lam**2))
    return float(
        -n * np.log(sigma)
        + special.log_ndtr(-adj * lam / sigma).sum()
        - 0.5 * (adj @ adj) / sigma**2
    )


def decompose_qle(residuals: np.ndarray, function_type: str = "production") -> DecompositionResult:
    """Quasi-likelihood split: profile likelihood over the signal-to-noise ratio.

    The likelihood is a function of lambda = sigma_u/sigma_v alone; the
    composite scale follows from the residual second moment. Maximized by
    bounded scalar search over lambda in [1e-6, 1e3].
    """
    e = _as_production(residuals, function_type)
    if e.size < 3:
        raise DecompositionError("quasi-likelihood needs at least 3 residuals")
    if np.var(e) <= 1e-300:
        raise DecompositionError("degenerate residuals: centered variance is zero")

    # coarse log-spaced scan brackets the maximizer, then a bounded scalar
    # search polishes it; guards against flat or multi-bump profiles
    lo, hi = 1e-6, 1e3
    grid = np.geomspace(lo, hi, 121)
    vals = np.array([_qle_loglik(lam, e) for lam in grid])
    best = int(np.argmax(vals))
    blo = grid[max(best - 1, 0)]
    bhi = grid[min(best + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda lam: -_qle_loglik(lam, e),
        bounds=(blo, bhi),
        method="bounded",
        options={"xatol": 1e-9, "maxiter": 500},
    )
    if not res.success:
        raise DecompositionError(f"quasi-likelihood maximization did not converge: {res.message}")
    lam = float(res.x)
    mean_sq = float(np.mean(e**2))
    sigma = float(np.sqrt(mean_sq / (1.0 - 2.0 * lam**2 / (np.pi * (1.0 + lam**2)))))
    sigma_u = sigma * lam / np.sqrt(1.0 + lam**2)
    sigma_v = sigma / np.sqrt(1.0 + lam**2)
    return DecompositionResult(
        sigma_u=float(sigma_u), sigma_v=float(sigma_v), mu=float(sigma_u * SQRT_2_OVER_PI),
        method="qle", function_type=function_type,
    )


def decompose_kde(
    residuals: np.ndarray,
    function_type: str = "production",
    *,
    bandwidth: float | None = None,
    grid_points: int = 1000,
) -> DecompositionResult:
    """Kernel-deconvolution estimate of the expected inefficiency.

    A Gaussian kernel density estimate of the residuals is differentiated
    numerically on a uniform grid; the expected inefficiency is the
    steepest-descent point of the density over the right-tail interval
    [median, grid max]. That point tracks the location where the
    nonnegative inefficiency mass cuts off, smoothed by the noise. Only
    ``mu`` is identified; the scale fields stay None.
    """
    e = _as_production(residuals, function_type)
    if e.size < 10:
        raise DecompositionError("kernel deconvolution needs at least 10 residuals")
    sd = float(np.std(e))
    h = bandwidth if bandwidth is not None else 1.06 * sd * e.size ** (-0.2)
    if h <= 0:
        raise DecompositionError(f"bandwidth must be positive, got {h}")
    if grid_points < 10:
        raise DecompositionError("grid too coarse: need at least 10 grid points")

    grid = np.linspace(e.min() - 3.0 * h, e.max() + 3.0 * h, grid_points)
    # chunked kernel sum keeps memory bounded for large n
    dens = np.zeros_like(grid)
    step = max(1, int(2e7 // grid.size))
    for lo in range(0, e.size, step):
        block = e[lo: lo + step]
        dens += np.exp(-0.5 * ((grid[:, None] - block[None, :]) / h) ** 2).sum(axis=1)
    dens /= e.size * h * np.sqrt(2.0 * np.pi)
    slope = np.gradient(dens, grid)

    right = grid >= np.median(e)
    if right.sum() < 3:
        raise DecompositionError("grid too coarse to bracket a maximum in the right tail")
    idx = np.argmin(slope[right])  # steepest descent
    if idx in (0, right.sum() - 1):
        raise DecompositionError("no interior steepest-descent point in the right-tail interval")
    mu = float(grid[right][idx])
    return DecompositionResult(
        sigma_u=None, sigma_v=None, mu=mu, method="kde", function_type=function_type,
    )


def _mills_ratio(a: np.ndarray) -> np.ndarray:
    """phi(a) / (1 - Phi(a)), evaluated in log space so large a cannot underflow."""
    return np.exp(-0.5 * a**2 - 0.5 * np.log(2.0 * np.pi) - special.log_ndtr(-a))


def jlms_conditional(
    residuals: np.ndarray,
    decomp: DecompositionResult,
    function_type: str | None = None,
) -> EfficiencyResult:
    """Conditional expected inefficiency of each firm given its residual.

    Evaluates the closed form of E[u_i | eps_i] under the
    half-normal/normal composition, in the orientation of
    ``function_type`` (default: the decomposition's own). Requires a
    parametric decomposition ("mom" or "qle"); the kernel method does not
    identify the scales this formula needs.
    """
    if decomp.method == "kde":
        raise ValueError("jlms_conditional needs a parametric decomposition (mom or qle), not kde")
    fun = function_type or decomp.function_type
    if fun != decomp.function_type:
        raise ValueError(
            f"function_type {fun!r} disagrees with the decomposition's {decomp.function_type!r}"
        )
    if decomp.sigma_u is None or decomp.sigma_v is None or decomp.sigma_u <= 0 or decomp.sigma_v <= 0:
        raise ValueError("jlms_conditional needs strictly positive sigma_u and sigma_v")

    e = np.asarray(residuals, dtype=float).ravel()
    su, sv = decomp.sigma_u, decomp.sigma_v
    s2 = su**2 + sv**2
    sigma = np.sqrt(s2)
    lam = su / sv
    sigma_star = su * sv / sigma
    sign = 1.0 if fun == "production" else -1.0
    a = sign * e * lam / sigma
    cond = sigma_star * (_mills_ratio(a) - a)
    mu_star = -sign * e * su**2 / s2
    return EfficiencyResult(
        conditional_inefficiency=cond,
        mu_star=mu_star,
        sigma_star=float(sigma_star),
    )


def technical_efficiency(
    ds: Dataset,
    est: FrontierEstimate,
    eff: EfficiencyResult,
    spec,
) -> np.ndarray:
    """Firm-level technical efficiency from the conditional inefficiency.

    Multiplicative models score exp(-E[u|eps]) for production and
    exp(+E[u|eps]) for cost; additive models use the output-share forms
    (y -/+ E[u|eps]) / y, which require nonzero outputs.
    """
    u = eff.conditional_inefficiency
    cet = getattr(spec, "error_composition", "additive")
    fun = getattr(spec, "function_type", "production")
    if cet == "multiplicative":
        return np.exp(-u) if fun == "production" else np.exp(u)
    y = ds.y[:, 0]
    if np.any(y == 0):
        raise ZeroDivisionError("additive technical efficiency divides by y; zero output present")
    return (y - u) / y if fun == "production" else (y + u) / y


def unconditional_expected_inefficiency(decomp: DecompositionResult) -> float:
    """The expected inefficiency mu of the fitted decomposition."""
    return float(decomp.mu)
