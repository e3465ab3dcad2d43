"""Monotonicity-only relaxations: dominance-gated pairwise constraints.

The dominance matrix records the componentwise input order; keeping only
the pairwise rows of comparable observations relaxes global concavity
(convexity) to isotonicity. Ties produce both row directions, which pins
tied inputs to equal fitted values. Rows with p_ij = 0 are omitted from
the problem entirely rather than multiplied by zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _problems as pb
from .cnls import CnlsSpec, FrontierEstimate, run_fit
from .cnls import _axes_for as _cnls_axes
from .cqer import CqerSpec
from .cqer import _axes_for as _cqer_axes
from .data import Dataset, validate
from .solver import ToleranceConfig

__all__ = ["DominanceMatrix", "dominance_matrix", "fit_icnls", "fit_icqr", "fit_icer"]


@dataclass(frozen=True)
class DominanceMatrix:
    """Binary matrix with p[i, j] = 1 iff x_i <= x_j componentwise."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=bool)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("dominance matrix must be square")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def pairs(self) -> np.ndarray:
        """Ordered (i, j) pairs with p_ij = 1 and i != j."""
        mask = self.p.copy()
        np.fill_diagonal(mask, False)
        i, j = np.nonzero(mask)
        return np.column_stack([i, j])

    def constraint_count(self) -> int:
        return int(self.pairs().shape[0])


def dominance_matrix(ds: Dataset) -> DominanceMatrix:
    """Exact componentwise comparison of all input vectors, O(n^2 m)."""
    x = ds.x
    p = np.all(x[:, None, :] <= x[None, :, :], axis=2)
    return DominanceMatrix(p=p)


def _gated_pairs(ds: Dataset, dominance: DominanceMatrix | None) -> np.ndarray:
    dom = dominance if dominance is not None else dominance_matrix(ds)
    if dom.n != ds.n:
        raise ValueError(f"dominance matrix is {dom.n}x{dom.n} for {ds.n} observations")
    return dom.pairs()


def fit_icnls(
    ds: Dataset,
    spec: CnlsSpec | None = None,
    *,
    dominance: DominanceMatrix | None = None,
    tol: ToleranceConfig | None = None,
) -> FrontierEstimate:
    """Squared-loss fit with pairwise rows kept only on comparable pairs.

    With an all-ones dominance matrix this reduces to the fully
    constrained fit; with the identity matrix every observation is fitted
    exactly. ``dominance`` overrides the enumerated matrix (useful for
    testing the reduction claims).
    """
    spec = spec or CnlsSpec()
    validate(ds, require_positive_y=spec.error_composition == "multiplicative",
             require_z=spec.use_contextual)
    if ds.q != 1:
        raise ValueError("isotonic fits handle a single output")
    return run_fit(ds, _cnls_axes(spec), spec, pairs=_gated_pairs(ds, dominance), tol=tol)


def fit_icqr(
    ds: Dataset,
    spec: CqerSpec,
    *,
    dominance: DominanceMatrix | None = None,
    tol: ToleranceConfig | None = None,
) -> FrontierEstimate:
    """Isotonic convex quantile regression: fit_cqr with gated rows."""
    if spec.flavor != "quantile":
        raise ValueError("fit_icqr requires flavor='quantile'")
    validate(ds, require_positive_y=spec.error_composition == "multiplicative",
             require_z=spec.use_contextual)
    if ds.q != 1:
        raise ValueError("isotonic fits handle a single output")
    return run_fit(ds, _cqer_axes(spec), spec, pairs=_gated_pairs(ds, dominance), tol=tol)


def fit_icer(
    ds: Dataset,
    spec: CqerSpec,
    *,
    dominance: DominanceMatrix | None = None,
    tol: ToleranceConfig | None = None,
) -> FrontierEstimate:
    """Isotonic convex expectile regression: fit_cer with gated rows."""
    if spec.flavor != "expectile":
        raise ValueError("fit_icer requires flavor='expectile'")
    validate(ds, require_positive_y=spec.error_composition == "multiplicative",
             require_z=spec.use_contextual)
    if ds.q != 1:
        raise ValueError("isotonic fits handle a single output")
    return run_fit(ds, _cqer_axes(spec), spec, pairs=_gated_pairs(ds, dominance), tol=tol)
