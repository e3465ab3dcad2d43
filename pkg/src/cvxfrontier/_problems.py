"""Shared problem assembly for every pairwise-inequality model family.

All estimators in this package share one skeleton: per-observation
hyperplane coefficients tied together by pairwise shape rows, a
per-observation regression identity, and a loss on the residual terms.
This module owns the variable layout, the row builders, the violation
scanner, and the extraction of estimates from solver output. The public
model modules are thin wrappers that pick the loss and the row set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .solver import (
    AffineProblem,
    SmoothProblem,
    ToleranceConfig,
    solve_affine,
)

FIT_FLOOR = 1e-6  # lower bound on phi_i + 1, keeps logs defined


@dataclass(frozen=True)
class ModelAxes:
    """Normalized description of one estimation problem.

    ``loss`` selects squared ("sse"), quantile, or expectile deviations;
    ``cet`` the error composition; ``fun`` the shape direction. The DDF
    fields are empty for single-output models. Public spec dataclasses
    map onto this before hitting the builders.
    """

    loss: Literal["sse", "quantile", "expectile"] = "sse"
    tau: float = 0.5
    cet: Literal["additive", "multiplicative"] = "additive"
    fun: Literal["production", "cost"] = "production"
    rts: Literal["vrs", "crs"] = "vrs"
    use_z: bool = False
    ddf: bool = False
    gx: np.ndarray | None = None
    gy: np.ndarray | None = None
    gb: np.ndarray | None = None

    def describe(self) -> dict:
        out = {
            "loss": self.loss,
            "error_composition": self.cet,
            "function_type": self.fun,
            "rts": self.rts,
            "use_contextual": self.use_z,
        }
        if self.loss != "sse":
            out["tau"] = self.tau
        if self.ddf:
            out["ddf"] = True
            out["gx"] = list(map(float, self.gx))
            out["gy"] = list(map(float, self.gy))
            if self.gb is not None:
                out["gb"] = list(map(float, self.gb))
        return out


@dataclass(frozen=True)
class Layout:
    """Column offsets of each variable block in the stacked decision vector."""

    n: int
    m: int
    q: int
    s: int
    r: int
    has_alpha: bool
    has_gamma: bool
    has_delta: bool
    has_z: bool
    n_resid_vars: int  # 1 for a signed residual, 2 for a +/- pair, 0 for smooth path
    alpha: slice = field(init=False)
    beta: slice = field(init=False)
    gamma: slice = field(init=False)
    delta: slice = field(init=False)
    lam: slice = field(init=False)
    eps: slice = field(init=False)
    n_vars: int = field(init=False)

    def __post_init__(self):
        off = 0
        object.__setattr__(self, "alpha", slice(off, off + (self.n if self.has_alpha else 0)))
        off += self.n if self.has_alpha else 0
        object.__setattr__(self, "beta", slice(off, off + self.n * self.m))
        off += self.n * self.m
        g = self.n * self.q if self.has_gamma else 0
        object.__setattr__(self, "gamma", slice(off, off + g))
        off += g
        d = self.n * self.s if self.has_delta else 0
        object.__setattr__(self, "delta", slice(off, off + d))
        off += d
        z = self.r if self.has_z else 0
        object.__setattr__(self, "lam", slice(off, off + z))
        off += z
        e = self.n * self.n_resid_vars
        object.__setattr__(self, "eps", slice(off, off + e))
        off += e
        object.__setattr__(self, "n_vars", off)

    def alpha_of(self, v):
        if not self.has_alpha:
            return np.zeros(self.n)
        return np.asarray(v[self.alpha])

    def beta_of(self, v):
        return np.asarray(v[self.beta]).reshape(self.n, self.m)

    def gamma_of(self, v):
        if not self.has_gamma:
            return None
        return np.asarray(v[self.gamma]).reshape(self.n, self.q)

    def delta_of(self, v):
        if not self.has_delta:
            return None
        return np.asarray(v[self.delta]).reshape(self.n, self.s)

    def lam_of(self, v):
        if not self.has_z:
            return None
        return np.asarray(v[self.lam])


def make_layout(ds: Dataset, axes: ModelAxes, smooth: bool = False) -> Layout:
    return Layout(
        n=ds.n,
        m=ds.m,
        q=ds.q,
        s=ds.s if (axes.ddf and ds.b is not None) else 0,
        r=ds.r if axes.use_z else 0,
        has_alpha=axes.rts == "vrs" or axes.ddf,
        has_gamma=axes.ddf,
        has_delta=axes.ddf and ds.b is not None,
        has_z=axes.use_z,
        n_resid_vars=0 if smooth else (1 if axes.loss == "sse" else 2),
    )


def all_pairs(n: int) -> np.ndarray:
    """All ordered pairs (i, j), i != j, in row-major order."""
    i, j = np.where(~np.eye(n, dtype=bool))
    return np.column_stack([i, j])


def _hyperplane_entries(ds: Dataset, lay: Layout, idx: np.ndarray, at: np.ndarray):
    """Column/value arrays for evaluating hyperplane ``idx`` at observation ``at``.

    The evaluated expression is alpha_idx + beta_idx' x_at for the plain
    families, plus delta_idx' b_at - gamma_idx' y_at for the DDF ones.
    Returns (cols, vals) of shape (k, width).
    """
    k = idx.shape[0]
    width = (1 if lay.has_alpha else 0) + lay.m + (lay.q if lay.has_gamma else 0) + (lay.s if lay.has_delta else 0)
    cols = np.empty((k, width), dtype=np.int64)
    vals = np.empty((k, width))
    w = 0
    if lay.has_alpha:
        cols[:, 0] = lay.alpha.start + idx
        vals[:, 0] = 1.0
        w = 1
    for a in range(lay.m):
        cols[:, w] = lay.beta.start + idx * lay.m + a
        vals[:, w] = ds.x[at, a]
        w += 1
    if lay.has_gamma:
        for a in range(lay.q):
            cols[:, w] = lay.gamma.start + idx * lay.q + a
            vals[:, w] = -ds.y[at, a]
            w += 1
    if lay.has_delta:
        for a in range(lay.s):
            cols[:, w] = lay.delta.start + idx * lay.s + a
            vals[:, w] = ds.b[at, a]
            w += 1
    return cols, vals


def shape_rows(ds: Dataset, lay: Layout, axes: ModelAxes, pairs: np.ndarray) -> tuple[sp.csc_matrix, np.ndarray]:
    """Pairwise shape rows for the given ordered pairs.

    Production: H_i(x_i) - H_j(x_i) <= 0 for each pair (i, j), where H_k is
    hyperplane k evaluated at observation i's data (including the DDF
    terms). Cost flips the sign.
    """
    if pairs.shape[0] == 0:
        return sp.csc_matrix((0, lay.n_vars)), np.zeros(0)
    i, j = pairs[:, 0], pairs[:, 1]
    ci, vi = _hyperplane_entries(ds, lay, i, i)
    cj, vj = _hyperplane_entries(ds, lay, j, i)
    sign = 1.0 if axes.fun == "production" else -1.0
    cols = np.hstack([ci, cj])
    vals = np.hstack([vi * sign, -vj * sign])
    rows = np.repeat(np.arange(pairs.shape[0]), cols.shape[1])
    A = sp.coo_matrix((vals.ravel(), (rows, cols.ravel())), shape=(pairs.shape[0], lay.n_vars))
    return A.tocsc(), np.zeros(pairs.shape[0])


def regression_rows(ds: Dataset, lay: Layout, axes: ModelAxes) -> tuple[sp.csc_matrix, np.ndarray]:
    """Per-observation regression identities for the affine (additive) path."""
    n = lay.n
    idx = np.arange(n)
    cols, vals = _hyperplane_entries(ds, lay, idx, idx)
    blocks = [cols]
    vblocks = [vals]
    if lay.n_resid_vars == 1:
        # y = H_i(x_i) + eps  (plain), 0 = H_i(.) - eps (DDF, H includes -gamma'y)
        e = (lay.eps.start + idx).reshape(-1, 1)
        blocks.append(e)
        vblocks.append(np.full((n, 1), 1.0 if not axes.ddf else -1.0))
    else:
        ep = (lay.eps.start + idx).reshape(-1, 1)
        en = (lay.eps.start + n + idx).reshape(-1, 1)
        blocks.extend([ep, en])
        vblocks.extend([np.full((n, 1), 1.0), np.full((n, 1), -1.0)])
    cols = np.hstack(blocks)
    vals = np.hstack(vblocks)
    rows = np.repeat(idx, cols.shape[1])
    A = sp.coo_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, lay.n_vars)).tocsc()
    b = np.zeros(n) if axes.ddf else ds.y[:, 0].copy()
    return A, b


def normalization_rows(ds: Dataset, lay: Layout, axes: ModelAxes) -> tuple[sp.csc_matrix, np.ndarray]:
    """DDF direction normalization: gamma_i'gy + beta_i'gx (+ delta_i'gb) = 1."""
    n = lay.n
    idx = np.arange(n)
    width = lay.m + lay.q + (lay.s if lay.has_delta else 0)
    cols = np.empty((n, width), dtype=np.int64)
    vals = np.empty((n, width))
    w = 0
    for a in range(lay.m):
        cols[:, w] = lay.beta.start + idx * lay.m + a
        vals[:, w] = axes.gx[a]
        w += 1
    for a in range(lay.q):
        cols[:, w] = lay.gamma.start + idx * lay.q + a
        vals[:, w] = axes.gy[a]
        w += 1
    if lay.has_delta:
        for a in range(lay.s):
            cols[:, w] = lay.delta.start + idx * lay.s + a
            vals[:, w] = axes.gb[a]
            w += 1
    rows = np.repeat(idx, width)
    A = sp.coo_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, lay.n_vars)).tocsc()
    return A, np.ones(n)


def lower_bounds(lay: Layout) -> np.ndarray:
    lb = np.full(lay.n_vars, -np.inf)
    lb[lay.beta] = 0.0
    if lay.has_gamma:
        lb[lay.gamma] = 0.0
    if lay.has_delta:
        lb[lay.delta] = 0.0
    if lay.n_resid_vars == 2:
        lb[lay.eps] = 0.0
    return lb


def fit_matrix(ds: Dataset, lay: Layout) -> sp.csc_matrix:
    """Rows mapping the decision vector to fitted frontier values alpha_i + beta_i'x_i."""
    idx = np.arange(lay.n)
    width = (1 if lay.has_alpha else 0) + lay.m
    cols = np.empty((lay.n, width), dtype=np.int64)
    vals = np.empty((lay.n, width))
    w = 0
    if lay.has_alpha:
        cols[:, 0] = lay.alpha.start + idx
        vals[:, 0] = 1.0
        w = 1
    for a in range(lay.m):
        cols[:, w] = lay.beta.start + idx * lay.m + a
        vals[:, w] = ds.x[idx, a]
        w += 1
    rows = np.repeat(idx, width)
    return sp.coo_matrix((vals.ravel(), (rows, cols.ravel())), shape=(lay.n, lay.n_vars)).tocsc()


def build_affine_problem(ds: Dataset, axes: ModelAxes, pairs: np.ndarray) -> tuple[AffineProblem, Layout]:
    """Assemble the additive-path QP/LP for any family over the given pair set."""
    lay = make_layout(ds, axes)
    A_eq_rows = [regression_rows(ds, lay, axes)]
    if axes.ddf:
        A_eq_rows.append(normalization_rows(ds, lay, axes))
    A_eq = sp.vstack([a for a, _ in A_eq_rows], format="csc")
    b_eq = np.concatenate([b for _, b in A_eq_rows])
    A_in, b_in = shape_rows(ds, lay, axes, pairs)

    n = lay.n
    if axes.loss == "sse":
        diag = np.zeros(lay.n_vars)
        diag[lay.eps] = 1.0
        Q = sp.diags(diag, format="csc")
        c = None
    elif axes.loss == "expectile":
        diag = np.zeros(lay.n_vars)
        diag[lay.eps.start: lay.eps.start + n] = axes.tau
        diag[lay.eps.start + n: lay.eps.stop] = 1.0 - axes.tau
        Q = sp.diags(diag, format="csc")
        c = None
    else:
        Q = None
        c = np.zeros(lay.n_vars)
        c[lay.eps.start: lay.eps.start + n] = axes.tau
        c[lay.eps.start + n: lay.eps.stop] = 1.0 - axes.tau

    prob = AffineProblem(
        n_vars=lay.n_vars, Q=Q, c=c,
        A_eq=A_eq, b_eq=b_eq,
        A_in=A_in if A_in.shape[0] else None,
        b_in=b_in if A_in.shape[0] else None,
        lb=lower_bounds(lay),
    )
    return prob, lay


def build_smooth_problem(
    ds: Dataset, axes: ModelAxes, pairs: np.ndarray, tol: ToleranceConfig
) -> tuple[SmoothProblem, Layout]:
    """Assemble the multiplicative-path problem: loss(ln y - ln(fit) - lam'z)."""
    lay = make_layout(ds, axes, smooth=True)
    fitM = fit_matrix(ds, lay)
    A_shape, b_shape = shape_rows(ds, lay, axes, pairs)
    # log guard: fit >= FIT_FLOOR, i.e. -fitM v <= -FIT_FLOOR
    A_in = sp.vstack([A_shape, -fitM], format="csc")
    b_in = np.concatenate([b_shape, np.full(lay.n, -FIT_FLOOR)])
    ly = np.log(ds.y[:, 0])
    zmat = ds.z if axes.use_z else None

    def residual(v):
        fit = np.asarray(fitM @ v).ravel()
        r = ly - np.log(fit)
        if zmat is not None:
            r = r - zmat @ v[lay.lam]
        J = -sp.diags(1.0 / fit) @ fitM
        if zmat is not None:
            Jz = sp.csc_matrix(
                ((-zmat).ravel(),
                 (np.repeat(np.arange(lay.n), lay.r), np.tile(np.arange(lay.r) + lay.lam.start, lay.n))),
                shape=(lay.n, lay.n_vars),
            )
            J = J + Jz
        return r, sp.csc_matrix(J)

    x0 = _warm_start(ds, axes, lay, tol)
    prob = SmoothProblem(
        n_vars=lay.n_vars,
        residual=residual,
        loss=axes.loss,
        tau=axes.tau,
        A_in=A_in,
        b_in=b_in,
        lb=lower_bounds(lay),
        x0=x0,
    )
    return prob, lay


def _warm_start(ds: Dataset, axes: ModelAxes, lay: Layout, tol: ToleranceConfig) -> np.ndarray:
    """Additive fit as a feasible start for the multiplicative path.

    The additive solution satisfies the same shape rows; the fitted values
    are then lifted above the log floor by a uniform shift that provably
    preserves every pairwise row (a common shift of all alpha_i, or of all
    beta vectors under CRS, moves both sides of each row equally).
    """
    add_axes = ModelAxes(loss=axes.loss, tau=axes.tau, cet="additive", fun=axes.fun, rts=axes.rts)
    prob, add_lay = build_affine_problem(ds, add_axes, all_pairs(ds.n))
    sol = solve_affine(prob, tol)
    w = np.zeros(lay.n_vars)
    if sol.status in ("optimal", "max_iterations") and np.all(np.isfinite(sol.v)):
        if lay.has_alpha:
            w[lay.alpha] = sol.v[add_lay.alpha]
        w[lay.beta] = sol.v[add_lay.beta]
    else:
        w[lay.beta] = 0.0
    fit = np.asarray(fit_matrix(ds, lay) @ w).ravel()
    lift = max(0.0, 10 * FIT_FLOOR - fit.min())
    if lift > 0:
        if lay.has_alpha:
            w[lay.alpha] += lift
        else:
            xsum = ds.x.sum(axis=1)
            w[lay.beta] = (w[lay.beta].reshape(lay.n, lay.m) + lift / max(xsum.min(), 1e-12)).ravel()
    return w


def hyperplane_values(ds: Dataset, est, at_own: bool = True) -> np.ndarray:
    """Matrix M with M[i, j] = hyperplane j evaluated at observation i's data."""
    M = est.alpha[None, :] + ds.x @ est.beta.T
    if est.gamma is not None:
        M = M - ds.y @ est.gamma.T
    if est.delta is not None:
        M = M + ds.b @ est.delta.T
    return M


def shape_violations(ds: Dataset, est, fun: str, pairs: np.ndarray | None = None) -> np.ndarray:
    """Signed violation of each ordered pair's shape row; positive = violated.

    Vectorized O(n^2 m) scan; ``pairs`` restricts the result (dominance
    gating), None means all ordered pairs.
    """
    M = hyperplane_values(ds, est)
    own = np.diag(M)
    V = own[:, None] - M if fun == "production" else M - own[:, None]
    np.fill_diagonal(V, -np.inf)
    if pairs is None:
        return V
    out = np.full((ds.n, ds.n), -np.inf)
    out[pairs[:, 0], pairs[:, 1]] = V[pairs[:, 0], pairs[:, 1]]
    return out
