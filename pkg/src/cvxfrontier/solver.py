"""Numerical back-ends: an affine-constrained QP/LP core and a smooth solver.

All model modules talk to these two entry points only. ``solve_affine``
wraps an interior-point conic solver and re-derives KKT residuals from the
returned primal/dual pair instead of trusting the solver's status string.
``solve_smooth`` is a trust-region successive-convexification scheme for
composite objectives (a convex loss of a smooth residual map) over an
affine feasible region; every subproblem goes through ``solve_affine``, so
there is one affine core and two entry points.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp

import clarabel

__all__ = [
    "ToleranceConfig",
    "KktResiduals",
    "AffineProblem",
    "SmoothProblem",
    "Solution",
    "SolverError",
    "solve_affine",
    "solve_smooth",
]

Status = Literal["optimal", "max_iterations", "infeasible", "numerical_failure"]


class SolverError(RuntimeError):
    """Raised when a solve cannot produce a usable point."""


@dataclass(frozen=True)
class ToleranceConfig:
    """Solver tolerances; configuration, not contract.

    ``primal`` is an absolute bound on each constraint violation,
    ``dual`` a relative bound on the stationarity residual, ``comp_rel`` a
    relative bound on complementarity (|s_i z_i| scaled by 1+|objective|).
    ``stationarity`` governs the smooth path's outer loop. Defaults are
    tighter than the 1e-6 feasibility re-checks applied downstream.
    """

    primal: float = 1e-8
    dual: float = 1e-8
    comp_rel: float = 1e-6
    stationarity: float = 1e-6
    max_iter: int = 200


@dataclass(frozen=True)
class KktResiduals:
    primal: float
    dual: float
    complementarity: float

    def within(self, tol: ToleranceConfig) -> bool:
        return (
            self.primal <= tol.primal
            and self.dual <= max(tol.dual, 10 * np.finfo(float).eps)
            and self.complementarity <= tol.comp_rel
        )


@dataclass(frozen=True)
class AffineProblem:
    """min v'Qv + c'v  s.t.  A_eq v = b_eq, A_in v <= b_in, v >= lb.

    Q must be symmetric PSD (None means LP). ``lb`` holds per-variable
    lower bounds with -inf for free variables (None means all free).
    """

    n_vars: int
    Q: sp.spmatrix | None = None
    c: np.ndarray | None = None
    A_eq: sp.spmatrix | None = None
    b_eq: np.ndarray | None = None
    A_in: sp.spmatrix | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None

    def objective_at(self, v: np.ndarray) -> float:
        val = 0.0
        if self.Q is not None:
            val += float(v @ (self.Q @ v))
        if self.c is not None:
            val += float(self.c @ v)
        return val

    def feasibility_at(self, v: np.ndarray) -> float:
        worst = 0.0
        if self.A_eq is not None:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ v - self.b_eq), initial=0.0)))
        if self.A_in is not None:
            worst = max(worst, float(np.max(self.A_in @ v - self.b_in, initial=0.0)))
        if self.lb is not None:
            worst = max(worst, float(np.max(self.lb - v, initial=0.0)))
        return worst


@dataclass(frozen=True)
class SmoothProblem:
    """Composite objective loss(r(v)) over an affine feasible region.

    ``residual`` maps v to (values, jacobian) of a smooth vector function
    r: R^n -> R^k. The outer loss is one of

    - "sse":        sum r_i^2
    - "expectile":  sum tau*max(r,0)^2 + (1-tau)*max(-r,0)^2
    - "quantile":   sum tau*max(r,0)  + (1-tau)*max(-r,0)

    Constraints and bounds are affine, as in AffineProblem. ``x0`` is the
    initial point; it need not be feasible (a restoration step runs first).
    """

    n_vars: int
    residual: Callable[[np.ndarray], tuple[np.ndarray, sp.spmatrix]]
    loss: Literal["sse", "expectile", "quantile"] = "sse"
    tau: float = 0.5
    A_eq: sp.spmatrix | None = None
    b_eq: np.ndarray | None = None
    A_in: sp.spmatrix | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    x0: np.ndarray | None = None

    def loss_at(self, r: np.ndarray) -> float:
        pos = np.maximum(r, 0.0)
        neg = np.maximum(-r, 0.0)
        if self.loss == "sse":
            return float(r @ r)
        if self.loss == "expectile":
            return float(self.tau * pos @ pos + (1.0 - self.tau) * neg @ neg)
        return float(self.tau * pos.sum() + (1.0 - self.tau) * neg.sum())


@dataclass(frozen=True)
class Solution:
    v: np.ndarray
    objective_value: float
    status: Status
    kkt_residuals: KktResiduals
    iterations: int
    wall_time: float
    message: str = ""


def _empty(mat) -> bool:
    return mat is None or mat.shape[0] == 0


def _stack_problem(p: AffineProblem):
    """Assemble the conic form: rows = [equalities; inequalities; -v <= -lb]."""
    blocks, rhs = [], []
    n_eq = 0
    if not _empty(p.A_eq):
        blocks.append(sp.csc_matrix(p.A_eq))
        rhs.append(np.asarray(p.b_eq, dtype=float))
        n_eq = p.A_eq.shape[0]
    if not _empty(p.A_in):
        blocks.append(sp.csc_matrix(p.A_in))
        rhs.append(np.asarray(p.b_in, dtype=float))
    bounded = np.array([], dtype=np.int64)
    if p.lb is not None:
        lb = np.asarray(p.lb, dtype=float)
        bounded = np.flatnonzero(np.isfinite(lb))
        if bounded.size:
            rows = sp.csc_matrix(
                (-np.ones(bounded.size), (np.arange(bounded.size), bounded)),
                shape=(bounded.size, p.n_vars),
            )
            blocks.append(rows)
            rhs.append(-lb[bounded])
    if blocks:
        A = sp.vstack(blocks, format="csc")
        b = np.concatenate(rhs)
    else:
        A = sp.csc_matrix((0, p.n_vars))
        b = np.zeros(0)
    return A, b, n_eq, bounded


def solve_affine(p: AffineProblem, tol: ToleranceConfig | None = None) -> Solution:
    """Solve an affine-constrained QP/LP and report independently checked KKT data.

    The returned status is "optimal" only when the recomputed primal
    feasibility, dual stationarity, and complementarity residuals meet
    ``tol``; the backend's own verdict is demoted otherwise.
    """
    tol = tol or ToleranceConfig()
    t0 = time.perf_counter()
    A, b, n_eq, _ = _stack_problem(p)
    n_in = A.shape[0] - n_eq

    P = sp.csc_matrix((p.n_vars, p.n_vars)) if p.Q is None else (2.0 * sp.csc_matrix(p.Q))
    q = np.zeros(p.n_vars) if p.c is None else np.asarray(p.c, dtype=float)

    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_in:
        cones.append(clarabel.NonnegativeConeT(n_in))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max(tol.max_iter, 10)
    settings.tol_feas = min(tol.primal, 1e-8)
    settings.tol_gap_abs = 1e-8
    settings.tol_gap_rel = 1e-8

    try:
        solver = clarabel.DefaultSolver(sp.triu(P, format="csc"), q, A, b, cones, settings)
        sol = solver.solve()
    except BaseException as exc:  # the rust core raises panics as BaseException
        raise SolverError(f"affine solve failed to run: {exc}") from exc

    wall = time.perf_counter() - t0
    status_name = str(sol.status)
    v = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    s = np.asarray(sol.s, dtype=float)

    if status_name in ("PrimalInfeasible", "DualInfeasible") or v.size != p.n_vars:
        kkt = KktResiduals(np.inf, np.inf, np.inf)
        status: Status = "infeasible" if status_name == "PrimalInfeasible" else "numerical_failure"
        return Solution(v, np.nan, status, kkt, int(sol.iterations), wall, status_name)

    obj = p.objective_at(v)
    primal = p.feasibility_at(v)
    grad = q.copy()
    if p.Q is not None:
        grad = grad + P @ v
    dual_vec = grad + (A.T @ z if A.shape[0] else 0.0)
    scale = 1.0 + max(
        float(np.max(np.abs(grad), initial=0.0)),
        float(np.max(np.abs(A.T @ z), initial=0.0)) if A.shape[0] else 0.0,
    )
    dual = float(np.max(np.abs(dual_vec), initial=0.0)) / scale
    comp = 0.0
    if n_in:
        comp = float(np.max(np.abs(s[n_eq:] * z[n_eq:]), initial=0.0)) / (1.0 + abs(obj))
    kkt = KktResiduals(primal, dual, comp)

    if kkt.within(tol):
        status = "optimal"
    elif status_name == "MaxIterations":
        status = "max_iterations"
    else:
        status = "numerical_failure"
    return Solution(v, obj, status, kkt, int(sol.iterations), wall, status_name)


def _split(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(r, 0.0), np.maximum(-r, 0.0)


def _restore_feasibility(p: SmoothProblem, w: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    """Find an affine-feasible point near w, or raise on infeasibility.

    Minimizes the total constraint violation as an LP in (v, slacks); a
    strictly positive optimum certifies infeasibility of the affine system.
    """
    n = p.n_vars
    n_in = 0 if _empty(p.A_in) else p.A_in.shape[0]
    n_eq = 0 if _empty(p.A_eq) else p.A_eq.shape[0]
    n_t = n_in + 2 * n_eq  # one slack per inequality, a +/- pair per equality
    if n_t == 0:
        lb = None if p.lb is None else np.asarray(p.lb, dtype=float)
        return w if lb is None else np.maximum(w, lb)

    rhs_scale = 1.0
    blocks_in, rhs_in = [], []
    if n_in:
        blocks_in.append(sp.hstack([p.A_in, -sp.eye(n_in), sp.csc_matrix((n_in, 2 * n_eq))]))
        rhs_in.append(np.asarray(p.b_in, dtype=float))
        rhs_scale = max(rhs_scale, float(np.max(np.abs(p.b_in), initial=0.0)))
    A_eq_ext = b_eq_ext = None
    if n_eq:
        A_eq_ext = sp.hstack([p.A_eq, sp.csc_matrix((n_eq, n_in)), -sp.eye(n_eq), sp.eye(n_eq)])
        b_eq_ext = np.asarray(p.b_eq, dtype=float)
        rhs_scale = max(rhs_scale, float(np.max(np.abs(b_eq_ext), initial=0.0)))

    lb_ext = np.full(n + n_t, -np.inf)
    if p.lb is not None:
        lb_ext[:n] = np.asarray(p.lb, dtype=float)
    lb_ext[n:] = 0.0
    c_ext = np.zeros(n + n_t)
    c_ext[n:] = 1.0
    lp = AffineProblem(
        n_vars=n + n_t,
        c=c_ext,
        A_eq=sp.csc_matrix(A_eq_ext) if A_eq_ext is not None else None,
        b_eq=b_eq_ext,
        A_in=sp.vstack(blocks_in, format="csc") if blocks_in else None,
        b_in=np.concatenate(rhs_in) if rhs_in else None,
        lb=lb_ext,
    )
    sol = solve_affine(lp, replace(tol, primal=max(tol.primal, 1e-9)))
    if sol.status not in ("optimal", "max_iterations"):
        raise SolverError(f"feasibility restoration failed: {sol.status}")
    if sol.objective_value > 1e-7 * rhs_scale:
        raise SolverError("affine constraint system is infeasible")
    return sol.v[:n]


def solve_smooth(p: SmoothProblem, tol: ToleranceConfig | None = None) -> Solution:
    """Minimize a composite loss of a smooth residual map over affine constraints.

    Each outer iteration linearizes the residual map and solves the exact
    convexification through ``solve_affine``: a Gauss-Newton QP for squared
    loss, and an LP/QP in (step, r+, r-) for quantile/expectile losses. The
    step is confined to an infinity-norm trust region; accepted iterates
    stay affine-feasible because the subproblem imposes the constraints at
    the trial point. Returns a KKT point of the (possibly nonconvex)
    problem; status records local optimality only.
    """
    tol = tol or ToleranceConfig()
    t0 = time.perf_counter()
    n = p.n_vars
    w = np.zeros(n) if p.x0 is None else np.asarray(p.x0, dtype=float).copy()
    if not np.all(np.isfinite(w)):
        raise SolverError("initial point must be finite")

    probe = AffineProblem(n_vars=n, A_eq=p.A_eq, b_eq=p.b_eq, A_in=p.A_in, b_in=p.b_in, lb=p.lb)
    if probe.feasibility_at(w) > tol.primal:
        try:
            w = _restore_feasibility(p, w, tol)
        except SolverError as exc:
            if "infeasible" in str(exc):
                kkt = KktResiduals(np.inf, np.inf, np.inf)
                return Solution(w, np.nan, "infeasible", kkt, 0, time.perf_counter() - t0, str(exc))
            raise

    r, J = p.residual(w)
    f_cur = p.loss_at(r)
    delta = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    n_iter = 0
    stationarity = np.inf

    for n_iter in range(1, tol.max_iter + 1):
        sub, dw, model_dec = _convex_step(p, w, r, J, delta, tol)
        if sub.status == "infeasible":
            kkt = KktResiduals(np.inf, np.inf, np.inf)
            return Solution(w, f_cur, "infeasible", kkt, n_iter, time.perf_counter() - t0, "subproblem infeasible")

        # epsilon-stationarity: the best linearized decrease available near w
        stationarity = model_dec / max(1.0, abs(f_cur))
        if model_dec <= tol.stationarity**2 * max(1.0, abs(f_cur)):
            if delta >= 1.0:
                break
            # confirm at a unit radius so a collapsed trust region cannot
            # masquerade as stationarity
            _, dw2, dec2 = _convex_step(p, w, r, J, 1.0, tol)
            if dec2 <= tol.stationarity**2 * max(1.0, abs(f_cur)):
                stationarity = dec2 / max(1.0, abs(f_cur))
                break
            delta = 1.0
            dw, model_dec = dw2, dec2

        r_new, J_new = p.residual(w + dw)
        f_new = p.loss_at(r_new)
        rho = (f_cur - f_new) / model_dec if model_dec > 0 else -1.0
        if rho > 1e-4 and np.isfinite(f_new):
            w = w + dw
            r, J = r_new, J_new
            f_cur = f_new
            if rho > 0.7:
                delta = min(delta * 2.0, 1e6)
        else:
            delta = max(delta * 0.25, 1e-14)
            if delta <= 1e-13:
                break

    primal = probe.feasibility_at(w)
    kkt = KktResiduals(primal=primal, dual=stationarity, complementarity=0.0)
    converged = primal <= max(tol.primal, 1e-7) and stationarity <= tol.stationarity
    status: Status = "optimal" if converged else "max_iterations"
    return Solution(w, f_cur, status, kkt, n_iter, time.perf_counter() - t0,
                    "local optimum" if converged else "stopped before stationarity")


def _convex_step(p, w, r, J, delta, tol):
    """One convexified subproblem at w; returns (solution, step, model decrease)."""
    n = p.n_vars
    J = sp.csc_matrix(J)
    k = r.shape[0]

    rows, rhs = [], []
    if not _empty(p.A_in):
        rows.append(sp.csc_matrix(p.A_in))
        rhs.append(np.asarray(p.b_in, dtype=float) - p.A_in @ w)
    lb_dw = np.full(n, -delta)
    ub_dw = np.full(n, delta)
    if p.lb is not None:
        lb = np.asarray(p.lb, dtype=float)
        lb_dw = np.maximum(lb_dw, lb - w)

    sub_tol = replace(tol, primal=min(tol.primal, 1e-9), max_iter=200)

    if p.loss == "sse":
        Q = (J.T @ J).tocsc()
        Q = Q + 1e-12 * sp.eye(n, format="csc")
        c = 2.0 * np.asarray(J.T @ r).ravel()
        A_in = sp.vstack(rows + [sp.eye(n, format="csc")], format="csc") if rows else sp.eye(n, format="csc")
        b_in = np.concatenate(rhs + [ub_dw]) if rhs else ub_dw
        sub = AffineProblem(
            n_vars=n, Q=Q, c=c,
            A_eq=p.A_eq, b_eq=(np.asarray(p.b_eq, float) - p.A_eq @ w) if not _empty(p.A_eq) else None,
            A_in=A_in, b_in=b_in, lb=lb_dw,
        )
        sol = solve_affine(sub, sub_tol)
        if sol.status == "infeasible":
            return sol, np.zeros(n), 0.0
        dw = sol.v
        model_val = p.loss_at(r + J @ dw)
        return sol, dw, max(p.loss_at(r) - model_val, 0.0)

    # quantile / expectile: variables (dw, rp, rn) with rp - rn = r + J dw
    tau = p.tau
    eye_k = sp.eye(k, format="csc")
    A_eq_rows = [sp.hstack([-J, eye_k, -eye_k], format="csc")]
    b_eq_rows = [r.copy()]
    if not _empty(p.A_eq):
        A_eq_rows.append(sp.hstack([sp.csc_matrix(p.A_eq), sp.csc_matrix((p.A_eq.shape[0], 2 * k))]))
        b_eq_rows.append(np.asarray(p.b_eq, float) - p.A_eq @ w)
    rows_ext = [sp.hstack([rw, sp.csc_matrix((rw.shape[0], 2 * k))]) for rw in rows]
    rows_ext.append(sp.hstack([sp.eye(n, format="csc"), sp.csc_matrix((n, 2 * k))]))
    rhs_ext = rhs + [ub_dw]
    lb_ext = np.concatenate([lb_dw, np.zeros(2 * k)])
    if p.loss == "expectile":
        diag = np.concatenate([np.zeros(n), np.full(k, tau), np.full(k, 1.0 - tau)])
        Q = sp.diags(diag, format="csc")
        c = None
    else:
        Q = None
        c = np.concatenate([np.zeros(n), np.full(k, tau), np.full(k, 1.0 - tau)])
    sub = AffineProblem(
        n_vars=n + 2 * k, Q=Q, c=c,
        A_eq=sp.vstack(A_eq_rows, format="csc"), b_eq=np.concatenate(b_eq_rows),
        A_in=sp.vstack(rows_ext, format="csc"), b_in=np.concatenate(rhs_ext),
        lb=lb_ext,
    )
    sol = solve_affine(sub, sub_tol)
    if sol.status == "infeasible":
        return sol, np.zeros(n), 0.0
    dw = sol.v[:n]
    model_val = p.loss_at(r + J @ dw)
    return sol, dw, max(p.loss_at(r) - model_val, 0.0)
