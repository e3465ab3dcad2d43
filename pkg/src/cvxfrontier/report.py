"""Estimated-function data emission, result serialization, and figure rendering.

The data artifacts are the contract: curve and surface CSVs plus a result
JSON document that round-trips exactly. Figures are a convenience rendered
next to the data files from the same arrays.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from . import _problems as pb
from .cnls import CnlsSpec, FrontierEstimate
from .congen import GenState
from .cqer import CqerSpec
from .ddf import DdfSpec
from .solver import KktResiduals, Solution

__all__ = [
    "SCHEMA_VERSION",
    "CurveData",
    "SurfaceData",
    "emit_curve_2d",
    "emit_surface_3d",
    "envelope_values",
    "result_to_dict",
    "result_from_dict",
    "write_result_json",
    "read_result_json",
    "write_estimate_csv",
    "write_curve_csv",
    "write_surface_csv",
    "write_gnuplot_script",
    "render_curve",
    "render_surface",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CurveData:
    """Sorted (x, yhat) pairs plus the observation scatter.

    Duplicate x values are collapsed to their mean fitted height so the
    curve abscissa is strictly increasing. ``grid_x``/``grid_yhat`` carry
    the optional dense envelope evaluation (single-input models only).
    """

    x: np.ndarray
    yhat: np.ndarray
    scatter_x: np.ndarray
    scatter_y: np.ndarray
    grid_x: np.ndarray | None = None
    grid_yhat: np.ndarray | None = None


@dataclass(frozen=True)
class SurfaceData:
    """Triangulated fitted surface over two selected inputs."""

    vertices: np.ndarray  # (k, 3): x1, x2, fitted height
    triangles: np.ndarray  # (t, 3) vertex indices
    scatter: np.ndarray  # (n, 3): x1, x2, observed y


def envelope_values(est: FrontierEstimate, points: np.ndarray) -> np.ndarray:
    """Frontier evaluation between observations.

    Production estimates take the pointwise minimum over the fitted
    hyperplanes, cost estimates the pointwise maximum (the minimum
    extrapolation consistent with the shape constraints).
    """
    if est.gamma is not None:
        raise ValueError("envelope evaluation needs a single-output estimate, not a DDF fit")
    planes = est.alpha[None, :] + points @ est.beta.T
    return planes.min(axis=1) if est.axes.fun == "production" else planes.max(axis=1)


def emit_curve_2d(
    est: FrontierEstimate,
    ds,
    x_select: int,
    envelope_grid: int | None = None,
) -> CurveData:
    """Fitted-function curve over one selected input.

    Heights are the envelope evaluated at the observed input vectors, so
    a zero-residual fit reproduces the data exactly.
    """
    if not 0 <= x_select < ds.m:
        raise ValueError(f"x_select {x_select} out of range for {ds.m} inputs")
    yhat = envelope_values(est, ds.x)
    xsel = ds.x[:, x_select]
    order = np.argsort(xsel, kind="stable")
    xs, ys = xsel[order], yhat[order]
    ux, inverse = np.unique(xs, return_inverse=True)
    uy = np.zeros_like(ux)
    counts = np.zeros_like(ux)
    np.add.at(uy, inverse, ys)
    np.add.at(counts, inverse, 1.0)
    uy /= counts

    grid_x = grid_y = None
    if envelope_grid is not None:
        if ds.m != 1:
            raise ValueError("the dense envelope grid is defined for single-input models only")
        if envelope_grid < 2:
            raise ValueError("envelope grid needs at least 2 points")
        grid_x = np.linspace(float(xsel.min()), float(xsel.max()), envelope_grid)
        grid_y = envelope_values(est, grid_x.reshape(-1, 1))
    return CurveData(
        x=ux, yhat=uy,
        scatter_x=xsel.copy(), scatter_y=ds.y[:, 0].copy(),
        grid_x=grid_x, grid_yhat=grid_y,
    )


def emit_surface_3d(
    est: FrontierEstimate,
    ds,
    x_select_1: int,
    x_select_2: int,
    grid_n: int | None = None,
) -> SurfaceData:
    """Linear-interpolation surface of the fitted function over two inputs.

    Triangulates the observed input pairs and attaches the envelope
    heights at the observations; within each triangle the surface is the
    linear interpolant. ``grid_n`` swaps the observed vertices for a
    regular grid of envelope evaluations (exact only when m = 2).
    """
    from scipy.spatial import Delaunay, QhullError

    if ds.m < 2:
        raise ValueError("surface emission needs at least two inputs")
    if x_select_1 == x_select_2:
        raise ValueError("the two selected inputs must differ")
    for sel in (x_select_1, x_select_2):
        if not 0 <= sel < ds.m:
            raise ValueError(f"x_select {sel} out of range for {ds.m} inputs")

    if grid_n is not None:
        if ds.m != 2:
            raise ValueError("the dense envelope grid surface is defined for two-input models only")
        if grid_n < 2:
            raise ValueError("envelope grid needs at least 2 points per axis")
        g1 = np.linspace(float(ds.x[:, x_select_1].min()), float(ds.x[:, x_select_1].max()), grid_n)
        g2 = np.linspace(float(ds.x[:, x_select_2].min()), float(ds.x[:, x_select_2].max()), grid_n)
        G1, G2 = np.meshgrid(g1, g2, indexing="ij")
        pts = np.zeros((grid_n * grid_n, ds.m))
        pts[:, x_select_1] = G1.ravel()
        pts[:, x_select_2] = G2.ravel()
        heights = envelope_values(est, pts)
        pts2 = np.column_stack([G1.ravel(), G2.ravel()])
    else:
        pts2 = ds.x[:, [x_select_1, x_select_2]]
        heights = envelope_values(est, ds.x)

    if pts2.shape[0] < 3:
        raise ValueError("surface triangulation needs at least 3 points")
    try:
        tri = Delaunay(pts2)
    except QhullError as exc:
        raise ValueError(f"degenerate geometry: selected inputs are collinear ({exc})") from None
    if tri.simplices.shape[0] == 0:
        raise ValueError("degenerate geometry: no triangles produced")
    vertices = np.column_stack([pts2, heights])
    scatter = np.column_stack([ds.x[:, x_select_1], ds.x[:, x_select_2], ds.y[:, 0]])
    return SurfaceData(vertices=vertices, triangles=tri.simplices.copy(), scatter=scatter)


# --- serialization -------------------------------------------------------

def _vec(a):
    return None if a is None else [float(v) for v in np.asarray(a).ravel()]


def _mat(a):
    return None if a is None else [[float(v) for v in row] for row in np.asarray(a)]


def _family_of(est: FrontierEstimate, family: str | None) -> str:
    if family:
        return family
    spec = est.spec
    if isinstance(spec, DdfSpec):
        return {"cnls": "cnls-ddf", "quantile": "cqr-ddf", "expectile": "cer-ddf"}[spec.flavor]
    if isinstance(spec, CqerSpec):
        return "cqr" if spec.flavor == "quantile" else "cer"
    return "cnls"


def result_to_dict(
    est: FrontierEstimate,
    ds,
    gen_state: GenState | None = None,
    family: str | None = None,
    stoned: dict | None = None,
) -> dict:
    sol = est.solve_diagnostics
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "frontier_estimate",
        "family": _family_of(est, family),
        "model": est.axes.describe(),
        "data": {
            "n": ds.n, "m": ds.m, "q": ds.q, "r": ds.r, "s": ds.s,
            "x_names": list(ds.x_names), "y_names": list(ds.y_names),
            "z_names": list(ds.z_names), "b_names": list(ds.b_names),
        },
        "coefficients": {
            "alpha": _vec(est.alpha),
            "beta": _mat(est.beta),
            "gamma": _mat(est.gamma),
            "delta": _mat(est.delta),
            "z_coefficients": _vec(est.z_coefficients),
            "phi": _vec(est.phi),
        },
        "residuals": {
            "residuals": _vec(est.residuals),
            "residual_pos": _vec(est.residual_pos),
            "residual_neg": _vec(est.residual_neg),
        },
        "objective_value": float(est.objective_value),
        "diagnostics": {
            "status": sol.status,
            "iterations": int(sol.iterations),
            "wall_time": float(sol.wall_time),
            "kkt": {
                "primal": float(sol.kkt_residuals.primal),
                "dual": float(sol.kkt_residuals.dual),
                "complementarity": float(sol.kkt_residuals.complementarity),
            },
            "message": sol.message,
        },
    }
    if gen_state is not None:
        doc["generation"] = {
            "rounds": int(gen_state.rounds),
            "violations_added_per_round": [int(v) for v in gen_state.violations_added_per_round],
            "total_constraints": int(gen_state.total_constraints),
            "active_pairs": int(gen_state.active_pairs.shape[0]),
            "runtime": float(gen_state.runtime),
            "converged": bool(gen_state.converged),
        }
    if stoned is not None:
        doc["stoned"] = stoned
    return doc


def _spec_from_model(family: str, model: dict):
    if family in ("cnls", "icnls"):
        return CnlsSpec(
            error_composition=model["error_composition"],
            function_type=model["function_type"],
            rts=model["rts"],
            use_contextual=model.get("use_contextual", False),
        )
    if family in ("cqr", "cer", "icqr", "icer"):
        return CqerSpec(
            tau=model["tau"],
            flavor="quantile" if family in ("cqr", "icqr") else "expectile",
            error_composition=model["error_composition"],
            function_type=model["function_type"],
            rts=model["rts"],
            use_contextual=model.get("use_contextual", False),
        )
    flavor = {"cnls-ddf": "cnls", "cqr-ddf": "quantile", "cer-ddf": "expectile"}[family]
    return DdfSpec(
        gx=tuple(model["gx"]), gy=tuple(model["gy"]),
        gb=tuple(model["gb"]) if model.get("gb") is not None else None,
        flavor=flavor, tau=model.get("tau"),
        function_type=model["function_type"],
    )


def result_from_dict(doc: dict) -> FrontierEstimate:
    """Rebuild a FrontierEstimate from its JSON document.

    The decision vector of the original solve is not stored, so the
    diagnostics carry an empty vector; everything needed downstream
    (coefficients, residuals, model axes) is restored exactly.
    """
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    model = doc["model"]
    family = doc["family"]
    spec = _spec_from_model(family, model)
    coef = doc["coefficients"]
    res = doc["residuals"]
    diag = doc["diagnostics"]
    axes = pb.ModelAxes(
        loss=model["loss"],
        tau=model.get("tau", 0.5),
        cet=model["error_composition"],
        fun=model["function_type"],
        rts=model["rts"],
        use_z=model.get("use_contextual", False),
        ddf=model.get("ddf", False),
        gx=np.asarray(model["gx"], dtype=float) if model.get("gx") is not None else None,
        gy=np.asarray(model["gy"], dtype=float) if model.get("gy") is not None else None,
        gb=np.asarray(model["gb"], dtype=float) if model.get("gb") is not None else None,
    )
    sol = Solution(
        v=np.zeros(0),
        objective_value=float(doc["objective_value"]),
        status=diag["status"],
        kkt_residuals=KktResiduals(
            primal=diag["kkt"]["primal"], dual=diag["kkt"]["dual"],
            complementarity=diag["kkt"]["complementarity"],
        ),
        iterations=diag["iterations"],
        wall_time=diag["wall_time"],
        message=diag.get("message", ""),
    )

    def arr(v):
        return None if v is None else np.asarray(v, dtype=float)

    return FrontierEstimate(
        alpha=arr(coef["alpha"]),
        beta=arr(coef["beta"]),
        residuals=arr(res["residuals"]),
        residual_pos=arr(res["residual_pos"]),
        residual_neg=arr(res["residual_neg"]),
        z_coefficients=arr(coef["z_coefficients"]),
        phi=arr(coef["phi"]),
        gamma=arr(coef["gamma"]),
        delta=arr(coef["delta"]),
        objective_value=float(doc["objective_value"]),
        solve_diagnostics=sol,
        spec=spec,
        axes=axes,
    )


def write_result_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_result_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_estimate_csv(est: FrontierEstimate, ds, path) -> None:
    """One row per observation: data, coefficients, fitted value, residuals."""
    header = ["obs"]
    header += list(ds.x_names) + list(ds.y_names) + list(ds.z_names) + list(ds.b_names)
    header += ["alpha"] + [f"beta_{name}" for name in ds.x_names]
    if est.gamma is not None:
        header += [f"gamma_{name}" for name in ds.y_names]
    if est.delta is not None:
        header += [f"delta_{name}" for name in ds.b_names]
    if est.phi is not None:
        header += ["phi"]
    header += ["fitted"]
    if est.residuals is not None:
        header += ["residual"]
    else:
        header += ["residual_pos", "residual_neg"]
    fitted = est.fitted_frontier(ds)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            row = [str(i)]
            row += [_fmt(v) for v in ds.x[i]]
            row += [_fmt(v) for v in ds.y[i]]
            if ds.z is not None:
                row += [_fmt(v) for v in ds.z[i]]
            if ds.b is not None:
                row += [_fmt(v) for v in ds.b[i]]
            row += [_fmt(est.alpha[i])] + [_fmt(v) for v in est.beta[i]]
            if est.gamma is not None:
                row += [_fmt(v) for v in est.gamma[i]]
            if est.delta is not None:
                row += [_fmt(v) for v in est.delta[i]]
            if est.phi is not None:
                row += [_fmt(est.phi[i])]
            row += [_fmt(fitted[i])]
            if est.residuals is not None:
                row += [_fmt(est.residuals[i])]
            else:
                row += [_fmt(est.residual_pos[i]), _fmt(est.residual_neg[i])]
            writer.writerow(row)


def write_curve_csv(curve: CurveData, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "x", "value"])
        for x, y in zip(curve.x, curve.yhat):
            writer.writerow(["curve", _fmt(x), _fmt(y)])
        for x, y in zip(curve.scatter_x, curve.scatter_y):
            writer.writerow(["observation", _fmt(x), _fmt(y)])
        if curve.grid_x is not None:
            for x, y in zip(curve.grid_x, curve.grid_yhat):
                writer.writerow(["envelope", _fmt(x), _fmt(y)])


def write_surface_csv(surface: SurfaceData, vertices_path, triangles_path) -> None:
    with open(vertices_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "x1", "x2", "value"])
        for v in surface.vertices:
            writer.writerow(["vertex", _fmt(v[0]), _fmt(v[1]), _fmt(v[2])])
        for srow in surface.scatter:
            writer.writerow(["observation", _fmt(srow[0]), _fmt(srow[1]), _fmt(srow[2])])
    with open(triangles_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["v0", "v1", "v2"])
        for t in surface.triangles:
            writer.writerow([str(int(t[0])), str(int(t[1])), str(int(t[2]))])


def write_gnuplot_script(path, curve_csv=None, surface_vertices_csv=None) -> None:
    """A minimal script so the CSVs plot without this package installed."""
    lines = ["set datafile separator ','", "set key outside"]
    if curve_csv is not None:
        lines += [
            f"plot '< grep curve {curve_csv}' using 2:3 with lines title 'estimated function', \\",
            f"     '< grep observation {curve_csv}' using 2:3 with points title 'observations'",
        ]
    if surface_vertices_csv is not None:
        lines += [
            f"splot '< grep vertex {surface_vertices_csv}' using 2:3:4 with points title 'fitted surface', \\",
            f"      '< grep observation {surface_vertices_csv}' using 2:3:4 with points title 'observations'",
        ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# --- rendering -----------------------------------------------------------

def render_curve(curve: CurveData, path, label: str = "estimated function") -> None:
    fig = Figure(figsize=(7, 5))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    ax.scatter(curve.scatter_x, curve.scatter_y, marker="x", color="0.4", label="observations")
    if curve.grid_x is not None:
        ax.plot(curve.grid_x, curve.grid_yhat, color="C1", lw=1.0, label="envelope")
    ax.plot(curve.x, curve.yhat, color="C0", lw=1.5, label=label)
    ax.set_xlabel("input")
    ax.set_ylabel("output")
    ax.legend()
    fig.savefig(path, dpi=120)


def render_surface(surface: SurfaceData, path, label: str = "estimated function") -> None:
    fig = Figure(figsize=(7, 6))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(projection="3d")
    ax.plot_trisurf(
        surface.vertices[:, 0], surface.vertices[:, 1], surface.vertices[:, 2],
        triangles=surface.triangles, cmap="viridis", alpha=0.8,
    )
    ax.scatter(surface.scatter[:, 0], surface.scatter[:, 1], surface.scatter[:, 2],
               color="k", marker=".", s=12)
    ax.set_xlabel("input 1")
    ax.set_ylabel("input 2")
    ax.set_zlabel("output")
    ax.set_title(label)
    fig.savefig(path, dpi=120)
