"""Command-line front end: dgp, fit, stoned, and plotdata subcommands.

Every subcommand reads/writes plain files so the stages chain into a
pipeline: generate or bring a CSV, fit a model to a result JSON, decompose
the residuals, and emit plot-ready data files (with figures rendered
alongside unless --no-render is given). Failures exit nonzero with a
machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import congen, report, stoned
from .cnls import CnlsSpec, fit_cnls
from .cqer import CqerSpec, fit_cer, fit_cqr
from .data import DgpConfig, Dataset, generate_dgp, load_csv, write_csv
from .ddf import DdfSpec, fit_cnls_ddf, fit_cqer_ddf
from .isotonic import dominance_matrix, fit_icer, fit_icnls, fit_icqr
from .solver import ToleranceConfig

__all__ = ["run", "main", "build_parser"]

FAMILIES = ("cnls", "cqr", "cer", "icnls", "icqr", "icer", "cnls-ddf", "cqr-ddf", "cer-ddf")
LONG_CET = {"add": "additive", "mult": "multiplicative"}
LONG_FUN = {"prod": "production", "cost": "cost"}


def _names(arg: str | None) -> list[str] | None:
    if arg is None:
        return None
    out = [part.strip() for part in arg.split(",") if part.strip()]
    return out or None


def _floats(arg: str | None) -> tuple[float, ...] | None:
    if arg is None:
        return None
    return tuple(float(part) for part in arg.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvxfrontier",
        description="Shape-constrained frontier estimation and residual decomposition.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_dgp = sub.add_parser("dgp", help="write a synthetic benchmark dataset to CSV")
    p_dgp.add_argument("--n", type=int, required=True)
    p_dgp.add_argument("--low", type=float, default=1.0)
    p_dgp.add_argument("--high", type=float, default=10.0)
    p_dgp.add_argument("--noise-sd", type=float, default=0.7)
    p_dgp.add_argument("--seed", type=int, default=0)
    p_dgp.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="estimate a frontier model from a CSV file")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--x", required=True, help="comma-separated input column names")
    p_fit.add_argument("--y", required=True, help="comma-separated output column names")
    p_fit.add_argument("--z", help="contextual variable column names")
    p_fit.add_argument("--b", help="undesirable output column names")
    p_fit.add_argument("--family", choices=FAMILIES, default="cnls")
    p_fit.add_argument("--cet", choices=("add", "mult"), default="add")
    p_fit.add_argument("--fun", choices=("prod", "cost"), default="prod")
    p_fit.add_argument("--rts", choices=("vrs", "crs"), default="vrs")
    p_fit.add_argument("--tau", type=float)
    p_fit.add_argument("--gx", help="input direction vector, comma-separated")
    p_fit.add_argument("--gy", help="output direction vector, comma-separated")
    p_fit.add_argument("--gb", help="undesirable-output direction vector, comma-separated")
    p_fit.add_argument("--gen", action="store_true", help="solve through row generation")
    p_fit.add_argument("--gen-tol", type=float, default=1e-6)
    p_fit.add_argument("--gen-batch", type=int)
    p_fit.add_argument("--gen-max-rounds", type=int, default=100)
    p_fit.add_argument("--tol-primal", type=float, default=1e-8)
    p_fit.add_argument("--tol-dual", type=float, default=1e-8)
    p_fit.add_argument("--max-iter", type=int, default=200)
    p_fit.add_argument("--dump-dominance", help="write the dominance matrix CSV (isotonic families)")
    p_fit.add_argument("--out", required=True, help="result JSON path")
    p_fit.add_argument("--csv", help="optional per-observation CSV path")

    p_st = sub.add_parser("stoned", help="decompose fit residuals into inefficiency and noise")
    p_st.add_argument("--estimate", required=True, help="result JSON from the fit subcommand")
    p_st.add_argument("--data", required=True, help="the CSV the estimate was fitted on")
    p_st.add_argument("--method", choices=("mom", "qle", "kde"), default="mom")
    p_st.add_argument("--fun", choices=("prod", "cost"), help="override the estimate's orientation")
    p_st.add_argument("--out", required=True, help="augmented result JSON path")
    p_st.add_argument("--csv", help="optional per-observation CSV path")

    p_pl = sub.add_parser("plotdata", help="emit plot-ready curve/surface data files")
    p_pl.add_argument("--estimate", required=True)
    p_pl.add_argument("--data", required=True)
    p_pl.add_argument("--x-select", type=int, default=0)
    p_pl.add_argument("--x-select-2", type=int, help="second input column; switches to surface output")
    p_pl.add_argument("--envelope-grid", type=int, help="dense envelope evaluation with N points")
    p_pl.add_argument("--out-prefix", required=True)
    p_pl.add_argument("--no-render", action="store_true", help="skip the matplotlib figure")
    p_pl.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    return parser


def _tolerances(args) -> ToleranceConfig:
    return ToleranceConfig(primal=args.tol_primal, dual=args.tol_dual, max_iter=args.max_iter)


def _build_spec(args, ds: Dataset):
    cet = LONG_CET[args.cet]
    fun = LONG_FUN[args.fun]
    family = args.family
    if family.endswith("-ddf"):
        if args.gx is None or args.gy is None:
            raise ValueError("DDF families need --gx and --gy direction vectors")
        flavor = {"cnls-ddf": "cnls", "cqr-ddf": "quantile", "cer-ddf": "expectile"}[family]
        if flavor != "cnls" and args.tau is None:
            raise ValueError(f"--tau is required for family {family}")
        return DdfSpec(
            gx=_floats(args.gx), gy=_floats(args.gy), gb=_floats(args.gb),
            flavor=flavor, tau=args.tau, function_type=fun,
        )
    if family in ("cqr", "cer", "icqr", "icer"):
        if args.tau is None:
            raise ValueError(f"--tau is required for family {family}")
        return CqerSpec(
            tau=args.tau,
            flavor="quantile" if family in ("cqr", "icqr") else "expectile",
            error_composition=cet, function_type=fun, rts=args.rts,
            use_contextual=args.z is not None,
        )
    return CnlsSpec(
        error_composition=cet, function_type=fun, rts=args.rts,
        use_contextual=args.z is not None,
    )


def _cmd_dgp(args) -> int:
    ds = generate_dgp(DgpConfig(
        n=args.n, input_low=args.low, input_high=args.high,
        noise_sd=args.noise_sd, seed=args.seed,
    ))
    write_csv(ds, args.out)
    print(f"wrote {ds.n} observations to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    ds = load_csv(args.data, x_select=_names(args.x), y_select=_names(args.y),
                  z_select=_names(args.z), b_select=_names(args.b))
    spec = _build_spec(args, ds)
    tol = _tolerances(args)
    family = args.family

    if args.dump_dominance and not family.startswith("i"):
        raise ValueError("--dump-dominance applies to the isotonic families only")

    gen_state = None
    if args.gen:
        if family not in ("cnls", "cqr", "cer"):
            raise ValueError("row generation supports the cnls, cqr, and cer families")
        cfg = congen.GenConfig(
            violation_tol=args.gen_tol,
            batch_limit=args.gen_batch,
            max_rounds=args.gen_max_rounds,
        )
        est, gen_state = congen.fit_generated(ds, spec, cfg, tol=tol)
    elif family == "cnls":
        est = fit_cnls(ds, spec, tol=tol)
    elif family == "cqr":
        est = fit_cqr(ds, spec, tol=tol)
    elif family == "cer":
        est = fit_cer(ds, spec, tol=tol)
    elif family == "icnls":
        est = fit_icnls(ds, spec, tol=tol)
    elif family == "icqr":
        est = fit_icqr(ds, spec, tol=tol)
    elif family == "icer":
        est = fit_icer(ds, spec, tol=tol)
    elif family == "cnls-ddf":
        est = fit_cnls_ddf(ds, spec, tol=tol)
    else:
        est = fit_cqer_ddf(ds, spec, tol=tol)

    if args.dump_dominance:
        dom = dominance_matrix(ds)
        np.savetxt(args.dump_dominance, dom.p.astype(int), fmt="%d", delimiter=",")

    doc = report.result_to_dict(est, ds, gen_state=gen_state, family=family)
    report.write_result_json(doc, args.out)
    if args.csv:
        report.write_estimate_csv(est, ds, args.csv)
    print(f"fit {family} on n={ds.n}: objective {est.objective_value:.10g} -> {args.out}")
    return 0


def _load_pair(estimate_path, data_path):
    doc = report.read_result_json(estimate_path)
    est = report.result_from_dict(doc)
    data_desc = doc["data"]
    ds = load_csv(
        data_path,
        x_select=data_desc["x_names"],
        y_select=data_desc["y_names"],
        z_select=data_desc["z_names"] or None,
        b_select=data_desc["b_names"] or None,
    )
    if ds.n != data_desc["n"]:
        raise ValueError(
            f"data file has {ds.n} rows but the estimate was fitted on {data_desc['n']}"
        )
    return doc, est, ds


def _cmd_stoned(args) -> int:
    doc, est, ds = _load_pair(args.estimate, args.data)
    if est.residuals is None:
        raise ValueError(
            "quantile residuals not decomposable: the decomposition needs a "
            "single squared-loss residual vector"
        )
    fun = LONG_FUN[args.fun] if args.fun else est.axes.fun
    if args.method == "mom":
        decomp = stoned.decompose_mom(est.residuals, fun)
    elif args.method == "qle":
        decomp = stoned.decompose_qle(est.residuals, fun)
    else:
        decomp = stoned.decompose_kde(est.residuals, fun)

    block = {
        "method": decomp.method,
        "function_type": decomp.function_type,
        "sigma_u": decomp.sigma_u,
        "sigma_v": decomp.sigma_v,
        "sigma": decomp.sigma,
        "signal_to_noise": decomp.signal_to_noise,
        "unconditional_expected_inefficiency": stoned.unconditional_expected_inefficiency(decomp),
    }
    te = None
    if args.method in ("mom", "qle"):
        eff = stoned.jlms_conditional(est.residuals, decomp, fun)
        te = stoned.technical_efficiency(ds, est, eff, est.spec)
        block["conditional_inefficiency"] = [float(v) for v in eff.conditional_inefficiency]
        block["technical_efficiency"] = [float(v) for v in te]
    doc["stoned"] = block
    report.write_result_json(doc, args.out)
    if args.csv:
        import csv as _csv

        with open(args.csv, "w", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            if te is None:
                writer.writerow(["obs", "residual"])
                for i, r in enumerate(est.residuals):
                    writer.writerow([str(i), repr(float(r))])
            else:
                writer.writerow(["obs", "residual", "conditional_inefficiency", "technical_efficiency"])
                for i, (r, u, t) in enumerate(zip(est.residuals, eff.conditional_inefficiency, te)):
                    writer.writerow([str(i), repr(float(r)), repr(float(u)), repr(float(t))])
    mu = block["unconditional_expected_inefficiency"]
    print(f"decomposed residuals by {args.method}: expected inefficiency {mu:.10g} -> {args.out}")
    return 0


def _cmd_plotdata(args) -> int:
    _, est, ds = _load_pair(args.estimate, args.data)
    prefix = args.out_prefix
    if args.x_select_2 is None:
        curve = report.emit_curve_2d(est, ds, args.x_select, envelope_grid=args.envelope_grid)
        curve_csv = f"{prefix}_curve.csv"
        report.write_curve_csv(curve, curve_csv)
        written = [curve_csv]
        if args.gnuplot:
            report.write_gnuplot_script(f"{prefix}.gp", curve_csv=curve_csv)
            written.append(f"{prefix}.gp")
        if not args.no_render:
            report.render_curve(curve, f"{prefix}.png")
            written.append(f"{prefix}.png")
    else:
        surface = report.emit_surface_3d(
            est, ds, args.x_select, args.x_select_2, grid_n=args.envelope_grid
        )
        v_csv, t_csv = f"{prefix}_surface_vertices.csv", f"{prefix}_surface_triangles.csv"
        report.write_surface_csv(surface, v_csv, t_csv)
        written = [v_csv, t_csv]
        if args.gnuplot:
            report.write_gnuplot_script(f"{prefix}.gp", surface_vertices_csv=v_csv)
            written.append(f"{prefix}.gp")
        if not args.no_render:
            report.render_surface(surface, f"{prefix}.png")
            written.append(f"{prefix}.png")
    print("wrote " + ", ".join(written))
    return 0


def run(argv: list[str] | None = None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.subcommand == "dgp":
            return _cmd_dgp(args)
        if args.subcommand == "fit":
            return _cmd_fit(args)
        if args.subcommand == "stoned":
            return _cmd_stoned(args)
        return _cmd_plotdata(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
