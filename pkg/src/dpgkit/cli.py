"""Experiment driver: reproducible subcommands emitting CSV/JSON artifacts.

Every delimited artifact starts with a ``#``-prefixed JSON metadata line
echoing the configuration (defaults included), so runs are self-describing;
no timestamps are embedded, so identical configurations produce identical
bytes.  Matplotlib figures are rendered next to the delimited output unless
``--no-figures`` is given.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical
failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import DpgkitError, adaptivity, dpg_engine, figures, ode1d, poisson2d, verify
from .mesh import mesh_to_json, uniform_interval_mesh, uniform_square_mesh
from .ref_elem import quad_interval

TOLERANCES = {"local_solve": 1e-10, "global_solve": 1e-9, "properties": 1e-8}


def _meta_line(command, config):
    meta = {"command": command, "config": config, "tolerances": TOLERANCES}
    return "# " + json.dumps(meta, sort_keys=True, separators=(",", ":"))


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, command, config, columns, rows):
    lines = [_meta_line(command, config), ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _l2_error(fn, reference, panels=64, points_per_panel=6):
    """Composite-Gauss L2(0,1) distance between two callables."""
    rule = quad_interval(2 * points_per_panel - 1)
    edges = np.linspace(0.0, 1.0, panels + 1)
    dx = 1.0 / panels
    pts = (edges[:-1][:, None] + dx * rule.points[None, :]).ravel()
    w = np.tile(rule.weights * dx, panels)
    diff = np.asarray(fn(pts), dtype=float) - np.asarray(reference(pts), dtype=float)
    return float(np.sqrt((w * diff**2).sum()))


# ---------------------------------------------------------------------------
# ode1d
# ---------------------------------------------------------------------------


def cmd_ode1d(args):
    p_list = args.p or [2, 4, 8]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.f == "zero":
        u = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        f = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        u1 = 0.0
    else:
        u, f = ode1d.layer_solution(args.big_m)
        u1 = 1.0

    xs = np.linspace(0.0, 1.0, args.samples)
    exact = u(xs)
    config = {
        "p": p_list,
        "r_per_p": {str(p): p + 1 for p in p_list},
        "m": args.m,
        "big_m": args.big_m,
        "f": args.f,
        "samples": args.samples,
        "defaults_note": "M and the p list are choices, not paper-derived",
    }

    rows = []
    flux_rows = []
    metrics = {"l2_errors": {}, "config": config}
    fig_samples = {}
    for p in p_list:
        problem = ode1d.Ode1dProblem(f=f, u=u, u1=u1)
        variants = {}

        form_pg = ode1d.OneElementPG(p, problem)
        sol_pg = dpg_engine.solve(dpg_engine.assemble_normal(form_pg))
        variants["pg"] = (lambda x, fm=form_pg, s=sol_pg: fm.evaluate(s.x, x))

        form_ls = ode1d.LeastSquaresNoIBP(p, uniform_interval_mesh(1), problem)
        sol_ls = dpg_engine.solve(dpg_engine.assemble_normal(form_ls))
        variants["lsq"] = (lambda x, fm=form_ls, s=sol_ls: fm.evaluate(s.x, x))

        proj = ode1d.l2_projection_onelem(u, p)
        mesh1 = uniform_interval_mesh(1)
        variants["proj"] = (lambda x, c=proj, q=p: ode1d.eval_broken_legendre(c, q, mesh1, x))

        if args.m > 1:
            mesh_m = uniform_interval_mesh(args.m)
            form_h = ode1d.HybridDPG1D(p, mesh_m, problem)
            sol_h = dpg_engine.solve(dpg_engine.assemble_normal(form_h))
            variants["dpg"] = (lambda x, fm=form_h, s=sol_h: fm.evaluate(s.x, x))
            for i, value in enumerate(form_h.flux_values(sol_h.x), start=1):
                xi = mesh_m.vertices[i]
                flux_rows.append((float(xi), float(u(xi)), float(value), p))

        for variant, fn in variants.items():
            vals = fn(xs)
            for x, ue, uh in zip(xs, exact, vals):
                rows.append((float(x), float(ue), float(uh), variant, p))
            metrics["l2_errors"][f"{variant}_p{p}"] = _l2_error(fn, u)
            fig_samples.setdefault(variant, {"x": xs, "exact": exact, "by_p": {}})
            fig_samples[variant]["by_p"][p] = vals

    write_csv(
        out / "ode1d_solutions.csv",
        "ode1d",
        config,
        ["x", "u_exact", "u_h", "variant", "p"],
        rows,
    )
    if flux_rows:
        write_csv(
            out / "ode1d_fluxes.csv",
            "ode1d",
            config,
            ["x", "u_exact", "u_hat", "p"],
            flux_rows,
        )
    write_json(out / "ode1d_metrics.json", metrics)
    if not args.no_figures:
        figures.save_ode1d_figure(fig_samples, out / "ode1d_solutions.png")
    return 0


# ---------------------------------------------------------------------------
# poisson
# ---------------------------------------------------------------------------


def cmd_poisson_converge(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r = args.r if args.r is not None else args.p + 2
    n_list = args.n or [4, 8, 16, 32]
    case = poisson2d.sin_sin_case()
    study = poisson2d.convergence_study(args.p, r, n_list, case)

    config = {
        "p": args.p,
        "r": r,
        "n": n_list,
        "case": case.name,
        "error_norm": "full H1",
        "quadrature": {
            "volume": 2 * r + 2,
            "edge": 2 * r,
            "load": 2 * r + 6,
            "error": 2 * (args.p + 1) + 4,
        },
    }
    rows = [
        (
            row["n"],
            row["h_over_sqrt2"],
            row["h1_error"],
            row["estimator"],
            row["ratio"],
        )
        for row in study["rows"]
    ]
    write_csv(
        out / "convergence.csv",
        "poisson-converge",
        config,
        ["n", "h_over_sqrt2", "h1_error", "estimator", "ratio"],
        rows,
    )
    write_json(
        out / "rates.json",
        {
            "config": config,
            "slope": study["slope"],
            "rows": study["rows"],
            "solver_residuals": study["solver_residuals"],
        },
    )
    if not args.no_figures:
        figures.save_convergence_figure(study["rows"], out / "convergence.png", study["slope"])
    return 0


def cmd_poisson_adapt(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r = args.r if args.r is not None else args.p + 2
    config = {"p": args.p, "r": r, "n": args.n, "iters": args.iters, "source": "exp(-100(x^2+y^2))"}

    history = adaptivity.adapt_loop(
        args.p, r, adaptivity.gaussian_source(), uniform_square_mesh(args.n), args.iters
    )
    summary = []
    for rec in history:
        (out / f"mesh_iter{rec.index}.json").write_text(mesh_to_json(rec.mesh) + "\n")
        cents = rec.mesh.centroids()
        rows = [
            (k, float(cents[k, 0]), float(cents[k, 1]), float(rec.eta_K[k]))
            for k in range(rec.n_elements)
        ]
        write_csv(
            out / f"indicators_iter{rec.index}.csv",
            "poisson-adapt",
            config,
            ["element", "cx", "cy", "eta"],
            rows,
        )
        summary.append((rec.index, rec.n_elements, float(rec.eta), rec.near_origin))
    write_csv(
        out / "adapt_summary.csv",
        "poisson-adapt",
        config,
        ["iter", "n_elem", "eta", "near_origin_fraction"],
        summary,
    )
    if not args.no_figures:
        mid = len(history) // 2
        figures.save_mesh_figure(
            [
                ("initial", history[0].mesh),
                ("midway", history[mid].mesh),
                ("final", history[-1].mesh),
            ],
            out / "adapt_meshes.png",
        )
    return 0


def cmd_verify(args):
    results = verify.run_all(seed=args.seed)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dpgkit", description="DPG finite element experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ode = sub.add_parser("ode1d", help="one-element PG / least-squares / projection study")
    p_ode.add_argument("--p", type=int, action="append", help="trial degree (repeatable)")
    p_ode.add_argument("--m", type=int, default=1, help="elements for the hybrid DPG variant")
    p_ode.add_argument("--big-m", type=float, default=40.0, help="layer steepness M")
    p_ode.add_argument("--f", choices=["layer", "zero"], default="layer")
    p_ode.add_argument("--samples", type=int, default=401)
    p_ode.set_defaults(func=cmd_ode1d)

    p_conv = sub.add_parser("poisson-converge", help="uniform refinement convergence table")
    p_conv.add_argument("--p", type=int, default=1)
    p_conv.add_argument("--r", type=int, default=None, help="test degree (default p+2)")
    p_conv.add_argument("--n", type=int, action="append", help="mesh size (repeatable)")
    p_conv.set_defaults(func=cmd_poisson_converge)

    p_adapt = sub.add_parser("poisson-adapt", help="estimator-driven adaptive refinement")
    p_adapt.add_argument("--p", type=int, default=1)
    p_adapt.add_argument("--r", type=int, default=None, help="test degree (default p+2)")
    p_adapt.add_argument("--n", type=int, default=2, help="initial mesh size")
    p_adapt.add_argument("--iters", type=int, default=6)
    p_adapt.set_defaults(func=cmd_poisson_adapt)

    p_ver = sub.add_parser("verify", help="run the oracle/property suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.set_defaults(func=cmd_verify)

    for sp in (p_ode, p_conv, p_adapt):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def _validate(args):
    problems = []
    p_attr = getattr(args, "p", None)
    if p_attr is not None:
        p_values = p_attr if isinstance(p_attr, list) else [p_attr]
        if any(p < 0 for p in p_values):
            problems.append("p must be nonnegative")
        if args.command == "ode1d" and any(p < 1 for p in p_values):
            problems.append("ode1d needs p >= 1 (least-squares trial space)")
    r_attr = getattr(args, "r", None)
    if r_attr is not None and isinstance(p_attr, int):
        if r_attr < p_attr + 2:
            problems.append(f"r must be at least p + 2 = {p_attr + 2}")
    if getattr(args, "m", 1) < 1:
        problems.append("m must be positive")
    if getattr(args, "big_m", 1.0) <= 0:
        problems.append("layer steepness M must be positive")
    n_attr = getattr(args, "n", None)
    if n_attr is not None:
        n_values = n_attr if isinstance(n_attr, list) else [n_attr]
        if any(n < 1 for n in n_values):
            problems.append("n must be positive")
    if getattr(args, "iters", 1) < 1:
        problems.append("iters must be at least 1")
    if getattr(args, "samples", 2) < 2:
        problems.append("samples must be at least 2")
    return problems


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    problems = _validate(args)
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except DpgkitError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
