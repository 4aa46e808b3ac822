"""Command-line surface: data generation and ingestion, fitting, density
evaluation, benchmark matrices, and the slow reference solver.

Subcommands: generate, ingest-check, fit, evaluate, bench, reference.
Errors exit nonzero with a machine-readable JSON object on stderr.  The
LOGCAVE_THREADS environment variable caps how many benchmark cells run
concurrently; results are identical for any thread count.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .envelopes import EnvelopeInterpolator
from .errors import LogcaveError
from .generalized import GeneralizedObjective, fit_generalized
from .grids import GridSchedule
from .hull import build_hull, make_dataset
from .io import (CLI_TO_KIND, PROFILE_COLUMNS, _fmt, model_to_dict,
                 read_dataset_csv, read_model_json, write_dataset_csv,
                 write_model_json, write_profile_csv)
from .rng import RngStream
from .solver import FittedModel, SolverConfig, fit, reference_solve


def _thread_cap() -> int:
    raw = os.environ.get("LOGCAVE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_generate(args) -> int:
    if args.n < args.d + 1:
        raise LogcaveError(f"need n >= d+1 = {args.d + 1}, got n = {args.n}")
    gen = RngStream(args.seed).child("generate", args.distribution).gen
    if args.distribution == "normal":
        pts = gen.standard_normal((args.n, args.d))
    else:
        pts = gen.laplace(0.0, 1.0, size=(args.n, args.d))
    write_dataset_csv(args.out, pts)
    print(f"wrote {args.n} x {args.d} {args.distribution} sample to {args.out}")
    return 0


def cmd_ingest_check(args) -> int:
    ds = read_dataset_csv(args.data, standardize=args.standardize)
    hull = build_hull(ds)
    print(f"ok: n={ds.n} d={ds.d} hull vertices={len(hull.vertices)} "
          f"volume={hull.total_volume:.6g}")
    return 0


def _schedule_from_args(args, n: int) -> GridSchedule:
    if args.grid_schedule is None and args.method == "rs-rf":
        return GridSchedule("fixed", C=args.grid_size or 10_000)
    if args.grid_schedule is None:
        return None
    kind = {"fixed": "fixed", "poly": "polynomial", "exp": "exponential",
            "multistage": "multi_stage"}[args.grid_schedule]
    C = args.grid_c
    if C is None:
        C = args.grid_size if kind == "fixed" and args.grid_size else 2 * n
    kwargs = {"C": C}
    if args.grid_rho is not None:
        kwargs["rho"] = args.grid_rho
    if args.grid_beta is not None:
        kwargs["beta"] = args.grid_beta
    return GridSchedule(kind, **kwargs)


def _solver_config(args, n: int) -> SolverConfig:
    return SolverConfig(
        method=args.method,
        T=args.iters,
        u=args.u,
        eta=args.eta,
        sigma=args.sigma,
        schedule=_schedule_from_args(args, n),
        seed=args.seed,
        theory_mode=args.theory_mode,
        eval_grid_target=args.eval_grid_size,
    )


def _fit_one(ds, args, seed=None) -> FittedModel:
    config = _solver_config(args, ds.n)
    if seed is not None:
        config.seed = seed
    objective = GeneralizedObjective(CLI_TO_KIND[args.objective], args.s)
    if objective.kind == "log_concave":
        return fit(ds, config)
    return fit_generalized(ds, config, objective)


def cmd_fit(args) -> int:
    ds = read_dataset_csv(args.data, standardize=args.standardize)
    model = _fit_one(ds, args)
    write_model_json(args.out_model, model)
    write_profile_csv(args.out_profile, model.profile)
    print(f"fitted {args.method} in {model.timings['solve_seconds']:.2f}s solve time; "
          f"objective {model.final_objective:.6f}, integral {model.integral_check:.6f}")
    print(f"model: {args.out_model}\nprofile: {args.out_profile}")
    return 0


def density_values(model: FittedModel, queries: np.ndarray) -> np.ndarray:
    """Density of the fitted model at query points (zero outside the hull)."""
    hull = build_hull(make_dataset(model.points))
    inside = hull.contains_many(queries)
    out = np.zeros(len(queries))
    if np.any(inside):
        interp = EnvelopeInterpolator(model.points, model.phi)
        vals = interp.values(queries[inside])
        if model.objective_kind == "s_concave_mle" and model.s != 0:
            dens = (-vals) ** (1.0 / model.s)
        elif model.objective_kind == "quasi_concave_renyi":
            beta = 1.0 + 1.0 / model.s
            dens = np.abs(vals) ** (beta - 1.0)
        else:
            dens = np.exp(-vals)
        out[inside] = dens
    return out


def cmd_evaluate(args) -> int:
    model = read_model_json(args.model)
    ds = read_dataset_csv(args.queries)
    dens = density_values(model, ds.points)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["density"])
        for v in dens:
            writer.writerow([_fmt(float(v))])
    print(f"wrote {len(dens)} densities to {args.out}")
    return 0


def _truth_tents(kind: str, points: np.ndarray) -> np.ndarray:
    d = points.shape[1]
    if kind == "normal":
        return 0.5 * d * math.log(2.0 * math.pi) + 0.5 * np.sum(points ** 2, axis=1)
    if kind == "laplace":
        return d * math.log(2.0) + np.sum(np.abs(points), axis=1)
    raise LogcaveError(f"unknown truth density {kind!r}")


def cmd_bench(args) -> int:
    ds = read_dataset_csv(args.data, standardize=args.standardize)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]

    if args.reference_model:
        ref_model = read_model_json(args.reference_model)
        ref_phi = ref_model.phi
        ref_obj = ref_model.final_objective
    else:
        res = reference_solve(ds, iters=args.reference_iters, tol=args.reference_tol)
        ref_phi = res.tent.phi
        ref_obj = res.objective

    truth_phi = _truth_tents(args.truth, ds.points) if args.truth else None

    cells = [(m, s) for m in methods for s in seeds]

    def run_cell(cell):
        method, seed = cell
        local = argparse.Namespace(**vars(args))
        local.method = method
        try:
            model = _fit_one(ds, local, seed=seed)
            return cell, model, None
        except Exception as exc:   # partial failures are reported, not fatal
            return cell, None, repr(exc)

    workers = min(_thread_cap(), len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(c) for c in cells]

    with open(args.out_profile, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "seed"] + PROFILE_COLUMNS)
        for (method, seed), model, err in outcomes:
            if model is None:
                continue
            for rec in model.profile:
                rel = (rec.best_objective - ref_obj) / ref_obj
                writer.writerow([method, seed, rec.t, _fmt(rec.wall_seconds),
                                 rec.m_t, _fmt(rec.objective),
                                 _fmt(rec.best_objective), _fmt(rel)])

    rows = []
    for method in methods:
        stats = {"obj": [], "relobj": [], "runtime": [], "dopt": [],
                 "dtruth": [], "dtruth_scaled": []}
        failed = 0
        for (m, seed), model, err in outcomes:
            if m != method:
                continue
            if model is None:
                failed += 1
                continue
            stats["obj"].append(model.final_objective)
            stats["relobj"].append((model.final_objective - ref_obj) / ref_obj)
            stats["runtime"].append(model.timings["solve_seconds"] / 60.0)
            stats["dopt"].append(float(np.linalg.norm(model.phi - ref_phi)))
            if truth_phi is not None:
                dt = float(np.linalg.norm(model.phi - truth_phi))
                stats["dtruth"].append(dt)
                stats["dtruth_scaled"].append(dt / math.sqrt(ds.n))
        med = {k: (float(np.median(v)) if v else "") for k, v in stats.items()}
        param = args.grid_size if method == "rs-rf" else ""
        rows.append([method, param, med["obj"], med["relobj"], med["runtime"],
                     med["dopt"], med["dtruth"], med["dtruth_scaled"], failed])

    with open(args.out_summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "param", "obj", "relobj", "runtime_minutes",
                         "dopt", "dtruth", "dtruth_scaled", "failed_cells"])
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    print(f"bench complete: {len(cells)} cells; summary in {args.out_summary}")
    return 0


def cmd_reference(args) -> int:
    ds = read_dataset_csv(args.data, standardize=args.standardize)
    res = reference_solve(ds, iters=args.reference_iters, tol=args.reference_tol)
    hull = build_hull(ds)
    model = FittedModel(
        phi=res.tent.phi, points=ds.points, delta=hull.total_volume,
        vertex_count=len(hull.vertices), objective_kind="logconcave", s=0.0,
        final_objective=res.objective, integral_check=1.0, method="reference",
        seed=0, schedule={}, timings={}, containment_violations={},
        profile=[], parameters={"converged": res.converged,
                                "iterations": res.iterations,
                                "tol": args.reference_tol})
    write_model_json(args.out_model, model)
    print(f"reference objective {res.objective:.10f} "
          f"({'converged' if res.converged else 'NOT converged'}, "
          f"{res.iterations} iterations); model in {args.out_model}")
    return 0


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", default="rs-di",
                   choices=["rs-di", "rs-ri", "ns-di", "ns-ri", "rs-rf"])
    p.add_argument("--iters", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-schedule", choices=["fixed", "poly", "exp", "multistage"])
    p.add_argument("--grid-c", type=float)
    p.add_argument("--grid-rho", type=float)
    p.add_argument("--grid-beta", type=float)
    p.add_argument("--grid-size", type=int, help="fixed grid size (rs-rf)")
    p.add_argument("--u", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--theory-mode", action="store_true")
    p.add_argument("--objective", default="logconcave",
                   choices=["logconcave", "smle", "renyi"])
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--eval-grid-size", type=int, default=100_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logcave",
        description="Log-concave and s-concave maximum likelihood density estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset CSV")
    p.add_argument("--distribution", default="normal", choices=["normal", "laplace"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest-check", help="validate a dataset CSV")
    p.add_argument("data")
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("fit", help="fit a density model")
    p.add_argument("data")
    _add_fit_flags(p)
    p.add_argument("--out-model", default="model.json")
    p.add_argument("--out-profile", default="profile.csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="evaluate fitted densities at query points")
    p.add_argument("model")
    p.add_argument("queries")
    p.add_argument("--out", default="densities.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="run a methods x seeds benchmark matrix")
    p.add_argument("data")
    p.add_argument("--methods", default="rs-di,rs-ri")
    p.add_argument("--seeds", default="0,1,2,3,4")
    _add_fit_flags(p)
    p.add_argument("--reference-model", help="precomputed reference model JSON")
    p.add_argument("--reference-iters", type=int, default=50_000)
    p.add_argument("--reference-tol", type=float, default=1e-8)
    p.add_argument("--truth", choices=["normal", "laplace"])
    p.add_argument("--out-profile", default="bench_profiles.csv")
    p.add_argument("--out-summary", default="bench_summary.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reference", help="slow high-accuracy reference solve")
    p.add_argument("data")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--reference-iters", type=int, default=100_000)
    p.add_argument("--reference-tol", type=float, default=1e-8)
    p.add_argument("--out-model", default="reference.json")
    p.set_defaults(func=cmd_reference)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LogcaveError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        if hasattr(exc, "pairs"):
            payload["index_pairs"] = [list(p) for p in exc.pairs]
        if getattr(exc, "line", None) is not None:
            payload["line"] = exc.line
        print(json.dumps(payload), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
