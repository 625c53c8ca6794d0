"""Manifest-driven experiment runner and CPWL fit tool.

``aqpinn run-manifest`` executes a JSON manifest of training runs and writes
plot-ready CSV/JSON artifacts; ``aqpinn fit-cpwl`` fits piecewise-linear
surrogates over a grid of piece counts and reports the L2 convergence slope.
Figures are never rendered here; every artifact is data.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

__all__ = ["main"]

OUT_ENV_VAR = "AQPINN_OUT"

RESULTS_HEADER = [
    "id", "problem", "formulation", "architecture", "activation", "epsilon",
    "backend", "backend_params", "eta", "epochs", "beta", "seeds",
    "e_min", "e_avg", "e_std", "e_max",
    "avg_points_domain", "avg_points_boundary", "avg_time_s",
]


def _parse_manifest(path: Path) -> dict:
    text = path.read_text()
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemExit(f"{path}:{exc.lineno}:{exc.colno}: manifest parse "
                         f"error: {exc.msg}")
    if not isinstance(manifest, dict) or "runs" not in manifest:
        raise SystemExit(f"{path}: manifest must be an object with a 'runs' list")
    ids = [entry.get("id") for entry in manifest["runs"]]
    if len(set(ids)) != len(ids) or None in ids:
        raise SystemExit(f"{path}: every run needs a unique 'id'")
    return manifest


def _entry_config(entry: dict):
    from .trainer import TrainConfig

    keys = TrainConfig.__dataclass_fields__.keys()
    cfg = {k: v for k, v in entry.items() if k in keys}
    return TrainConfig.from_dict(cfg)


def _run_one(args):
    """Worker: one (entry id, config, seed) training run."""
    from .trainer import train

    run_id, config, seed = args
    config = dataclasses.replace(config, seed=seed)
    record = train(config)
    return run_id, seed, record


def _eval_grid(problem):
    if problem.domain.dim == 1:
        lo = min(p.lo for p in problem.domain.parts)
        hi = max(p.hi for p in problem.domain.parts)
        return np.linspace(lo, hi, 512).reshape(-1, 1)
    v = np.vstack([p.vertices for p in problem.domain.parts])
    lo, hi = v.min(axis=0), v.max(axis=0)
    xs = np.linspace(lo[0], hi[0], 101)
    ys = np.linspace(lo[1], hi[1], 101)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def _emit_run_artifacts(out: Path, emit: dict, run_id: str, seed: int,
                        config, record):
    from .loss import manufactured, make_backend
    from .activation import make_activation
    from .mesh import adaptive_mesh, mesh_to_json
    from .net import forward_value

    tag = f"{run_id}-s{seed}"
    problem = manufactured(config.problem, config.formulation, config.beta)
    if emit.get("curves", True):
        (out / "curves").mkdir(exist_ok=True)
        err_at = dict(zip(record.log_epochs, record.log_errors))
        with open(out / "curves" / f"{tag}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "error"])
            for ep, lo in enumerate(record.losses):
                e = err_at.get(ep)
                w.writerow([ep, repr(float(lo)), "" if e is None else repr(e)])
    if emit.get("pointwise", False) and problem.exact is not None \
            and record.params is not None:
        (out / "pointwise").mkdir(exist_ok=True)
        grid = _eval_grid(problem)
        diff = np.abs(problem.exact.value(grid)
                      - forward_value(record.params, grid))
        with open(out / "pointwise" / f"{tag}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "abs_error"][: grid.shape[1] + 1])
            for row, d in zip(grid, diff):
                w.writerow([*map(repr, row), repr(float(d))])
    if emit.get("mesh", False) and config.backend.get("kind", "AQ").upper() == "AQ" \
            and record.params is not None:
        (out / "mesh").mkdir(exist_ok=True)
        act = make_activation(config.activation or problem.activation_name,
                              config.epsilon)
        backend = make_backend(problem, config.backend, seed, activation=act)
        mesh = adaptive_mesh(record.params, backend.surrogate, problem.domain)
        (out / "mesh" / f"{tag}.json").write_text(
            mesh_to_json(mesh, order=backend.order))


def cmd_run_manifest(args) -> int:
    manifest = _parse_manifest(Path(args.manifest))
    out = Path(os.environ.get(OUT_ENV_VAR) or args.out
               or manifest.get("out", "results"))
    out.mkdir(parents=True, exist_ok=True)
    emit = manifest.get("emit", {})

    jobs = []
    configs = {}
    for entry in manifest["runs"]:
        config = _entry_config(entry)
        seeds = [int(s) + args.seed_base for s in entry.get("seeds", [0])]
        configs[entry["id"]] = (config, seeds)
        for seed in seeds:
            jobs.append((entry["id"], config, seed))

    results: dict[tuple[str, int], object] = {}
    failures = []
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for job, outcome in zip(jobs, pool.map(_run_one, jobs)):
                results[(outcome[0], outcome[1])] = outcome[2]
    else:
        for job in jobs:
            try:
                rid, seed, rec = _run_one(job)
                results[(rid, seed)] = rec
            except RuntimeError as exc:
                failures.append((job[0], job[2], str(exc)))
                print(f"run {job[0]} seed {job[2]} aborted: {exc}",
                      file=sys.stderr)

    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULTS_HEADER)
        for run_id, (config, seeds) in configs.items():
            recs = [results[(run_id, s)] for s in seeds
                    if (run_id, s) in results]
            if not recs:
                continue
            errs = [r.final_error for r in recs if r.final_error is not None]
            stats = ([np.min(errs), np.mean(errs), np.std(errs), np.max(errs)]
                     if errs else [float("nan")] * 4)
            w.writerow([
                run_id, config.problem, config.formulation,
                "x".join(map(str, config.architecture)),
                config.activation or "", config.epsilon or "",
                config.backend.get("kind", "AQ"),
                json.dumps({k: v for k, v in config.backend.items()
                            if k != "kind"}),
                config.eta, config.epochs, config.beta or "",
                ";".join(map(str, seeds)),
                *[repr(float(s)) for s in stats],
                repr(float(np.mean([r.avg_n_domain for r in recs]))),
                repr(float(np.mean([r.avg_n_boundary for r in recs]))),
                repr(float(np.mean([r.wall_time for r in recs]))),
            ])
    for (run_id, seed), rec in results.items():
        _emit_run_artifacts(out, emit, run_id, seed,
                            configs[run_id][0], rec)
    if failures:
        return 1
    return 0


def cmd_fit_cpwl(args) -> int:
    from .activation import make_activation
    from .cpwl import best_l2_fit, l2_distance

    out = Path(os.environ.get(OUT_ENV_VAR) or args.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    act = make_activation(args.activation, args.epsilon)
    ns = [int(n) for n in args.pieces.split(",")]
    rows = []
    for n in ns:
        fit = best_l2_fit(act, n)
        (out / f"cpwl-{act.name}-{n}.json").write_text(fit.to_json())
        rows.append((n, l2_distance(act, fit),
                     l2_distance(act, fit, "derivative")))
    with open(out / f"cpwl-{act.name}-distances.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pieces", "l2_distance", "l2_distance_derivative"])
        for row in rows:
            w.writerow([row[0], repr(row[1]), repr(row[2])])
    summary = {}
    if len(ns) >= 2:
        ln = np.log([r[0] for r in rows])
        summary = {
            "slope_function": float(np.polyfit(ln, np.log([r[1] for r in rows]), 1)[0]),
            "slope_derivative": float(np.polyfit(ln, np.log([r[2] for r in rows]), 1)[0]),
        }
        (out / f"cpwl-{act.name}-slope.json").write_text(json.dumps(summary))
    for n, d, dd in rows:
        print(f"pieces={n:4d}  L2={d:.6e}  L2'={dd:.6e}")
    if summary:
        print(f"slope(function)={summary['slope_function']:.3f}  "
              f"slope(derivative)={summary['slope_derivative']:.3f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aqpinn",
        description="Train neural Poisson solvers with adaptive quadrature "
                    "on the surrogate's linear-region mesh.")
    sub = parser.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("run-manifest", help="execute a JSON run manifest")
    pm.add_argument("--manifest", required=True, help="manifest JSON path")
    pm.add_argument("--out", default=None,
                    help=f"output directory (env {OUT_ENV_VAR} overrides)")
    pm.add_argument("--workers", type=int, default=1)
    pm.add_argument("--seed-base", type=int, default=0,
                    help="offset added to every seed in the manifest")
    pm.set_defaults(func=cmd_run_manifest)

    pf = sub.add_parser("fit-cpwl", help="best L2 piecewise-linear fits")
    pf.add_argument("--activation", default="abse",
                    choices=["abse", "lncosh", "erf", "tanh"])
    pf.add_argument("--epsilon", type=float, default=None)
    pf.add_argument("--pieces", default="8,16,32,64",
                    help="comma-separated piece counts")
    pf.add_argument("--out", default=None)
    pf.set_defaults(func=cmd_fit_cpwl)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
