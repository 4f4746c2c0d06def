"""Command-line interface.

Examples
--------
stokesdc table 2 --num-runs 20
stokesdc measure-rho --row "2:V(1,1,2)" --n 32
stokesdc lfa predict --row "2:BS(1,1,1)"
stokesdc bench-bfs --max-refinement 5
"""

import argparse
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys

import numpy as np

from .. import assembly, mesh
from ..krylov import fgmres, stationary_solve
from ..multigrid import CycleParams
from .config import ConfigError, ExperimentConfig, table_cycles
from .measure import build_for, initial_guesses, measure_rho
from .output import write_csv, write_outputs

log = logging.getLogger("stokesdc")

CYCLE_FLAGS = {"relaxer": str, "cycle": str, "nu1": int, "nu2": int, "gamma": int, "tau": float,
               "omega0": float, "omega1": float, "alpha0": float, "beta0": float, "alpha1": float,
               "beta1": float}
PROBLEM_FLAGS = {"domain": str, "n": int, "bc": str, "refinement": int, "depth": int}
SOLVER_FLAGS = {"method": str, "rule": str, "tol": float, "max_iter": int}


def _add_config_flags(p):
    p.add_argument("--config", help="experiment JSON document")
    p.add_argument("--row", help="cycle parameters from a table row, e.g. 'BS(1,1,1)' or '3:V(2,2,1)' "
                                 "(table 2 by default)")
    g = p.add_argument_group("overrides")
    for name, typ in {**PROBLEM_FLAGS, **CYCLE_FLAGS, **SOLVER_FLAGS}.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    g.add_argument("--num-runs", type=int)


def _resolve_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.row:
        tid, sep, label = args.row.partition(":")
        if not sep:
            tid, label = "2", tid
        if tid not in ("2", "3"):
            raise ConfigError(f"--row table must be 2 or 3, got {tid!r}")
        rows = table_cycles(int(tid))
        if label not in rows:
            raise ConfigError(f"table {tid} has no row {label!r}; choose from {sorted(rows)}")
        cfg.cycle = rows[label]
    over = lambda obj, flags: replace(obj, **{k: getattr(args, k) for k in flags
                                              if getattr(args, k, None) is not None})
    cfg.problem = over(cfg.problem, PROBLEM_FLAGS)
    cfg.cycle = CycleParams.from_dict({**cfg.cycle.to_dict(),
                                       **{k: getattr(args, k) for k in CYCLE_FLAGS
                                          if getattr(args, k, None) is not None}})
    cfg.solver = over(cfg.solver, SOLVER_FLAGS)
    if getattr(args, "num_runs", None):
        cfg.measurement = replace(cfg.measurement, num_runs=args.num_runs)
    if args.seed is not None:
        cfg.measurement = replace(cfg.measurement, seed=args.seed)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if cfg.problem.domain == "step":
        cfg.problem = replace(cfg.problem, bc="step")
    return cfg.validate()


def cmd_assemble(args):
    cfg = _resolve_config(args)
    grid = cfg.problem.grid()
    spaces = mesh.build_spaces(grid)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for disc in assembly.DISCRETIZATIONS:
        system = assembly.assemble(grid, spaces, disc)
        path = out / f"K_{disc}_{grid.domain}_n{grid.n}_{grid.bc}.mtx"
        system.mmwrite(path)
        print(f"{disc}: {system.shape[0]} unknowns, {system.K.nnz} nonzeros -> {path}")


def cmd_solve(args):
    cfg = _resolve_config(args)
    hier = build_for(cfg.problem, cfg.cycle)
    sys0 = hier.systems[0]
    Q = sys0.nullspace if sys0.enclosed else None
    b = sys0.rhs
    x0 = None
    if not np.any(b):
        m = cfg.measurement
        x0 = initial_guesses(sys0.shape[0], 1, m.seed, 0, None, *m.guess_range)[:, 0]
    s = cfg.solver
    if s.method == "fgmres":
        _, rep = fgmres(sys0.K, hier.precondition, b, x0, s.tol, s.iteration_cap, s.rule, Q)
    else:
        _, rep = stationary_solve(hier.dc_cycle, sys0.K, b, x0, s.tol, s.iteration_cap, s.rule, Q)
    rows = [{"iteration": k, "residual": float(r)} for k, r in enumerate(rep.history)]
    path = write_csv(rows, Path(cfg.out_dir) / "solve_history.csv")
    print(f"method={s.method} m={rep.iterations} converged={rep.converged} "
          f"residual={rep.final_residual:.3e} time={rep.wall_time:.2f}s -> {path}")


def cmd_measure(args):
    cfg = _resolve_config(args)
    m = cfg.measurement
    hier = build_for(cfg.problem, cfg.cycle)
    est = measure_rho(hier, m.num_runs, m.tail, m.seed, cfg.solver.tol, cfg.solver.iteration_cap,
                      cfg.solver.rule, m.batch, m.guess_range)
    rows = [{"run": k, "m": int(est.iterations[k]), "rho_run": float(est.per_run[k]),
             "diverged": bool(est.diverged[k])} for k in range(len(est.iterations))]
    path = write_csv(rows, Path(cfg.out_dir) / "measure_rho_runs.csv")
    rho = "below measurable floor" if est.below_floor else f"{est.rho:.4f}"
    print(f"rho={rho} rho_mean={est.rho_mean:.4f} m={est.m} seed={m.seed} "
          f"fit_rms={est.fit_residual:.3e} -> {path}")


def cmd_table(args):
    from .tables import COLUMNS, run_table
    from .output import markdown_table
    kw = {}
    tid = int(args.table)
    if tid in (2, 3, 4):
        kw.update(n=args.n, num_runs=args.num_runs, seed=args.seed if args.seed is not None else 20210)
        if args.rows:
            kw["labels"] = args.rows
    if tid == 4 and args.no_periodic:
        kw["periodic"] = False
    if tid == 5:
        kw.update(max_refinement=args.max_refinement, min_refinement=args.min_refinement)
        if args.memory_cap_gb:
            kw["memory_cap"] = args.memory_cap_gb * 2 ** 30
    rows = run_table(tid, out_dir=args.out_dir or "results", **kw)
    print(markdown_table(rows, COLUMNS[tid]))


def cmd_sensitivity(args):
    from .plotting import plot_sensitivity
    from .sweeps import sensitivity_sweep
    base = table_cycles(2)[args.label]
    rows = sensitivity_sweep(base, (args.min, args.max), (args.min, args.max), args.resolution, n=args.n,
                             num_runs=args.num_runs, seed=args.seed if args.seed is not None else 20210)
    out = Path(args.out_dir or "results")
    csv_path, _ = write_outputs(rows, out, "sensitivity", ["omega0", "omega1", "rho", "m"],
                                f"Sensitivity of {args.label}")
    png = plot_sensitivity(rows, out / "sensitivity.png", args.label)
    print(f"{len(rows)} grid points -> {csv_path}, {png}")


def cmd_bench(args):
    from .bfs import bench_bfs
    from .plotting import plot_timing
    cap = args.memory_cap_gb * 2 ** 30 if args.memory_cap_gb else None
    res = bench_bfs(args.max_refinement, args.min_refinement, memory_cap=cap)
    out = Path(args.out_dir or "results")
    cols = ["refinement", "dofs", "unknowns", "levels", "relaxer", "cycle", "m", "setup_time", "solve_time",
            "time_per_work", "status"]
    csv_path, _ = write_outputs(res["rows"], out, "bench_bfs", cols, "Backward-facing step timing")
    coef = [{"relaxer": r, "cycle": c, "coefficient": v} for (r, c), v in sorted(res["coefficient"].items())]
    write_csv(coef, out / "bench_bfs_fit.csv", ["relaxer", "cycle", "coefficient"])
    png = plot_timing(res["rows"], res["coefficient"], out / "bench_bfs.png")
    for c in coef:
        print(f"{c['relaxer']} {c['cycle']}-cycle: t = {c['coefficient']:.3e} * DoFs * m")
    print(f"-> {csv_path}, {png}")


def cmd_lfa_predict(args):
    from ..lfa import DefectCorrectionLFA
    cfg = _resolve_config(args)
    res = DefectCorrectionLFA().predict(cfg.cycle, args.resolution)
    rec = {"cycle": cfg.cycle.to_dict(), "rho_hat": round(res.rho, 6),
           "theta": [round(float(t), 6) for t in res.theta], "skipped": res.skipped,
           "resolution": args.resolution}
    print(json.dumps(rec, indent=2))


def cmd_lfa_optimize(args):
    from ..lfa.optimize import optimize_params
    cfg = _resolve_config(args)
    res = optimize_params(cfg.cycle, starts=args.starts, seed=args.seed if args.seed is not None else 0,
                          search_resolution=args.search_resolution, final_resolution=args.resolution)
    rec = {"cycle": res.params.to_dict(), "rho_hat": round(res.rho, 6), "starts": res.starts,
           "evaluations": res.evaluations, "improved": res.improved}
    text = json.dumps(rec, indent=2)
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "lfa_optimize.json").write_text(text + "\n")
    print(text)


def build_parser():
    ap = argparse.ArgumentParser(prog="stokesdc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("assemble", cmd_assemble, "dump the saddle matrices (MatrixMarket)"),
                            ("solve", cmd_solve, "solve one problem"),
                            ("measure-rho", cmd_measure, "measured convergence factor")):
        p = sub.add_parser(name, parents=[common], help=help_)
        _add_config_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("table", parents=[common], help="reproduce a table")
    p.add_argument("table", choices=["2", "3", "4", "5"])
    p.add_argument("--n", type=int)
    p.add_argument("--num-runs", type=int)
    p.add_argument("--rows", nargs="*", help="row labels to run")
    p.add_argument("--no-periodic", action="store_true")
    p.add_argument("--max-refinement", type=int, default=7)
    p.add_argument("--min-refinement", type=int, default=2)
    p.add_argument("--memory-cap-gb", type=float)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("sensitivity", parents=[common], help="damping-parameter sweep")
    p.add_argument("--label", default="V(1,1,2)")
    p.add_argument("--resolution", type=int, default=8)
    p.add_argument("--min", type=float, default=0.02)
    p.add_argument("--max", type=float, default=1.0)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--num-runs", type=int, default=10)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("bench-bfs", parents=[common], help="step-problem timing")
    p.add_argument("--max-refinement", type=int, default=7)
    p.add_argument("--min-refinement", type=int, default=2)
    p.add_argument("--memory-cap-gb", type=float)
    p.set_defaults(func=cmd_bench)

    lfa = sub.add_parser("lfa", help="local Fourier analysis")
    lsub = lfa.add_subparsers(dest="lfa_command", required=True)
    p = lsub.add_parser("predict", parents=[common], help="predicted two-grid factor")
    _add_config_flags(p)
    p.add_argument("--resolution", type=int, default=32)
    p.set_defaults(func=cmd_lfa_predict)
    p = lsub.add_parser("optimize", parents=[common], help="optimize cycle parameters")
    _add_config_flags(p)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--search-resolution", type=int, default=16)
    p.add_argument("--resolution", type=int, default=32)
    p.set_defaults(func=cmd_lfa_optimize)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
