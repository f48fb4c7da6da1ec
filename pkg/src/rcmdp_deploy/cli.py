"""Command-line entry point.

Exit codes: 0 ok, 2 infeasible deadline or deployment, 3 invalid input or a
failed ``--check``, 4 numerical failure.  Every command writes its files plus
``manifest.json`` into the output directory (``--out``, else ``$RCMDP_OUT``,
else ``./rcmdp-out``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

from . import __version__
from . import assignment as ta
from . import lp as lpmod
from .deployment import dumps_map, generate_map, load_map, reference_map
from .model import ModelError, dumps_model
from .pipeline import (
    CSV_COLUMNS,
    GammaSpec,
    check_rows,
    plan_deployment,
    simulate_deployment,
    simulate_target,
    single_sweep,
    solve_all,
    solve_target,
    team_sweep,
)
from .robust import NumericalFailure, RcmdpInfeasible
from .simulator import EPS_MODES

OUT_ENV = "RCMDP_OUT"
DEFAULT_OUT = "rcmdp-out"

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4


class CheckFailed(Exception):
    pass


# output helpers -------------------------------------------------------------


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


class Outputs:
    def __init__(self, root: Path) -> None:
        self.root = root
        self.files: dict[str, str] = {}

    def write(self, name: str, data: str | bytes) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        raw = data.encode() if isinstance(data, str) else data
        path.write_bytes(raw)
        self.files[name] = hashlib.sha256(raw).hexdigest()
        return path

    def register(self, name: str) -> None:
        self.files[name] = hashlib.sha256((self.root / name).read_bytes()).hexdigest()

    def manifest(self, args: argparse.Namespace, exit_code: int = 0) -> None:
        config = {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out") and v is not None
        }
        doc = {
            "tool": "rcmdp-deploy",
            "version": __version__,
            "command": args.command,
            "config": config,
            "seed": getattr(args, "seed", None),
            "tolerances": {
                "lp_feasibility": lpmod.FEAS_TOL,
                "lp_optimality": lpmod.OPT_TOL,
                "lp_pivot": lpmod.PIVOT_TOL,
                "lp_residual": lpmod.RESIDUAL_TOL,
                "rta_residual": ta.RTA_TOL,
            },
            "exit_code": exit_code,
            "outputs": dict(sorted(self.files.items())),
        }
        self.write("manifest.json", dumps_json(doc))


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _map(args):
    if args.map in (None, "reference"):
        return reference_map()
    return load_map(args.map)


def _gamma(args) -> GammaSpec:
    if args.gamma is not None:
        return GammaSpec(args.gamma, is_factor=False)
    return GammaSpec(args.gamma_factor if args.gamma_factor is not None else 0.0, True)


def _target(args, dmap):
    return args.target if args.target is not None else dmap.targets[0]


def _say(msg: str) -> None:
    print(msg, flush=True)


# commands -------------------------------------------------------------------


def cmd_generate_map(args, out: Outputs) -> None:
    dmap = generate_map(n_vertices=args.vertices, n_targets=args.targets, seed=args.seed)
    out.write("map.json", dumps_map(dmap))
    _say(f"map: {len(dmap.vertices)} vertices, {len(dmap.edges)} edges, targets {list(dmap.targets)}")


def cmd_solve(args, out: Outputs) -> None:
    dmap = _map(args)
    res = solve_target(dmap, _target(args, dmap), _deadline(args), _gamma(args))
    tag = str(res.target)
    out.write(f"solution_{tag}.json", res.solution.dumps() + "\n")
    out.write(f"report_{tag}.json", dumps_json(res.report()))
    if args.write_model:
        out.write(f"model_{tag}.json", dumps_model(res.problem.model) + "\n")
    sol = res.solution
    _say(f"target {tag}: PF = {res.pf:.6f}, success = {1 - res.pf:.6f}")
    _say(f"worst-case expected duration {sol.worst_case_constraint_value:.6f} <= D = {sol.deadline:g}")
    m = sol.meta
    _say(f"LP: {m.get('n_vars')} variables, {m.get('n_eq')} equalities, {m.get('n_ub')} inequalities")


def cmd_assign(args, out: Outputs) -> None:
    pf = [float(p) for p in args.pf.split(",")]
    mode = {"optimal": "auto"}.get(args.assign_mode, args.assign_mode)
    sol = ta.assign(pf, args.team, mode)
    doc = {
        "failure_probabilities": pf,
        "team": args.team,
        "method": sol.method,
        "extra_robots": list(sol.counts),
        "robots_per_target": [k + 1 for k in sol.counts],
        "success_probability": sol.objective,
    }
    out.write("assignment.json", dumps_json(doc))
    _say(f"robots per target {doc['robots_per_target']} ({sol.method}), success {sol.objective:.6f}")


def cmd_deploy(args, out: Outputs) -> None:
    dmap = _map(args)
    results = solve_all(dmap, _deadline(args), _gamma(args))
    for t, res in results.items():
        out.write(f"solution_{t}.json", res.solution.dumps() + "\n")
    dep = plan_deployment(results, args.team, args.assign_mode)
    doc = dep.to_dict()
    if args.trials:
        st = simulate_deployment(dep, args.seed, args.trials, args.eps_mode, args.draws)
        doc["simulation"] = st.to_dict()
    out.write("deployment.json", dumps_json(doc))
    _say(f"targets {list(dep.targets)}, PF {[round(p, 6) for p in dep.pf]}")
    if dep.counts is not None:
        _say(f"robots per target {list(dep.counts)} via {dep.method}")
    _say(f"team success probability {dep.success:.6f}")


def cmd_simulate(args, out: Outputs) -> None:
    dmap = _map(args)
    if args.team is not None:
        results = solve_all(dmap, _deadline(args), _gamma(args))
        dep = plan_deployment(results, args.team, args.assign_mode)
        st = simulate_deployment(dep, args.seed, args.trials, args.eps_mode, args.draws)
        out.write("stats.json", dumps_json({"deployment": dep.to_dict(), "stats": st.to_dict()}))
    else:
        res = solve_target(dmap, _target(args, dmap), _deadline(args), _gamma(args))
        run = simulate_target(res, args.seed, args.trials, args.eps_mode)
        st = run.stats
        out.write("trials.csv", run.trial_csv())
        out.write("stats.json", dumps_json({"target": res.target, "stats": st.to_dict()}))
    _say(
        f"empirical success {st.empirical_success_prob:.6f} over {st.n_trials} trials, "
        f"theory {st.theoretical_success_prob:.6f}, mean duration {st.mean_duration:.4f}"
    )


def cmd_sweep(args, out: Outputs) -> None:
    from .plotting import plot_sweep

    dmap = _map(args)
    grid = args.grid
    if not grid:
        raise ValueError("--grid needs at least one value")
    if args.axis == "team":
        if not args.deadline:
            raise ValueError("a team sweep needs at least one --deadline")
        rows = team_sweep(
            dmap,
            [int(k) for k in grid],
            args.deadline,
            gamma=_gamma(args),
            modes=("optimal", "uniform") if args.assign_mode == "both" else (args.assign_mode,),
            n_trials=args.trials,
            seed=args.seed,
            eps_mode=args.eps_mode,
            draws=args.draws,
        )
    else:
        if args.axis == "gamma" and args.gamma is not None:
            raise ValueError("a gamma sweep takes factors in --grid; drop --gamma")
        rows = single_sweep(
            dmap,
            _target(args, dmap),
            args.axis,
            grid,
            deadline=_deadline(args) if args.axis == "gamma" else None,
            gamma=_gamma(args),
            n_trials=args.trials,
            seed=args.seed,
            eps_mode=args.eps_mode,
        )
    out.write("sweep.csv", rows_to_csv(rows))
    plot_sweep(rows, args.axis, out.root / "sweep.png")
    out.register("sweep.png")
    n_ok = sum(r["status"] == "ok" for r in rows)
    _say(f"{len(rows)} rows ({n_ok} ok) written to {out.root / 'sweep.csv'}")
    if args.check:
        bad = check_rows(args.axis, rows)
        for b in bad:
            _say(f"check failed: {b}")
        if bad:
            raise CheckFailed(f"{len(bad)} monotonicity violations")
        _say("check passed")


def _deadline(args) -> float:
    d = args.deadline
    if isinstance(d, list):
        if len(d) != 1:
            raise ValueError("this command takes a single --deadline")
        d = d[0]
    if d is None:
        raise ValueError("--deadline is required")
    return float(d)


# argument parsing -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors, so they share exit code 3."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rcmdp-deploy", description="Robust multi-robot deployment planning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, deadline=True, many_deadlines=False):
        sp.add_argument("--map", help="map file, or 'reference' for the built-in map (default)")
        sp.add_argument("--target", help="target vertex (default: first target of the map)")
        if deadline:
            sp.add_argument(
                "--deadline", type=float, nargs="+" if many_deadlines else None, help="deadline D"
            )
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--gamma", type=float, help="absolute uncertainty budget")
        g.add_argument("--gamma-factor", type=float, help="budget as a fraction of sum(eps_bar)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    def sim_flags(sp, trials: int):
        sp.add_argument("--trials", type=int, default=trials)
        sp.add_argument("--eps-mode", choices=EPS_MODES, default="nominal")
        sp.add_argument("--draws", type=int, default=32, help="uniform-assignment draws")

    sp = sub.add_parser("generate-map", help="write a random deployment map")
    sp.add_argument("--vertices", type=int, default=18)
    sp.add_argument("--targets", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_generate_map)

    sp = sub.add_parser("solve", help="solve the robust problem for one target")
    common(sp)
    sp.add_argument("--write-model", action="store_true", help="also dump the compiled model")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("assign", help="assign robots given per-target failure probabilities")
    sp.add_argument("--pf", required=True, help="comma-separated failure probabilities")
    sp.add_argument("--team", type=int, required=True)
    sp.add_argument("--assign-mode", choices=("optimal", "exact", "approx", "brute"), default="optimal")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_assign)

    sp = sub.add_parser("deploy", help="solve every target and assign the team")
    common(sp)
    sp.add_argument("--team", type=int, required=True)
    sp.add_argument("--assign-mode", choices=("optimal", "uniform"), default="optimal")
    sim_flags(sp, 0)
    sp.set_defaults(func=cmd_deploy)

    sp = sub.add_parser("simulate", help="Monte Carlo runs of a solved policy or team")
    common(sp)
    sp.add_argument("--team", type=int, help="simulate a team of this size instead of one robot")
    sp.add_argument("--assign-mode", choices=("optimal", "uniform"), default="optimal")
    sim_flags(sp, 1000)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="tabulate success over a deadline, gamma or team grid")
    common(sp, many_deadlines=True)
    sp.add_argument("--axis", choices=("deadline", "gamma", "team"), required=True)
    sp.add_argument("--grid", type=float, nargs="+", required=True)
    sp.add_argument("--team", type=int, help=argparse.SUPPRESS)
    sp.add_argument("--assign-mode", choices=("optimal", "uniform", "both"), default="both")
    sp.add_argument("--check", action="store_true", help="fail if success is not monotone")
    sim_flags(sp, 0)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Outputs(_out_dir(args))
    code = EXIT_OK
    try:
        args.func(args, out)
    except RcmdpInfeasible as exc:
        _err(exc)
        code = EXIT_INFEASIBLE
    except ta.AssignmentError as exc:
        _err(exc)
        code = EXIT_INFEASIBLE if "probability zero" in str(exc) or "PF = 1" in str(exc) else EXIT_INVALID
    except NumericalFailure as exc:
        _err(exc)
        code = EXIT_NUMERICAL
    except (CheckFailed, ModelError, ValueError, KeyError, OSError) as exc:
        _err(exc)
        code = EXIT_INVALID
    if out.files or code == EXIT_OK:
        out.manifest(args, code)
    return code


def _err(exc: Exception) -> None:
    print(f"error: {exc}", file=sys.stderr, flush=True)


if __name__ == "__main__":
    sys.exit(main())
