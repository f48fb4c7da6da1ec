"""End-to-end orchestration shared by the CLI and the experiment tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from . import assignment as ta
from .deployment import (
    DeploymentMap,
    SingleRobotProblem,
    build_single_robot_rcmdp,
    expected_uniform_success,
    success_probability,
)
from .robust import (
    RcmdpInfeasible,
    RobustSolution,
    UncertaintySet,
    failure_probability,
    min_robust_deadline,
    solve_rcmdp,
)
from .simulator import SimStats, TargetPlan, run_single, run_team, run_team_uniform

CSV_SCHEMA = "sweep/1"
CSV_COLUMNS = (
    "schema",
    "axis",
    "deadline",
    "gamma_factor",
    "team",
    "assign_mode",
    "target",
    "status",
    "theoretical_success",
    "empirical_success",
    "ci_low",
    "ci_high",
    "mean_duration",
    "std_duration",
    "mean_duration_given_success",
    "std_duration_given_success",
    "convergence_error",
    "kl_divergence",
    "worst_case_constraint_value",
    "n_trials",
    "message",
)


@dataclass(frozen=True)
class GammaSpec:
    """Budget either as an absolute Gamma or as a factor of sum(eps_bar)."""

    value: float
    is_factor: bool = True

    def __post_init__(self) -> None:
        if self.value < 0 or not math.isfinite(self.value):
            raise ValueError("gamma must be a finite nonnegative number")
        if self.is_factor and self.value > 1:
            raise ValueError("gamma factor must lie in [0, 1]")

    def resolve(self, prob: SingleRobotProblem) -> UncertaintySet:
        if self.is_factor:
            return prob.uncertainty(factor=self.value)
        return prob.uncertainty(gamma=self.value)

    def describe(self) -> dict:
        return {"factor" if self.is_factor else "gamma": self.value}


@dataclass
class TargetResult:
    target: Hashable
    problem: SingleRobotProblem
    uncertainty: UncertaintySet
    solution: RobustSolution

    @property
    def pf(self) -> float:
        return failure_probability(self.solution, self.problem.sink_pair)

    def plan(self) -> TargetPlan:
        return TargetPlan(
            self.problem.model,
            self.solution.policy,
            self.problem.sink_pair,
            self.solution.eps_star,
            self.uncertainty,
        )

    def report(self) -> dict:
        sol = self.solution
        return {
            "target": self.target,
            "failure_probability": self.pf,
            "success_probability": 1.0 - self.pf,
            "objective": sol.objective,
            "worst_case_constraint_value": sol.worst_case_constraint_value,
            "nominal_constraint_value": sol.nominal_constraint_value,
            "deadline": sol.deadline,
            "gamma": sol.gamma,
            "n_states": self.problem.model.n_states,
            "n_pairs": len(sol.pairs),
            "lp": {k: sol.meta[k] for k in ("n_vars", "n_eq", "n_ub", "pivots") if k in sol.meta},
            "randomized_states": sol.randomized_states(),
        }


class DeadlineInfeasible(RcmdpInfeasible):
    pass


def find_target(dmap: DeploymentMap, name) -> Hashable:
    """Resolve a target given by its value or by its string form."""
    for t in dmap.targets:
        if t == name or str(t) == str(name):
            return t
    raise ValueError(f"{name!r} is not a target of the map (targets: {list(dmap.targets)})")


def solve_target(dmap: DeploymentMap, target, deadline: float, gamma: GammaSpec) -> TargetResult:
    """Build and solve the robust problem for one target.

    On an infeasible deadline the raised error carries the smallest feasible one.
    """
    if not deadline > 0:
        raise ValueError("deadline must be positive")
    prob = build_single_robot_rcmdp(dmap, find_target(dmap, target))
    u = gamma.resolve(prob)
    try:
        sol = solve_rcmdp(prob.model, u, deadline)
    except RcmdpInfeasible:
        dmin = min_robust_deadline(prob.model, u)
        raise DeadlineInfeasible(
            f"deadline {deadline:g} is infeasible for target {target!r}; "
            f"the smallest robust deadline is {dmin:.6g}",
            dmin,
        ) from None
    return TargetResult(prob.target, prob, u, sol)


def solve_all(dmap: DeploymentMap, deadline: float, gamma: GammaSpec) -> dict:
    return {t: solve_target(dmap, t, deadline, gamma) for t in dmap.targets}


@dataclass
class Deployment:
    targets: tuple
    pf: tuple[float, ...]
    K: int
    mode: str
    method: str
    counts: tuple[int, ...] | None
    alpha: list | None
    success: float
    results: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "targets": list(self.targets),
            "failure_probabilities": list(self.pf),
            "team": self.K,
            "assign_mode": self.mode,
            "method": self.method,
            "robots_per_target": None if self.counts is None else list(self.counts),
            "assignment": self.alpha,
            "success_probability": self.success,
        }


def plan_deployment(results: dict, K: int, mode: str = "optimal") -> Deployment:
    """Assign K robots to the solved targets.

    ``optimal`` solves the assignment problem (rounded relaxation when
    K >= 2|T|, branch and bound below); ``uniform`` reports the exact
    expected success of i.i.d. uniform target choices.
    """
    targets = tuple(results)
    pf = tuple(results[t].pf for t in targets)
    if K < len(targets):
        raise ValueError(f"{K} robots cannot cover {len(targets)} targets")
    if any(p >= 1.0 for p in pf):
        raise ta.AssignmentError("some target is reached with probability zero")
    if mode == "optimal":
        sol = ta.assign(pf, K)
        robots = tuple(k + 1 for k in sol.counts)
        alpha = ta.counts_to_alpha(targets, sol.counts)
        return Deployment(
            targets, pf, K, mode, sol.method, robots, alpha, success_probability(pf, robots), results
        )
    if mode == "uniform":
        return Deployment(
            targets, pf, K, mode, "uniform", None, None, expected_uniform_success(pf, K), results
        )
    raise ValueError(f"unknown assign mode {mode!r}")


def simulate_deployment(
    dep: Deployment, seed: int, n_trials: int, eps_mode: str = "nominal", draws: int = 32
) -> SimStats:
    plans = {t: dep.results[t].plan() for t in dep.targets}
    if dep.mode == "optimal":
        return run_team(plans, dep.alpha, seed, n_trials, eps_mode, dep.success)
    return run_team_uniform(plans, dep.K, seed, n_trials, eps_mode, draws, dep.success)


def simulate_target(res: TargetResult, seed: int, n_trials: int, eps_mode: str = "nominal", **kw):
    sol = res.solution
    return run_single(
        res.problem.model,
        sol.policy,
        res.problem.sink_pair,
        eps_mode,
        seed,
        n_trials,
        eps_star=sol.eps_star,
        uncertainty=res.uncertainty,
        theoretical_pf=res.pf,
        **kw,
    )


# sweeps ---------------------------------------------------------------------


def _blank_row(axis: str, **kw) -> dict:
    row = {c: "" for c in CSV_COLUMNS}
    row.update(schema=CSV_SCHEMA, axis=axis, status="ok")
    row.update(kw)
    return row


def _fill_stats(row: dict, st: SimStats | None) -> None:
    if st is None:
        return
    lo, hi = st.ci95()
    row.update(
        empirical_success=st.empirical_success_prob,
        ci_low=lo,
        ci_high=hi,
        mean_duration=st.mean_duration,
        std_duration=st.std_duration,
        mean_duration_given_success=st.mean_duration_given_success,
        std_duration_given_success=st.std_duration_given_success,
        convergence_error=st.convergence_error,
        kl_divergence=st.kl_divergence,
        n_trials=st.n_trials,
    )


def _failed(row: dict, exc: Exception) -> dict:
    row["status"] = "infeasible" if isinstance(exc, (RcmdpInfeasible, ta.AssignmentError)) else "error"
    row["message"] = str(exc).replace("\n", " ")
    return row


def single_sweep(
    dmap: DeploymentMap,
    target,
    axis: str,
    grid: Sequence[float],
    *,
    deadline: float | None = None,
    gamma: GammaSpec = GammaSpec(0.0),
    n_trials: int = 0,
    seed: int = 0,
    eps_mode: str = "nominal",
) -> list[dict]:
    """One row per deadline (``axis='deadline'``) or per gamma factor (``axis='gamma'``)."""
    rows = []
    for value in grid:
        if axis == "deadline":
            D, g = float(value), gamma
        elif axis == "gamma":
            D, g = deadline, GammaSpec(float(value), True)
        else:
            raise ValueError(f"single sweeps run over deadline or gamma, not {axis!r}")
        row = _blank_row(
            axis,
            deadline=D,
            gamma_factor=g.value if g.is_factor else "",
            team=1,
            target=find_target(dmap, target),
        )
        try:
            res = solve_target(dmap, target, D, g)
            row["theoretical_success"] = 1.0 - res.pf
            row["worst_case_constraint_value"] = res.solution.worst_case_constraint_value
            if n_trials > 0:
                _fill_stats(row, simulate_target(res, seed, n_trials, eps_mode).stats)
        except Exception as exc:  # noqa: BLE001 - per-point failures stay in the table
            _failed(row, exc)
        rows.append(row)
    return rows


def team_sweep(
    dmap: DeploymentMap,
    team_grid: Sequence[int],
    deadlines: Sequence[float],
    *,
    gamma: GammaSpec = GammaSpec(0.0),
    modes: Sequence[str] = ("optimal", "uniform"),
    n_trials: int = 0,
    seed: int = 0,
    eps_mode: str = "nominal",
    draws: int = 32,
) -> list[dict]:
    """Team success over K for each deadline and assignment mode."""
    rows = []
    for D in deadlines:
        try:
            results = solve_all(dmap, float(D), gamma)
            err = None
        except Exception as exc:  # noqa: BLE001
            results, err = None, exc
        for mode in modes:
            for K in team_grid:
                row = _blank_row(
                    "team",
                    deadline=float(D),
                    gamma_factor=gamma.value if gamma.is_factor else "",
                    team=int(K),
                    assign_mode=mode,
                    target="all",
                )
                if err is not None:
                    rows.append(_failed(row, err))
                    continue
                try:
                    dep = plan_deployment(results, int(K), mode)
                    row["theoretical_success"] = dep.success
                    if n_trials > 0:
                        _fill_stats(row, simulate_deployment(dep, seed, n_trials, eps_mode, draws))
                except Exception as exc:  # noqa: BLE001
                    _failed(row, exc)
                rows.append(row)
    return rows


def check_rows(axis: str, rows: Sequence[dict], tol: float = 1e-9) -> list[str]:
    """Monotonicity checks on the theoretical column; returns violations."""
    bad = []

    def series(rs):
        return [(r, float(r["theoretical_success"])) for r in rs if r["status"] == "ok"]

    if axis in ("deadline", "gamma"):
        pts = series(rows)
        sign = 1 if axis == "deadline" else -1
        for (ra, a), (rb, b) in zip(pts, pts[1:]):
            if sign * (b - a) < -tol:
                bad.append(f"success not monotone between {axis} rows: {a!r} -> {b!r}")
        return bad
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["assign_mode"], r["deadline"]), []).append(r)
    for (mode, D), rs in groups.items():
        pts = series(rs)
        for (ra, a), (rb, b) in zip(pts, pts[1:]):
            if b < a - tol:
                bad.append(f"{mode} success decreases in K at D={D}: {a!r} -> {b!r}")
    by_k: dict = {}
    for r in rows:
        if r["status"] == "ok":
            by_k.setdefault((r["deadline"], r["team"]), {})[r["assign_mode"]] = float(
                r["theoretical_success"]
            )
    for (D, K), v in sorted(by_k.items()):
        if "optimal" in v and "uniform" in v and v["optimal"] < v["uniform"] - tol:
            bad.append(f"uniform beats optimal at D={D}, K={K}")
    modes = {r["assign_mode"] for r in rows}
    for mode in modes:
        per_d: dict = {}
        for r in rows:
            if r["assign_mode"] == mode and r["status"] == "ok":
                per_d.setdefault(r["team"], []).append((r["deadline"], float(r["theoretical_success"])))
        for K, pts in per_d.items():
            pts.sort()
            for (_, a), (_, b) in zip(pts, pts[1:]):
                if b < a - tol:
                    bad.append(f"{mode} success decreases in D at K={K}")
    return bad

