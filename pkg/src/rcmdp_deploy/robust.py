"""Robust CMDP with budgeted interval uncertainty on the constraint costs.

The robust constraint ``max_{eps in U} sum rho (d + eps) <= D`` is replaced by
its LP dual, giving a single linear program in (rho, lambda, mu) whose size
is linear in the number of state/action pairs for every budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import lp as lpmod
from .model import CmdpModel, ModelError, RandomizedPolicy, occupation_to_policy

FEAS_SLACK = 1e-7


class RcmdpInfeasible(Exception):
    """No stationary policy satisfies the robust deadline."""

    def __init__(self, message: str, min_deadline: float | None = None) -> None:
        super().__init__(message)
        self.min_deadline = min_deadline


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class UncertaintySet:
    """Box [0, eps_bar] intersected with the budget sum(eps) <= gamma."""

    eps_bar: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        eb = np.asarray(self.eps_bar, dtype=float)
        object.__setattr__(self, "eps_bar", eb)
        if np.any(eb < 0) or not np.all(np.isfinite(eb)):
            raise ModelError("eps_bar must be finite and nonnegative")
        if not (self.gamma >= 0):
            raise ModelError("budget must be nonnegative")
        if self.gamma > eb.sum() * (1 + 1e-12) + 1e-12:
            raise ModelError(f"budget {self.gamma} exceeds sum(eps_bar) = {eb.sum()}")

    @classmethod
    def from_factor(cls, eps_bar: np.ndarray, factor: float) -> "UncertaintySet":
        if not 0 <= factor <= 1:
            raise ModelError("uncertainty factor must lie in [0, 1]")
        eps_bar = np.asarray(eps_bar, dtype=float)
        return cls(eps_bar, float(factor * eps_bar.sum()))

    def contains(self, eps: np.ndarray, tol: float = 1e-12) -> bool:
        eps = np.asarray(eps, dtype=float)
        return bool(
            np.all(eps >= -tol) and np.all(eps <= self.eps_bar + tol) and eps.sum() <= self.gamma + tol
        )


def inner_max_oracle(rho: np.ndarray, u: UncertaintySet) -> tuple[float, np.ndarray]:
    """Worst-case perturbation of ``sum rho * eps`` over U (fractional knapsack).

    Pairs are filled in decreasing order of rho, ties by pair index, until
    the budget runs out; the boundary pair gets the remaining fraction.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != u.eps_bar.shape:
        raise ModelError("rho and eps_bar have different lengths")
    if np.any(rho < 0):
        raise ModelError("rho must be nonnegative")
    order = np.lexsort((np.arange(rho.size), -rho))
    eps = np.zeros_like(rho)
    left = u.gamma
    for i in order:
        if left <= 0 or rho[i] <= 0:
            break
        take = min(u.eps_bar[i], left)
        eps[i] = take
        left -= take
    return float(np.dot(rho, eps)), eps


def _as_list(u, D, L: int):
    us = [u] if isinstance(u, UncertaintySet) else list(u)
    Ds = [float(D)] if np.ndim(D) == 0 else [float(d) for d in D]
    if len(us) != L or len(Ds) != L:
        raise ModelError(f"need {L} uncertainty sets and thresholds, got {len(us)} and {len(Ds)}")
    return us, Ds


def build_lincop(model: CmdpModel, D: float | Sequence[float]) -> lpmod.LinearProgram:
    """Nominal occupation-measure LP (no uncertainty)."""
    L = model.n_constraints
    Ds = [float(D)] if np.ndim(D) == 0 else [float(d) for d in D]
    if len(Ds) != L:
        raise ModelError(f"need {L} thresholds")
    if any(d < 0 for d in Ds):
        raise ModelError("deadline must be nonnegative")
    A_ub = np.array([model.dcost_vector(i) for i in range(L)]).reshape(L, len(model.pairs))
    return lpmod.LinearProgram(
        c=model.cost_vector(),
        A_eq=model.flow_matrix(),
        b_eq=model.beta_transient(),
        A_ub=A_ub,
        b_ub=np.array(Ds),
    )


def build_opt2(model: CmdpModel, u, D) -> lpmod.LinearProgram:
    """Dualized robust LP over variables (rho, lambda_1, mu_1, ..., lambda_L, mu_L).

    With one constraint this has 2|K'| + 1 variables, |X'| flow equalities,
    one budget row and |K'| coupling rows ``rho - lambda - mu <= 0``.
    """
    L = model.n_constraints
    us, Ds = _as_list(u, D, L)
    if any(d < 0 for d in Ds):
        raise ModelError("deadline must be nonnegative")
    k = len(model.pairs)
    for ui in us:
        if ui.eps_bar.shape != (k,):
            raise ModelError(f"eps_bar has shape {ui.eps_bar.shape}, expected ({k},)")
    n = k + L * (k + 1)
    c = np.zeros(n)
    c[:k] = model.cost_vector()
    F = model.flow_matrix()
    A_eq = np.zeros((F.shape[0], n))
    A_eq[:, :k] = F
    A_ub = np.zeros((L * (k + 1), n))
    b_ub = np.zeros(L * (k + 1))
    names = [f"rho{j}" for j in range(k)]
    for i, (ui, Di) in enumerate(zip(us, Ds)):
        off = k + i * (k + 1)
        names += [f"lam{i}_{j}" for j in range(k)] + [f"mu{i}"]
        row = i * (k + 1)
        A_ub[row, :k] = model.dcost_vector(i)
        A_ub[row, off : off + k] = ui.eps_bar
        A_ub[row, off + k] = ui.gamma
        b_ub[row] = Di
        blk = slice(row + 1, row + 1 + k)
        A_ub[blk, :k] = np.eye(k)
        A_ub[blk, off : off + k] = -np.eye(k)
        A_ub[blk, off + k] = -1.0
    return lpmod.LinearProgram(
        c=c, A_eq=A_eq, b_eq=model.beta_transient(), A_ub=A_ub, b_ub=b_ub, names=names
    )


@dataclass
class RobustSolution:
    rho: np.ndarray
    lam: np.ndarray
    mu: float
    objective: float
    policy: RandomizedPolicy
    worst_case_constraint_value: float
    nominal_constraint_value: float
    eps_star: np.ndarray
    deadline: float
    gamma: float
    pairs: tuple[tuple[int, int], ...]
    meta: dict[str, Any] = field(default_factory=dict)

    def pair_value(self, pair: tuple[int, int]) -> float:
        try:
            i = self.pairs.index(tuple(pair))
        except ValueError:
            raise ModelError(f"pair {pair} is not a transient state/action pair") from None
        return float(self.rho[i])

    def visited_states(self, tol: float = 1e-12) -> list[int]:
        mass: dict[int, float] = {}
        for (x, _), r in zip(self.pairs, self.rho):
            mass[x] = mass.get(x, 0.0) + r
        return sorted(x for x, v in mass.items() if v > tol)

    def randomized_states(self, tol: float = 1e-9) -> list[int]:
        """Randomizing states among those the optimal policy actually visits."""
        return self.policy.randomized_states(tol, support=self.visited_states())

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "rcmdp-solution/1",
            "objective": self.objective,
            "deadline": self.deadline,
            "gamma": self.gamma,
            "worst_case_constraint_value": self.worst_case_constraint_value,
            "nominal_constraint_value": self.nominal_constraint_value,
            "mu": self.mu,
            "pairs": [list(p) for p in self.pairs],
            "rho": self.rho.tolist(),
            "lambda": self.lam.tolist(),
            "eps_star": self.eps_star.tolist(),
            "policy": self.policy.to_json(),
            "solver": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RobustSolution":
        return cls(
            rho=np.array(data["rho"], dtype=float),
            lam=np.array(data["lambda"], dtype=float),
            mu=float(data["mu"]),
            objective=float(data["objective"]),
            policy=RandomizedPolicy.from_json(data["policy"]),
            worst_case_constraint_value=float(data["worst_case_constraint_value"]),
            nominal_constraint_value=float(data["nominal_constraint_value"]),
            eps_star=np.array(data["eps_star"], dtype=float),
            deadline=float(data["deadline"]),
            gamma=float(data["gamma"]),
            pairs=tuple(tuple(p) for p in data["pairs"]),
            meta=dict(data.get("solver", {})),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def min_robust_deadline(model: CmdpModel, u: UncertaintySet) -> float:
    """Smallest D for which the robust problem is feasible."""
    lpd = build_opt2(model, u, 0.0)
    c = lpd.A_ub[0].copy()
    # drop the budget row; its left-hand side becomes the objective
    sol = lpmod.solve(
        lpmod.LinearProgram(c=c, A_eq=lpd.A_eq, b_eq=lpd.b_eq, A_ub=lpd.A_ub[1:], b_ub=lpd.b_ub[1:])
    )
    if not sol.optimal:
        raise NumericalFailure(f"minimum-deadline LP ended with status {sol.status}: {sol.message}")
    return sol.objective


def solve_rcmdp(model: CmdpModel, u: UncertaintySet, D: float) -> RobustSolution:
    """Solve the robust problem for a single constraint and extract the policy.

    Raises ``RcmdpInfeasible`` when no policy meets the robust deadline and
    ``NumericalFailure`` when the LP result cannot be certified.
    """
    if model.n_constraints != 1:
        raise ModelError("solve_rcmdp handles exactly one constraint")
    lpd = build_opt2(model, u, D)
    sol = lpmod.solve(lpd)
    if sol.status == "infeasible":
        raise RcmdpInfeasible(f"no policy meets the robust deadline D={D}")
    if not sol.optimal:
        raise NumericalFailure(f"LP ended with status {sol.status}: {sol.message}")
    k = len(model.pairs)
    x = sol.x
    rho = np.maximum(x[:k], 0.0)
    lam = np.maximum(x[k : 2 * k], 0.0)
    mu = max(float(x[2 * k]), 0.0)
    d = model.dcost_vector(0)
    nominal = float(np.dot(rho, d))
    worst, eps_star = inner_max_oracle(rho, u)
    wc = nominal + worst
    if wc > D + FEAS_SLACK:
        raise NumericalFailure(
            f"worst-case constraint value {wc!r} exceeds the deadline {D!r} beyond tolerance"
        )
    meta = {
        "pivots": sol.pivots,
        "primal_residual": sol.primal_residual,
        "complementarity": sol.complementarity,
        "lp_dual_objective": sol.dual_objective,
        "n_vars": lpd.n_vars,
        "n_eq": lpd.n_eq,
        "n_ub": lpd.n_ub,
        "feas_tol": lpmod.FEAS_TOL,
        "opt_tol": lpmod.OPT_TOL,
    }
    return RobustSolution(
        rho=rho,
        lam=lam,
        mu=mu,
        objective=float(sol.objective),
        policy=occupation_to_policy(model, rho),
        worst_case_constraint_value=wc,
        nominal_constraint_value=nominal,
        eps_star=eps_star,
        deadline=float(D),
        gamma=float(u.gamma),
        pairs=model.pairs,
        meta=meta,
    )


def failure_probability(sol: RobustSolution, sink_pair: tuple[int, int]) -> float:
    """Occupation of the sink's single action, i.e. the probability of failure."""
    return min(max(sol.pair_value(sink_pair), 0.0), 1.0)
