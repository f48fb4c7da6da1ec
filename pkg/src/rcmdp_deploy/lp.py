"""Dense two-phase tableau simplex for small and medium linear programs.

Problems are stated as::

    minimize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                lb <= x <= ub

The entering variable is the most negative reduced cost (lowest index on
ties).  After a run of degenerate pivots the solver switches to Bland's
rule until the objective strictly improves, which rules out cycling while
keeping the usual pivot counts on nondegenerate stretches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
RESIDUAL_TOL = 1e-8
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 64


@dataclass
class LinearProgram:
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    names: Sequence[str] | None = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n, "inequality")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound vectors must match the number of variables")
        if not np.all(np.isfinite(self.lb)):
            raise ValueError("lower bounds must be finite")
        if np.any(self.ub < self.lb):
            raise ValueError("upper bound below lower bound")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("objective must be finite")
        if self.names is not None and len(self.names) != n:
            raise ValueError("names must match the number of variables")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_ub(self) -> int:
        return self.A_ub.shape[0]


def _block(A, b, n: int, what: str) -> tuple[np.ndarray, np.ndarray]:
    if A is None:
        if b is not None and np.size(b):
            raise ValueError(f"{what} rhs given without a matrix")
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        A = A.reshape(0, n)
    if A.shape[1] != n:
        raise ValueError(f"{what} matrix has {A.shape[1]} columns, expected {n}")
    if b.size != A.shape[0]:
        raise ValueError(f"{what} rhs has {b.size} entries, expected {A.shape[0]}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError(f"{what} data must be finite")
    return A, b


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    dual_objective: float = np.nan
    pivots: int = 0
    primal_residual: float = np.nan
    complementarity: float = np.nan
    message: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Revised:
    """Revised simplex state: basis, explicit inverse and basic values.

    The inverse is updated by elementary row operations after each pivot and
    recomputed from the original columns every ``refactor_every`` pivots so
    that round-off does not accumulate.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: np.ndarray) -> None:
        self.A = A
        self.b = b
        self.rows = np.arange(A.shape[0])
        self.basis = basis.copy()
        self.cost = np.zeros(A.shape[1])
        self.pivots = 0
        self.refactor_every = REFACTOR_EVERY
        B = A[:, self.basis]
        diag = np.diag(B).copy()
        if np.array_equal(B, np.diag(diag)) and np.all(np.abs(diag) == 1.0):
            # slack/artificial start: B is a signed identity
            self.Binv = np.diag(diag)
            self.xB = diag * b
        else:
            self.Binv = np.eye(A.shape[0])
            self.xB = b.copy()
            self.refactor()

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return
        self.Binv = Binv
        xB = Binv @ self.b
        xB[(xB < 0) & (xB > -FEAS_TOL)] = 0.0
        self.xB = xB

    def column(self, j: int) -> np.ndarray:
        return self.Binv @ self.A[:, j]

    def row(self, r: int) -> np.ndarray:
        """Row ``r`` of B^-1 A."""
        return self.Binv[r] @ self.A

    def reduced_costs(self) -> np.ndarray:
        y = self.cost[self.basis] @ self.Binv
        return self.cost - y @ self.A

    @property
    def objective(self) -> float:
        return float(self.cost[self.basis] @ self.xB)

    def pivot(self, r: int, j: int, col: np.ndarray | None = None) -> None:
        if col is None:
            col = self.column(j)
        piv = col[r]
        self.Binv[r] /= piv
        self.xB[r] /= piv
        others = col.copy()
        others[r] = 0.0
        nz = np.flatnonzero(others)
        if nz.size:
            self.Binv[nz] -= np.outer(others[nz], self.Binv[r])
            self.xB[nz] -= others[nz] * self.xB[r]
        self.basis[r] = j
        self.pivots += 1
        if self.pivots % self.refactor_every == 0:
            self.refactor()

    def drop_rows(self, keep: np.ndarray) -> None:
        self.A = self.A[keep]
        self.b = self.b[keep]
        self.basis = self.basis[keep]
        self.rows = self.rows[keep]
        self.refactor()

    def _leaving(self, col: np.ndarray, textbook: bool) -> int | None:
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return None
        rhs = np.maximum(self.xB[pos], 0.0)
        if textbook:
            ratios = rhs / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, best)]
            return int(ties[np.argmin(self.basis[ties])])
        # Harris two-pass test: largest pivot among near-minimal ratios
        bound = ((rhs + FEAS_TOL) / col[pos]).min()
        ok = pos[rhs / col[pos] <= bound]
        piv = col[ok]
        big = ok[piv >= piv.max() * (1 - 1e-12)]
        return int(big[np.argmin(self.basis[big])])

    def run(self, eligible: np.ndarray, max_pivots: int) -> str:
        streak = 0
        bland = False
        fresh = False
        while True:
            red = self.reduced_costs()
            red[self.basis] = 0.0
            cand = np.flatnonzero((red < -OPT_TOL) & eligible)
            if cand.size == 0:
                if not fresh:
                    # confirm optimality with a freshly computed inverse
                    self.refactor()
                    fresh = True
                    continue
                return "optimal"
            fresh = False
            if self.pivots >= max_pivots:
                return "iteration_limit"
            j = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
            col = self.column(j)
            r = self._leaving(col, bland)
            if r is None:
                return "unbounded"
            degenerate = self.xB[r] <= FEAS_TOL
            self.pivot(r, j, col)
            if degenerate:
                streak += 1
                if streak >= DEGENERATE_STREAK:
                    bland = True
            else:
                streak = 0
                bland = False

    def set_objective(self, cost: np.ndarray) -> None:
        self.cost = cost


def solve(lp: LinearProgram, max_pivots: int | None = None) -> LpSolution:
    """Solve ``lp``; the status is one of optimal, infeasible, unbounded, numerical."""
    n = lp.n_vars
    shift = lp.lb
    const = float(lp.c @ shift)
    b_eq = lp.b_eq - lp.A_eq @ shift
    finite_ub = np.flatnonzero(np.isfinite(lp.ub))
    A_bnd = np.zeros((finite_ub.size, n))
    A_bnd[np.arange(finite_ub.size), finite_ub] = 1.0
    A_le = np.vstack([lp.A_ub, A_bnd])
    b_le = np.concatenate([lp.b_ub - lp.A_ub @ shift, (lp.ub - shift)[finite_ub]])

    m_eq, m_le = lp.n_eq, A_le.shape[0]
    m = m_eq + m_le
    # columns: structural | slacks (one per <= row) | artificials (as needed)
    sign = np.ones(m)
    A = np.zeros((m, n + m_le))
    A[:m_eq, :n] = lp.A_eq
    A[m_eq:, :n] = A_le
    A[m_eq:, n:] = np.eye(m_le)
    b = np.concatenate([b_eq, b_le])
    neg = b < 0
    sign[neg] = -1.0
    A[neg] *= -1.0
    b = np.abs(b)
    need_art = np.ones(m, dtype=bool)
    need_art[m_eq:] = neg[m_eq:]
    art_rows = np.flatnonzero(need_art)
    n_std = n + m_le
    A_full = np.hstack([A, np.zeros((m, art_rows.size))])
    A_full[art_rows, n_std + np.arange(art_rows.size)] = 1.0
    basis = np.empty(m, dtype=int)
    basis[m_eq:] = n + np.arange(m_le)
    basis[art_rows] = n_std + np.arange(art_rows.size)

    limit = max_pivots if max_pivots is not None else 50 * (m + n_std) + 1000
    tab = _Revised(A_full, b, basis)
    n_tot = A_full.shape[1]
    eligible = np.ones(n_tot, dtype=bool)

    if art_rows.size:
        phase1 = np.zeros(n_tot)
        phase1[n_std:] = 1.0
        tab.set_objective(phase1)
        status = tab.run(eligible, limit)
        if status == "iteration_limit":
            return LpSolution("numerical", pivots=tab.pivots, message="phase 1 pivot limit")
        infeas = tab.objective
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution("infeasible", pivots=tab.pivots, message=f"phase 1 residual {infeas:.3e}")
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n_std:
                row = tab.row(r)[:n_std]
                cols = np.flatnonzero(np.abs(row) > 1e-9)
                if cols.size:
                    tab.pivot(r, int(cols[np.argmax(np.abs(row[cols]))]))
                else:
                    keep[r] = False
        if not keep.all():
            tab.drop_rows(keep)
        eligible[n_std:] = False
    else:
        keep = np.ones(m, dtype=bool)

    cost = np.zeros(n_tot)
    cost[:n] = lp.c
    tab.set_objective(cost)
    status = tab.run(eligible, limit)
    if status == "iteration_limit":
        return LpSolution("numerical", pivots=tab.pivots, message="phase 2 pivot limit")
    if status == "unbounded":
        return LpSolution("unbounded", pivots=tab.pivots)

    return _finish(lp, tab, A, b, sign, keep, n, n_std, const, m_eq, finite_ub)


def _finish(lp, tab, A, b, sign, keep, n, n_std, const, m_eq, finite_ub) -> LpSolution:
    basis = tab.basis
    if np.any(basis >= n_std):
        return LpSolution("numerical", pivots=tab.pivots, message="artificial left in basis")
    rows = np.flatnonzero(keep)
    B = A[rows][:, basis]
    cost_std = np.zeros(n_std)
    cost_std[:n] = lp.c
    try:
        xb = np.linalg.solve(B, b[rows])
        y_kept = np.linalg.solve(B.T, cost_std[basis])
    except np.linalg.LinAlgError:
        return LpSolution("numerical", pivots=tab.pivots, message="singular final basis")
    z = np.zeros(n_std)
    z[basis] = xb
    # clean tiny negatives from round-off
    z[(z < 0) & (z > -FEAS_TOL)] = 0.0
    y_std = np.zeros(A.shape[0])
    y_std[rows] = y_kept
    y = y_std * sign
    x = lp.lb + z[:n]
    m_ub = lp.n_ub
    y_eq = y[:m_eq]
    y_le = y[m_eq:]
    y_ub = y_le[:m_ub]
    y_bnd = y_le[m_ub:]

    reduced = lp.c - lp.A_eq.T @ y_eq - lp.A_ub.T @ y_ub
    reduced[finite_ub] -= y_bnd
    slack_ub = lp.b_ub - lp.A_ub @ x
    slack_bnd = (lp.ub - x)[finite_ub]
    resid = max(
        np.abs(lp.A_eq @ x - lp.b_eq).max(initial=0.0),
        (-slack_ub).max(initial=0.0),
        (-slack_bnd).max(initial=0.0),
        (lp.lb - x).max(initial=0.0),
    )
    dual_infeas = max(
        (-reduced).max(initial=0.0),
        y_ub.max(initial=0.0),
        y_bnd.max(initial=0.0),
    )
    comp = max(
        np.abs((x - lp.lb) * reduced).max(initial=0.0),
        np.abs(y_ub * slack_ub).max(initial=0.0),
        np.abs(y_bnd * slack_bnd).max(initial=0.0),
    )
    objective = float(lp.c @ x)
    dual_obj = float(
        lp.b_eq @ y_eq + lp.b_ub @ y_ub + (lp.ub[finite_ub] @ y_bnd if finite_ub.size else 0.0)
        + lp.lb @ reduced
    )
    sol = LpSolution(
        "optimal",
        x=x,
        objective=objective,
        duals_eq=y_eq,
        duals_ub=y_ub,
        dual_objective=dual_obj,
        pivots=tab.pivots,
        primal_residual=float(resid),
        complementarity=float(comp),
        meta={"dual_infeasibility": float(dual_infeas), "bound_duals": y_bnd},
    )
    if resid > RESIDUAL_TOL or comp > RESIDUAL_TOL or dual_infeas > 1e-7:
        sol.status = "numerical"
        sol.message = (
            f"residuals out of tolerance: primal {resid:.2e}, "
            f"complementarity {comp:.2e}, dual {dual_infeas:.2e}"
        )
    return sol


# fixed-format MPS export --------------------------------------------------


def _mps_num(v: float) -> str:
    s = repr(float(v))
    if len(s) > 12:
        s = f"{v:.6g}"
    return s


def to_mps(lp: LinearProgram, name: str = "RCMDP") -> str:
    """Render ``lp`` in fixed-format MPS for cross-checking with external solvers."""
    rows = [("N", "COST")]
    rows += [("E", f"E{i}") for i in range(lp.n_eq)]
    rows += [("L", f"L{i}") for i in range(lp.n_ub)]
    lines = [f"NAME          {name[:8]}", "ROWS"]
    lines += [f" {t}  {r}" for t, r in rows]
    lines.append("COLUMNS")
    for j in range(lp.n_vars):
        col = f"X{j}"
        entries = []
        if lp.c[j] != 0:
            entries.append(("COST", lp.c[j]))
        entries += [(f"E{i}", v) for i, v in enumerate(lp.A_eq[:, j]) if v != 0]
        entries += [(f"L{i}", v) for i, v in enumerate(lp.A_ub[:, j]) if v != 0]
        if not entries:
            entries.append(("COST", 0.0))
        for r, v in entries:
            lines.append(f"    {col:<8}  {r:<8}  {_mps_num(v):>12}")
    lines.append("RHS")
    for i, v in enumerate(lp.b_eq):
        if v != 0:
            lines.append(f"    {'RHS':<8}  {'E' + str(i):<8}  {_mps_num(v):>12}")
    for i, v in enumerate(lp.b_ub):
        if v != 0:
            lines.append(f"    {'RHS':<8}  {'L' + str(i):<8}  {_mps_num(v):>12}")
    bounds = []
    for j in range(lp.n_vars):
        if lp.lb[j] != 0:
            bounds.append(f" LO {'BND':<8}  {'X' + str(j):<8}  {_mps_num(lp.lb[j]):>12}")
        if np.isfinite(lp.ub[j]):
            bounds.append(f" UP {'BND':<8}  {'X' + str(j):<8}  {_mps_num(lp.ub[j]):>12}")
    if bounds:
        lines.append("BOUNDS")
        lines += bounds
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
