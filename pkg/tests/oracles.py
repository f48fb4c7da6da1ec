"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from rcmdp_deploy.model import Action, CmdpModel


def random_cmdp(rng: np.random.Generator, n_transient: int, n_actions: int, leak: float = 0.2):
    """Transient CMDP with one absorbing state (the last one).

    Every action leaks at least ``leak`` to the absorbing state, so every
    policy terminates.  Costs in [0, 1], one constraint cost in [1, 5].
    """
    absorbing = n_transient
    acts = []
    for _ in range(n_transient):
        row = []
        for _ in range(n_actions):
            w = rng.random(n_transient + 1)
            w[absorbing] = 0.0
            w = (1 - leak) * w / w.sum()
            w[absorbing] += leak
            trans = tuple((int(y), float(p)) for y, p in enumerate(w) if p > 0)
            row.append(Action(float(rng.random()), (float(rng.uniform(1, 5)),), trans))
        acts.append(tuple(row))
    acts.append((Action(0.0, (0.0,), ((absorbing, 1.0),)),))
    beta = np.zeros(n_transient + 1)
    beta[0] = 1.0
    return CmdpModel(tuple(acts), frozenset({absorbing}), tuple(beta))


def transient_by_enumeration(model: CmdpModel) -> bool:
    """Every deterministic policy reaches M from every non-absorbing state.

    Deterministic policies suffice: an end component always contains a
    deterministic choice of actions that never leaves it.
    """
    trans = model.transient_states
    choices = [range(len(model.actions[x])) for x in trans]
    for pick in itertools.product(*choices):
        succ = {x: [y for y, p in model.actions[x][a].transitions if p > 0] for x, a in zip(trans, pick)}
        good = set(model.absorbing)
        changed = True
        while changed:
            changed = False
            for x in trans:
                if x not in good and any(y in good for y in succ[x]):
                    good.add(x)
                    changed = True
        if any(x not in good for x in trans):
            return False
    return True


def uncertainty_points(eps_bar: np.ndarray, gamma: float) -> list[np.ndarray]:
    """A finite subset of U containing all of its vertices.

    Vertices have every coordinate at 0 or eps_bar except possibly one,
    which takes up the leftover budget.
    """
    k = len(eps_bar)
    out = []
    for mask in itertools.product((0, 1), repeat=k):
        full = np.array(mask, dtype=bool)
        base = np.where(full, eps_bar, 0.0)
        used = base.sum()
        if used > gamma + 1e-12:
            continue
        out.append(base)
        for j in np.flatnonzero(~full):
            left = gamma - used
            if 0 < left < eps_bar[j]:
                e = base.copy()
                e[j] = left
                out.append(e)
    return out


def inner_max_brute(rho: np.ndarray, eps_bar: np.ndarray, gamma: float) -> float:
    return max(float(np.dot(rho, e)) for e in uncertainty_points(eps_bar, gamma))


def robust_lp_by_vertices(model: CmdpModel, eps_bar: np.ndarray, gamma: float, D: float):
    """The robust LP with one explicit constraint per point of U (HiGHS)."""
    c = model.cost_vector()
    d = model.dcost_vector(0)
    pts = uncertainty_points(eps_bar, gamma)
    A_ub = np.array([d + e for e in pts])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.full(len(pts), D),
        A_eq=model.flow_matrix(),
        b_eq=model.beta_transient(),
        bounds=[(0, None)] * len(c),
        method="highs",
    )
    return res


def lp_by_highs(lp):
    """Reference solve of a ``LinearProgram`` with scipy."""
    bounds = list(zip(lp.lb, [None if not np.isfinite(u) else u for u in lp.ub]))
    bounds = [(None if not np.isfinite(l) else l, u) for l, u in bounds]
    return linprog(
        lp.c,
        A_ub=lp.A_ub if lp.A_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.A_ub.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
    )


def compositions(total: int, parts: int):
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        cuts = (-1,) + bars + (total + parts - 1,)
        yield tuple(cuts[i + 1] - cuts[i] - 1 for i in range(parts))


def uniform_success_by_enumeration(pf, K: int) -> float:
    """E[phi] over all T^K assignments (small K only)."""
    T = len(pf)
    tot = 0.0
    for alpha in itertools.product(range(T), repeat=K):
        c = np.bincount(alpha, minlength=T)
        tot += np.prod([1 - p**ci for p, ci in zip(pf, c)])
    return tot / T**K
