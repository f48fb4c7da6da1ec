import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from oracles import inner_max_brute, random_cmdp, robust_lp_by_vertices, uncertainty_points
from rcmdp_deploy import lp as lpmod
from rcmdp_deploy.model import Action, CmdpModel, ModelError
from rcmdp_deploy.robust import (
    RcmdpInfeasible,
    RobustSolution,
    UncertaintySet,
    build_lincop,
    build_opt2,
    inner_max_oracle,
    min_robust_deadline,
    solve_rcmdp,
)


def _instance(seed, n=3, a=2):
    rng = np.random.default_rng(seed)
    m = random_cmdp(rng, n, a)
    eps_bar = rng.uniform(0, 2, len(m.pairs))
    return rng, m, eps_bar


def _feasible_deadline(m, u, slack=1.3):
    return min_robust_deadline(m, u) * slack


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.data())
def test_greedy_inner_max_matches_vertices(rho, data):
    rho = np.array(rho)
    eps_bar = np.array(data.draw(st.lists(st.floats(0, 3), min_size=len(rho), max_size=len(rho))))
    gamma = data.draw(st.floats(0, 1)) * eps_bar.sum()
    u = UncertaintySet(eps_bar, gamma)
    val, eps = inner_max_oracle(rho, u)
    assert u.contains(eps, tol=1e-9)
    assert val == pytest.approx(inner_max_brute(rho, eps_bar, gamma), abs=1e-9)


def test_greedy_tie_break_by_index():
    u = UncertaintySet(np.array([1.0, 1.0, 1.0]), 1.0)
    _, eps = inner_max_oracle(np.array([2.0, 2.0, 1.0]), u)
    np.testing.assert_array_equal(eps, [1.0, 0.0, 0.0])


def test_uncertainty_set_validation():
    with pytest.raises(ModelError):
        UncertaintySet(np.array([1.0, -1.0]), 0.0)
    with pytest.raises(ModelError):
        UncertaintySet(np.array([1.0, 1.0]), 2.5)
    with pytest.raises(ModelError):
        UncertaintySet.from_factor(np.array([1.0]), 1.5)
    u = UncertaintySet.from_factor(np.array([1.0, 3.0]), 0.5)
    assert u.gamma == 2.0
    assert len(uncertainty_points(u.eps_bar, u.gamma)) >= 3


def test_opt2_layout():
    _, m, eps_bar = _instance(0)
    k = len(m.pairs)
    lp = build_opt2(m, UncertaintySet(eps_bar, 1.0), 10.0)
    assert lp.n_vars == 2 * k + 1
    assert lp.n_eq == len(m.transient_states)
    assert lp.n_ub == k + 1


@pytest.mark.parametrize("seed", range(25))
def test_opt2_equals_vertex_enumeration(seed):
    rng, m, eps_bar = _instance(seed)
    u = UncertaintySet.from_factor(eps_bar, rng.uniform(0, 1))
    D = _feasible_deadline(m, u, rng.uniform(1.01, 2.0))
    sol = solve_rcmdp(m, u, D)
    ref = robust_lp_by_vertices(m, eps_bar, u.gamma, D)
    assert ref.status == 0
    assert sol.objective == pytest.approx(ref.fun, abs=1e-7)
    assert sol.worst_case_constraint_value <= D + 1e-7


@pytest.mark.parametrize("seed", range(10))
def test_budget_endpoints(seed):
    _, m, eps_bar = _instance(seed, 4, 2)
    u_full = UncertaintySet(eps_bar, float(eps_bar.sum()))
    D = _feasible_deadline(m, u_full, 1.2)
    nominal = lpmod.solve(build_lincop(m, D))
    assert solve_rcmdp(m, UncertaintySet(eps_bar, 0.0), D).objective == pytest.approx(
        nominal.objective, abs=1e-9
    )
    # full budget: every pair pays eps_bar
    shifted = CmdpModel(
        tuple(
            tuple(
                Action(a.cost, (a.dcosts[0] + (eps_bar[m.pair_index[(x, j)]] if x not in m.absorbing else 0.0),), a.transitions)
                for j, a in enumerate(acts)
            )
            for x, acts in enumerate(m.actions)
        ),
        m.absorbing,
        m.beta,
    )
    full = lpmod.solve(build_lincop(shifted, D))
    assert solve_rcmdp(m, u_full, D).objective == pytest.approx(full.objective, abs=1e-9)


def test_infeasible_deadline_and_minimum():
    _, m, eps_bar = _instance(4)
    u = UncertaintySet.from_factor(eps_bar, 0.5)
    dmin = min_robust_deadline(m, u)
    with pytest.raises(RcmdpInfeasible):
        solve_rcmdp(m, u, dmin * 0.99)
    sol = solve_rcmdp(m, u, dmin * 1.0001)
    assert sol.worst_case_constraint_value <= dmin * 1.0001 + 1e-7


def test_objective_monotone_in_budget_and_deadline():
    _, m, eps_bar = _instance(5, 4, 3)
    D = _feasible_deadline(m, UncertaintySet(eps_bar, float(eps_bar.sum())), 1.1)
    objs = [solve_rcmdp(m, UncertaintySet.from_factor(eps_bar, g), D).objective for g in (0, 0.1, 0.5, 1)]
    assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))
    u = UncertaintySet.from_factor(eps_bar, 0.3)
    objs = [solve_rcmdp(m, u, D * f).objective for f in (1.0, 1.5, 3.0)]
    assert all(b <= a + 1e-9 for a, b in zip(objs, objs[1:]))


def test_two_constraints_match_vertex_lp():
    rng = np.random.default_rng(21)
    base = random_cmdp(rng, 3, 2)
    # add a second constraint cost
    m = CmdpModel(
        tuple(
            tuple(Action(a.cost, (a.dcosts[0], 0.0 if x in base.absorbing else float(rng.uniform(0, 3))), a.transitions) for a in acts)
            for x, acts in enumerate(base.actions)
        ),
        base.absorbing,
        base.beta,
    )
    k = len(m.pairs)
    eb = [rng.uniform(0, 1, k), rng.uniform(0, 1, k)]
    us = [UncertaintySet.from_factor(eb[0], 0.4), UncertaintySet.from_factor(eb[1], 0.7)]
    Ds = [30.0, 20.0]
    ours = lpmod.solve(build_opt2(m, us, Ds))
    rows, rhs = [], []
    for i, u in enumerate(us):
        d = m.dcost_vector(i)
        for e in uncertainty_points(u.eps_bar, u.gamma):
            rows.append(d + e)
            rhs.append(Ds[i])
    ref = linprog(m.cost_vector(), A_ub=rows, b_ub=rhs, A_eq=m.flow_matrix(), b_eq=m.beta_transient(), method="highs")
    assert ref.status == 0 and ours.optimal
    assert ours.objective == pytest.approx(ref.fun, abs=1e-7)


def test_solution_serialization_round_trip():
    _, m, eps_bar = _instance(6)
    u = UncertaintySet.from_factor(eps_bar, 0.5)
    sol = solve_rcmdp(m, u, _feasible_deadline(m, u))
    back = RobustSolution.from_dict(__import__("json").loads(sol.dumps()))
    assert back.dumps() == sol.dumps()
    assert back.pair_value(m.pairs[0]) == sol.pair_value(m.pairs[0])
    with pytest.raises(ModelError):
        sol.pair_value((99, 0))


def test_wrong_shapes_rejected():
    _, m, eps_bar = _instance(1)
    with pytest.raises(ModelError):
        build_opt2(m, UncertaintySet(eps_bar[:-1], 0.0), 5.0)
    with pytest.raises(ModelError):
        inner_max_oracle(np.ones(3), UncertaintySet(np.ones(2), 1.0))
