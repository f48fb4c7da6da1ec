import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_by_highs
from rcmdp_deploy import lp as lpmod
from rcmdp_deploy.lp import LinearProgram, solve, to_mps


def _random_lp(rng, n, m_eq, m_ub, bounded=True):
    x0 = rng.uniform(0, 2, n)
    A_eq = rng.normal(size=(m_eq, n))
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.uniform(0, 1, m_ub)
    c = rng.normal(size=n)
    ub = np.full(n, 5.0) if bounded else None
    return LinearProgram(c, A_eq, A_eq @ x0, A_ub, b_ub, ub=ub)


@pytest.mark.parametrize("seed", range(40))
def test_matches_highs_on_random_feasible(seed):
    rng = np.random.default_rng(seed)
    lp = _random_lp(rng, rng.integers(2, 9), rng.integers(0, 4), rng.integers(0, 6))
    ours, ref = solve(lp), lp_by_highs(lp)
    assert ref.status == 0
    assert ours.status == "optimal"
    assert ours.objective == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
    # strong duality with our dual certificate
    assert ours.dual_objective == pytest.approx(ours.objective, abs=1e-7, rel=1e-7)
    assert ours.primal_residual < 1e-8


def test_beale_cycling_example_terminates():
    c = [-0.75, 20, -0.5, 6]
    A_ub = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    sol = solve(LinearProgram(c, A_ub=A_ub, b_ub=[0, 0, 1]))
    assert sol.optimal
    assert sol.objective == pytest.approx(-1.25)


def test_infeasible_and_unbounded():
    inf = LinearProgram([1, 1], A_eq=[[1, 1]], b_eq=[-1])
    assert solve(inf).status == "infeasible"
    unb = LinearProgram([-1, 0], A_ub=[[0, 1]], b_ub=[1])
    assert solve(unb).status == "unbounded"


def test_equality_with_redundant_rows():
    A = [[1, 1, 0], [2, 2, 0], [0, 1, 1]]
    sol = solve(LinearProgram([1, 2, 3], A_eq=A, b_eq=[1, 2, 1]))
    assert sol.optimal
    assert sol.objective == pytest.approx(2.0)
    np.testing.assert_allclose(sol.x, [0, 1, 0], atol=1e-9)


def test_dimension_errors():
    with pytest.raises(ValueError):
        LinearProgram([1, 2], A_eq=[[1, 2, 3]], b_eq=[1])
    with pytest.raises(ValueError):
        LinearProgram([1, 2], A_ub=[[1, 2]], b_ub=[1, 2])
    with pytest.raises(ValueError):
        LinearProgram([1, np.nan])
    with pytest.raises(ValueError):
        LinearProgram([1, 2], lb=[0, 1], ub=[1, 0])


def test_nonzero_lower_bounds():
    sol = solve(LinearProgram([1, 1], A_ub=[[-1, -1]], b_ub=[-3], lb=[1, 0.5], ub=[np.inf, 1]))
    assert sol.optimal
    assert sol.objective == pytest.approx(3.0)
    assert sol.x[0] >= 1 - 1e-12 and 0.5 - 1e-12 <= sol.x[1] <= 1 + 1e-12


def test_mps_export_sections():
    lp = LinearProgram([1, -2], A_eq=[[1, 1]], b_eq=[1], A_ub=[[1, 0]], b_ub=[0.5])
    text = to_mps(lp)
    for sec in ("NAME", "ROWS", "COLUMNS", "RHS", "ENDATA"):
        assert sec in text


def test_tolerances_are_documented_constants():
    assert lpmod.FEAS_TOL <= 1e-8 and lpmod.OPT_TOL <= 1e-8


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 5),
    st.integers(0, 3),
    st.integers(0, 4),
    st.integers(0, 2**32 - 1),
)
def test_property_agrees_with_highs(n, m_eq, m_ub, seed):
    rng = np.random.default_rng(seed)
    # integer data make degenerate vertices common
    A_eq = rng.integers(-2, 3, size=(m_eq, n)).astype(float)
    A_ub = rng.integers(-2, 3, size=(m_ub, n)).astype(float)
    b_eq = rng.integers(-2, 3, size=m_eq).astype(float)
    b_ub = rng.integers(-2, 3, size=m_ub).astype(float)
    c = rng.integers(-3, 4, size=n).astype(float)
    lp = LinearProgram(c, A_eq, b_eq, A_ub, b_ub, ub=np.full(n, 4.0))
    ours, ref = solve(lp), lp_by_highs(lp)
    if ref.status == 2:
        assert ours.status == "infeasible"
    else:
        assert ref.status == 0
        assert ours.status == "optimal"
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)
        assert ours.dual_objective == pytest.approx(ours.objective, abs=1e-7)
