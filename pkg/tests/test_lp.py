import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import vertex_enumeration
from qswitch.lp import (
    FEAS_TOL, INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, MalformedProgramError, lp_feasible, lp_solve,
)


def test_unit_simplex_vertex():
    sol = lp_solve(LinearProgram([1, 0], [[1, 1]], [1], ["<="], maximize=True))
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.x, [1, 0], atol=1e-12)
    assert sol.objective == pytest.approx(1.0)


def test_infeasible_rows():
    p = LinearProgram([1], [[1], [1]], [1, 2], ["<=", ">="])
    assert lp_solve(p).status == INFEASIBLE
    assert not lp_feasible(p)


def test_unbounded():
    assert lp_solve(LinearProgram([1, 1], [[1, -1]], [1], ["<="], maximize=True)).status == UNBOUNDED


def test_equality_and_bounds():
    # min x + 2y  s.t.  x + y == 3, 0 <= x <= 1, y free
    p = LinearProgram([1, 2], [[1, 1]], [3], ["=="], lower=[0, -np.inf], upper=[1, np.inf])
    sol = lp_solve(p)
    np.testing.assert_allclose(sol.x, [1, 2], atol=1e-10)
    assert sol.objective == pytest.approx(5.0)


def test_free_variable_can_go_negative():
    sol = lp_solve(LinearProgram([1], [[1]], [-4], [">="], lower=[-np.inf]))
    assert sol.x[0] == pytest.approx(-4.0)


def test_duals_satisfy_strong_duality():
    # max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
    p = LinearProgram([3, 2], [[1, 1], [1, 3], [1, 0]], [4, 6, 3], "<=", maximize=True)
    sol = lp_solve(p)
    assert sol.objective == pytest.approx(11.0)
    assert sol.duals @ p.g == pytest.approx(sol.objective)
    assert (sol.duals >= -1e-12).all()


def test_degenerate_program_terminates():
    # a classic cycling example under the largest-coefficient rule
    c = [-0.75, 150, -1 / 50, 6]
    G = [[0.25, -60, -1 / 25, 9], [0.5, -90, -1 / 50, 3], [0, 0, 1, 0]]
    sol = lp_solve(LinearProgram(c, G, [0, 0, 1], "<="))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(-0.05)


@pytest.mark.parametrize("kw", [
    dict(c=[1, 2], G=[[1]], g=[1], senses=["<="]),
    dict(c=[1], G=[[1]], g=[1, 2], senses=["<="]),
    dict(c=[1], G=[[1]], g=[1], senses=["<>"]),
    dict(c=[1], G=[[np.nan]], g=[1], senses=["<="]),
    dict(c=[1], G=[[1]], g=[1], senses=["<="], lower=[np.inf]),
])
def test_malformed(kw):
    with pytest.raises(MalformedProgramError):
        LinearProgram(**kw)


def test_empty_constraint_set():
    sol = lp_solve(LinearProgram([1, 1], np.zeros((0, 2)), [], []))
    assert sol.status == OPTIMAL and sol.objective == 0.0


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_matches_vertex_enumeration(data):
    n = data.draw(st.integers(1, 4))
    m = data.draw(st.integers(1, 5))
    num = st.integers(-9, 9)
    G = np.array(data.draw(st.lists(st.lists(num, min_size=n, max_size=n), min_size=m, max_size=m)), float)
    g = np.array(data.draw(st.lists(st.integers(-3, 9), min_size=m, max_size=m)), float)
    c = np.array(data.draw(st.lists(num, min_size=n, max_size=n)), float)
    # a box keeps every instance bounded so the oracle is exact
    G = np.vstack([G, np.eye(n)])
    g = np.concatenate([g, np.full(n, 10.0)])
    senses = ["<="] * (m + n)
    sol = lp_solve(LinearProgram(c, G, g, senses, maximize=True))
    v, _ = vertex_enumeration(c, G, g, senses, 1e3)
    if v is None:
        assert sol.status == INFEASIBLE
    else:
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(v, abs=1e-6)
        assert LinearProgram(c, G, g, senses).residuals(sol.x).max() <= 10 * FEAS_TOL * 10


def test_agrees_with_scipy_on_random_programs():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(0)
    for _ in range(100):
        n, m = rng.integers(2, 8), rng.integers(2, 8)
        G = rng.normal(size=(m, n))
        g = rng.uniform(0, 2, size=m)
        c = rng.normal(size=n)
        ub = rng.uniform(0.5, 3, size=n)
        mine = lp_solve(LinearProgram(c, G, g, "<=", upper=ub))
        ref = scipy_opt.linprog(c, A_ub=G, b_ub=g, bounds=list(zip(np.zeros(n), ub)), method="highs")
        assert mine.optimal and ref.status == 0
        assert mine.objective == pytest.approx(ref.fun, abs=1e-7)
