"""Simplex core tests: hand instances, vertex-enumeration oracle, duality."""

import itertools

import numpy as np
import pytest
from scipy.optimize import linprog as scipy_linprog

from bankfrontier.errors import DimensionError, InputError
from bankfrontier.lp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    dump_program,
    solve,
)


def test_single_variable_lower_bound():
    # minimize x subject to x >= 1, x otherwise free
    lp = LinearProgram(
        c=[1.0], a=[[1.0]], senses=(">=",), b=[1.0],
        lower=np.array([-np.inf]), upper=np.array([np.inf]),
    )
    sol = solve(lp)
    assert sol.status == OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-9)
    assert sol.primal_values[0] == pytest.approx(1.0, abs=1e-9)


def test_contradictory_constraints_infeasible():
    lp = LinearProgram(c=[1.0], a=[[1.0]], senses=("<=",), b=[-1.0])
    assert solve(lp).status == INFEASIBLE


def test_two_variable_box():
    lp = LinearProgram(
        c=[-1.0, -1.0],
        a=[[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
        senses=("<=", "<=", "<="),
        b=[4.0, 3.0, 3.0],
    )
    sol = solve(lp)
    assert sol.status == OPTIMAL
    assert sol.objective_value == pytest.approx(-4.0, abs=1e-9)
    assert sol.primal_values.sum() == pytest.approx(4.0, abs=1e-9)


def test_unbounded_detected():
    lp = LinearProgram(c=[-1.0], a=[[1.0]], senses=(">=",), b=[0.0])
    assert solve(lp).status == UNBOUNDED


def test_maximize_sense():
    lp = LinearProgram(
        c=[3.0, 2.0],
        a=[[1.0, 1.0], [2.0, 1.0]],
        senses=("<=", "<="),
        b=[4.0, 6.0],
        maximize=True,
    )
    sol = solve(lp)
    assert sol.status == OPTIMAL
    assert sol.objective_value == pytest.approx(10.0, abs=1e-8)


def test_equality_and_free_variable():
    # min y s.t. x + y = 2, x <= 1, x free: optimum at x=1, y=1... but x free
    # and unpenalized with x <= 1 only means x can rise to 1; y = 2 - x >= 1.
    lp = LinearProgram(
        c=[0.0, 1.0],
        a=[[1.0, 1.0], [1.0, 0.0]],
        senses=("=", "<="),
        b=[2.0, 1.0],
        lower=np.array([-np.inf, 0.0]),
    )
    sol = solve(lp)
    assert sol.status == OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-9)


def test_double_bounded_variable():
    lp = LinearProgram(
        c=[-1.0], a=np.zeros((0, 1)), senses=(), b=[],
        lower=np.array([0.5]), upper=np.array([2.5]),
    )
    sol = solve(lp)
    assert sol.status == OPTIMAL
    assert sol.primal_values[0] == pytest.approx(2.5, abs=1e-9)


def test_dimension_error():
    with pytest.raises(DimensionError):
        LinearProgram(c=[1.0, 2.0], a=[[1.0]], senses=("<=",), b=[1.0])


def test_nonfinite_error():
    with pytest.raises(InputError):
        LinearProgram(c=[np.nan], a=[[1.0]], senses=("<=",), b=[1.0])
    with pytest.raises(InputError):
        LinearProgram(c=[1.0], a=[[np.inf]], senses=("<=",), b=[1.0])


def test_bound_order_error():
    with pytest.raises(InputError):
        LinearProgram(
            c=[1.0], a=[[1.0]], senses=("<=",), b=[1.0],
            lower=np.array([2.0]), upper=np.array([1.0]),
        )


def test_dump_program_mentions_sense():
    lp = LinearProgram(c=[1.0], a=[[1.0]], senses=(">=",), b=[1.0])
    text = dump_program(lp)
    assert "minimize" in text and ">=" in text


def _vertex_oracle_2d(c, a, b):
    """Enumerate intersections of constraint pairs (plus axes) of a 2-D
    system a @ x <= b, x >= 0; return the minimal feasible objective."""
    rows = [np.asarray(r, dtype=float) for r in a] + [
        np.array([-1.0, 0.0]),
        np.array([0.0, -1.0]),
    ]
    rhs = list(b) + [0.0, 0.0]
    best = None
    for (i, j) in itertools.combinations(range(len(rows)), 2):
        mat = np.vstack([rows[i], rows[j]])
        if abs(np.linalg.det(mat)) < 1e-12:
            continue
        pt = np.linalg.solve(mat, np.array([rhs[i], rhs[j]]))
        ok = all(rows[k] @ pt <= rhs[k] + 1e-9 for k in range(len(rows)))
        if ok:
            val = float(np.dot(c, pt))
            best = val if best is None else min(best, val)
    return best


def test_vertex_enumeration_oracle_random_2d():
    rng = np.random.default_rng(42)
    for _ in range(40):
        a = rng.uniform(0.1, 2.0, size=(4, 2))
        b = rng.uniform(1.0, 5.0, size=4)
        c = rng.uniform(-2.0, 2.0, size=2)
        lp = LinearProgram(c=c, a=a, senses=("<=",) * 4, b=b)
        sol = solve(lp)
        assert sol.status == OPTIMAL
        oracle = _vertex_oracle_2d(c, a, b)
        assert sol.objective_value == pytest.approx(oracle, abs=1e-7)


def test_duality_gap_zero_on_random_feasible_lps():
    """Primal min c@x s.t. Ax >= b, x >= 0 versus its explicitly built dual
    max b@y s.t. A'y <= c, y >= 0."""
    rng = np.random.default_rng(7)
    for _ in range(30):
        m, n = rng.integers(2, 6), rng.integers(2, 6)
        a = rng.uniform(0.2, 3.0, size=(m, n))
        x0 = rng.uniform(0.5, 2.0, size=n)
        b = a @ x0 - rng.uniform(0.1, 1.0, size=m)   # x0 strictly feasible
        c = rng.uniform(0.1, 2.0, size=n)            # bounded below
        primal = solve(LinearProgram(c=c, a=a, senses=(">=",) * m, b=b))
        dual = solve(
            LinearProgram(c=b, a=a.T, senses=("<=",) * n, b=c, maximize=True)
        )
        assert primal.status == OPTIMAL and dual.status == OPTIMAL
        assert primal.objective_value == pytest.approx(
            dual.objective_value, abs=1e-6, rel=1e-6
        )


def test_row_scaling_invariance():
    rng = np.random.default_rng(11)
    a = rng.uniform(0.2, 2.0, size=(3, 3))
    b = a @ np.ones(3)
    c = rng.uniform(0.1, 1.0, size=3)
    base = solve(LinearProgram(c=c, a=a, senses=(">=",) * 3, b=b))
    scales = np.array([3.7, 0.04, 12.0])
    scaled = solve(
        LinearProgram(c=c, a=a * scales[:, None], senses=(">=",) * 3, b=b * scales)
    )
    assert base.status == scaled.status == OPTIMAL
    assert np.allclose(base.primal_values, scaled.primal_values, atol=1e-8)
    assert scaled.objective_value == pytest.approx(base.objective_value, abs=1e-8)


def test_column_permutation_invariance():
    rng = np.random.default_rng(13)
    n, m = 5, 4
    a = rng.uniform(0.2, 2.0, size=(m, n))
    b = a @ np.full(n, 0.8)
    c = rng.uniform(0.1, 1.0, size=n)
    base = solve(LinearProgram(c=c, a=a, senses=(">=",) * m, b=b))
    perm = rng.permutation(n)
    permuted = solve(LinearProgram(c=c[perm], a=a[:, perm], senses=(">=",) * m, b=b))
    assert permuted.objective_value == pytest.approx(base.objective_value, abs=1e-8)


def test_degenerate_problem_terminates():
    # multiple redundant rows through the optimum exercise the Bland rule
    lp = LinearProgram(
        c=[-1.0, -1.0],
        a=[[1.0, 1.0], [2.0, 2.0], [1.0, 1.0], [1.0, 0.0]],
        senses=("<=", "<=", "<=", "<="),
        b=[2.0, 4.0, 2.0, 2.0],
    )
    sol = solve(lp)
    assert sol.status == OPTIMAL
    assert sol.objective_value == pytest.approx(-2.0, abs=1e-9)


def test_feasibility_of_reported_solutions():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m, n = 4, 5
        a = rng.uniform(-1.0, 2.0, size=(m, n))
        x0 = rng.uniform(0.0, 2.0, size=n)
        b = a @ x0 + rng.uniform(0.0, 0.5, size=m)
        c = rng.uniform(0.0, 2.0, size=n)
        sol = solve(LinearProgram(c=c, a=a, senses=("<=",) * m, b=b))
        assert sol.status == OPTIMAL
        assert np.all(a @ sol.primal_values <= b + 1e-7)
        assert np.all(sol.primal_values >= -1e-9)


def test_against_scipy_on_random_mixed_sense_programs():
    rng = np.random.default_rng(23)
    for _ in range(25):
        m, n = int(rng.integers(2, 5)), int(rng.integers(2, 6))
        a = rng.uniform(-1.5, 2.5, size=(m, n))
        x0 = rng.uniform(0.1, 1.5, size=n)
        senses = tuple(rng.choice(["<=", ">="], size=m))
        slack = rng.uniform(0.05, 0.8, size=m)
        b = a @ x0 + np.where(np.array(senses) == "<=", slack, -slack)
        c = rng.uniform(0.05, 2.0, size=n)
        sol = solve(LinearProgram(c=c, a=a, senses=senses, b=b))
        a_ub, b_ub = [], []
        for i, s in enumerate(senses):
            if s == "<=":
                a_ub.append(a[i])
                b_ub.append(b[i])
            else:
                a_ub.append(-a[i])
                b_ub.append(-b[i])
        ref = scipy_linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                            bounds=[(0, None)] * n, method="highs")
        assert sol.status == OPTIMAL
        assert ref.status == 0
        assert sol.objective_value == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
