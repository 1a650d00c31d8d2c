import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from vassterm.linalg import SingularSystem, solve
from vassterm.lp import LinearProgram, Status, check_assignment, solve_lp


def test_simple_maximum():
    lp = LinearProgram()
    x = lp.add_var("x")
    lp.add_constraint({x: 1}, "<=", 3)
    lp.maximize({x: 1})
    res = solve_lp(lp)
    assert res.status is Status.OPTIMAL and res.value == 3 and res["x"] == 3


def test_infeasible_and_unbounded():
    lp = LinearProgram()
    x = lp.add_var("x")
    lp.add_constraint({x: 1}, ">=", 1)
    lp.add_constraint({x: 1}, "<=", 0)
    assert solve_lp(lp).status is Status.INFEASIBLE
    lp = LinearProgram()
    x = lp.add_var("x", lower=None)
    lp.minimize({x: 1})
    assert solve_lp(lp).status is Status.UNBOUNDED


def test_free_variables_and_equalities():
    lp = LinearProgram()
    x = lp.add_var("x", lower=None)
    lp.add_var("y", lower=None)
    lp.add_constraint([1, 1], "=", Fraction(1, 3))
    lp.add_constraint([1, -1], ">=", -5)
    lp.minimize({x: 1})
    res = solve_lp(lp)
    assert res.value == Fraction(1, 3 * 2) - Fraction(5, 2)
    assert res["y"] - res["x"] == 5


def test_feasibility_without_objective():
    lp = LinearProgram()
    lp.add_var("a", lower=2)
    lp.add_constraint([1], "<=", 7)
    res = solve_lp(lp)
    assert res.status is Status.FEASIBLE and check_assignment(lp, [res["a"]]) == []


def test_redundant_equalities_are_tolerated():
    lp = LinearProgram()
    a, b = lp.add_var("a"), lp.add_var("b")
    lp.add_constraint({a: 1, b: 1}, "=", 1)
    lp.add_constraint({a: 2, b: 2}, "=", 2)
    lp.maximize({a: 1})
    assert solve_lp(lp).value == 1


def test_bad_rows_rejected():
    lp = LinearProgram()
    lp.add_var("a")
    with pytest.raises(ValueError):
        lp.add_constraint([1], "<", 0)
    lp.add_constraint([1, 2], "<=", 0)
    with pytest.raises(ValueError):
        solve_lp(lp)


def test_solve_linear_system():
    assert solve([[2, 1], [1, 3]], [3, 5]) == [Fraction(4, 5), Fraction(7, 5)]
    assert solve([[1, 0], [0, 2]], [(1, 2), (4, 6)]) == [(1, 2), (2, 3)]
    with pytest.raises(SingularSystem):
        solve([[1, 2], [2, 4]], [1, 2])


def vertex_optimum(rows, rhs, cost):
    """Best vertex of {x >= 0, rows x <= rhs} by enumerating tight subsets."""
    n = len(cost)
    cons = [(r, b) for r, b in zip(rows, rhs)] + [([-int(i == j) for j in range(n)], 0) for i in range(n)]
    best = None
    for subset in itertools.combinations(cons, n):
        try:
            x = solve([r for r, _ in subset], [b for _, b in subset])
        except SingularSystem:
            continue
        if all(sum(Fraction(a) * v for a, v in zip(r, x)) <= b for r, b in cons):
            val = sum(Fraction(c) * v for c, v in zip(cost, x))
            best = val if best is None else max(best, val)
    return best


@settings(max_examples=120, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 9))
def test_simplex_matches_vertex_enumeration(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    m = rng.randint(1, 4)
    rows = [[Fraction(rng.randint(-4, 4), rng.randint(1, 3)) for _ in range(n)] for _ in range(m)]
    rhs = [Fraction(rng.randint(-3, 6)) for _ in range(m)]
    # a box keeps every instance bounded
    rows += [[int(i == j) for j in range(n)] for i in range(n)]
    rhs += [Fraction(rng.randint(1, 5))] * n
    cost = [Fraction(rng.randint(-3, 3)) for _ in range(n)]
    lp = LinearProgram()
    xs = [lp.add_var(f"x{i}") for i in range(n)]
    for r, b in zip(rows, rhs):
        lp.add_constraint(r, "<=", b)
    lp.maximize(cost)
    res = solve_lp(lp)
    expected = vertex_optimum(rows, rhs, cost)
    if expected is None:
        assert res.status is Status.INFEASIBLE
    else:
        assert res.status is Status.OPTIMAL
        assert res.value == expected
        assert check_assignment(lp, [res[f"x{i}"] for i in range(len(xs))]) == []
