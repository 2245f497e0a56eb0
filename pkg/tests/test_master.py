import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksip.cuts import Cut
from ksip.master import AttackerPolytope, is_feasible, solve_master
from ksip.oracle import attacks


def random_pool(rng, n, k, size, X):
    pool = []
    feasible = list(X.enumerate())
    for _ in range(size):
        coef = np.where(rng.random((k, n)) < 0.6, rng.integers(0, 50, (k, n)), 0).astype(float)
        g = feasible[rng.integers(len(feasible))]
        pool.append(Cut(float(rng.integers(20, 200)), coef, "T3", tuple(g.reshape(-1))))
    return pool


def enumerate_optimum(pool, n, k, budgets):
    best_v, best_x = math.inf, None
    for x in attacks(n, k, budgets):
        v = max(c.rhs(x) for c in pool)
        flat = tuple(x.reshape(-1))
        if v < best_v - 1e-9 or (abs(v - best_v) <= 1e-9 and flat < best_x):
            best_v, best_x = v, flat
    return best_v, np.array(best_x).reshape(k, n)


def test_polytope_size_matches_enumeration():
    for n, k, budgets in [(5, 1, (2,)), (5, 2, (1, 2)), (6, 2, (2, 2)), (4, 2, (0, 3))]:
        X = AttackerPolytope(n, k, budgets)
        listed = list(X.enumerate())
        assert X.size() == len(listed) == sum(1 for _ in attacks(n, k, budgets))
        assert all(is_feasible(x, X) for x in listed)


def test_is_feasible_cases():
    X = AttackerPolytope(4, 2, (1, 2))
    assert is_feasible(np.zeros((2, 4), dtype=int), X)
    both = np.zeros((2, 4), dtype=int)
    both[:, 1] = 1
    assert not is_feasible(both, X)
    over = np.zeros((2, 4), dtype=int)
    over[0, :2] = 1
    assert not is_feasible(over, X)
    assert not is_feasible(np.full((2, 4), 0.5), X)


def test_single_cut_n5_k2():
    rng = np.random.default_rng(1)
    X = AttackerPolytope(5, 2, (2, 1))
    coef = rng.integers(1, 30, (2, 5)).astype(float)
    pool = [Cut(100.0, coef, "T1", (0,) * 10)]
    best, x_best = enumerate_optimum(pool, 5, 2, (2, 1))
    for engine in ("dual", "primal"):
        res = solve_master(pool, X, engine=engine)
        assert res.eta == pytest.approx(best)
        assert np.array_equal(res.x, x_best)


def test_zero_coefficients_give_zero_attack():
    X = AttackerPolytope(4, 1, (2,))
    pool = [Cut(c, np.zeros((1, 4)), "T1", (0,) * 4) for c in (3.0, 7.0, 5.0)]
    res = solve_master(pool, X)
    assert res.eta == 7.0 and not res.x.any()


def test_zero_budget_forces_zero():
    X = AttackerPolytope(4, 2, (0, 0))
    pool = [Cut(10.0, np.ones((2, 4)), "T1", (0,) * 8), Cut(6.0, np.full((2, 4), 3.0), "T1", (0,) * 8)]
    res = solve_master(pool, X)
    assert res.eta == 10.0 and not res.x.any()


def test_empty_pool_unbounded():
    assert solve_master([], AttackerPolytope(3, 1, (1,))).status == "unbounded"


def test_shape_mismatch():
    with pytest.raises(ValueError):
        solve_master([Cut(1.0, np.zeros((1, 3)), "T1", (0,) * 3)], AttackerPolytope(4, 1, (1,)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 6), k=st.integers(1, 2), size=st.integers(1, 12), data=st.data())
def test_engines_match_enumeration(seed, n, k, size, data):
    rng = np.random.default_rng(seed)
    budgets = tuple(data.draw(st.integers(0, 3)) for _ in range(k))
    X = AttackerPolytope(n, k, budgets)
    pool = random_pool(rng, n, k, size, X)
    best, x_best = enumerate_optimum(pool, n, k, budgets)
    for engine in ("dual", "primal"):
        res = solve_master(pool, X, engine=engine)
        assert res.status == "optimal"
        assert is_feasible(res.x, X)
        assert res.eta == pytest.approx(best, abs=1e-9)
        assert np.array_equal(res.x, x_best)


def test_larger_pool_engines_agree():
    rng = np.random.default_rng(77)
    X = AttackerPolytope(20, 1, (4,))
    pool = random_pool(rng, 20, 1, 25, X)
    a = solve_master(pool, X, engine="dual")
    b = solve_master(pool, X, engine="primal")
    assert a.eta == pytest.approx(b.eta, abs=1e-9)
    assert np.array_equal(a.x, b.x)
