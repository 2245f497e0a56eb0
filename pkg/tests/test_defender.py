import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksip.core import CoverageOracle, KTuple, SimilarityOracle
from ksip.defender import DefenderProblem, NodeLimitError, greedy_feasible, lemma9_bound, solve_exact
from ksip.oracle import brute_defender


def coverage(seed, n, k):
    r = np.random.default_rng(seed)
    radii = [3.0] if k == 1 else [2.5, 4.0]
    return CoverageOracle(r.uniform(1, 10, (n, 2)), r.integers(1, 101, (n, k)), radii)


def test_everything_blocked_or_zero_budget():
    f = coverage(1, 5, 2)
    all_pairs = frozenset(itertools.product((1, 2), range(5)))
    for p in (DefenderProblem(f, (2, 2), all_pairs), DefenderProblem(f, (0, 0))):
        for sol in (solve_exact(p), greedy_feasible(p)):
            assert sol.S == KTuple.empty(5, 2) and sol.value == 0.0


def test_full_budget_selects_everything(rng):
    W = rng.uniform(0, 1, (5, 5))
    sol = solve_exact(DefenderProblem(SimilarityOracle(W), (5,)))
    assert sol.value == pytest.approx(W.max(axis=1).sum())


def test_exact_matches_brute_force_n6_k2():
    for seed in range(10):
        f = coverage(100 + seed, 6, 2)
        p = DefenderProblem(f, (2, 2), frozenset({(1, seed % 6), (2, (seed + 2) % 6)}))
        sol = solve_exact(p)
        assert p.is_feasible(sol.S)
        assert sol.value == pytest.approx(brute_defender(p).value, abs=1e-9)


def test_static_and_dynamic_orders_agree():
    for seed in range(5):
        p = DefenderProblem(coverage(seed, 6, 2), (2, 1))
        assert solve_exact(p, order="static").value == pytest.approx(solve_exact(p, order="dynamic").value)


def test_greedy_half_approximation():
    for seed in range(20):
        p = DefenderProblem(coverage(200 + seed, 6, 1 + seed % 2), (2,) * (1 + seed % 2))
        g = greedy_feasible(p)
        assert p.is_feasible(g.S)
        assert g.value >= 0.5 * solve_exact(p).value - 1e-9


def test_greedy_optimal_on_modular():
    # with a diagonal similarity every feature only scores itself, so f is modular
    W = np.diag([5.0, 1.0, 3.0, 4.0])
    p = DefenderProblem(SimilarityOracle(W), (2,))
    assert greedy_feasible(p).value == solve_exact(p).value == 9.0


def test_lemma9_bound_cases():
    f = coverage(7, 5, 2)
    partial = KTuple((1, 0, 0, 2, 0), 2)
    assert lemma9_bound(f, partial, (0, 0)) == pytest.approx(f.evaluate(partial))
    E = KTuple.empty(5, 2)
    g = np.array([[f.evaluate(E.with_item(q, i)) for i in range(5)] for q in (1, 2)])
    expected = np.sort(g[0])[-2:].sum() + np.sort(g[1])[-1:].sum()
    assert lemma9_bound(f, E, (2, 1)) == pytest.approx(expected)


def test_lemma9_bound_dominates_completions():
    """At every partial tuple the bound is at least the best feasible completion."""
    for seed in range(3):
        f = coverage(300 + seed, 5, 2)
        budgets = (2, 1)
        for a in itertools.product(range(3), repeat=5):
            partial = KTuple(a, 2)
            residual = [budgets[q] - partial.size(q + 1) for q in range(2)]
            if min(residual) < 0:
                continue
            best = 0.0
            for b in itertools.product(range(3), repeat=5):
                if any(x and x != y for x, y in zip(a, b)):
                    continue
                full = KTuple(b, 2)
                if all(full.size(q) <= budgets[q - 1] for q in (1, 2)):
                    best = max(best, f.evaluate(full))
            assert lemma9_bound(f, partial, residual) >= best - 1e-9


def test_node_limit_reports_incumbent():
    p = DefenderProblem(coverage(5, 12, 1), (4,))
    with pytest.raises(NodeLimitError) as info:
        solve_exact(p, node_limit=1)
    assert info.value.incumbent.value <= info.value.bound + 1e-9


def test_problem_validation():
    f = coverage(1, 4, 1)
    with pytest.raises(ValueError):
        DefenderProblem(f, (1, 1))
    with pytest.raises(ValueError):
        DefenderProblem(f, (1,), frozenset({(2, 0)}))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6), k=st.integers(1, 2), data=st.data())
def test_exact_equals_enumeration(seed, n, k, data):
    f = coverage(seed, n, k)
    budgets = tuple(data.draw(st.integers(0, 3)) for _ in range(k))
    pairs = list(itertools.product(range(1, k + 1), range(n)))
    blocked = frozenset(data.draw(st.lists(st.sampled_from(pairs), max_size=3)))
    p = DefenderProblem(f, budgets, blocked)
    sol = solve_exact(p)
    assert p.is_feasible(sol.S)
    assert sol.value == pytest.approx(f.evaluate(sol.S))
    assert sol.value == pytest.approx(brute_defender(p).value, abs=1e-9)
