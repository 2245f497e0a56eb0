"""Exhaustive reference implementations for small instances.

Nothing here reuses the solver's evaluation, search, cut or LP code: the
objective is recomputed from the raw instance data, defender and attacker
problems are solved by enumeration, and extremal distributions come from
vertex enumeration (moment sets) or from the breakpoints of the
one-dimensional Lagrangian dual (Wasserstein balls).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from ksip.core import GuardError

DEFENDER_GUARD = 100_000
ATTACK_GUARD = 100_000
SCENARIO_GUARD = 6


class BruteSolution:
    """Minimal result record (kept apart from the solver's own types)."""

    def __init__(self, assignment, value):
        self.assignment = tuple(int(a) for a in assignment)
        self.value = float(value)

    def __repr__(self):
        return f"BruteSolution({self.assignment}, {self.value!r})"


def _all_assignments(n, k):
    return np.array(list(itertools.product(range(k + 1), repeat=n)), dtype=np.int64).reshape(-1, n)


def _coverage_profit(coordinates, rewards, radii):
    """``P[t, j, i]``: reward at site i from a type-t sensor at j (t = 0 means none)."""
    pts = [tuple(map(float, c)) for c in coordinates]
    n = len(pts)
    rewards = np.asarray(rewards, dtype=float).reshape(n, -1)
    k = len(radii)
    P = np.zeros((k + 1, n, n))
    for t in range(1, k + 1):
        for j in range(n):
            for i in range(n):
                if math.hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]) <= radii[t - 1]:
                    P[t, j, i] = rewards[i, t - 1]
    return P


def _similarity_profit(W):
    W = np.asarray(W, dtype=float)
    P = np.zeros((2,) + W.shape)
    P[1] = W.T  # a selected feature j scores w[i, j] at feature i
    return P


def _profit_of(oracle):
    if hasattr(oracle, "W"):
        return _similarity_profit(oracle.W)
    if hasattr(oracle, "coordinates"):
        return _coverage_profit(oracle.coordinates, oracle.rewards, oracle.radii)
    return None


def tuple_values(profit, tuples):
    """Objective of every assignment row in ``tuples``."""
    n = tuples.shape[1]
    picked = profit[tuples, np.arange(n)[None, :], :]  # (T, j, i)
    return picked.max(axis=1).sum(axis=1)


def brute_defender(p) -> BruteSolution:
    """Exact defender optimum over every feasible tuple.

    ``p`` is a defender problem with ``oracle``, ``budgets`` and ``blocked``
    (pairs ``(q, i)``, q 1-based).  The objective is rebuilt from the
    oracle's raw data when it is a coverage or similarity objective.
    """
    f = p.oracle
    n, k = f.ground.n, f.ground.k
    if (k + 1) ** n > DEFENDER_GUARD:
        raise GuardError(f"(k+1)^n = {(k + 1) ** n} exceeds the defender guard {DEFENDER_GUARD}")
    T = _all_assignments(n, k)
    profit = _profit_of(f)
    if profit is not None:
        values = tuple_values(profit, T)
    else:
        from ksip.core import KTuple
        values = np.array([f.evaluate(KTuple(t, k)) for t in T])
    ok = _feasible(T, k, p.budgets, _blocked_matrix(p.blocked, k, n))
    idx = np.flatnonzero(ok)
    best = idx[np.argmax(values[idx])]
    return BruteSolution(T[best], values[best])


def _blocked_matrix(blocked, k, n):
    B = np.zeros((k + 1, n), dtype=bool)
    for q, i in blocked:
        B[q, i] = True
    return B


def _feasible(T, k, budgets, B):
    n = T.shape[1]
    ok = ~B[T, np.arange(n)[None, :]].any(axis=1)
    for q in range(1, k + 1):
        ok &= (T == q).sum(axis=1) <= budgets[q - 1]
    return ok


def attacks(n, k, budgets):
    """Every feasible attack as a ``(k, n)`` 0/1 array, from a plain product."""
    size = sum(1 for _ in _attack_codes(n, k, budgets))
    if size > ATTACK_GUARD:
        raise GuardError(f"{size} attacks exceed the guard {ATTACK_GUARD}")
    for code in _attack_codes(n, k, budgets):
        x = np.zeros((k, n), dtype=np.int64)
        for i, t in enumerate(code):
            if t:
                x[t - 1, i] = 1
        yield x


def _attack_codes(n, k, budgets):
    for code in itertools.product(range(k + 1), repeat=n):
        if all(code.count(q) <= budgets[q - 1] for q in range(1, k + 1)):
            yield code


# -- extremal distributions ------------------------------------------------

def _moment_vertices(xi, epsilon):
    xi = np.asarray(xi, dtype=float)
    W, n = xi.shape
    m = xi.mean(axis=0)
    lo, hi = (1 - epsilon) * m, (1 + epsilon) * m
    # inequalities G p <= h
    G = np.vstack([-np.eye(W), -xi.T, xi.T])
    h = np.concatenate([np.zeros(W), -lo, hi])
    combos = math.comb(G.shape[0], W - 1)
    if combos > 2_000_000:
        raise GuardError(f"{combos} active sets exceed the vertex enumeration guard")
    verts = []
    for active in itertools.combinations(range(G.shape[0]), W - 1):
        A = np.vstack([np.ones(W), G[list(active)]])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        p = np.linalg.solve(A, np.concatenate([[1.0], h[list(active)]]))
        if np.all(G @ p <= h + 1e-9):
            verts.append(p)
    if not verts:
        raise ValueError("moment set is empty")
    return np.array(verts)


def _wasserstein_max(values, reference, d, epsilon):
    """``max sum_ij v_ij c_i`` over plans from ``reference`` with cost ``<= epsilon``.

    By LP duality this equals ``min_{lam >= 0} lam*eps + sum_j p*_j max_i (c_i - lam*d_ij)``,
    a convex piecewise-linear function whose minimum sits at 0 or a breakpoint.
    """
    c = np.asarray(values, dtype=float)
    ref = np.asarray(reference, dtype=float)
    W = c.size

    def g(lam):
        return lam * epsilon + float(ref @ (c[:, None] - lam * d).max(axis=0))

    cands = {0.0}
    for j in range(W):
        for a in range(W):
            for b in range(W):
                if d[a, j] != d[b, j]:
                    lam = (c[a] - c[b]) / (d[a, j] - d[b, j])
                    if lam > 0:
                        cands.add(lam)
    return min(g(lam) for lam in cands)


def vertex_extremes(aset, values):
    """``(min, max)`` of ``sum_w p_w values_w`` over an ambiguity set, by enumeration."""
    c = np.asarray(values, dtype=float)
    kind = type(aset).__name__
    if aset.size > SCENARIO_GUARD:
        raise GuardError(f"{aset.size} scenarios exceed the guard {SCENARIO_GUARD}")
    if kind == "SingletonSet":
        v = float(np.dot(aset.reference.p, c))
        return v, v
    if kind == "MomentMatchingSet":
        V = _moment_vertices(aset.xi, aset.epsilon) @ c
        return float(V.min()), float(V.max())
    if kind == "WassersteinSet":
        d, ref = np.asarray(aset.distances, dtype=float), aset.reference.p
        return -_wasserstein_max(-c, ref, d, aset.epsilon), _wasserstein_max(c, ref, d, aset.epsilon)
    raise TypeError(f"no enumeration for {kind}")


def _lp_extremes(aset, values):
    """Fallback for more scenarios: solve the separation LP with HiGHS directly."""
    c = np.asarray(values, dtype=float)
    W = c.size
    kind = type(aset).__name__
    if kind == "SingletonSet":
        v = float(np.dot(aset.reference.p, c))
        return v, v
    if kind == "WassersteinSet":
        d, ref = np.asarray(aset.distances, dtype=float), aset.reference.p
        return -_wasserstein_max(-c, ref, d, aset.epsilon), _wasserstein_max(c, ref, d, aset.epsilon)
    xi = np.asarray(aset.xi, dtype=float)
    m = xi.mean(axis=0)
    A_ub = np.vstack([-xi.T, xi.T])
    b_ub = np.concatenate([-(1 - aset.epsilon) * m, (1 + aset.epsilon) * m])
    out = []
    for sign in (1.0, -1.0):
        r = linprog(sign * c, A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, W)), b_eq=[1.0], bounds=(0, None), method="highs")
        if r.status != 0:
            raise RuntimeError(f"reference LP failed: {r.message}")
        out.append(sign * r.fun)
    return out[0], out[1]


# -- min-max -------------------------------------------------------------

def _model(instance, variant):
    d = instance.oracle_data
    n, k = instance.n, instance.k
    if instance.kind == "coverage":
        P = _coverage_profit(d["coordinates"], d["mu"], d["radii"])
        profits = [P] * instance.n_scenarios
    else:
        profits = [_similarity_profit(W) for W in d["W"]]
    xi = np.asarray(instance.xi)
    ref = np.asarray(instance.reference_p.p)
    if variant == "deterministic":
        return profits[:1], np.ones((1, n), dtype=np.int64), np.ones(1)
    return profits, xi, ref


def phi_table(instance, variant, ambiguity=None):
    """``[(x, Phi(x))]`` for every feasible attack ``x``."""
    n, k = instance.n, instance.k
    if (k + 1) ** n > DEFENDER_GUARD:
        raise GuardError(f"(k+1)^n = {(k + 1) ** n} exceeds the defender guard {DEFENDER_GUARD}")
    profits, xi, ref = _model(instance, variant)
    if variant in ("dra", "drr"):
        aset = instance.ambiguity_set(ambiguity if ambiguity is not None else instance.ambiguity)
        extremes = vertex_extremes if aset.size <= SCENARIO_GUARD else _lp_extremes
    T = _all_assignments(n, k)
    values = {}
    for P in profits:
        if id(P) not in values:
            values[id(P)] = tuple_values(P, T)
    base_ok = _feasible(T, k, instance.defend_budgets, np.zeros((k + 1, n), dtype=bool))
    memo = {}
    table = []
    for x in attacks(n, k, instance.attack_budgets):
        Q = np.empty(len(profits))
        for w, P in enumerate(profits):
            B = np.zeros((k + 1, n), dtype=bool)
            B[1:] = (x * xi[w][None, :]).astype(bool)
            key = (id(P), B.tobytes())
            if key not in memo:
                ok = base_ok & ~B[T, np.arange(n)[None, :]].any(axis=1)
                memo[key] = float(values[id(P)][ok].max())
            Q[w] = memo[key]
        if variant in ("deterministic", "risk_neutral"):
            phi = float(ref @ Q)
        else:
            lo, hi = extremes(aset, Q)
            phi = hi if variant == "dra" else lo
        table.append((x, phi))
    return table


def brute_minmax(instance, variant, ambiguity=None):
    """``(x*, value)`` minimizing the attacker value over every feasible attack."""
    table = phi_table(instance, variant, ambiguity)
    x, v = min(table, key=lambda item: item[1])
    return x, v
