"""Exact maximization of a monotone k-submodular function under interdiction.

The defender picks disjoint sets ``(S_1, ..., S_k)`` with ``|S_q| <= D_q``
and never uses a blocked (type, item) pair.  :func:`solve_exact` is a
best-first branch-and-bound whose node bound is the additive marginal-gain
bound for monotone k-submodular functions: from a partial tuple Z, any
completion Y satisfies ``f(Y) <= f(Z) + sum_{i in Y \\ Z} rho_{q(i), i}(Z)``.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from ksip.core import FunctionOracle, KTuple, PreconditionError

DEFAULT_NODE_LIMIT = 10_000_000


class NodeLimitError(RuntimeError):
    """Search stopped early; carries the best incumbent and the open bound."""

    def __init__(self, message, incumbent: "DefenderSolution", bound: float):
        super().__init__(message)
        self.incumbent = incumbent
        self.bound = bound


@dataclass(frozen=True)
class DefenderProblem:
    oracle: FunctionOracle
    budgets: tuple[int, ...]
    blocked: frozenset = field(default_factory=frozenset)  # {(q, i)}, q 1-based

    def __post_init__(self):
        k, n = self.oracle.ground.k, self.oracle.ground.n
        object.__setattr__(self, "budgets", tuple(int(d) for d in self.budgets))
        object.__setattr__(self, "blocked", frozenset((int(q), int(i)) for q, i in self.blocked))
        if len(self.budgets) != k or any(d < 0 for d in self.budgets):
            raise ValueError(f"need {k} nonnegative defender budgets, got {self.budgets}")
        for q, i in self.blocked:
            if not (1 <= q <= k and 0 <= i < n):
                raise ValueError(f"blocked pair {(q, i)} out of range")

    def allowed_mask(self) -> np.ndarray:
        k, n = self.oracle.ground.k, self.oracle.ground.n
        mask = np.ones((k, n), dtype=bool)
        for q, i in self.blocked:
            mask[q - 1, i] = False
        return mask

    def is_feasible(self, S: KTuple) -> bool:
        if any(S.assignment[i] == q for q, i in self.blocked):
            return False
        return all(S.size(q) <= d for q, d in enumerate(self.budgets, start=1))


@dataclass
class DefenderSolution:
    S: KTuple
    value: float
    nodes: int = 0
    root_bound: float = float("nan")
    method: str = "exact"


def _top_sum(G: np.ndarray, admissible: np.ndarray, residual) -> float:
    """Sum over types of the ``residual[q]`` largest admissible positive gains."""
    total = 0.0
    for q, r in enumerate(residual):
        if r <= 0:
            continue
        g = G[q][admissible[q]]
        if g.size == 0:
            continue
        if g.size > r:
            g = np.partition(g, g.size - r)[g.size - r:]
        total += float(g.sum())
    return total


def _admissible(G, allowed, decided, residual, tol):
    adm = allowed & ~decided[None, :] & (np.asarray(residual)[:, None] > 0)
    with np.errstate(invalid="ignore"):
        adm &= G > tol
    return adm


def lemma9_bound(f: FunctionOracle, partial: KTuple, residual, blocked=frozenset(), excluded=()) -> float:
    """Upper bound on ``f`` over completions of ``partial``.

    ``f(partial)`` plus, for each type, the ``residual[q]`` largest marginal
    gains at ``partial`` among unassigned, unblocked, non-excluded items.
    Requiring items to take a single type is relaxed away.
    """
    f.check_tuple(partial)
    k, n = f.ground.k, f.ground.n
    allowed = np.ones((k, n), dtype=bool)
    for q, i in blocked:
        allowed[q - 1, i] = False
    decided = np.zeros(n, dtype=bool)
    decided[list(excluded)] = True
    state = f.state(partial.assignment)
    G = f.gains(state)
    adm = _admissible(G, allowed, decided, residual, 0.0)
    return f.state_value(state) + _top_sum(G, adm, residual)


def greedy_feasible(p: DefenderProblem, tol: float = 1e-12) -> DefenderSolution:
    """Repeatedly add the admissible (type, item) with the largest positive gain."""
    f = p.oracle
    k, n = f.ground.k, f.ground.n
    allowed = p.allowed_mask()
    residual = list(p.budgets)
    state = f.state((0,) * n)
    decided = np.zeros(n, dtype=bool)
    while True:
        G = f.gains(state)
        adm = _admissible(G, allowed, decided, residual, tol)
        if not adm.any():
            break
        flat = np.where(adm, G, -np.inf).reshape(-1)
        j = int(np.argmax(flat))
        q, i = divmod(j, n)
        state = f.extend(state, q + 1, i)
        decided[i] = True
        residual[q] -= 1
    S = KTuple(f.state_assignment(state), k)
    return DefenderSolution(S, f.evaluate(S), method="greedy")


def solve_exact(
    p: DefenderProblem,
    node_limit: int = DEFAULT_NODE_LIMIT,
    order: str = "dynamic",
    tol: float = 1e-9,
) -> DefenderSolution:
    """Provably optimal defender response.

    ``order="dynamic"`` branches on the undecided item with the largest
    current admissible gain; ``order="static"`` uses a fixed order by
    ``max_q rho_{q,i}(empty)``.  Ties go to the lower item index.
    Raises :class:`NodeLimitError` when ``node_limit`` nodes are exceeded.
    """
    f = p.oracle
    k, n = f.ground.k, f.ground.n
    allowed = p.allowed_mask()
    warm = greedy_feasible(p)
    best_val, best_assign = warm.value, warm.S.assignment

    state0 = f.state((0,) * n)
    G0 = f.gains(state0)
    decided0 = np.zeros(n, dtype=bool)
    residual0 = tuple(p.budgets)
    adm0 = _admissible(G0, allowed, decided0, residual0, 0.0)
    value0 = f.state_value(state0)
    bound0 = value0 + _top_sum(G0, adm0, residual0)
    if order == "static":
        score = np.where(allowed, np.nan_to_num(G0, nan=0.0), 0.0).max(axis=0)
        rank = np.empty(n, dtype=np.int64)
        rank[np.lexsort((np.arange(n), -score))] = np.arange(n)
    elif order != "dynamic":
        raise ValueError(f"unknown branching order {order!r}")

    counter = itertools.count()
    heap = [(-bound0, next(counter), state0, value0, G0, decided0, residual0)]
    nodes = 0
    root_bound = bound0
    while heap:
        negb, _, state, value, G, decided, residual = heapq.heappop(heap)
        if -negb <= best_val + tol * max(1.0, abs(best_val)):
            heap.clear()
            break
        nodes += 1
        if nodes > node_limit:
            inc = KTuple(best_assign, k)
            raise NodeLimitError(
                f"defender search exceeded {node_limit} nodes", DefenderSolution(inc, best_val, nodes, -negb), -negb
            )
        adm = _admissible(G, allowed, decided, residual, 0.0)
        has = adm.any(axis=0)
        if not has.any():
            continue
        cand = np.flatnonzero(has)
        if order == "dynamic":
            score = np.where(adm, G, -np.inf).max(axis=0)[cand]
            i = int(cand[np.argmax(score)])
        else:
            i = int(cand[np.argmin(rank[cand])])
        dec = decided.copy()
        dec[i] = True
        for q in np.flatnonzero(adm[:, i]):
            child_state = f.extend(state, int(q) + 1, i)
            child_value = value + float(G[q, i])
            res = list(residual)
            res[q] -= 1
            res = tuple(res)
            Gc = f.gains(child_state)
            if child_value > best_val + tol * max(1.0, abs(best_val)):
                child_value = f.state_value(child_state)
                best_val, best_assign = child_value, f.state_assignment(child_state)
            b = child_value + _top_sum(Gc, _admissible(Gc, allowed, dec, res, 0.0), res)
            if b > best_val + tol * max(1.0, abs(best_val)):
                heapq.heappush(heap, (-b, next(counter), child_state, child_value, Gc, dec, res))
        b = value + _top_sum(G, _admissible(G, allowed, dec, residual, 0.0), residual)
        if b > best_val + tol * max(1.0, abs(best_val)):
            heapq.heappush(heap, (-b, next(counter), state, value, G, dec, residual))

    S = KTuple(best_assign, k)
    return DefenderSolution(S, f.evaluate(S), nodes, root_bound)
