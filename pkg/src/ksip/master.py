"""Attacker master problem: ``min eta`` over the cut pool and the attack polytope.

The attack polytope holds binary ``x[q, i]`` with at most ``A_q`` attacks of
type q and at most one type per item.  The master is solved by best-first
branch-and-bound on LP relaxations, then polished to the lexicographically
smallest optimal attack so that runs are reproducible.

Node relaxations differ from their parent only in variable bounds, so the
default engine is a bounded dual simplex warm-started from the parent's
optimal basis.  Every node result is re-verified on a freshly inverted
basis; anything doubtful is re-solved from scratch with :func:`ksip.lp.solve_lp`,
which is also available directly as ``engine="primal"``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ksip.cuts import Cut
from ksip.lp import GE, LE, LinearProgram, solve_lp

INT_TOL = 1e-6


class MasterError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackerPolytope:
    n: int
    k: int
    budgets: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(a) for a in self.budgets))
        if len(self.budgets) != self.k or any(a < 0 for a in self.budgets):
            raise ValueError(f"need {self.k} nonnegative attacker budgets, got {self.budgets}")

    def size(self) -> int:
        """Number of feasible attacks."""
        total = 0
        for counts in itertools.product(*(range(min(a, self.n) + 1) for a in self.budgets)):
            used = sum(counts)
            if used > self.n:
                continue
            ways = math.factorial(self.n) // math.factorial(self.n - used)
            for c in counts:
                ways //= math.factorial(c)
            total += ways
        return total

    def enumerate(self) -> Iterator[np.ndarray]:
        """All feasible attacks as ``(k, n)`` 0/1 arrays."""
        x = np.zeros((self.k, self.n), dtype=np.int64)
        left = list(self.budgets)

        def rec(i):
            if i == self.n:
                yield x.copy()
                return
            yield from rec(i + 1)
            for q in range(self.k):
                if left[q] > 0:
                    x[q, i] = 1
                    left[q] -= 1
                    yield from rec(i + 1)
                    left[q] += 1
                    x[q, i] = 0

        yield from rec(0)


def is_feasible(x, X: AttackerPolytope) -> bool:
    x = np.asarray(x)
    if x.shape != (X.k, X.n) and x.size == X.k * X.n:
        x = x.reshape(X.k, X.n)
    if x.shape != (X.k, X.n) or not np.all((x == 0) | (x == 1)):
        return False
    return bool(np.all(x.sum(axis=1) <= np.asarray(X.budgets)) and np.all(x.sum(axis=0) <= 1))


@dataclass
class MasterResult:
    status: str  # optimal | unbounded
    x: np.ndarray | None
    eta: float
    nodes: int = 0
    lp_solves: int = 0


class _DualSimplex:
    """Bounded-variable dual simplex on ``A z = b, lo <= z <= hi``, minimizing ``c z``.

    The last ``m`` columns of ``A`` form an identity (row slacks).  A warm
    start is ``(basis, at_upper)``; it must be dual feasible for the bounds
    it is used with, which holds whenever bounds only tighten.
    """

    REFACTOR_EVERY = 40

    def __init__(self, A, b, c, tol=1e-9, max_iter=5000):
        self.A, self.b, self.c = A, b, c
        self.m, self.N = A.shape
        self.ptol = tol * max(1.0, float(np.abs(b).max(initial=0.0)))
        self.dtol = tol * max(1.0, float(np.abs(c).max(initial=0.0)))
        self.max_iter = max_iter

    def _state(self, basis, at_upper, lo, hi):
        nonbasic = np.ones(self.N, dtype=bool)
        nonbasic[basis] = False
        z = np.where(at_upper, hi, lo)
        z[~nonbasic] = 0.0
        return nonbasic, z

    def _primal(self, Binv, basis, z):
        rhs = self.b - self.A @ z  # basic entries of z are zero here
        return Binv @ rhs

    def solve(self, lo, hi, basis, at_upper):
        """Return ``(status, z, basis, at_upper, d)``; status is optimal, infeasible or failed."""
        A, c = self.A, self.c
        basis = np.array(basis)
        at_upper = at_upper.copy()
        fixed = lo == hi
        try:
            Binv = np.linalg.inv(A[:, basis])
        except np.linalg.LinAlgError:
            return "failed", None, None, None, None
        it = 0
        while True:
            nonbasic, z = self._state(basis, at_upper, lo, hi)
            xB = self._primal(Binv, basis, z)
            below = lo[basis] - xB
            above = xB - hi[basis]
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= self.ptol:
                z[basis] = xB
                d = c - (c[basis] @ Binv) @ A
                return "optimal", z, basis, at_upper, d
            if it >= self.max_iter:
                return "failed", None, None, None, None
            d = c - (c[basis] @ Binv) @ A
            alpha = Binv[r] @ A
            going_up = below[r] > above[r]  # leaving variable rises to its lower bound
            at = -alpha if going_up else alpha
            cand = nonbasic & ~fixed & (((~at_upper) & (at > 1e-9)) | (at_upper & (at < -1e-9)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return "infeasible", None, None, None, None
            ratios = np.abs(d[idx]) / np.abs(at[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(at[ties]))])
            leaving = basis[r]
            at_upper[leaving] = not going_up
            at_upper[q] = False
            col = Binv @ A[:, q]
            piv = col[r]
            Binv[r] /= piv
            col[r] = 0.0
            Binv -= np.outer(col, Binv[r])
            basis[r] = q
            it += 1
            if it % self.REFACTOR_EVERY == 0:
                try:
                    Binv = np.linalg.inv(A[:, basis])
                except np.linalg.LinAlgError:
                    return "failed", None, None, None, None

    def verify(self, lo, hi, basis, at_upper):
        """Recompute the basic solution from scratch and check both feasibilities."""
        try:
            Binv = np.linalg.inv(self.A[:, basis])
        except np.linalg.LinAlgError:
            return None
        nonbasic, z = self._state(basis, at_upper, lo, hi)
        xB = self._primal(Binv, basis, z)
        if np.any(xB < lo[basis] - 100 * self.ptol) or np.any(xB > hi[basis] + 100 * self.ptol):
            return None
        d = self.c - (self.c[basis] @ Binv) @ self.A
        free_nb = nonbasic & (lo < hi)
        bad = free_nb & ((~at_upper & (d < -100 * self.dtol)) | (at_upper & (d > 100 * self.dtol)))
        if np.any(bad):
            return None
        z[basis] = xB
        return z, d


class _Search:
    """Branch-and-bound over fixings of the flattened attack vector."""

    def __init__(self, pool: Sequence[Cut], X: AttackerPolytope, tol, node_limit, backend, rule, engine):
        self.X = X
        self.C = np.array([c.coefficients.reshape(-1) for c in pool])
        self.c0 = np.array([c.constant for c in pool])
        self.kn = X.k * X.n
        self.type_of = np.repeat(np.arange(X.k), X.n)
        self.item_of = np.tile(np.arange(X.n), X.k)
        self.tol = tol
        self.node_limit = node_limit
        self.backend = backend
        self.rule = rule
        self.engine = engine
        self.nodes = 0
        self.lp_solves = 0
        if engine == "dual":
            self._build_dual()
        elif engine != "primal":
            raise ValueError(f"unknown master engine {engine!r}")

    def _build_dual(self):
        """Rows: cuts ``C x + eta + s = c0`` (s <= 0), budgets and items (s >= 0)."""
        X, kn = self.X, self.kn
        rows, rhs, slack_lo, slack_hi = [], [], [], []
        for j in range(len(self.c0)):
            rows.append(np.concatenate([self.C[j], [1.0]]))
            rhs.append(self.c0[j])
            slack_lo.append(-np.inf)
            slack_hi.append(0.0)
        for q in range(X.k):
            rows.append(np.concatenate([(self.type_of == q).astype(float), [0.0]]))
            rhs.append(X.budgets[q])
            slack_lo.append(0.0)
            slack_hi.append(np.inf)
        if X.k > 1:
            for i in range(X.n):
                rows.append(np.concatenate([(self.item_of == i).astype(float), [0.0]]))
                rhs.append(1.0)
                slack_lo.append(0.0)
                slack_hi.append(np.inf)
        m = len(rows)
        A = np.hstack([np.array(rows), np.eye(m)])
        c = np.zeros(kn + 1 + m)
        c[kn] = 1.0
        # any attack satisfies eta >= c0_j - sum_v C_jv
        eta_lo = float(np.max(self.c0 - np.clip(self.C, 0.0, None).sum(axis=1)))
        self.dual = _DualSimplex(A, np.array(rhs, dtype=float), c)
        self.lo0 = np.concatenate([np.zeros(kn), [eta_lo], slack_lo])
        self.hi0 = np.concatenate([np.ones(kn), [np.inf], slack_hi])
        self.root_warm = (np.arange(kn + 1, kn + 1 + m), np.zeros(kn + 1 + m, dtype=bool))

    def value(self, x) -> float:
        return float(np.max(self.c0 - self.C @ x))

    def propagate(self, fix):
        """Tighten fixings implied by budgets; None if infeasible."""
        fix = fix.copy()
        X = self.X
        for _ in range(2):
            ones = fix == 1
            for i in np.flatnonzero(np.bincount(self.item_of[ones], minlength=X.n) > 1):
                return None
            for q in range(X.k):
                mask = self.type_of == q
                used = int(np.sum(ones & mask))
                if used > X.budgets[q]:
                    return None
                if used == X.budgets[q]:
                    fix[mask & (fix == -1)] = 0
            for v in np.flatnonzero(ones):
                same_item = (self.item_of == self.item_of[v]) & (fix == -1)
                fix[same_item] = 0
        return fix

    def relax(self, fix, warm=None):
        """``(bound, x, reduced costs of x, warm start)`` at a node, or None if infeasible."""
        if self.engine == "dual":
            lo, hi = self.lo0.copy(), self.hi0.copy()
            lo[: self.kn] = np.where(fix == 1, 1.0, 0.0)
            hi[: self.kn] = np.where(fix == 0, 0.0, 1.0)
            basis, at_upper = warm if warm is not None else self.root_warm
            status, z, basis, at_upper, d = self.dual.solve(lo, hi, basis, at_upper)
            self.lp_solves += 1
            if status == "infeasible":
                return None
            if status == "optimal":
                checked = self.dual.verify(lo, hi, basis, at_upper)
                if checked is not None:
                    z, d = checked
                    x = np.clip(z[: self.kn], 0.0, 1.0)
                    return float(z[self.kn]), x, d[: self.kn], (basis, at_upper)
            # fall through: re-solve this node from scratch
        bound, x, d = self._relax_primal(fix)
        return (bound, x, d, None) if bound is not None else None

    def _relax_primal(self, fix):
        X = self.X
        free = np.flatnonzero(fix == -1)
        ones = fix == 1
        const = self.c0 - self.C[:, ones].sum(axis=1)
        Cf = self.C[:, free]
        active = np.any(Cf > 0, axis=1)
        floor = float(const[~active].max()) if np.any(~active) else -np.inf
        x = np.where(ones, 1.0, 0.0)
        d_all = np.zeros(self.kn)
        if free.size == 0 or not np.any(active):
            return max(floor, float(const.max())), x, d_all
        nf = free.size
        lower = max(floor, float(np.max(const[active] - Cf[active].sum(axis=1))))
        rows, rhs, senses = [], [], []
        for j in np.flatnonzero(active):
            rows.append(np.concatenate([Cf[j], [1.0]]))
            rhs.append(const[j])
            senses.append(GE)
        for q in range(X.k):
            mask = self.type_of[free] == q
            cap = X.budgets[q] - int(np.sum(ones & (self.type_of == q)))
            if mask.sum() > cap:
                rows.append(np.concatenate([mask.astype(float), [0.0]]))
                rhs.append(cap)
                senses.append(LE)
        if X.k > 1:
            items = self.item_of[free]
            for i in np.flatnonzero(np.bincount(items, minlength=X.n) > 1):
                rows.append(np.concatenate([(items == i).astype(float), [0.0]]))
                rhs.append(1.0)
                senses.append(LE)
        c = np.zeros(nf + 1)
        c[-1] = 1.0
        lb = np.concatenate([np.zeros(nf), [lower]])
        ub = np.concatenate([np.ones(nf), [np.inf]])
        lp = LinearProgram(c, np.array(rows), np.array(rhs), senses, "min", lb, ub)
        sol = solve_lp(lp, rule=self.rule, backend=self.backend)
        self.lp_solves += 1
        if sol.status == "infeasible":
            return None, None, None
        if sol.status != "optimal":
            raise MasterError(f"master relaxation {sol.status}: {sol.message}")
        x[free] = np.clip(sol.x[:nf], 0.0, 1.0)
        z, d = _dual_bound(lp, sol.duals)
        d_all[free] = d
        if not math.isfinite(z):
            d_all[:] = 0.0
        return float(sol.x[-1]), x, d_all

    def fix_by_reduced_cost(self, fix, bound, d, cutoff):
        """Fix free variables whose flip would lift the LP bound above ``cutoff``."""
        free = np.flatnonzero(fix == -1)
        if free.size == 0:
            return fix
        fix = fix.copy()
        df = d[free]
        fix[free[bound + np.maximum(df, 0.0) > cutoff]] = 0
        fix[free[bound + np.maximum(-df, 0.0) > cutoff]] = 1
        return self.propagate(fix)

    def round(self, fix, x):
        """Greedy rounding of a fractional point to a feasible attack."""
        X = self.X
        out = np.where(fix == 1, 1.0, 0.0)
        left = [X.budgets[q] - int(np.sum(out[self.type_of == q])) for q in range(X.k)]
        taken = np.zeros(X.n, dtype=bool)
        taken[self.item_of[fix == 1]] = True
        for v in sorted(np.flatnonzero((fix == -1) & (x > INT_TOL)), key=lambda v: (-x[v], v)):
            q, i = self.type_of[v], self.item_of[v]
            if left[q] > 0 and not taken[i]:
                out[v] = 1.0
                left[q] -= 1
                taken[i] = True
        return out

    def run(self, fix, incumbent=None, target=None):
        """Best-first search.

        Without ``target``: returns the best attack found and its value.
        With ``target``: returns the first attack whose value is within
        tolerance of ``target``, or ``(None, inf)``.
        """
        fix = self.propagate(fix)
        if fix is None:
            return None, math.inf
        best_x, best_v = (None, math.inf) if incumbent is None else incumbent
        slack = lambda v: self.tol * max(1.0, abs(v))
        goal = None if target is None else target + slack(target)
        counter = itertools.count()
        heap = [(-math.inf, next(counter), fix, None)]
        while heap:
            bound, _, fix, warm = heapq.heappop(heap)
            cutoff = goal if goal is not None else best_v - slack(best_v)
            if bound > cutoff:
                if goal is None:
                    break
                continue
            self.nodes += 1
            if self.nodes > self.node_limit:
                raise MasterError(f"master search exceeded {self.node_limit} nodes")
            res = self.relax(fix, warm)
            if res is None:
                continue
            bound, x, d, warm = res
            if bound > cutoff:
                continue
            for cand in (x, self.round(fix, x)):
                if np.all(np.minimum(cand, 1.0 - cand) <= INT_TOL):
                    xi = np.round(cand)
                    v = self.value(xi)
                    if v < best_v - slack(best_v) or (v <= best_v + slack(best_v) and best_x is not None and _lex_less(xi, best_x)):
                        best_x, best_v = xi, v
                    if goal is not None and v <= goal:
                        return xi, v
            cutoff = goal if goal is not None else best_v - slack(best_v)
            if math.isfinite(cutoff):
                fix = self.fix_by_reduced_cost(fix, bound, d, cutoff)
                if fix is None:
                    continue
            frac = np.flatnonzero((fix == -1) & (np.minimum(x, 1.0 - x) > INT_TOL))
            if frac.size == 0:
                if np.any(fix == -1) and np.any((fix != -1) & (np.abs(x - np.maximum(fix, 0)) > INT_TOL)):
                    # fixings moved away from the LP point; re-solve before branching
                    heapq.heappush(heap, (bound, next(counter), fix, warm))
                continue
            v = int(frac[np.argmin(np.abs(x[frac] - 0.5))])
            for val in (1, 0):
                child = fix.copy()
                child[v] = val
                child = self.propagate(child)
                if child is not None:
                    heapq.heappush(heap, (bound, next(counter), child, warm))
        if goal is not None:
            return (best_x, best_v) if best_v <= goal else (None, math.inf)
        return best_x, best_v


def _dual_bound(lp: LinearProgram, y):
    """Lagrangian bound ``z`` and reduced costs of the free x-variables.

    For any point in the node's box, ``objective >= z + sum_v max(d_v, 0) * x_v
    + max(-d_v, 0) * (1 - x_v)`` where z is computed from sign-corrected duals,
    so the test stays valid even if the duals carry rounding noise.
    """
    y = np.asarray(y, dtype=float).copy()
    ge = np.array([s == GE for s in lp.senses])
    y[ge] = np.maximum(y[ge], 0.0)
    y[~ge] = np.minimum(y[~ge], 0.0)
    d = lp.c - lp.A.T @ y
    if d[-1] < -1e-12:  # eta has no upper bound
        return -math.inf, d[:-1]
    at_ub = np.full(d.size, np.inf)
    fin = np.isfinite(lp.ub)
    at_ub[fin] = d[fin] * lp.ub[fin]
    z = float(y @ lp.b) + float(np.sum(np.minimum(d * lp.lb, at_ub)))
    return z, d[:-1]


def _lex_less(a, b) -> bool:
    d = np.flatnonzero(a != b)
    return bool(d.size) and a[d[0]] < b[d[0]]


def solve_master(
    pool: Sequence[Cut],
    X: AttackerPolytope,
    tol: float = 1e-9,
    node_limit: int = 1_000_000,
    lexicographic: bool = True,
    backend: str = "auto",
    rule: str = "dantzig",
    engine: str = "dual",
) -> MasterResult:
    """Optimal ``(x, eta)`` for ``min eta`` s.t. every cut in ``pool``.

    With ``lexicographic`` the returned attack is the lexicographically
    smallest (flattened type-major) among those within ``tol`` of optimal.
    ``engine`` picks the node relaxation solver: ``"dual"`` (warm-started
    bounded dual simplex) or ``"primal"`` (:func:`ksip.lp.solve_lp` from
    scratch at every node, with ``backend`` and ``rule``).
    """
    if not pool:
        return MasterResult("unbounded", None, -math.inf)
    for c in pool:
        if c.coefficients.shape != (X.k, X.n):
            raise ValueError(f"cut of shape {c.coefficients.shape} for a ({X.k}, {X.n}) attack")
    s = _Search(pool, X, tol, node_limit, backend, rule, engine)
    # every cut generator is a feasible attack; start from the best of them
    best = np.zeros(s.kn)
    for c in pool:
        g = np.asarray(c.generator, dtype=float)
        if g.size == s.kn and is_feasible(g, X):
            if s.value(g) < s.value(best) or (s.value(g) == s.value(best) and _lex_less(g, best)):
                best = g
    free = np.full(s.kn, -1)
    x, eta = s.run(free, incumbent=(best, s.value(best)))
    if lexicographic:
        fix = free.copy()
        for v in range(s.kn):
            if x[v] == 0:
                fix[v] = 0
                continue
            trial = fix.copy()
            trial[v] = 0
            y, _ = s.run(trial, target=eta)
            if y is not None:
                x = y
                fix[v] = 0
            else:
                fix[v] = 1
    eta = s.value(x)
    return MasterResult("optimal", x.reshape(X.k, X.n).astype(np.int64), eta, s.nodes, s.lp_solves)
