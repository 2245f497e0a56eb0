"""Dense two-phase primal simplex.

The LPs in this package are small (separation problems over a scenario
simplex, master relaxations with a few hundred rows), so a dense tableau is
used.  Pivoting follows Bland's rule by default; ``rule="dantzig"`` picks the
most negative reduced cost and falls back to Bland after a run of degenerate
pivots.  Both are deterministic.

Every "optimal" answer is re-checked against the original data (primal
residuals, bounds, reduced-cost signs); a failed check is reported with
status ``"failed"`` rather than returned as optimal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9

LE, EQ, GE = "<=", "==", ">="


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Sequence[str]
    sense: str = "min"
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)
        m = self.A.shape[0]
        if self.b.size != m or len(self.senses) != m or self.lb.size != n or self.ub.size != n:
            raise ValueError("inconsistent LP dimensions")
        if self.sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense {self.sense!r}")
        if any(s not in (LE, EQ, GE) for s in self.senses):
            raise ValueError(f"row senses must be among {LE!r}, {EQ!r}, {GE!r}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(self.lb > self.ub):
            raise ValueError("invalid variable bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | failed
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    iterations: int = 0
    message: str = ""
    basis: list[int] = field(default_factory=list)


class _Tableau:
    """Simplex tableau for ``min c x, A x = b, x >= 0`` with ``b >= 0``."""

    REFACTOR_EVERY = 50

    def __init__(self, A, b, basis, rule, tol, max_iter):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.A0 = np.array(A, dtype=float)
        self.b0 = np.array(b, dtype=float)
        self.c = np.zeros(n)
        self.basis = list(basis)
        self.rule = rule
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def set_objective(self, c):
        m = len(self.basis)
        n = self.T.shape[1] - 1
        self.c = np.array(c, dtype=float)
        self.T[m, :n] = c
        self.T[m, n] = 0.0
        for r, j in enumerate(self.basis):
            if self.T[m, j] != 0.0:
                self.T[m] -= self.T[m, j] * self.T[r]

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j
        self.iterations += 1

    def drop_rows(self, keep):
        rows = np.flatnonzero(keep)
        self.T = np.vstack([self.T[rows], self.T[-1:]])
        self.A0 = self.A0[rows]
        self.b0 = self.b0[rows]
        self.basis = [self.basis[r] for r in rows]

    def refactor(self):
        """Rebuild the tableau from the original data and the current basis."""
        m = len(self.basis)
        try:
            lu = np.linalg.solve(self.A0[:, self.basis], np.column_stack([self.A0, self.b0]))
        except np.linalg.LinAlgError:
            return
        self.T[:m] = lu
        for r, j in enumerate(self.basis):
            self.T[:m, j] = 0.0
            self.T[r, j] = 1.0
        rhs = self.T[:m, -1]
        rhs[(rhs < 0.0) & (rhs > -self.tol * (1.0 + np.abs(rhs).max()))] = 0.0
        self.set_objective(self.c)

    def run(self, allowed):
        """Iterate to optimality over columns flagged in ``allowed``.

        Returns ``"optimal"``, ``"unbounded"`` or ``"iteration_limit"``.
        """
        m = len(self.basis)
        degenerate_run = 0
        since_refactor = 0
        while True:
            T = self.T
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            if since_refactor >= self.REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
                continue
            d = T[m, :-1]
            candidates = np.flatnonzero((d < -self.tol) & allowed)
            if candidates.size == 0:
                if since_refactor:
                    # confirm optimality on a freshly computed tableau
                    self.refactor()
                    since_refactor = 0
                    continue
                return "optimal"
            if self.rule == "dantzig" and degenerate_run < 50:
                j = int(candidates[np.argmin(d[candidates])])
            else:
                j = int(candidates[0])
            col = T[:m, j]
            pos = np.flatnonzero(col > self.tol)
            if pos.size == 0:
                return "unbounded"
            # rounding can leave a basic value at -1e-12; treat it as zero
            ratios = np.maximum(T[pos, -1], 0.0) / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + self.tol * max(1.0, abs(best))]
            if self.rule == "dantzig" and degenerate_run < 50:
                # largest pivot element among ties, for stability
                r = int(max(ties, key=lambda row: (col[row], -self.basis[row])))
            else:
                # Bland: leaving variable with the smallest index among ties
                r = int(min(ties, key=lambda row: self.basis[row]))
            degenerate_run = degenerate_run + 1 if best <= self.tol else 0
            self.pivot(r, j)
            since_refactor += 1
            rhs = T[:m, -1]
            rhs[(rhs < 0.0) & (rhs > -self.tol * (1.0 + np.abs(rhs).max()))] = 0.0


def solve_lp(
    lp: LinearProgram,
    rule: str = "bland",
    feas_tol: float = FEAS_TOL,
    opt_tol: float = OPT_TOL,
    max_iter: int = 50_000,
    backend: str = "simplex",
) -> LpSolution:
    """Solve ``lp`` and return a certified solution or a non-optimal status.

    ``backend="highs"`` delegates to SciPy's HiGHS dual simplex; ``"auto"``
    uses it only once the standard form exceeds a few thousand columns.
    Results from either backend pass through the same certificate check.
    """
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    if backend == "auto":
        m, n = lp.shape
        backend = "highs" if (m + 1) * (2 * n + 2 * m) > 400_000 else "simplex"
    if backend == "highs":
        sol = _solve_highs(lp)
    elif backend == "simplex":
        sol = _solve_simplex(lp, rule, max(feas_tol, opt_tol), max_iter)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if sol.status == "optimal":
        problem = _certify(lp, sol, feas_tol, opt_tol)
        if problem:
            return LpSolution("failed", sol.x, sol.objective, sol.duals, sol.iterations, problem, sol.basis)
    return sol


def _standard_form(lp: LinearProgram):
    """Rewrite as ``min c' y, A' y = b', y >= 0`` with ``b' >= 0``.

    Returns the pieces plus a recovery map ``x = offset + M y``.
    """
    n = lp.c.size
    sign = 1.0 if lp.sense == "min" else -1.0
    cols = []  # (original var, coefficient) per structural column
    offset = np.zeros(n)
    ub_rows = []
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    M = np.zeros((n, ns))
    for s, (j, coef) in enumerate(cols):
        M[j, s] = coef

    A = lp.A @ M
    b = lp.b - lp.A @ offset
    senses = list(lp.senses)
    if ub_rows:
        U = np.zeros((len(ub_rows), ns))
        for r, (s, width) in enumerate(ub_rows):
            U[r, s] = 1.0
        A = np.vstack([A, U])
        b = np.concatenate([b, [w for _, w in ub_rows]])
        senses += [LE] * len(ub_rows)
    c = sign * (lp.c @ M)
    const = sign * float(lp.c @ offset)

    m = A.shape[0]
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    senses = [({LE: GE, GE: LE, EQ: EQ}[s] if f else s) for s, f in zip(senses, flip)]

    n_slack = sum(1 for s in senses if s != EQ)
    S = np.zeros((m, n_slack))
    slack_of = {}
    k = 0
    for r, s in enumerate(senses):
        if s == LE:
            S[r, k] = 1.0
        elif s == GE:
            S[r, k] = -1.0
        if s != EQ:
            slack_of[r] = ns + k
            k += 1
    A = np.hstack([A, S])
    c = np.concatenate([c, np.zeros(n_slack)])
    row_sign = np.where(flip, -1.0, 1.0)
    return A, b, c, senses, slack_of, M, offset, const, row_sign, sign


def _solve_simplex(lp: LinearProgram, rule: str, tol: float, max_iter: int) -> LpSolution:
    m_orig = lp.A.shape[0]
    A, b, c, senses, slack_of, M, offset, const, row_sign, sign = _standard_form(lp)
    m, n = A.shape

    basis = []
    art_rows = []
    for r, s in enumerate(senses):
        if s == LE:
            basis.append(slack_of[r])
        else:
            basis.append(None)
            art_rows.append(r)
    n_art = len(art_rows)
    Aa = np.hstack([A, np.zeros((m, n_art))])
    for k, r in enumerate(art_rows):
        Aa[r, n + k] = 1.0
        basis[r] = n + k

    tab = _Tableau(Aa, b, basis, rule, tol, max_iter)
    allowed = np.ones(n + n_art, dtype=bool)
    if n_art:
        phase1 = np.concatenate([np.zeros(n), np.ones(n_art)])
        tab.set_objective(phase1)
        status = tab.run(allowed)
        if status == "iteration_limit":
            return LpSolution("failed", iterations=tab.iterations, message="iteration limit in phase 1")
        infeas = -tab.T[-1, -1]
        if infeas > max(1e-7, 1e-9 * (1.0 + np.abs(b).max(initial=0.0))):
            return LpSolution("infeasible", iterations=tab.iterations, message=f"phase 1 residual {infeas:.3g}")
        # drive artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n:
                row = tab.T[r, :n]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        if not keep.all():
            tab.drop_rows(keep)
        allowed[n:] = False
        tab.T[:, n:n + n_art] = 0.0
        row_map = np.flatnonzero(keep)
    else:
        row_map = np.arange(m)

    tab.set_objective(np.concatenate([c, np.zeros(n_art)]))
    status = tab.run(allowed)
    if status == "iteration_limit":
        return LpSolution("failed", iterations=tab.iterations, message="iteration limit in phase 2")
    if status == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations)

    y = np.zeros(n)
    for r, j in enumerate(tab.basis):
        if j < n:
            y[j] = tab.T[r, -1]
    x = offset + M @ y[:M.shape[1]]

    # duals of the standard-form rows: pi = c_B B^-1
    B = A[np.ix_(row_map, tab.basis)]
    pi_kept = np.linalg.solve(B.T, c[tab.basis])
    pi = np.zeros(m)
    pi[row_map] = pi_kept
    duals = sign * row_sign[:m_orig] * pi[:m_orig]
    objective = float(lp.c @ x)
    return LpSolution("optimal", x, objective, duals, tab.iterations, basis=list(tab.basis))


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    sign = 1.0 if lp.sense == "min" else -1.0
    le = [i for i, s in enumerate(lp.senses) if s == LE]
    ge = [i for i, s in enumerate(lp.senses) if s == GE]
    eq = [i for i, s in enumerate(lp.senses) if s == EQ]
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if le or ge else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if le or ge else None
    A_eq = lp.A[eq] if eq else None
    b_eq = lp.b[eq] if eq else None
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in zip(lp.lb, lp.ub)]
    res = linprog(sign * lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs-ds")
    if res.status == 2:
        return LpSolution("infeasible", message=res.message)
    if res.status == 3:
        return LpSolution("unbounded", message=res.message)
    if res.status != 0:
        return LpSolution("failed", message=res.message)
    duals = np.zeros(lp.A.shape[0])
    if le or ge:
        marg = res.ineqlin.marginals
        duals[le] = marg[:len(le)]
        duals[ge] = -marg[len(le):]
    if eq:
        duals[eq] = res.eqlin.marginals
    return LpSolution("optimal", np.asarray(res.x), float(lp.c @ res.x), sign * duals, int(res.nit))


def _certify(lp: LinearProgram, sol: LpSolution, feas_tol: float, opt_tol: float) -> str:
    x = sol.x
    scale = 1.0 + np.abs(lp.b).max(initial=0.0)
    r = lp.A @ x - lp.b
    for i, s in enumerate(lp.senses):
        if (s == EQ and abs(r[i]) > feas_tol * scale) or (s == LE and r[i] > feas_tol * scale) or (
            s == GE and r[i] < -feas_tol * scale
        ):
            return f"row {i} violated by {r[i]:.3g}"
    if np.any(x < lp.lb - feas_tol * scale) or np.any(x > lp.ub + feas_tol * scale):
        return "variable bound violated"
    # dual feasibility for the min-form problem
    sign = 1.0 if lp.sense == "min" else -1.0
    y = sign * sol.duals
    for i, s in enumerate(lp.senses):
        if (s == LE and y[i] > opt_tol * 1e3 * scale) or (s == GE and y[i] < -opt_tol * 1e3 * scale):
            return f"dual sign wrong on row {i}"
    d = sign * lp.c - lp.A.T @ y
    cscale = 1.0 + np.abs(lp.c).max(initial=0.0) + np.abs(lp.A).max(initial=0.0) * np.abs(y).max(initial=0.0)
    tol = 1e-7 * cscale
    at_lb = np.abs(x - lp.lb) <= 1e-7 * scale
    at_ub = np.abs(x - lp.ub) <= 1e-7 * scale
    bad = (d < -tol) & ~at_ub | (d > tol) & ~at_lb
    if np.any(bad):
        return f"reduced cost sign wrong on variable {int(np.flatnonzero(bad)[0])}"
    return ""
