"""Cutting-plane decomposition for the four interdiction models.

Each iteration evaluates the attacker value ``Phi(x_hat)`` exactly (one
defender solve per scenario, then distribution separation), updates the
upper bound, adds one cut tight at ``x_hat`` and re-solves the master,
whose optimum is a lower bound.  The loop stops once the gap closes.

Models (``variant``):

``deterministic``  one scenario, every attack succeeds.
``risk_neutral``   expectation under the reference distribution.
``dra``            worst case (max) over the ambiguity set.
``drr``            best case (min) over the ambiguity set.
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ksip.ambiguity import AmbiguitySet, Distribution, Separation, SingletonSet
from ksip.core import FunctionOracle, KTuple
from ksip.cuts import Cut, _GainCache, cut_drr, cut_dra, cut_risk_neutral, cut_sequential, cut_basic
from ksip.defender import DEFAULT_NODE_LIMIT, DefenderProblem, DefenderSolution, solve_exact
from ksip.master import MasterError, is_feasible, solve_master

VARIANTS = ("deterministic", "risk_neutral", "dra", "drr")
THREADS_ENV = "KSIP_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class SolveConfig:
    variant: str = "risk_neutral"
    gap_tol: float = 1e-6
    relative_gap: bool = False
    max_iterations: int | None = None  # None: |X| + 1
    seed: int | None = None
    permutation: str = "greedy"
    ambiguity: dict | None = None  # overrides the instance's ambiguity block
    deterministic_cut: str = "sequential"
    threads: int = field(default_factory=default_threads)
    defender_node_limit: int = DEFAULT_NODE_LIMIT
    master_backend: str = "auto"
    master_engine: str = "dual"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.gap_tol < 0:
            raise ValueError("gap tolerance must be nonnegative")
        if self.permutation not in ("greedy", "index"):
            raise ValueError(f"unknown permutation mode {self.permutation!r}")
        if self.master_engine not in ("dual", "primal"):
            raise ValueError(f"unknown master engine {self.master_engine!r}")
        if self.deterministic_cut not in ("basic", "sequential"):
            raise ValueError(f"unknown deterministic cut {self.deterministic_cut!r}")


@dataclass
class SolveReport:
    variant: str
    status: str  # optimal | iteration_limit
    theta_ub: float
    theta_lb: float
    x_star: np.ndarray
    iterations: int
    time: float
    log: list[dict] = field(default_factory=list)
    cuts: list[Cut] = field(default_factory=list)
    # in-memory only: defender responses at each x_hat
    scenario_solutions: list[list[KTuple]] = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        return self.theta_ub - self.theta_lb

    @property
    def certified(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "status": self.status,
            "theta_ub": self.theta_ub,
            "theta_lb": self.theta_lb,
            "gap": self.gap,
            "x_star": self.x_star.tolist(),
            "iterations": self.iterations,
            "time": self.time,
            "log": self.log,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


class DefenderCache:
    """Memoized exact defender responses keyed by oracle and blocked pairs."""

    def __init__(self, node_limit: int = DEFAULT_NODE_LIMIT):
        self.node_limit = node_limit
        self.store: dict = {}
        self.solves = 0

    def solve(self, f: FunctionOracle, budgets, blocked: frozenset) -> DefenderSolution:
        key = (id(f), tuple(budgets), blocked)
        if key not in self.store:
            self.store[key] = (f, solve_exact(DefenderProblem(f, budgets, blocked), self.node_limit))
            self.solves += 1
        return self.store[key][1]


def model_data(instance, variant: str):
    """Scenario oracles, success vectors and reference distribution of a model."""
    if variant == "deterministic":
        if instance.n_scenarios > 1 or np.any(instance.xi != 1):
            warnings.warn(
                "deterministic model uses scenario 1 with every attack succeeding",
                stacklevel=3,
            )
        return [instance.oracles[0]], np.ones((1, instance.n), dtype=np.int64), Distribution((1.0,))
    return list(instance.oracles), instance.xi, instance.reference_p


class PhiEvaluator:
    """Exact attacker value of a fixed attack under one model."""

    def __init__(self, instance, variant: str, ambiguity: dict | None = None, threads: int = 1,
                 cache: DefenderCache | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.instance = instance
        self.variant = variant
        self.oracles, self.xi, self.reference = model_data(instance, variant)
        if variant in ("dra", "drr"):
            spec = ambiguity if ambiguity is not None else instance.ambiguity
            if spec is None:
                raise ValueError(f"the {variant} model needs an ambiguity set")
            self.aset: AmbiguitySet = instance.ambiguity_set(spec)
        else:
            self.aset = SingletonSet(self.reference)
        self.threads = max(1, int(threads))
        self.cache = cache or DefenderCache()

    def blocked(self, x, w: int) -> frozenset:
        x = np.asarray(x).reshape(self.instance.k, self.instance.n)
        qs, items = np.nonzero(x * self.xi[w][None, :])
        return frozenset((int(q) + 1, int(i)) for q, i in zip(qs, items))

    def responses(self, x) -> list[DefenderSolution]:
        budgets = self.instance.defend_budgets
        jobs = [(f, self.blocked(x, w)) for w, f in enumerate(self.oracles)]
        todo = list({(id(f), b): (f, b) for f, b in jobs}.values())
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(lambda job: self.cache.solve(job[0], budgets, job[1]), todo))
        return [self.cache.solve(f, budgets, b) for f, b in jobs]

    def separate(self, values) -> Separation:
        if self.variant == "drr":
            return self.aset.separate(values, "min")
        if self.variant == "dra":
            return self.aset.separate(values, "max")
        return Separation(self.reference, self.reference.expectation(values))

    def evaluate(self, x):
        """``(Phi(x), defender responses, separation)``."""
        sols = self.responses(x)
        sep = self.separate(np.array([s.value for s in sols]))
        return sep.objective, sols, sep

    def __call__(self, x) -> float:
        return self.evaluate(x)[0]


def evaluate_phi(instance, x, variant: str, ambiguity: dict | None = None) -> float:
    return PhiEvaluator(instance, variant, ambiguity)(x)


def _make_cut(ev: PhiEvaluator, config: SolveConfig, x_hat, sols, gains: _GainCache, coef_cache) -> Cut:
    S = [s.S for s in sols]
    if config.variant == "deterministic":
        if config.deterministic_cut == "basic":
            return cut_basic(x_hat, S[0], ev.oracles[0])
        return cut_sequential(x_hat, S[0], ev.oracles[0], order=config.permutation)
    if config.variant == "risk_neutral":
        return cut_risk_neutral(x_hat, S, ev.reference, ev.xi, ev.oracles, cache=gains)
    if config.variant == "dra":
        return cut_dra(x_hat, S, ev.aset, ev.xi, ev.oracles, cache=gains)
    return cut_drr(x_hat, S, ev.aset, ev.xi, ev.oracles, cache=gains, coef_cache=coef_cache)


def solve(instance, config: SolveConfig | None = None, stream=None, cache: DefenderCache | None = None) -> SolveReport:
    """Run the decomposition to a certified optimum.

    ``stream`` is an optional text file receiving one JSON line per
    iteration.  Without an explicit iteration limit the loop is capped at
    ``|X| + 1`` iterations, the most a non-cycling run can take.
    """
    config = config or SolveConfig()
    t0 = time.perf_counter()
    X = instance.polytope()
    ev = PhiEvaluator(instance, config.variant, config.ambiguity, config.threads,
                      cache or DefenderCache(config.defender_node_limit))
    limit = config.max_iterations if config.max_iterations is not None else X.size() + 1
    gains = _GainCache(config.permutation)
    coef_cache: dict = {}

    def gap(ub, lb):
        g = ub - lb
        return g / max(1.0, abs(ub)) if config.relative_gap else g

    x = np.zeros((instance.k, instance.n), dtype=np.int64)
    x_star = x
    ub, lb = math.inf, -math.inf
    visited = {x.tobytes()}
    report = SolveReport(config.variant, "iteration_limit", ub, lb, x_star, 0, 0.0)
    for L in range(1, limit + 1):
        phi, sols, sep = ev.evaluate(x)
        if phi < ub:
            ub, x_star = phi, x
        cut = _make_cut(ev, config, x, sols, gains, coef_cache)
        report.cuts.append(cut)
        report.scenario_solutions.append([s.S for s in sols])
        res = solve_master(report.cuts, X, backend=config.master_backend, engine=config.master_engine)
        if res.status != "optimal":
            raise MasterError(f"master returned {res.status}")
        lb = max(lb, min(res.eta, ub))
        entry = {
            "iteration": L,
            "x_hat": x.tolist(),
            "phi": phi,
            "cut": cut.to_dict(),
            "eta": res.eta,
            "theta_lb": lb,
            "theta_ub": ub,
            "distribution": list(sep.distribution.p) if config.variant in ("dra", "drr") else None,
            "master_nodes": res.nodes,
            "elapsed": time.perf_counter() - t0,
        }
        report.log.append(entry)
        if stream is not None:
            stream.write(json.dumps(entry) + "\n")
            stream.flush()
        report.iterations = L
        if gap(ub, lb) <= config.gap_tol:
            report.status = "optimal"
            break
        x = res.x
        key = x.tobytes()
        if key in visited:
            # A revisited point has eta >= Phi(x) >= ub, so the gap is only
            # open by rounding noise; accept it when it is that small.
            if gap(ub, res.eta) <= config.gap_tol + 1e-9 * max(1.0, abs(ub)):
                lb = ub
                report.status = "optimal"
            else:
                report.status = "cycled"
            break
        visited.add(key)
    assert is_feasible(x_star, X)
    report.theta_ub, report.theta_lb, report.x_star = ub, lb, x_star
    report.time = time.perf_counter() - t0
    return report


def compute_value_metrics(instance, reports: dict, ambiguity: dict | None = None,
                          cache: DefenderCache | None = None) -> dict:
    """VSS, VAS and VRS of the deterministic attack against each stochastic model."""
    cache = cache or DefenderCache()
    x_dt = reports["deterministic"].x_star
    out = {}
    for name, variant in (("VSS", "risk_neutral"), ("VAS", "dra"), ("VRS", "drr")):
        ev = PhiEvaluator(instance, variant, ambiguity, cache=cache)
        out[name] = ev(x_dt) - ev(reports[variant].x_star)
    return out


def solve_all(instance, ambiguity: dict | None = None, base: SolveConfig | None = None,
              cache: DefenderCache | None = None) -> dict:
    """Solve all four models, sharing one defender cache."""
    base = base or SolveConfig()
    cache = cache or DefenderCache(base.defender_node_limit)
    out = {}
    for variant in VARIANTS:
        cfg = SolveConfig(**{**base.__dict__, "variant": variant, "ambiguity": ambiguity})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out[variant] = solve(instance, cfg, cache=cache)
    return out


def epsilon_sweep(instance, radii, family: str = "wasserstein", base: SolveConfig | None = None) -> list[dict]:
    """Optimal values of the risk-averse, risk-neutral and risk-receptive models per radius."""
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii):
        raise ValueError("radii must be nonnegative")
    base = base or SolveConfig()
    cache = DefenderCache(base.defender_node_limit)
    rn = solve(instance, SolveConfig(**{**base.__dict__, "variant": "risk_neutral"}), cache=cache).theta_ub
    rows = []
    for eps in radii:
        spec = {"type": family, "epsilon": eps}
        row = {"epsilon": eps}
        for variant, col in (("dra", "phi_dra"), ("drr", "phi_drr")):
            cfg = SolveConfig(**{**base.__dict__, "variant": variant, "ambiguity": spec})
            row[col] = solve(instance, cfg, cache=cache).theta_ub
        row["phi_rn"] = rn
        rows.append({k: row[k] for k in ("epsilon", "phi_dra", "phi_rn", "phi_drr")})
    return rows
