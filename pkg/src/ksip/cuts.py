"""Affine lower bounds on the attacker's value function.

Every cut reads ``eta >= constant - sum_{q,i} coefficients[q, i] * x[q, i]``
and is built from a candidate attack ``x_hat`` and the defender's optimal
responses to it.  Families:

``T1``  basic: coefficients are singleton values ``rho_{q,i}(empty)``.
``T2``  sequential: coefficients are gains along a chain of prefix tuples.
``T3``  risk-neutral: probability-weighted T2 gains, times attack success.
``T4``  risk-receptive: per-coefficient worst-case mass of T1-style gains.
``T5``  risk-averse: T3 with the extremal maximizing distribution.

All coefficients are nonnegative and each cut is tight at its generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ksip.ambiguity import AmbiguitySet, Distribution, drr_cut_coefficient, separate_max, separate_min
from ksip.core import FunctionOracle, KTuple, PreconditionError

FAMILIES = ("T1", "T2", "T3", "T4", "T5")


class CutError(RuntimeError):
    pass


@dataclass
class Cut:
    constant: float
    coefficients: np.ndarray  # (k, n)
    family: str
    generator: tuple[int, ...]  # x_hat flattened type-major
    distribution: tuple[float, ...] | None = None

    def rhs(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(self.coefficients.shape)
        return float(self.constant - (self.coefficients * x).sum())

    def to_dict(self) -> dict:
        k, n = self.coefficients.shape
        coef = {f"{q + 1},{i}": float(self.coefficients[q, i]) for q, i in zip(*np.nonzero(self.coefficients))}
        d = {
            "family": self.family,
            "constant": self.constant,
            "coefficients": coef,
            "generator": list(self.generator),
            "shape": [k, n],
        }
        if self.distribution is not None:
            d["distribution"] = list(self.distribution)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Cut":
        k, n = d["shape"]
        coef = np.zeros((k, n))
        for key, v in d["coefficients"].items():
            q, i = map(int, key.split(","))
            coef[q - 1, i] = v
        dist = tuple(d["distribution"]) if d.get("distribution") is not None else None
        return cls(d["constant"], coef, d["family"], tuple(d["generator"]), dist)


def _flat(x_hat) -> tuple[int, ...]:
    return tuple(int(v) for v in np.asarray(x_hat).reshape(-1))


def greedy_permutation(f: FunctionOracle, S: KTuple) -> list[list[int]]:
    """Order each ``S_q`` by decreasing gain relative to the growing prefix."""
    f.check_tuple(S)
    state = f.state((0,) * S.n)
    perm = []
    for q in range(1, S.k + 1):
        remaining = S.members(q)
        order = []
        while remaining:
            G = f.gains(state)[q - 1]
            i = max(remaining, key=lambda j: (G[j], -j))
            order.append(i)
            remaining.remove(i)
            state = f.extend(state, q, i)
        perm.append(order)
    return perm


def _check_permutation(S: KTuple, permutation):
    if len(permutation) != S.k:
        raise PreconditionError(f"permutation has {len(permutation)} types, tuple has {S.k}")
    for q, order in enumerate(permutation, start=1):
        if sorted(order) != S.members(q) or len(set(order)) != len(order):
            raise PreconditionError(f"permutation for type {q} is not a bijection on S_{q}")


def sequential_gains(f: FunctionOracle, S: KTuple, permutation=None, order: str = "greedy") -> np.ndarray:
    """Gains ``rho_{q, i_{q,t}}`` at the prefix tuples, as a ``(k, n)`` array.

    The prefix for the t-th item of type q holds all of ``S_1..S_{q-1}``,
    the first ``t-1`` items of ``S_q`` and nothing of later types.  The
    gains telescope to ``f(S) - f(empty)``; this is checked on every call.
    """
    if permutation is None:
        if order == "greedy":
            permutation = greedy_permutation(f, S)
        elif order == "index":
            permutation = [S.members(q) for q in range(1, S.k + 1)]
        else:
            raise ValueError(f"unknown permutation order {order!r}")
    else:
        _check_permutation(S, permutation)
    out = np.zeros((S.k, S.n))
    state = f.state((0,) * S.n)
    prev = f.state_value(state)
    start = prev
    for q, items in enumerate(permutation, start=1):
        for i in items:
            state = f.extend(state, q, i)
            v = f.state_value(state)
            out[q - 1, i] = v - prev
            prev = v
    total = f.evaluate(S)
    if abs(out.sum() - (total - start)) > 1e-9 * max(1.0, abs(total)):
        raise CutError(f"sequential gains sum to {out.sum()!r}, expected {total - start!r}")
    return out


def singleton_gains(f: FunctionOracle) -> np.ndarray:
    """``rho_{q,i}(empty)`` for every pair, shape ``(k, n)``."""
    return f.gains(f.state((0,) * f.ground.n))


def cut_basic(x_hat, S: KTuple, f: FunctionOracle) -> Cut:
    coef = np.where(S.as_array()[None, :] == np.arange(1, S.k + 1)[:, None], singleton_gains(f), 0.0)
    return Cut(f.evaluate(S), coef, "T1", _flat(x_hat))


def cut_sequential(x_hat, S: KTuple, f: FunctionOracle, permutation=None, order: str = "greedy") -> Cut:
    return Cut(f.evaluate(S), sequential_gains(f, S, permutation, order), "T2", _flat(x_hat))


class _GainCache:
    """Per-oracle gains, keyed by oracle identity and tuple."""

    def __init__(self, order="greedy"):
        self.order = order
        self.seq: dict = {}
        self.single: dict = {}

    def sequential(self, f, S):
        key = (id(f), S.assignment)
        if key not in self.seq:
            self.seq[key] = sequential_gains(f, S, order=self.order)
        return self.seq[key]

    def singleton(self, f):
        if id(f) not in self.single:
            self.single[id(f)] = np.nan_to_num(singleton_gains(f), nan=0.0)
        return self.single[id(f)]


def _weighted_sequential(solutions, probs, xi, oracles, cache):
    k, n = solutions[0].k, solutions[0].n
    coef = np.zeros((k, n))
    for S, p, x, f in zip(solutions, probs, xi, oracles):
        if p <= 0.0 or S.size() == 0:
            continue
        coef += p * cache.sequential(f, S) * np.asarray(x, dtype=float)[None, :]
    return np.clip(coef, 0.0, None)


def _check_inputs(solutions, xi, oracles):
    if not (len(solutions) == len(xi) == len(oracles)) or not solutions:
        raise PreconditionError("need one solution, success vector and oracle per scenario")


def cut_risk_neutral(
    x_hat, solutions: Sequence[KTuple], p_bar: Distribution, xi, oracles, order="greedy", cache=None
) -> Cut:
    _check_inputs(solutions, xi, oracles)
    if not isinstance(p_bar, Distribution):
        p_bar = Distribution(tuple(p_bar))
    if len(p_bar) != len(solutions):
        raise PreconditionError("distribution size does not match the scenario count")
    cache = cache or _GainCache(order)
    values = np.array([f.evaluate(S) for S, f in zip(solutions, oracles)])
    coef = _weighted_sequential(solutions, p_bar.p, xi, oracles, cache)
    return Cut(float(p_bar.as_array() @ values), coef, "T3", _flat(x_hat), p_bar.p)


def cut_dra(x_hat, solutions, aset: AmbiguitySet, xi, oracles, order="greedy", cache=None) -> Cut:
    _check_inputs(solutions, xi, oracles)
    cache = cache or _GainCache(order)
    values = np.array([f.evaluate(S) for S, f in zip(solutions, oracles)])
    sep = separate_max(values, aset)
    coef = _weighted_sequential(solutions, sep.distribution.p, xi, oracles, cache)
    return Cut(sep.objective, coef, "T5", _flat(x_hat), sep.distribution.p)


def cut_drr(x_hat, solutions, aset: AmbiguitySet, xi, oracles, cache=None, coef_cache=None) -> Cut:
    """Risk-receptive cut: constant from the minimizing distribution,
    each coefficient from its own maximizing distribution."""
    _check_inputs(solutions, xi, oracles)
    cache = cache or _GainCache()
    coef_cache = {} if coef_cache is None else coef_cache
    values = np.array([f.evaluate(S) for S, f in zip(solutions, oracles)])
    sep = separate_min(values, aset)
    k, n = solutions[0].k, solutions[0].n
    W = len(solutions)
    weights = np.zeros((W, k, n))
    for w, (S, x, f) in enumerate(zip(solutions, xi, oracles)):
        y = S.as_array()[None, :] == np.arange(1, k + 1)[:, None]
        weights[w] = cache.singleton(f) * y * np.asarray(x, dtype=float)[None, :]
    coef = np.zeros((k, n))
    for q in range(k):
        for i in range(n):
            a = weights[:, q, i]
            top = a.max()
            if top <= 0.0:
                continue
            key = (a / top).tobytes()
            if key not in coef_cache:
                coef_cache[key] = drr_cut_coefficient(aset, a / top)
            coef[q, i] = top * coef_cache[key]
    return Cut(sep.objective, coef, "T4", _flat(x_hat), sep.distribution.p)


def check_tightness(cut: Cut, x_hat, phi: float, tol: float = 1e-9) -> bool:
    """Whether the cut holds at equality at ``x_hat``."""
    return abs(cut.rhs(x_hat) - phi) <= tol * max(1.0, abs(phi))
