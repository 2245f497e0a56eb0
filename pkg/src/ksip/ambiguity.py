"""Ambiguity sets over a finite scenario set and distribution separation.

Three families are supported: a singleton ``{p}`` (the risk-neutral case),
a first-moment box around the empirical mean of the attack-success vectors,
and a Wasserstein ball around a reference distribution with the Hamming
(L1) distance between success vectors as ground cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ksip.lp import EQ, GE, LE, LinearProgram, solve_lp

FEAS_TOL = 1e-9


class SeparationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Distribution:
    p: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if np.any(p < -FEAS_TOL) or abs(p.sum() - 1.0) > 1e-7:
            raise ValueError(f"not a probability vector: sum={p.sum():.12g}, min={p.min():.3g}")
        object.__setattr__(self, "p", tuple(float(v) for v in np.clip(p, 0.0, None)))

    @classmethod
    def uniform(cls, size: int) -> "Distribution":
        return cls(tuple(np.full(size, 1.0 / size)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.p)

    def expectation(self, values) -> float:
        return float(np.dot(self.p, values))

    def __len__(self):
        return len(self.p)


@dataclass
class Separation:
    distribution: Distribution
    objective: float
    plan: np.ndarray | None = None  # transport plan, Wasserstein only


class AmbiguitySet:
    """Base class: a polytope of distributions over ``size`` scenarios."""

    size: int
    reference: Distribution

    def _lp(self, values: np.ndarray, sense: str) -> LinearProgram:
        raise NotImplementedError

    def _unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        return x[: self.size], None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def separate(self, values, sense: str, backend: str = "auto") -> Separation:
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != self.size:
            raise ValueError(f"{values.size} values for {self.size} scenarios")
        sol = solve_lp(self._lp(values, sense), backend=backend)
        if sol.status != "optimal":
            raise SeparationError(f"distribution separation {sol.status}: {sol.message}")
        p, plan = self._unpack(sol.x)
        p = np.clip(p, 0.0, None)
        p /= p.sum()
        return Separation(Distribution(tuple(p)), float(p @ values), plan)


class SingletonSet(AmbiguitySet):
    def __init__(self, reference: Distribution):
        self.reference = reference
        self.size = len(reference)

    def separate(self, values, sense, backend="auto"):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != self.size:
            raise ValueError(f"{values.size} values for {self.size} scenarios")
        return Separation(self.reference, self.reference.expectation(values))

    def to_dict(self):
        return {"type": "singleton", "reference_p": list(self.reference.p)}


class MomentMatchingSet(AmbiguitySet):
    """``{p : l <= sum_w p_w xi_w <= u}`` with ``l, u = (1 -/+ eps) * mean(xi)``."""

    def __init__(self, xi, epsilon: float):
        xi = np.asarray(xi, dtype=float)
        if xi.ndim != 2:
            raise ValueError("xi must be a (scenarios, n) array")
        if epsilon < 0:
            raise ValueError("moment tolerance must be nonnegative")
        self.xi = xi
        self.epsilon = float(epsilon)
        self.size = xi.shape[0]
        self.mean = xi.mean(axis=0)
        self.lower = (1.0 - self.epsilon) * self.mean
        self.upper = (1.0 + self.epsilon) * self.mean
        self.reference = Distribution.uniform(self.size)

    def contains(self, p, tol: float = 1e-9) -> bool:
        m = np.asarray(p) @ self.xi
        return bool(np.all(m >= self.lower - tol) and np.all(m <= self.upper + tol))

    def _lp(self, values, sense):
        W, n = self.xi.shape
        A = np.vstack([np.ones((1, W)), self.xi.T, self.xi.T])
        b = np.concatenate([[1.0], self.lower, self.upper])
        senses = [EQ] + [GE] * n + [LE] * n
        return LinearProgram(values, A, b, senses, sense=sense)

    def to_dict(self):
        return {"type": "moment", "epsilon": self.epsilon}


def hamming_distances(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.abs(xi[:, None, :] - xi[None, :, :]).sum(axis=2)


class WassersteinSet(AmbiguitySet):
    """Distributions within transport cost ``epsilon`` of ``reference``.

    Variables of the separation LP are ``p`` followed by the row-major plan
    ``v[i, j]`` moving reference mass from scenario j to scenario i.
    ``epsilon = 0`` is the singleton ``{reference}``.
    """

    def __init__(self, reference: Distribution, epsilon: float, xi=None, distances=None):
        if epsilon < 0:
            raise ValueError("Wasserstein radius must be nonnegative")
        self.reference = reference
        self.size = len(reference)
        self.epsilon = float(epsilon)
        if distances is None:
            distances = hamming_distances(xi)
        d = np.asarray(distances, dtype=float)
        if d.shape != (self.size, self.size) or not np.allclose(d, d.T) or np.any(np.diag(d) != 0):
            raise ValueError("ground distances must be a symmetric matrix with zero diagonal")
        self.distances = d

    def _lp(self, values, sense):
        W = self.size
        nv = W * W
        c = np.concatenate([values, np.zeros(nv)])
        rows, b, senses = [], [], []
        r = np.zeros(W + nv)
        r[:W] = 1.0
        rows.append(r); b.append(1.0); senses.append(EQ)
        r = np.zeros(W + nv)
        r[W:] = self.distances.reshape(-1)
        rows.append(r); b.append(self.epsilon); senses.append(LE)
        for i in range(W):  # sum_j v[i, j] = p_i
            r = np.zeros(W + nv)
            r[i] = -1.0
            r[W + i * W: W + (i + 1) * W] = 1.0
            rows.append(r); b.append(0.0); senses.append(EQ)
        for j in range(W):  # sum_i v[i, j] = p*_j
            r = np.zeros(W + nv)
            r[W + j: W + nv: W] = 1.0
            rows.append(r); b.append(self.reference.p[j]); senses.append(EQ)
        return LinearProgram(c, np.array(rows), np.array(b), senses, sense=sense)

    def _unpack(self, x):
        W = self.size
        return x[:W], x[W:].reshape(W, W)

    def separate(self, values, sense, backend="auto"):
        if self.epsilon == 0.0:
            values = np.asarray(values, dtype=float).reshape(-1)
            return Separation(self.reference, self.reference.expectation(values), np.diag(self.reference.p))
        return super().separate(values, sense, backend)

    def to_dict(self):
        return {"type": "wasserstein", "epsilon": self.epsilon, "reference_p": list(self.reference.p)}


def separate_min(values, aset: AmbiguitySet) -> Separation:
    """Distribution in ``aset`` minimizing ``sum_w p_w values_w``."""
    return aset.separate(values, "min")


def separate_max(values, aset: AmbiguitySet) -> Separation:
    """Distribution in ``aset`` maximizing ``sum_w p_w values_w``."""
    return aset.separate(values, "max")


def drr_cut_coefficient(aset: AmbiguitySet, weights) -> float:
    """Largest probability-weighted mass ``max_P sum_w p_w a_w`` for ``a >= 0``."""
    a = np.asarray(weights, dtype=float)
    if np.any(a < 0):
        raise ValueError("cut weights must be nonnegative")
    if not np.any(a):
        return 0.0
    return separate_max(a, aset).objective


def build_set(spec: dict | None, xi, reference: Distribution) -> AmbiguitySet:
    """Construct an ambiguity set from its JSON description."""
    if spec is None:
        return SingletonSet(reference)
    kind = spec.get("type")
    if kind == "moment":
        return MomentMatchingSet(xi, spec["epsilon"])
    if kind == "wasserstein":
        ref = Distribution(tuple(spec["reference_p"])) if spec.get("reference_p") else reference
        return WassersteinSet(ref, spec["epsilon"], xi=xi)
    if kind == "singleton":
        return SingletonSet(Distribution(tuple(spec.get("reference_p") or reference.p)))
    raise ValueError(f"unknown ambiguity set type {kind!r}")
