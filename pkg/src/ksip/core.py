"""Ground sets, k-disjoint tuples and monotone k-submodular function oracles.

A :class:`KTuple` stores one slot per item (``0`` = unassigned, ``q`` in
``1..k`` = item belongs to the q-th set), so the k sets are disjoint by
construction.  Types are 1-based everywhere in the public API; items are
0-based positions in the assignment vector.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Objects built over different ground sets were combined."""


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


class GuardError(RuntimeError):
    """An exhaustive procedure was asked to enumerate too much."""


@dataclass(frozen=True)
class GroundSet:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError(f"ground set needs n >= 1 and k >= 1, got n={self.n}, k={self.k}")

    @property
    def n_tuples(self) -> int:
        return (self.k + 1) ** self.n


@dataclass(frozen=True)
class KTuple:
    """A tuple of k pairwise-disjoint subsets of ``{0..n-1}``."""

    assignment: tuple[int, ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        for a in self.assignment:
            if a < 0 or a > self.k:
                raise ValueError(f"slot {a} outside 0..{self.k}")

    @classmethod
    def empty(cls, n: int, k: int) -> "KTuple":
        return cls((0,) * n, k)

    @classmethod
    def from_sets(cls, sets: Sequence[Iterable[int]], n: int) -> "KTuple":
        """Build from ``(Z_1, ..., Z_k)``; overlapping sets are rejected."""
        assignment = [0] * n
        for q, members in enumerate(sets, start=1):
            for i in members:
                if assignment[i]:
                    raise ValueError(f"item {i} appears in sets {assignment[i]} and {q}")
                assignment[i] = q
        return cls(tuple(assignment), len(sets))

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def ground(self) -> GroundSet:
        return GroundSet(self.n, self.k)

    def sets(self) -> tuple[frozenset[int], ...]:
        return tuple(
            frozenset(i for i, a in enumerate(self.assignment) if a == q)
            for q in range(1, self.k + 1)
        )

    def members(self, q: int) -> list[int]:
        return [i for i, a in enumerate(self.assignment) if a == q]

    def size(self, q: int | None = None) -> int:
        if q is None:
            return sum(1 for a in self.assignment if a)
        return sum(1 for a in self.assignment if a == q)

    def with_item(self, q: int, i: int) -> "KTuple":
        if self.assignment[i]:
            raise PreconditionError(f"item {i} already assigned to slot {self.assignment[i]}")
        if not 1 <= q <= self.k:
            raise PreconditionError(f"type {q} outside 1..{self.k}")
        a = list(self.assignment)
        a[i] = q
        return KTuple(tuple(a), self.k)

    def is_subtuple_of(self, other: "KTuple") -> bool:
        """Componentwise inclusion ``X_q <= Y_q`` for every q."""
        _check_same_ground(self, other)
        return all(a == 0 or a == b for a, b in zip(self.assignment, other.assignment))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=np.int64)

    def __str__(self):
        return "(" + ", ".join("{" + ",".join(map(str, sorted(s))) + "}" for s in self.sets()) + ")"


def _check_same_ground(X: KTuple, Y: KTuple):
    if X.n != Y.n or X.k != Y.k:
        raise DimensionError(f"tuples over (n={X.n}, k={X.k}) and (n={Y.n}, k={Y.k})")


def meet_join(X: KTuple, Y: KTuple) -> tuple[KTuple, KTuple]:
    """Return ``(X meet Y, X join Y)``.

    The meet intersects slot by slot.  The join unions slot by slot and then
    drops any item that the two tuples place in different slots.
    """
    _check_same_ground(X, Y)
    meet, join = [], []
    for a, b in zip(X.assignment, Y.assignment):
        meet.append(a if a == b else 0)
        if a == b or b == 0:
            join.append(a)
        elif a == 0:
            join.append(b)
        else:
            join.append(0)
    return KTuple(tuple(meet), X.k), KTuple(tuple(join), X.k)


def all_tuples(ground: GroundSet) -> Iterable[KTuple]:
    for a in itertools.product(range(ground.k + 1), repeat=ground.n):
        yield KTuple(a, ground.k)


class FunctionOracle:
    """A set function over k-disjoint tuples.

    Subclasses implement :meth:`evaluate`.  The ``state``/``gains``/``extend``
    trio is the incremental interface used by the search code; the defaults
    here fall back on plain evaluation and are only meant for small or ad-hoc
    oracles.
    """

    ground: GroundSet

    def evaluate(self, S: KTuple) -> float:
        raise NotImplementedError

    def check_tuple(self, S: KTuple):
        if S.n != self.ground.n or S.k != self.ground.k:
            raise DimensionError(
                f"tuple over (n={S.n}, k={S.k}) given to oracle over "
                f"(n={self.ground.n}, k={self.ground.k})"
            )

    def marginal_gain(self, X: KTuple, q: int, i: int) -> float:
        self.check_tuple(X)
        return self.evaluate(X.with_item(q, i)) - self.evaluate(X)

    # Incremental interface. A state summarizes a tuple.
    def state(self, assignment: Sequence[int]):
        return tuple(int(a) for a in assignment)

    def state_value(self, state) -> float:
        return self.evaluate(KTuple(state, self.ground.k))

    def state_assignment(self, state) -> tuple[int, ...]:
        return tuple(state)

    def extend(self, state, q: int, i: int):
        a = list(state)
        a[i] = q
        return tuple(a)

    def gains(self, state) -> np.ndarray:
        """Marginal gains of every (type, item) pair, shape ``(k, n)``.

        Entries for items already assigned in ``state`` are ``nan``.
        """
        k, n = self.ground.k, self.ground.n
        base = self.state_value(state)
        out = np.full((k, n), np.nan)
        for i in range(n):
            if state[i]:
                continue
            for q in range(1, k + 1):
                out[q - 1, i] = self.state_value(self.extend(state, q, i)) - base
        return out


class MaxRewardOracle(FunctionOracle):
    """``f(S) = sum_i max_{(q, j) in S} profit[q, j, i]`` with an empty max of 0.

    Both concrete objectives used by the solver are of this form, with a
    nonnegative profit tensor of shape ``(k, n, n_targets)``.  Such functions
    are monotone and k-submodular.
    """

    def __init__(self, profit: np.ndarray):
        profit = np.asarray(profit, dtype=float)
        if profit.ndim != 3:
            raise ValueError("profit tensor must have shape (k, n, n_targets)")
        if not np.all(np.isfinite(profit)) or np.any(profit < 0):
            raise ValueError("profit tensor must be finite and nonnegative")
        self.profit = profit
        self.profit.setflags(write=False)
        self.ground = GroundSet(profit.shape[1], profit.shape[0])

    def evaluate(self, S: KTuple) -> float:
        self.check_tuple(S)
        return self.state_value(self.state(S.assignment))

    def state(self, assignment: Sequence[int]):
        best = np.zeros(self.profit.shape[2])
        for i, q in enumerate(assignment):
            if q:
                np.maximum(best, self.profit[q - 1, i], out=best)
        return (tuple(int(a) for a in assignment), best)

    def state_value(self, state) -> float:
        return float(state[1].sum())

    def state_assignment(self, state) -> tuple[int, ...]:
        return state[0]

    def extend(self, state, q: int, i: int):
        a, best = state
        a = a[:i] + (q,) + a[i + 1:]
        return (a, np.maximum(best, self.profit[q - 1, i]))

    def gains(self, state) -> np.ndarray:
        a, best = state
        g = np.maximum(self.profit - best, 0.0).sum(axis=2)
        assigned = np.asarray(a, dtype=bool)
        g[:, assigned] = np.nan
        return g


class SimilarityOracle(MaxRewardOracle):
    """Feature-selection objective ``f(S) = sum_i max_{j in S} w[i, j]`` (k = 1)."""

    def __init__(self, W):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"similarity matrix must be square, got shape {W.shape}")
        self.W = W
        # profit[0, j, i] = w[i, j]
        super().__init__(W.T[None, :, :].copy())


class CoverageOracle(MaxRewardOracle):
    """Weighted multi-type sensor coverage.

    A type-q sensor at location j covers site i iff ``dist(i, j) <= radii[q]``.
    ``rewards[i, q]`` is earned for site i when its best covering type is q.
    Candidate locations coincide with the sites.
    """

    def __init__(self, coordinates, rewards, radii):
        coordinates = np.asarray(coordinates, dtype=float)
        rewards = np.asarray(rewards, dtype=float)
        radii = np.asarray(radii, dtype=float).reshape(-1)
        n = coordinates.shape[0]
        if rewards.ndim == 1:
            rewards = rewards[:, None]
        if rewards.shape != (n, radii.size):
            raise ValueError(f"rewards shape {rewards.shape} does not match (n={n}, k={radii.size})")
        if np.any(radii <= 0):
            raise ValueError("radii must be positive")
        self.coordinates = coordinates
        self.rewards = rewards
        self.radii = radii
        dist = np.linalg.norm(coordinates[:, None, :] - coordinates[None, :, :], axis=2)
        self.covers = dist[None, :, :] <= radii[:, None, None]  # (k, j, i)
        super().__init__(np.where(self.covers, rewards.T[:, None, :], 0.0))


def marginal_gain(f: FunctionOracle, X: KTuple, q: int, i: int) -> float:
    return f.marginal_gain(X, q, i)


def evaluate(f: FunctionOracle, S: KTuple) -> float:
    return f.evaluate(S)


def check_k_submodular(f: FunctionOracle, max_tuples: int = 4096, tol: float = 1e-9) -> bool:
    """Exhaustively verify k-submodularity and monotonicity of ``f``.

    Every pair of tuples is checked, so the work is quadratic in
    ``(k+1)**n``; ground sets with more than ``max_tuples`` tuples are
    refused with :class:`GuardError`.
    """
    n, k = f.ground.n, f.ground.k
    T = f.ground.n_tuples
    if T > max_tuples:
        raise GuardError(f"(k+1)^n = {T} tuples exceeds the enumeration guard {max_tuples}")
    tuples = np.array(list(itertools.product(range(k + 1), repeat=n)), dtype=np.int64)
    values = np.array([f.evaluate(KTuple(t, k)) for t in tuples])
    weights = (k + 1) ** np.arange(n - 1, -1, -1)

    # monotone under single additions
    for idx, t in enumerate(tuples):
        for i in np.flatnonzero(t == 0):
            for q in range(1, k + 1):
                code = idx + q * weights[i]
                if values[code] < values[idx] - tol:
                    return False

    for idx in range(T):
        X = tuples[idx]
        Y = tuples[idx:]
        meet = np.where(X == Y, X, 0)
        join = np.where((X == Y) | (Y == 0), X, np.where(X == 0, Y, 0))
        lhs = values[idx] + values[idx:]
        rhs = values[meet @ weights] + values[join @ weights]
        if np.any(lhs < rhs - tol * np.maximum(1.0, np.abs(lhs))):
            return False
    return True
