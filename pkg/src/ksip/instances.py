"""Problem instances: generators, data ingestion and the JSON file format.

Randomness comes from NumPy's PCG64 seeded with a 64-bit integer; the seed
and generator name are written into every instance file.  A generator call
spawns independent child streams for the geometry or data noise and for the
attack-success vectors, so the draws are a pure function of the arguments.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from ksip.ambiguity import AmbiguitySet, Distribution, build_set
from ksip.core import CoverageOracle, FunctionOracle, SimilarityOracle
from ksip.master import AttackerPolytope

SCHEMA_VERSION = 1
PRNG = "PCG64"


class ParseError(ValueError):
    pass


_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "n", "k", "budgets", "scenarios", "oracle"],
    "properties": {
        "schema_version": {"type": "integer"},
        "kind": {"enum": ["coverage", "feature"]},
        "n": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "budgets": {
            "type": "object",
            "required": ["attacker", "defender"],
            "properties": {
                "attacker": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "defender": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "scenarios": {
            "type": "object",
            "required": ["xi", "reference_p"],
            "properties": {
                "xi": {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"enum": [0, 1]}}},
                "reference_p": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "oracle": {"type": "object"},
        "ambiguity": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["type", "epsilon"],
                    "properties": {
                        "type": {"enum": ["moment", "wasserstein"]},
                        "epsilon": {"type": "number", "minimum": 0},
                        "reference_p": {"type": "array", "items": {"type": "number"}},
                    },
                },
            ]
        },
        "generator": {"type": "object"},
    },
}

COVERAGE_ORACLE_SCHEMA = {
    "type": "object",
    "required": ["coordinates", "rewards", "radii", "mu"],
    "properties": {"coordinates": _matrix, "rewards": {"type": "array"}, "radii": {"type": "array"}, "mu": _matrix},
}

FEATURE_ORACLE_SCHEMA = {
    "type": "object",
    "required": ["W", "nominal_W"],
    "properties": {"W": {"type": "array", "items": _matrix}, "nominal_W": _matrix},
}


@dataclass
class Instance:
    kind: str
    n: int
    k: int
    attack_budgets: tuple[int, ...]
    defend_budgets: tuple[int, ...]
    xi: np.ndarray
    reference_p: Distribution
    oracle_data: dict
    ambiguity: dict | None = None
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=np.int64)
        self.attack_budgets = tuple(int(a) for a in self.attack_budgets)
        self.defend_budgets = tuple(int(d) for d in self.defend_budgets)
        if self.xi.ndim != 2 or self.xi.shape[1] != self.n:
            raise ValueError(f"xi must have shape (scenarios, {self.n})")
        if len(self.reference_p) != self.xi.shape[0]:
            raise ValueError("reference distribution size does not match the scenario count")
        if len(self.attack_budgets) != self.k or len(self.defend_budgets) != self.k:
            raise ValueError(f"need {self.k} attacker and defender budgets")
        self._oracles = None
        self._nominal = None

    @property
    def n_scenarios(self) -> int:
        return self.xi.shape[0]

    def _build(self):
        d = self.oracle_data
        if self.kind == "coverage":
            f = CoverageOracle(d["coordinates"], d["mu"], d["radii"])
            self._oracles = [f] * self.n_scenarios
            self._nominal = f
        elif self.kind == "feature":
            self._oracles = [SimilarityOracle(W) for W in d["W"]]
            self._nominal = SimilarityOracle(d["nominal_W"])
        else:
            raise ValueError(f"unknown instance kind {self.kind!r}")
        for f in self._oracles + [self._nominal]:
            if f.ground.n != self.n or f.ground.k != self.k:
                raise ValueError("oracle data does not match the instance ground set")

    @property
    def oracles(self) -> list[FunctionOracle]:
        """Scenario objectives (the same object for every coverage scenario)."""
        if self._oracles is None:
            self._build()
        return self._oracles

    @property
    def nominal_oracle(self) -> FunctionOracle:
        """Objective of the unperturbed data, used by the deterministic model."""
        if self._nominal is None:
            self._build()
        return self._nominal

    def polytope(self) -> AttackerPolytope:
        return AttackerPolytope(self.n, self.k, self.attack_budgets)

    def ambiguity_set(self, spec: dict | None = None) -> AmbiguitySet:
        return build_set(spec if spec is not None else self.ambiguity, self.xi, self.reference_p)

    def with_ambiguity(self, spec: dict | None) -> "Instance":
        return replace(self, ambiguity=spec)

    def with_budgets(self, attack=None, defend=None) -> "Instance":
        return replace(
            self,
            attack_budgets=self.attack_budgets if attack is None else attack,
            defend_budgets=self.defend_budgets if defend is None else defend,
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "n": self.n,
            "k": self.k,
            "budgets": {"attacker": list(self.attack_budgets), "defender": list(self.defend_budgets)},
            "scenarios": {"xi": self.xi.tolist(), "reference_p": list(self.reference_p.p)},
            "oracle": self.oracle_data,
            "ambiguity": self.ambiguity,
            "generator": self.generator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        try:
            jsonschema.validate(d, INSTANCE_SCHEMA)
            jsonschema.validate(d["oracle"], COVERAGE_ORACLE_SCHEMA if d["kind"] == "coverage" else FEATURE_ORACLE_SCHEMA)
        except jsonschema.ValidationError as e:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise ParseError(f"invalid instance at {where}: {e.message}") from None
        if d["schema_version"] != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {d['schema_version']} (expected {SCHEMA_VERSION})")
        try:
            return cls(
                kind=d["kind"],
                n=d["n"],
                k=d["k"],
                attack_budgets=tuple(d["budgets"]["attacker"]),
                defend_budgets=tuple(d["budgets"]["defender"]),
                xi=np.array(d["scenarios"]["xi"]),
                reference_p=Distribution(tuple(d["scenarios"]["reference_p"])),
                oracle_data=d["oracle"],
                ambiguity=d.get("ambiguity"),
                generator=d.get("generator", {}),
            )
        except ValueError as e:
            raise ParseError(f"invalid instance: {e}") from None


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=1) + "\n")


def load_instance(path) -> Instance:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    instance = Instance.from_dict(d)
    instance.oracles  # build now so oracle errors surface at load time
    return instance


def default_budget(n: int) -> int:
    return math.ceil(0.1 * n)


def _streams(seed, count):
    return np.random.SeedSequence(seed).spawn(count)


def gen_xi(n: int, n_scenarios: int, success_prob: float, seed) -> np.ndarray:
    """I.i.d. Bernoulli attack-success indicators, shape ``(n_scenarios, n)``."""
    if not 0.0 <= success_prob <= 1.0:
        raise ValueError("success probability must lie in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    return (rng.random((n_scenarios, n)) < success_prob).astype(np.int64)


def coverage_rewards(base, radii) -> np.ndarray:
    """Per-site, per-type rewards; with two types the wider one earns half."""
    base = np.asarray(base, dtype=float)
    radii = np.asarray(radii, dtype=float)
    mu = np.repeat(base[:, None], radii.size, axis=1)
    if radii.size == 2 and radii[0] != radii[1]:
        mu[:, int(np.argmax(radii))] /= 2.0
    return mu


def gen_coverage(
    n: int,
    k: int,
    radii,
    n_scenarios: int,
    seed: int,
    success_prob: float = 0.75,
    attack_budgets=None,
    defend_budgets=None,
    ambiguity: dict | None = None,
) -> Instance:
    """Random weighted-coverage instance on ``[1, 10]^2`` with integer rewards in ``[1, 100]``."""
    radii = [float(r) for r in np.atleast_1d(radii)]
    if n < 1 or k not in (1, 2) or len(radii) != k:
        raise ValueError("need n >= 1, k in {1, 2} and one radius per type")
    geo, xs = _streams(seed, 2)
    rng = np.random.Generator(np.random.PCG64(geo))
    coords = rng.uniform(1.0, 10.0, size=(n, 2))
    base = rng.integers(1, 101, size=n)
    xi = gen_xi(n, n_scenarios, success_prob, xs)
    b = default_budget(n)
    return Instance(
        kind="coverage",
        n=n,
        k=k,
        attack_budgets=tuple(attack_budgets or (b,) * k),
        defend_budgets=tuple(defend_budgets or (b,) * k),
        xi=xi,
        reference_p=Distribution.uniform(n_scenarios),
        oracle_data={
            "coordinates": coords.tolist(),
            "rewards": base.astype(float).tolist(),
            "radii": radii,
            "mu": coverage_rewards(base, radii).tolist(),
        },
        ambiguity=ambiguity,
        generator={
            "prng": PRNG,
            "seed": int(seed),
            "params": {"generator": "coverage", "n": n, "k": k, "radii": radii,
                       "scenarios": n_scenarios, "success_prob": success_prob},
        },
    )


def similarity_from_data(data, measure: str = "pearson", names=None) -> np.ndarray:
    """Nonnegative feature-similarity matrix from an ``m x n`` data matrix.

    ``pearson``: absolute correlation between columns.  ``cosine``: absolute
    cosine of the raw columns.  Both give a symmetric matrix in ``[0, 1]``
    with unit diagonal.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-d matrix")
    if measure == "pearson":
        X = X - X.mean(axis=0)
    elif measure != "cosine":
        raise ValueError(f"unknown similarity measure {measure!r}")
    norms = np.linalg.norm(X, axis=0)
    bad = np.flatnonzero(norms <= 1e-12 * max(1.0, np.abs(data).max()))
    if bad.size:
        j = int(bad[0])
        label = f"{j} ({names[j]!r})" if names is not None else str(j)
        raise ValueError(f"column {label} has zero {'variance' if measure == 'pearson' else 'norm'}")
    U = X / norms
    W = np.clip(np.abs(U.T @ U), 0.0, 1.0)
    np.fill_diagonal(W, 1.0)
    return W


def read_data_csv(path):
    """Headered CSV of numeric columns; returns ``(names, matrix)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ParseError(f"{path}:{lineno}: expected {len(names)} fields, found {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                col = next(j for j, v in enumerate(row) if not _is_number(v))
                raise ParseError(f"{path}:{lineno}: non-numeric value {row[col]!r} in column {names[col]!r}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return [n.strip() for n in names], np.array(rows)


def _is_number(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def gen_feature_scenarios(
    data,
    delta: float,
    n_scenarios: int,
    seed: int,
    success_prob: float = 0.75,
    attack_budget=None,
    defend_budget=None,
    measure: str = "pearson",
    names=None,
    source: str | None = None,
    ambiguity: dict | None = None,
) -> Instance:
    """Feature-selection instance from independently perturbed copies of ``data``.

    Scenario w adds ``Uniform[-delta, delta]`` noise to every entry, then
    turns the perturbed matrix into a similarity matrix.
    """
    X = np.asarray(data, dtype=float)
    if delta < 0:
        raise ValueError("perturbation radius must be nonnegative")
    m, n = X.shape
    noise_ss, xs = _streams(seed, 2)
    rng = np.random.Generator(np.random.PCG64(noise_ss))
    Ws = []
    for _ in range(n_scenarios):
        noisy = X + rng.uniform(-delta, delta, size=X.shape) if delta > 0 else X
        Ws.append(similarity_from_data(noisy, measure, names).tolist())
    xi = gen_xi(n, n_scenarios, success_prob, xs)
    b = default_budget(n)
    return Instance(
        kind="feature",
        n=n,
        k=1,
        attack_budgets=(attack_budget if attack_budget is not None else b,),
        defend_budgets=(defend_budget if defend_budget is not None else b,),
        xi=xi,
        reference_p=Distribution.uniform(n_scenarios),
        oracle_data={
            "W": Ws,
            "nominal_W": similarity_from_data(X, measure, names).tolist(),
            "delta": float(delta),
            "similarity": measure,
            "source": source,
            "rows": m,
        },
        ambiguity=ambiguity,
        generator={
            "prng": PRNG,
            "seed": int(seed),
            "params": {"generator": "feature", "delta": float(delta), "scenarios": n_scenarios,
                       "success_prob": success_prob, "similarity": measure},
        },
    )


def random_data_matrix(m: int, n: int, seed: int) -> np.ndarray:
    """Correlated synthetic data for tests and demos (a few latent factors plus noise)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    factors = rng.normal(size=(m, max(1, n // 2)))
    loadings = rng.uniform(-1.0, 1.0, size=(factors.shape[1], n))
    return factors @ loadings + 0.5 * rng.normal(size=(m, n))
