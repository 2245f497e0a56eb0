import numpy as np
import pytest

from ksip.instances import gen_coverage, gen_feature_scenarios, random_data_matrix

# Lines recorded by the acceptance suite, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def small_coverage(seed, n=5, k=1, scenarios=2, attack=1, defend=1, radii=None, ambiguity=None, success_prob=0.75):
    radii = radii or ([3.0] if k == 1 else [2.5, 4.0])
    return gen_coverage(
        n, k, radii, scenarios, seed,
        success_prob=success_prob,
        attack_budgets=(attack,) * k,
        defend_budgets=(defend,) * k,
        ambiguity=ambiguity,
    )


def small_feature(seed, n=5, scenarios=2, attack=1, defend=1, delta=0.2, ambiguity=None):
    data = random_data_matrix(30, n, seed)
    return gen_feature_scenarios(data, delta, scenarios, seed, attack_budget=attack, defend_budget=defend,
                                 ambiguity=ambiguity)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
