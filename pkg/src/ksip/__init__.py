"""Exact solvers for stochastic and distributionally robust k-submodular interdiction."""

from ksip.ambiguity import Distribution, MomentMatchingSet, SingletonSet, WassersteinSet, separate_max, separate_min
from ksip.core import CoverageOracle, KTuple, SimilarityOracle, check_k_submodular, meet_join
from ksip.decomposition import SolveConfig, SolveReport, compute_value_metrics, epsilon_sweep, evaluate_phi, solve
from ksip.defender import DefenderProblem, solve_exact
from ksip.instances import Instance, gen_coverage, gen_feature_scenarios, load_instance, save_instance

__version__ = "0.1.0"
