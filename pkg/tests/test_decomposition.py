import io
import json
import warnings

import numpy as np
import pytest

from conftest import small_coverage, small_feature
from ksip.decomposition import (
    DefenderCache,
    PhiEvaluator,
    SolveConfig,
    compute_value_metrics,
    epsilon_sweep,
    evaluate_phi,
    solve,
    solve_all,
)
from ksip.defender import DefenderProblem, solve_exact
from ksip.oracle import brute_minmax, phi_table

VARIANTS = ("deterministic", "risk_neutral", "dra", "drr")
MOMENT = {"type": "moment", "epsilon": 0.3}


def quiet_solve(inst, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve(inst, SolveConfig(**kw))


def test_zero_budget_terminates_at_zero():
    inst = small_coverage(1, n=5, scenarios=2, attack=0, ambiguity=MOMENT)
    for v in VARIANTS:
        rep = quiet_solve(inst, variant=v)
        assert rep.iterations <= 2 and rep.certified
        assert not rep.x_star.any()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert rep.theta_ub == pytest.approx(evaluate_phi(inst, np.zeros((1, 5)), v))


def test_single_scenario_all_models_coincide():
    inst = small_coverage(2, n=5, scenarios=1, attack=2, defend=2, success_prob=1.0,
                          ambiguity={"type": "wasserstein", "epsilon": 0.5})
    values = {v: quiet_solve(inst, variant=v).theta_ub for v in VARIANTS}
    assert max(values.values()) - min(values.values()) <= 1e-9


def test_n5_three_scenarios_moment_matches_oracle():
    inst = small_coverage(3, n=5, scenarios=3, attack=2, defend=2, ambiguity=MOMENT)
    for v in VARIANTS:
        rep = quiet_solve(inst, variant=v)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, best = brute_minmax(inst, v)
        assert rep.certified and rep.theta_ub == pytest.approx(best, abs=1e-6)


def test_feature_instance_matches_oracle():
    inst = small_feature(4, n=6, scenarios=3, attack=2, defend=2, ambiguity={"type": "wasserstein", "epsilon": 0.4})
    for v in VARIANTS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, best = brute_minmax(inst, v)
        assert quiet_solve(inst, variant=v).theta_ub == pytest.approx(best, abs=1e-6)


def test_phi_ordering_at_fixed_attacks():
    inst = small_coverage(5, n=5, scenarios=3, attack=2, defend=2, ambiguity=MOMENT)
    evs = {v: PhiEvaluator(inst, v) for v in ("drr", "risk_neutral", "dra")}
    for x in inst.polytope().enumerate():
        r, nval, a = (evs[v](x) for v in ("drr", "risk_neutral", "dra"))
        assert r <= nval + 1e-9 <= a + 2e-9


def test_phi_matches_oracle_table():
    inst = small_coverage(6, n=5, k=2, scenarios=2, attack=1, defend=1, ambiguity=MOMENT)
    for v in ("risk_neutral", "dra", "drr"):
        ev = PhiEvaluator(inst, v)
        for x, phi in phi_table(inst, v):
            assert ev(x) == pytest.approx(phi, abs=1e-9)


def test_deterministic_warns_and_uses_first_scenario():
    inst = small_coverage(7, n=5, scenarios=3, attack=1, defend=2)
    with pytest.warns(UserWarning, match="scenario 1"):
        ev = PhiEvaluator(inst, "deterministic")
    assert len(ev.oracles) == 1 and ev.xi.tolist() == [[1] * 5]
    assert ev(np.zeros((1, 5))) == pytest.approx(ev.cache.solve(inst.oracles[0], (2,), frozenset()).value)


def test_unconstrained_defender_at_zero_attack():
    inst = small_coverage(8, n=5, scenarios=1, success_prob=1.0, defend=2)
    assert evaluate_phi(inst, np.zeros((1, 5)), "deterministic") == pytest.approx(
        solve_exact(DefenderProblem(inst.oracles[0], (2,))).value)


def test_bounds_monotone_and_log_stream():
    inst = small_coverage(9, n=6, k=2, scenarios=3, attack=2, defend=2, ambiguity=MOMENT)
    buf = io.StringIO()
    rep = solve(inst, SolveConfig(variant="drr"), stream=buf)
    lines = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(lines) == rep.iterations == len(rep.log)
    lbs = [e["theta_lb"] for e in lines]
    ubs = [e["theta_ub"] for e in lines]
    assert all(b >= a for a, b in zip(lbs, lbs[1:])) and all(b <= a for a, b in zip(ubs, ubs[1:]))
    assert len({json.dumps(e["x_hat"]) for e in lines}) == len(lines)
    assert lines[-1]["distribution"] is not None
    assert rep.gap <= 1e-6


def test_report_json_and_determinism():
    inst = small_coverage(10, n=5, scenarios=2, attack=2, defend=1, ambiguity=MOMENT)
    a = solve(inst, SolveConfig(variant="dra"))
    b = solve(inst, SolveConfig(variant="dra"))
    da, db = a.to_dict(), b.to_dict()
    for d in (da, db):
        d.pop("time")
        for e in d["log"]:
            e.pop("elapsed")
    assert da == db
    assert json.loads(a.to_json())["status"] == "optimal"


def test_iteration_limit_and_relative_gap():
    inst = small_coverage(11, n=6, scenarios=3, attack=2, defend=2)
    rep = quiet_solve(inst, variant="risk_neutral", max_iterations=1)
    assert rep.iterations == 1
    assert rep.status in ("optimal", "iteration_limit")
    assert rep.theta_lb <= rep.theta_ub
    full = quiet_solve(inst, variant="risk_neutral", relative_gap=True, gap_tol=1e-9)
    assert full.certified


def test_threads_and_engines_agree():
    inst = small_coverage(12, n=6, scenarios=3, attack=2, defend=2, ambiguity=MOMENT)
    base = quiet_solve(inst, variant="drr")
    for kw in ({"threads": 3}, {"master_engine": "primal"}, {"permutation": "index"}, {"deterministic_cut": "basic"}):
        rep = quiet_solve(inst, variant="drr", **kw)
        assert rep.theta_ub == pytest.approx(base.theta_ub, abs=1e-9)
    det = quiet_solve(inst, variant="deterministic", deterministic_cut="basic")
    assert det.theta_ub == pytest.approx(quiet_solve(inst, variant="deterministic").theta_ub)


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(variant="robust")
    with pytest.raises(ValueError):
        SolveConfig(gap_tol=-1)
    with pytest.raises(ValueError):
        SolveConfig(master_engine="interior")
    with pytest.raises(ValueError):
        solve(small_coverage(1), SolveConfig(variant="dra"))  # no ambiguity set


def test_value_metrics_match_oracle_differences():
    inst = small_coverage(13, n=5, scenarios=3, attack=2, defend=2, ambiguity=MOMENT)
    cache = DefenderCache()
    reports = solve_all(inst, MOMENT, cache=cache)
    m = compute_value_metrics(inst, reports, MOMENT, cache=cache)
    x_dt = reports["deterministic"].x_star
    for key, v in (("VSS", "risk_neutral"), ("VAS", "dra"), ("VRS", "drr")):
        table = {x.tobytes(): phi for x, phi in phi_table(inst, v)}
        best = min(table.values())
        assert m[key] == pytest.approx(table[x_dt.astype(np.int64).tobytes()] - best, abs=1e-6)
        assert m[key] >= -1e-9


def test_same_attack_gives_zero_vss():
    inst = small_coverage(14, n=4, scenarios=1, success_prob=1.0, attack=1, defend=1)
    reports = solve_all(inst, {"type": "wasserstein", "epsilon": 0.0})
    assert np.array_equal(reports["deterministic"].x_star, reports["risk_neutral"].x_star)
    m = compute_value_metrics(inst, reports, {"type": "wasserstein", "epsilon": 0.0})
    assert m == pytest.approx({"VSS": 0.0, "VAS": 0.0, "VRS": 0.0}, abs=1e-12)


def test_epsilon_sweep_shape():
    inst = small_coverage(15, n=5, scenarios=3, attack=2, defend=1)
    rows = epsilon_sweep(inst, [0.0, 0.5, 1.0, 3.0])
    assert [r["epsilon"] for r in rows] == [0.0, 0.5, 1.0, 3.0]
    assert rows[0]["phi_dra"] == pytest.approx(rows[0]["phi_rn"]) == pytest.approx(rows[0]["phi_drr"])
    for a, b in zip(rows, rows[1:]):
        assert b["phi_dra"] >= a["phi_dra"] - 1e-9 and b["phi_drr"] <= a["phi_drr"] + 1e-9
    for r in rows:
        assert r["phi_dra"] >= r["phi_rn"] - 1e-9 and r["phi_rn"] >= r["phi_drr"] - 1e-9
    with pytest.raises(ValueError):
        epsilon_sweep(inst, [-0.1])
