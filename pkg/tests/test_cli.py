import csv
import io
import json

import numpy as np
import pytest

from conftest import small_coverage
from ksip.cli import main
from ksip.core import CoverageOracle, GuardError, check_k_submodular
from ksip.instances import load_instance, random_data_matrix, save_instance
from ksip.oracle import phi_table


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def inst_path(tmp_path):
    path = tmp_path / "inst.json"
    save_instance(small_coverage(17, n=5, scenarios=3, attack=2, defend=2,
                                 ambiguity={"type": "moment", "epsilon": 0.3}), path)
    return path


def test_generate_coverage_round_trip(tmp_path, capsys):
    out = tmp_path / "big.json"
    code, _, _ = run(capsys, "generate", "coverage", "--n", 50, "--k", 1, "--radius", 2, "--scenarios", 100,
                     "--seed", 7, "-o", out)
    assert code == 0
    inst = load_instance(out)
    assert (inst.n, inst.k, inst.n_scenarios, inst.attack_budgets) == (50, 1, 100, (5,))
    with pytest.raises(GuardError):
        check_k_submodular(inst.oracles[0])
    # the full ground set is beyond exhaustive checking; check sub-instances instead
    d = inst.oracle_data
    for start in range(0, 50, 10):
        sl = slice(start, start + 6)
        sub = CoverageOracle(np.array(d["coordinates"])[sl], np.array(d["mu"])[sl], d["radii"])
        assert check_k_submodular(sub)


def test_generate_feature_counts(tmp_path, capsys):
    data = tmp_path / "data.csv"
    X = random_data_matrix(30, 6, 1)
    np.savetxt(data, X, delimiter=",", header=",".join(f"f{j}" for j in range(6)), comments="")
    out = tmp_path / "feat.json"
    code, _, _ = run(capsys, "generate", "feature", "--data", data, "--delta", 0.1, "--scenarios", 100,
                     "--seed", 7, "-o", out)
    assert code == 0
    inst = load_instance(out)
    assert len(inst.oracle_data["W"]) == 100 and inst.n == 6


def test_generate_to_stdout(capsys):
    code, out, _ = run(capsys, "generate", "coverage", "--n", 4, "--radius", 2, "--scenarios", 2, "--seed", 1)
    assert code == 0 and json.loads(out)["n"] == 4


def test_seed_is_required(capsys):
    with pytest.raises(SystemExit) as info:
        main(["generate", "coverage", "--n", "5", "--radius", "2", "--scenarios", "2"])
    assert info.value.code == 2
    assert "--seed" in capsys.readouterr().err


def test_solve_drr_wasserstein(inst_path, tmp_path, capsys):
    report = tmp_path / "rep.json"
    log = tmp_path / "log.jsonl"
    code, out, _ = run(capsys, "solve", inst_path, "--variant", "drr", "--ambiguity", "wasserstein", "--eps", 0.5,
                       "--report", report, "--log-jsonl", log)
    assert code == 0
    (row,) = rows(out)
    assert row["variant"] == "drr" and row["status"] == "optimal"
    rep = json.loads(report.read_text())
    assert rep["theta_ub"] - rep["theta_lb"] <= 1e-6
    assert len(log.read_text().splitlines()) == rep["iterations"]
    assert float(row["reward"]) == pytest.approx(rep["theta_ub"])


def test_solve_deterministic_warns(inst_path, capsys):
    with pytest.warns(UserWarning, match="scenario 1"):
        code, out, _ = run(capsys, "solve", inst_path, "--variant", "deterministic")
    assert code == 0


def test_solve_is_deterministic(inst_path, tmp_path, capsys):
    reports = []
    for name in ("a.json", "b.json"):
        run(capsys, "solve", inst_path, "--variant", "dra", "--report", tmp_path / name)
        rep = json.loads((tmp_path / name).read_text())
        rep.pop("time")
        for e in rep["log"]:
            e.pop("elapsed")
        reports.append(rep)
    assert reports[0] == reports[1]


def test_solve_iteration_limit_exit_code(inst_path, capsys):
    code, out, _ = run(capsys, "solve", inst_path, "--variant", "risk_neutral", "--max-iterations", 1)
    (row,) = rows(out)
    assert (code == 0) == (row["status"] == "optimal")


def test_compare_matches_oracle(inst_path, capsys):
    code, out, _ = run(capsys, "compare", inst_path)
    assert code == 0
    (row,) = rows(out)
    inst = load_instance(inst_path)
    best = {v: min(p for _, p in phi_table(inst, v)) for v in ("risk_neutral", "dra", "drr")}
    assert float(row["phi_rn"]) == pytest.approx(best["risk_neutral"], abs=1e-6)
    assert float(row["phi_dra"]) == pytest.approx(best["dra"], abs=1e-6)
    assert float(row["phi_drr"]) == pytest.approx(best["drr"], abs=1e-6)
    for m in ("VSS", "VAS", "VRS"):
        assert float(row[m]) >= -1e-9


def test_compare_singleton_collapses_metrics(inst_path, capsys):
    code, out, _ = run(capsys, "compare", inst_path, "--ambiguity", "wasserstein", "--eps", 0)
    (row,) = rows(out)
    assert float(row["VSS"]) == pytest.approx(float(row["VAS"])) == pytest.approx(float(row["VRS"]))
    assert float(row["phi_rn"]) == pytest.approx(float(row["phi_dra"])) == pytest.approx(float(row["phi_drr"]))


def test_sweep_csv(inst_path, tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", inst_path, "--radii", 0, 0.5, 1, 2)
    assert code == 0
    assert out.splitlines()[0] == "epsilon,phi_dra,phi_rn,phi_drr"
    table = [{k: float(v) for k, v in r.items()} for r in rows(out)]
    first = table[0]
    assert first["phi_dra"] == pytest.approx(first["phi_rn"]) == pytest.approx(first["phi_drr"])
    for a, b in zip(table, table[1:]):
        assert b["phi_dra"] >= a["phi_dra"] - 1e-9 and b["phi_drr"] <= a["phi_drr"] + 1e-9
    for r in table:
        assert r["phi_dra"] >= r["phi_rn"] - 1e-9 and r["phi_rn"] >= r["phi_drr"] - 1e-9
    path = tmp_path / "sweep.csv"
    run(capsys, "sweep", inst_path, "--radii", 0, 1, "-o", path)
    assert path.read_text().startswith("epsilon,phi_dra,phi_rn,phi_drr\n")


def test_bad_input_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "solve", bad)
    assert code == 2 and "malformed JSON" in err
    code, _, err = run(capsys, "solve", tmp_path / "missing.json")
    assert code == 2


def test_ambiguity_needs_eps(inst_path):
    with pytest.raises(SystemExit) as info:
        main(["solve", str(inst_path), "--variant", "dra", "--ambiguity", "moment"])
    assert info.value.code == 2


def test_sweep_takes_radii_without_eps(inst_path, capsys):
    code, out, _ = run(capsys, "sweep", inst_path, "--ambiguity", "moment", "--radii", 0, 0.3)
    assert code == 0
    table = rows(out)
    inst = load_instance(inst_path)
    best = min(p for _, p in phi_table(inst, "dra"))
    assert float(table[1]["phi_dra"]) == pytest.approx(best, abs=1e-6)
