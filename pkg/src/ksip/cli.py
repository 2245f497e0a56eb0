"""Command-line front end.

    ksip generate coverage --n 20 --k 1 --radius 2 --scenarios 10 --seed 7 -o inst.json
    ksip generate feature --data data.csv --delta 0.1 --scenarios 10 --seed 7 -o inst.json
    ksip solve inst.json --variant drr --ambiguity wasserstein --eps 0.5 --report rep.json
    ksip compare inst.json --ambiguity moment --eps 0.1
    ksip sweep inst.json --radii 0 0.5 1 2

Tables go to standard output as CSV; diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings

from ksip.decomposition import VARIANTS, DefenderCache, SolveConfig, compute_value_metrics, default_threads, epsilon_sweep, solve, solve_all
from ksip.instances import ParseError, gen_coverage, gen_feature_scenarios, load_instance, read_data_csv, save_instance

log = logging.getLogger("ksip")


def _usage_error(msg):
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def _ambiguity(args):
    if args.ambiguity is None:
        return None
    if args.eps is None:
        _usage_error("--ambiguity needs --eps")
    return {"type": args.ambiguity, "epsilon": args.eps}


def _budgets(values, k, name):
    if values is None:
        return None
    if len(values) == 1:
        values = values * k
    if len(values) != k:
        raise SystemExit(f"error: {name} needs 1 or {k} values")
    return tuple(values)


def cmd_generate(args):
    if args.kind == "coverage":
        if len(args.radius) != args.k:
            raise SystemExit(f"error: --radius needs {args.k} values for k={args.k}")
        inst = gen_coverage(
            args.n, args.k, args.radius, args.scenarios, args.seed,
            success_prob=args.success_prob,
            attack_budgets=_budgets(args.attack_budget, args.k, "--attack-budget"),
            defend_budgets=_budgets(args.defend_budget, args.k, "--defend-budget"),
            ambiguity=_ambiguity(args),
        )
    else:
        names, data = read_data_csv(args.data)
        inst = gen_feature_scenarios(
            data, args.delta, args.scenarios, args.seed,
            success_prob=args.success_prob,
            attack_budget=args.attack_budget[0] if args.attack_budget else None,
            defend_budget=args.defend_budget[0] if args.defend_budget else None,
            measure=args.similarity, names=names, source=str(args.data),
            ambiguity=_ambiguity(args),
        )
    if args.output:
        save_instance(inst, args.output)
        log.info("wrote %s (n=%d, k=%d, %d scenarios)", args.output, inst.n, inst.k, inst.n_scenarios)
    else:
        json.dump(inst.to_dict(), sys.stdout, indent=1)
        sys.stdout.write("\n")
    return 0


def _config(args, variant, ambiguity=True):
    return SolveConfig(
        variant=variant,
        gap_tol=args.gap,
        relative_gap=args.relative_gap,
        max_iterations=args.max_iterations,
        seed=args.seed,
        permutation=args.permutation,
        ambiguity=_ambiguity(args) if ambiguity else None,
        threads=args.threads,
    )


def cmd_solve(args):
    inst = load_instance(args.instance)
    cfg = _config(args, args.variant)
    stream = open(args.log_jsonl, "w") if args.log_jsonl else None
    try:
        report = solve(inst, cfg, stream=stream)
    finally:
        if stream:
            stream.close()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.to_json() + "\n")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["variant", "reward", "time", "iterations", "gap", "status"])
    w.writerow([report.variant, f"{report.theta_ub:.10g}", f"{report.time:.3f}", report.iterations,
                f"{report.gap:.3g}", report.status])
    return 0 if report.certified else 1


def cmd_compare(args):
    inst = load_instance(args.instance)
    spec = _ambiguity(args) or inst.ambiguity
    if spec is None:
        _usage_error("the instance has no ambiguity block; pass --ambiguity and --eps")
    base = _config(args, "risk_neutral")
    cache = DefenderCache()
    reports = solve_all(inst, spec, base, cache=cache)
    metrics = compute_value_metrics(inst, reports, spec, cache=cache)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["phi_dt", "phi_rn", "phi_dra", "phi_drr", "VSS", "VAS", "VRS"])
    w.writerow([f"{reports[v].theta_ub:.10g}" for v in VARIANTS] + [f"{metrics[m]:.10g}" for m in ("VSS", "VAS", "VRS")])
    return 0 if all(r.certified for r in reports.values()) else 1


def cmd_sweep(args):
    inst = load_instance(args.instance)
    # the radii come from --radii, so only the set type is taken from the flags or the instance
    kind = args.ambiguity or (inst.ambiguity or {}).get("type", "wasserstein")
    rows = epsilon_sweep(inst, args.radii, kind, _config(args, "risk_neutral", ambiguity=False))
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=["epsilon", "phi_dra", "phi_rn", "phi_drr"], lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: f"{v:.10g}" for k, v in row.items()})
    finally:
        if args.output:
            out.close()
    return 0


def _solver_flags(p):
    p.add_argument("--gap", type=float, default=1e-6, help="gap tolerance (default 1e-6)")
    p.add_argument("--relative-gap", action="store_true", help="measure the gap relative to the upper bound")
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--permutation", choices=["greedy", "index"], default="greedy",
                   help="item order inside sequential cuts")
    p.add_argument("--seed", type=int, default=None, help="recorded in the report; the solver is deterministic")
    p.add_argument("--ambiguity", choices=["moment", "wasserstein"])
    p.add_argument("--eps", type=float, help="ambiguity radius")
    p.add_argument("--threads", type=int, default=default_threads(),
                   help="concurrent scenario solves (default from KSIP_THREADS, else 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksip", description="Stochastic and distributionally robust k-submodular interdiction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("kind", choices=["coverage", "feature"])
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--scenarios", type=int, required=True)
    g.add_argument("--success-prob", type=float, default=0.75)
    g.add_argument("--attack-budget", type=int, nargs="+")
    g.add_argument("--defend-budget", type=int, nargs="+")
    g.add_argument("--n", type=int, help="number of sites (coverage)")
    g.add_argument("--k", type=int, default=1, help="sensor types (coverage)")
    g.add_argument("--radius", type=float, nargs="+", help="one radius per type (coverage)")
    g.add_argument("--data", help="headered numeric CSV (feature)")
    g.add_argument("--delta", type=float, default=0.1, help="noise half-width (feature)")
    g.add_argument("--similarity", choices=["pearson", "cosine"], default="pearson")
    g.add_argument("--ambiguity", choices=["moment", "wasserstein"])
    g.add_argument("--eps", type=float)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one model to optimality")
    s.add_argument("instance")
    s.add_argument("--variant", choices=VARIANTS, default="risk_neutral")
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--log-jsonl", help="stream one JSON line per iteration here")
    _solver_flags(s)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="solve all four models and report VSS/VAS/VRS")
    c.add_argument("instance")
    _solver_flags(c)
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", help="optimal values across ambiguity radii")
    w.add_argument("instance")
    w.add_argument("--radii", type=float, nargs="+", required=True)
    w.add_argument("-o", "--output")
    _solver_flags(w)
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    if args.command == "generate":
        if args.kind == "coverage" and (args.n is None or args.radius is None):
            parser.error("generate coverage needs --n and --radius")
        if args.kind == "feature" and args.data is None:
            parser.error("generate feature needs --data")
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
