"""Command line: ``qaga generate | solve | bench | tts | verify``.

Exit codes: 0 success, 1 solver failure (or a failed verification),
2 harness error (bad arguments, unreadable or unwritable files).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from qaga import harness
from qaga.analysis import StopCriterion, brute_force
from qaga.generators import ChimeraSpec, DclParams, chimera, generate
from qaga.ising import load_model, save_model

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_HARNESS_ERROR = 2

log = logging.getLogger("qaga")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(type(o))


def _dump(obj) -> str:
    def clean(v):
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(obj), sort_keys=True, indent=1, default=_json_default)


def cmd_generate(args) -> int:
    spec = ChimeraSpec.parse(args.chimera)
    if args.mask:
        spec = spec.with_mask_file(args.mask)
    params = DclParams(alpha=args.alpha, R=args.R, lam=args.lam)
    model = generate(args.cls, chimera(spec), args.seed, params if args.cls == "dcl" else None)
    save_model(model, args.output)
    log.info("wrote %s (%d variables, %d couplers)", args.output, model.graph.num_active,
             model.graph.num_active_edges)
    return EXIT_OK


def cmd_solve(args) -> int:
    model = load_model(args.instance)
    params: dict = {}
    if args.solver == "sa":
        params["sweeps"] = args.sweeps
    elif args.solver == "pt-icm":
        params["icm_period"] = args.icm_period
    elif args.solver == "qaga" and args.config:
        params["config"] = json.loads(Path(args.config).read_text())
    elif args.solver == "qa":
        params["anneal_time_us"] = args.anneal_time
    target = args.target
    if target is None and not args.no_target:
        target = harness.ground_energy(model, args.seed)
    stop = StopCriterion(target, args.budget_us, args.max_iterations)
    try:
        rec, trace = harness.solve(model, args.solver, params, stop, np.random.default_rng(args.seed))
    except Exception as exc:  # solver bug or numerical failure
        log.error("solver failed: %s", exc)
        return EXIT_SOLVER_FAILURE
    rec.instance = Path(args.instance).name
    rec.seed = args.seed
    out = rec.row()
    if rec.best_state is not None:
        out["best_state"] = [int(x) for x in rec.best_state.spins]
    text = _dump(out) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.trace and trace is not None:
        with open(args.trace, "w") as fh:
            for t in trace:
                fh.write(json.dumps(t.__dict__, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    plan = harness.ExperimentPlan.load(args.plan)
    if args.output_dir:
        plan.output_dir = args.output_dir
    if args.budget_scale != 1.0:
        plan.budget_us *= args.budget_scale
    out = harness.run_plan(plan, jobs=args.jobs, max_runs=args.max_runs,
                           on_row=lambda r: log.info("%s %s rep %s: success=%s effort=%s", r["instance"],
                                                      r["solver"], r["rep"], r["success"], r["effort_us"]))
    print(out / harness.RESULTS_FILE)
    return EXIT_OK


def cmd_tts(args) -> int:
    summary = harness.report(args.results, args.out, reference=args.reference, plots=not args.no_plots)
    sys.stdout.write(_dump({k: v for k, v in summary.items() if k != "per_instance_tts50_us"}) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_model(args.instance)
    ground, count = brute_force(model)
    print(_dump({"instance": Path(args.instance).name, "ground_energy": ground, "degeneracy": count}))
    status = EXIT_OK
    if "planted_energy" in model.meta and model.meta["planted_energy"] < ground - 1e-9:
        log.error("planted energy below the exhaustive ground energy")
        status = EXIT_SOLVER_FAILURE
    if args.results:
        name = Path(args.instance).name
        for row in harness.read_results(args.results):
            if row["instance"] != name:
                continue
            rec = harness.row_to_record(row)
            if rec.best_energy < ground - 1e-9 * max(1.0, abs(ground)):
                log.error("%s rep %s reports %s below ground %s", rec.solver, row["rep"], rec.best_energy, ground)
                status = EXIT_SOLVER_FAILURE
            if rec.success != (rec.best_energy <= ground + 1e-9 * max(1.0, abs(ground))):
                log.error("%s rep %s success flag disagrees with the ground energy", rec.solver, row["rep"])
                status = EXIT_SOLVER_FAILURE
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qaga", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random Chimera instance")
    g.add_argument("--class", dest="cls", choices=["ran1", "ac3", "dcl"], required=True)
    g.add_argument("--chimera", default="16x16x4", help="MxNxL (default 16x16x4)")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--alpha", type=float, default=0.75)
    g.add_argument("--R", type=float, default=4.0)
    g.add_argument("--lambda", dest="lam", type=float, default=4.0)
    g.add_argument("--mask", help="JSON file with dead_qubits / dead_couplers")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one solver on one instance, print a RunRecord")
    s.add_argument("--solver", choices=list(harness.SOLVER_KINDS), required=True)
    s.add_argument("--instance", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget-us", type=float, default=harness.DEFAULT_BUDGET_US)
    s.add_argument("--sweeps", type=int, default=100_000, help="SA sweeps per anneal")
    s.add_argument("--icm-period", type=int, default=3, help="PT-ICM sweeps between cluster moves")
    s.add_argument("--config", help="QAGA config JSON")
    s.add_argument("--anneal-time", type=float, default=100.0, help="forward-anneal surrogate time (µs)")
    s.add_argument("--target", type=float, help="target energy (default: exhaustive or putative optimum)")
    s.add_argument("--no-target", action="store_true", help="run to budget without a target")
    s.add_argument("--max-iterations", type=int)
    s.add_argument("--trace", help="write the QAGA generation trace as JSON lines")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run an experiment plan")
    b.add_argument("plan")
    b.add_argument("--output-dir", help=f"overrides the plan and ${harness.OUTPUT_DIR_ENV}")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--budget-scale", type=float, default=1.0, help="multiply the per-run budget")
    b.add_argument("--max-runs", type=int, help="stop after this many new runs")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("tts", help="aggregate results into TTS tables and figures")
    t.add_argument("results", help="results directory or results.csv")
    t.add_argument("--out", help="output directory (default: alongside the results)")
    t.add_argument("--reference", help="solver compared head-to-head (default: the qaga solver)")
    t.add_argument("--no-plots", action="store_true")
    t.set_defaults(func=cmd_tts)

    v = sub.add_parser("verify", help="exhaustive cross-check for small instances")
    v.add_argument("--instance", required=True)
    v.add_argument("--results", help="results directory to check against the exact ground energy")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except harness.SolverFailure as exc:
        log.error("%s", exc)
        return EXIT_SOLVER_FAILURE
    except (harness.HarnessError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_HARNESS_ERROR


if __name__ == "__main__":
    sys.exit(main())
