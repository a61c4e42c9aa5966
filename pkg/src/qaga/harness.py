"""Experiment plans, per-run execution, result files and TTS reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from qaga import analysis
from qaga.analysis import RunRecord, StopCriterion, brute_force
from qaga.annealers import BetaLadder, pt_icm_run, pt_run, sa_run, sa_schedule_from_ladder, tune_beta_ladder
from qaga.genetic import QagaConfig, qaga_run
from qaga.ising import IsingModel, load_model
from qaga.mutation import SurrogateConfig, qa_surrogate_run

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "QAGA_OUTPUT_DIR"
DEFAULT_BUDGET_US = 10 ** 8.5
SOLVER_KINDS = ("sa", "pt", "pt-icm", "qaga", "qa")
RESULTS_FILE = "results.csv"

COLUMNS = (
    "instance", "instance_class", "solver", "kind", "rep", "seed", "config_hash", "num_vars",
    "target_energy", "best_energy", "success", "effort_us", "sweeps", "cluster_moves",
    "anneal_time_us", "iterations", "anneals", "generations", "restarts", "max_generations",
    "unit_cost_us",
)


class HarnessError(Exception):
    """Bad plan, unreadable inputs or unwritable outputs."""


class SolverFailure(Exception):
    """A solver raised while running."""


# ---------------------------------------------------------------- seeds

def stable_key(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=4).digest(), "little")


def derive_seed(master_seed: int, *keys) -> int:
    """Counter-style seed: ``SeedSequence(master, spawn_key=keys)``.

    String keys are hashed, so the seed of a run depends only on its own
    instance name, solver name and repetition index.
    """
    spawn = tuple(stable_key(k) if isinstance(k, str) else int(k) for k in keys)
    words = np.random.SeedSequence(int(master_seed), spawn_key=spawn).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1] & 0x7FFFFFFF) << 32)


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------- plans

@dataclass
class SolverSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise HarnessError(f"unknown solver kind {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverSpec":
        d = dict(d)
        kind = d.pop("kind", d.pop("solver", None)) or d.get("name")
        name = d.pop("name", kind)
        params = d.pop("params", {})
        params.update(d)
        return cls(name, kind, params)

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "params": self.params}


@dataclass
class ExperimentPlan:
    instances: list
    solvers: list
    budget_us: float = DEFAULT_BUDGET_US
    repetitions: int = 1
    output_dir: str | None = None
    master_seed: int = 0
    max_iterations: int | None = None
    targets: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "ExperimentPlan":
        d = dict(d)
        base = base or Path(".")
        inst = [str(p if os.path.isabs(p) else base / p) for p in d.pop("instances")]
        solvers = [s if isinstance(s, SolverSpec) else SolverSpec.from_dict(s) for s in d.pop("solvers")]
        budget = d.pop("budget_us", DEFAULT_BUDGET_US)
        scale = d.pop("budget_scale", 1.0)
        targets = {str(k if os.path.isabs(k) else base / k): float(v) for k, v in d.pop("targets", {}).items()}
        try:
            plan = cls(inst, solvers, float(budget) * float(scale), targets=targets, **d)
        except TypeError as exc:
            raise HarnessError(f"malformed plan: {exc}") from exc
        return plan

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise HarnessError(f"cannot read plan {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def validate(self):
        if self.repetitions < 1:
            raise HarnessError("repetitions must be >= 1")
        if not self.solvers:
            raise HarnessError("plan has no solvers")
        names = [s.name for s in self.solvers]
        if len(set(names)) != len(names):
            raise HarnessError("solver names must be unique")
        missing = [p for p in self.instances if not Path(p).is_file()]
        if missing:
            raise HarnessError(f"missing instance files: {missing}")

    def resolve_output_dir(self) -> Path:
        out = self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "results"
        return Path(out)

    def tasks(self) -> list:
        out = []
        for inst in self.instances:
            for spec in self.solvers:
                for rep in range(self.repetitions):
                    out.append(RunTask(
                        instance=inst, solver=spec, rep=rep,
                        seed=derive_seed(self.master_seed, Path(inst).name, spec.name, rep),
                        ladder_seed=derive_seed(self.master_seed, Path(inst).name, "ladder"),
                        budget_us=self.budget_us, max_iterations=self.max_iterations,
                        target=self.targets.get(inst),
                    ))
        return out


@dataclass
class RunTask:
    instance: str
    solver: SolverSpec
    rep: int
    seed: int
    ladder_seed: int
    budget_us: float
    max_iterations: int | None = None
    target: float | None = None

    @property
    def key(self) -> tuple:
        return (Path(self.instance).name, self.solver.name, str(self.rep))

    def config(self) -> dict:
        return {"solver": self.solver.to_dict(), "budget_us": self.budget_us,
                "max_iterations": self.max_iterations}


# ---------------------------------------------------------------- solving

@lru_cache(maxsize=64)
def _load(path: str) -> IsingModel:
    return load_model(path)


@lru_cache(maxsize=64)
def _ladder(path: str, seed: int) -> BetaLadder:
    return tune_beta_ladder(_load(path), rng=np.random.default_rng(seed))


@lru_cache(maxsize=64)
def _target(path: str, seed: int) -> float:
    return ground_energy(_load(path), seed)


def putative_ground_energy(model: IsingModel, seed: int, runs: int = 4, steps: int = 20_000,
                           ladder: BetaLadder | None = None) -> float:
    """Lowest energy over several long PT-ICM runs, for inputs too large to enumerate."""
    rng = np.random.default_rng(seed)
    ladder = ladder or tune_beta_ladder(model, rng=rng)
    best = math.inf
    for _ in range(runs):
        rec = pt_icm_run(model, ladder, 3, StopCriterion(max_iterations=steps), rng)
        best = min(best, rec.best_energy)
    return best


def ground_energy(model: IsingModel, seed: int = 0) -> float:
    if "ground_energy" in model.meta:
        return float(model.meta["ground_energy"])
    if model.graph.num_active <= analysis.BRUTE_FORCE_LIMIT:
        return brute_force(model)[0]
    return putative_ground_energy(model, seed)


def solve(model: IsingModel, kind: str, params: dict, stop: StopCriterion, rng: np.random.Generator,
          ladder: BetaLadder | Callable[[], BetaLadder] | None = None):
    """Run one solver. Returns ``(RunRecord, trace_or_None)``."""
    params = dict(params or {})

    def get_ladder():
        if isinstance(ladder, BetaLadder):
            return ladder
        if callable(ladder):
            return ladder()
        return tune_beta_ladder(model, rng=rng)

    if kind == "sa":
        sched = sa_schedule_from_ladder(get_ladder(), int(params.get("sweeps", 100_000)))
        return sa_run(model, sched, stop, rng), None
    if kind == "pt":
        return pt_run(model, get_ladder(), stop, rng), None
    if kind == "pt-icm":
        return pt_icm_run(model, get_ladder(), params.get("icm_period", 3), stop, rng), None
    if kind == "qaga":
        cfg = QagaConfig.from_dict(params.get("config", {}))
        rec, trace = qaga_run(model, cfg, None, rng, stop=stop)
        rec.max_generations = cfg.max_generations
        return rec, trace
    if kind == "qa":
        surrogate = SurrogateConfig(**params.get("surrogate", {}))
        return qa_surrogate_run(model, float(params.get("anneal_time_us", 100.0)), surrogate, stop, rng), None
    raise HarnessError(f"unknown solver kind {kind!r}")


def execute(task: RunTask) -> dict:
    """Run one task and return its result row."""
    model = _load(task.instance)
    target = task.target if task.target is not None else _target(task.instance, task.ladder_seed)
    stop = StopCriterion(target, task.budget_us, task.max_iterations)
    try:
        rec, _ = solve(model, task.solver.kind, task.solver.params, stop, np.random.default_rng(task.seed),
                       ladder=lambda: _ladder(task.instance, task.ladder_seed))
    except HarnessError:
        raise
    except Exception as exc:
        raise SolverFailure(f"{task.solver.name} failed on {task.instance}: {exc}") from exc
    row = rec.row()
    row.update(
        instance=Path(task.instance).name,
        instance_class=model.meta.get("class") or "",
        solver=task.solver.name,
        kind=task.solver.kind,
        rep=task.rep,
        seed=task.seed,
        config_hash=config_hash(task.config()),
        num_vars=model.graph.num_active,
        max_generations=rec.max_generations or "",
    )
    return {c: row.get(c, "") for c in COLUMNS}


# ---------------------------------------------------------------- result files

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_row(row: dict) -> str:
    return ",".join(_fmt(row.get(c)) for c in COLUMNS) + "\n"


def _recover(path: Path) -> set:
    """Drop a torn trailing line and return the keys of completed rows."""
    if not path.exists():
        return set()
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        with open(path, "r+b") as fh:
            fh.truncate(cut)
        data = data[:cut]
    lines = data.decode().splitlines()
    if not lines:
        return set()
    if lines[0] != ",".join(COLUMNS):
        raise HarnessError(f"{path} has an unexpected header")
    done = set()
    for line in lines[1:]:
        parts = line.split(",")
        done.add((parts[0], parts[2], parts[4]))
    return done


class Appender:
    """Single writer for the results file; every row is flushed and fsynced."""

    def __init__(self, path: Path):
        self.path = path
        new = not path.exists() or path.stat().st_size == 0
        self.fh = open(path, "a")
        if new:
            self.fh.write(",".join(COLUMNS) + "\n")
            self._sync()

    def _sync(self):
        self.fh.flush()
        os.fsync(self.fh.fileno())

    def write(self, row: dict):
        self.fh.write(format_row(row))
        self._sync()

    def close(self):
        self.fh.close()


def run_plan(plan: ExperimentPlan, jobs: int = 1, max_runs: int | None = None,
             on_row: Callable[[dict], None] | None = None) -> Path:
    """Execute every (instance, solver, repetition) and append rows in plan order.

    Completed rows already in the results file are skipped, so an interrupted
    plan can be resumed. ``max_runs`` stops after that many new rows.
    """
    plan.validate()
    out = plan.resolve_output_dir()
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(json.dumps(_plan_dict(plan), sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise HarnessError(f"cannot write to {out}: {exc}") from exc
    path = out / RESULTS_FILE
    done = _recover(path)
    todo = [t for t in plan.tasks() if t.key not in done]
    if max_runs is not None:
        todo = todo[:max_runs]
    writer = Appender(path)
    try:
        if jobs > 1 and len(todo) > 1:
            import multiprocessing as mp

            with mp.get_context("spawn").Pool(jobs) as pool:
                for row in pool.imap(execute, todo):
                    writer.write(row)
                    if on_row:
                        on_row(row)
        else:
            for task in todo:
                row = execute(task)
                writer.write(row)
                if on_row:
                    on_row(row)
    finally:
        writer.close()
    return out


def _plan_dict(plan: ExperimentPlan) -> dict:
    return {
        "instances": [Path(p).name for p in plan.instances],
        "solvers": [s.to_dict() for s in plan.solvers],
        "budget_us": plan.budget_us, "repetitions": plan.repetitions,
        "master_seed": plan.master_seed, "max_iterations": plan.max_iterations,
    }


def read_results(path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / RESULTS_FILE
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise HarnessError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise HarnessError(f"no result rows in {path}")
    return rows


def row_to_record(row: dict) -> RunRecord:
    def f(k, default=0.0):
        v = row.get(k, "")
        return default if v in ("", None) else float(v)

    def i(k):
        v = row.get(k, "")
        return 0 if v in ("", None) else int(float(v))

    rec = RunRecord(
        solver=row["solver"], instance=row["instance"], seed=i("seed"),
        best_energy=f("best_energy", math.inf), success=row.get("success") in ("1", "True", "true"),
        target_energy=f("target_energy", None), effort_us=f("effort_us"), sweeps=i("sweeps"),
        cluster_moves=i("cluster_moves"), anneal_time_us=f("anneal_time_us"), iterations=i("iterations"),
        anneals=i("anneals"), generations=i("generations"), restarts=i("restarts"),
        max_generations=i("max_generations") or 50, unit_cost_us=f("unit_cost_us"),
    )
    return rec


# ---------------------------------------------------------------- reports

def tts_for(kind: str, records) -> float:
    records = list(records)
    if kind in ("sa", "qa"):
        return analysis.tts50_annealer(records)
    if kind == "qaga":
        return analysis.tts50_qaga(records, max_generations=records[0].max_generations)
    return analysis.tts50_tempering(records)


@dataclass
class TtsEntry:
    instance: str
    instance_class: str
    solver: str
    kind: str
    runs: int
    successes: int
    tts50_us: float


def tts_table(rows: Iterable[dict]) -> list[TtsEntry]:
    groups: dict[tuple, list] = {}
    meta: dict[tuple, tuple] = {}
    for row in rows:
        key = (row["instance"], row["solver"])
        groups.setdefault(key, []).append(row_to_record(row))
        meta[key] = (row.get("instance_class", ""), row["kind"])
    out = []
    for key in sorted(groups):
        recs = groups[key]
        cls, kind = meta[key]
        out.append(TtsEntry(key[0], cls, key[1], kind, len(recs), sum(r.success for r in recs),
                            tts_for(kind, recs)))
    return out


def head_to_head_counts(table: list[TtsEntry], a: str, b: str) -> dict:
    """Per-instance tally of which solver had the lower TTS."""
    by = {}
    for e in table:
        by.setdefault(e.instance, {})[e.solver] = e.tts50_us
    counts = {"a_faster": 0, "b_faster": 0, "ties": 0}
    for inst, d in by.items():
        if a not in d or b not in d:
            continue
        ta, tb = d[a], d[b]
        if ta < tb:
            counts["a_faster"] += 1
        elif tb < ta:
            counts["b_faster"] += 1
        else:
            counts["ties"] += 1
    return counts


def head_to_head_rows(table: list[TtsEntry], reference: str) -> list[dict]:
    by: dict[str, dict] = {}
    cls = {}
    for e in table:
        by.setdefault(e.instance, {})[e.solver] = e.tts50_us
        cls[e.instance] = e.instance_class
    rows = []
    solvers = sorted({e.solver for e in table} - {reference})
    for inst in sorted(by):
        d = by[inst]
        if reference not in d:
            continue
        for s in solvers:
            if s not in d:
                continue
            r, b = d[reference], d[s]
            if math.isinf(r) and math.isinf(b):
                winner = "both-timeout"
            elif r < b:
                winner = reference
            elif b < r:
                winner = s
            else:
                winner = "tie"
            rows.append({
                "instance": inst, "instance_class": cls[inst], "reference": reference, "baseline": s,
                "reference_tts_us": r, "baseline_tts_us": b, "faster": winner,
                "reference_timeout": int(math.isinf(r)), "baseline_timeout": int(math.isinf(b)),
            })
    return rows


def _json_num(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _write_csv(path: Path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fieldnames})


def report(results_dir, out_dir=None, reference: str | None = None, plots: bool = True) -> dict:
    """TTS tables, head-to-head comparisons, a summary JSON and optional figures."""
    results_dir = Path(results_dir)
    out = Path(out_dir) if out_dir else (results_dir if results_dir.is_dir() else results_dir.parent)
    out.mkdir(parents=True, exist_ok=True)
    rows = read_results(results_dir)
    table = tts_table(rows)
    if reference is None:
        qagas = sorted({e.solver for e in table if e.kind == "qaga"})
        reference = qagas[0] if qagas else None

    fields = ["instance", "instance_class", "solver", "kind", "runs", "successes", "tts50_us"]
    _write_csv(out / "tts_table.csv", fields, [e.__dict__ for e in table])
    h2h = head_to_head_rows(table, reference) if reference else []
    h2h_fields = ["instance", "instance_class", "reference", "baseline", "reference_tts_us",
                  "baseline_tts_us", "faster", "reference_timeout", "baseline_timeout"]
    _write_csv(out / "head_to_head.csv", h2h_fields, h2h)

    solvers = sorted({e.solver for e in table})
    per_instance: dict = {}
    for e in table:
        per_instance.setdefault(e.instance, {})[e.solver] = _json_num(e.tts50_us)
    summary = {
        "reference": reference,
        "per_instance_tts50_us": per_instance,
        "solvers": {},
        "head_to_head": {},
    }
    for s in solvers:
        vals = [e.tts50_us for e in table if e.solver == s]
        summary["solvers"][s] = {
            "instances": len(vals),
            "timeouts": sum(math.isinf(v) for v in vals),
            "median_tts50_us": _json_num(analysis.tts50_sample_median(vals)),
        }
        if reference and s != reference:
            c = head_to_head_counts(table, reference, s)
            summary["head_to_head"][s] = {"reference_faster": c["a_faster"], "baseline_faster": c["b_faster"],
                                          "ties": c["ties"]}
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")

    if plots:
        from qaga import plotting

        summary["figures"] = [str(p) for p in plotting.render_all(table, h2h, out)]
    return summary
