"""Cost model, run records, TTS50 estimators and the exhaustive oracle."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from qaga import _kernels
from qaga.ising import IsingModel, SpinState, energy

INF = math.inf
BRUTE_FORCE_LIMIT = 32


@dataclass(frozen=True)
class CostModel:
    """Model-based effort: per spin update for classical moves, wall schedule time for anneals."""

    ns_per_spin_update: float = 0.2

    def __post_init__(self):
        if not self.ns_per_spin_update > 0:
            raise ValueError("ns_per_spin_update must be positive")

    def sweep_us(self, num_vars: int) -> float:
        return num_vars * self.ns_per_spin_update / 1000.0

    def effort(self, num_vars: int, sweeps: int = 0, cluster_moves: int = 0,
               anneal_time_us: float = 0.0) -> float:
        return (sweeps + cluster_moves) * self.sweep_us(num_vars) + anneal_time_us


DEFAULT_COST = CostModel()


def cost_sweep(num_vars: int, cost_model: CostModel = DEFAULT_COST) -> float:
    """Microseconds charged for one sweep (or one cluster move) over ``num_vars`` spins."""
    return cost_model.sweep_us(num_vars)


@dataclass
class StopCriterion:
    target_energy: float | None = None
    max_effort_us: float | None = None
    max_iterations: int | None = None

    def reached_target(self, e: float, tol: float = 1e-9) -> bool:
        if self.target_energy is None:
            return False
        return e <= self.target_energy + tol * max(1.0, abs(self.target_energy))

    def out_of_effort(self, effort_us: float) -> bool:
        return self.max_effort_us is not None and effort_us >= self.max_effort_us

    def out_of_iterations(self, it: int) -> bool:
        return self.max_iterations is not None and it >= self.max_iterations


@dataclass
class RunRecord:
    """Outcome of one solver run.

    ``effort_us`` is always ``cost.effort(num_vars, sweeps, cluster_moves,
    anneal_time_us)``. ``unit_cost_us`` is the cost of one restartable unit
    (an anneal for SA/QA, a generation for QAGA, a tempering step for PT).
    """

    solver: str
    instance: str = ""
    seed: int | None = None
    best_energy: float = INF
    success: bool = False
    target_energy: float | None = None
    effort_us: float = 0.0
    sweeps: int = 0
    cluster_moves: int = 0
    anneal_time_us: float = 0.0
    iterations: int = 0
    anneals: int = 0
    generations: int = 0
    restarts: int = 0
    max_generations: int = 0
    unit_cost_us: float = 0.0
    trace: list = field(default_factory=list, repr=False)
    best_state: SpinState | None = field(default=None, repr=False)

    ROW_FIELDS = ()  # filled below

    def row(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        d.pop("best_state")
        return d


RunRecord.ROW_FIELDS = tuple(f.name for f in fields(RunRecord) if f.name not in ("trace", "best_state"))


class EffortMeter:
    """Running counters for a RunRecord."""

    def __init__(self, num_vars: int, cost: CostModel = DEFAULT_COST):
        self.num_vars = num_vars
        self.cost = cost
        self.sweeps = 0
        self.cluster_moves = 0
        self.anneal_time_us = 0.0

    @property
    def effort_us(self) -> float:
        return self.cost.effort(self.num_vars, self.sweeps, self.cluster_moves, self.anneal_time_us)

    def fill(self, rec: RunRecord) -> RunRecord:
        rec.sweeps = self.sweeps
        rec.cluster_moves = self.cluster_moves
        rec.anneal_time_us = self.anneal_time_us
        rec.effort_us = self.effort_us
        return rec


# ---------------------------------------------------------------- TTS

def _geometric_repeats(p_s: float) -> float:
    """Median number of independent trials until the first success."""
    if not 0.0 <= p_s <= 1.0:
        raise ValueError("success probability must lie in [0, 1]")
    if p_s == 0.0:
        return INF
    if p_s == 1.0:
        return 1.0
    return float(max(1, math.ceil(-1.0 / math.log2(1.0 - p_s))))


def tts50_geometric(p_s: float, t_a_us: float) -> float:
    """Median time to solution of a fixed-length annealer with success probability ``p_s``."""
    n = _geometric_repeats(p_s)
    return INF if math.isinf(n) else t_a_us * n


def tts50_sample_median(run_times_us) -> float:
    """Lower sample median (order statistic ceil(n/2)); ``inf`` entries are timeouts."""
    xs = sorted(float(x) for x in run_times_us)
    if not xs:
        raise ValueError("no run times")
    return xs[math.ceil(len(xs) / 2) - 1]


def tts50_qaga(records, per_generation_cost_us: float | None = None,
               max_generations: int = 50) -> float:
    """Median QAGA time to solution under a geometric restart model.

    Each record is one run that may contain several episodes: ``restarts``
    completed episodes of ``max_generations`` without success, then a final
    episode of ``generations`` generations that succeeded or was cut off.
    Cut-off final episodes carry no restart information and are ignored.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    wins = [r for r in records if r.success]
    if not wins:
        return INF
    failed_episodes = sum(r.restarts for r in records)
    p = len(wins) / (len(wins) + failed_episodes)
    restarts = _geometric_repeats(p) - 1
    if per_generation_cost_us is None:
        per_generation_cost_us = float(np.median([r.unit_cost_us for r in records]))
    median_gens = tts50_sample_median([r.generations for r in wins])
    return (restarts * max_generations + median_gens) * per_generation_cost_us


def tts50_annealer(records) -> float:
    """Geometric TTS from run-until-success annealer records (SA / QA surrogate)."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    anneals = sum(r.anneals for r in records)
    hits = sum(1 for r in records if r.success)
    if anneals == 0:
        return INF
    t_a = float(np.median([r.unit_cost_us for r in records]))
    return tts50_geometric(hits / anneals, t_a)


def tts50_tempering(records) -> float:
    return tts50_sample_median([r.effort_us if r.success else INF for r in records])


# ---------------------------------------------------------------- oracle

def independent_set(model: IsingModel) -> np.ndarray:
    """Greedy independent set over functional variables (a colour class if bipartite)."""
    g = model.graph
    n = g.num_vars
    colour = np.full(n, -1)
    bipartite = True
    for root in g.active:
        if colour[root] >= 0:
            continue
        colour[root] = 0
        queue = [root]
        while queue:
            i = queue.pop()
            for j in g.neighbors(i):
                if colour[j] < 0:
                    colour[j] = 1 - colour[i]
                    queue.append(j)
                elif colour[j] == colour[i]:
                    bipartite = False
    free = np.zeros(n, bool)
    if bipartite:
        free[g.active] = colour[g.active] == 1
        if free.sum() < (~free[g.active]).sum():
            free[g.active] = ~free[g.active]
        return free
    blocked = np.zeros(n, bool)
    for i in sorted(g.active, key=g.degree):
        if not blocked[i]:
            free[i] = True
            blocked[g.neighbors(i)] = True
    return free


def brute_force(model: IsingModel, return_state: bool = False, limit: int = BRUTE_FORCE_LIMIT):
    """Exact ground energy and degeneracy by exhaustive Gray-code enumeration.

    Variables outside an independent set are enumerated; each independent
    variable is then minimised exactly given its neighbours. With zero fields
    one enumerated spin is fixed by the global flip symmetry. Counts are
    exact for integer couplings.
    """
    active = model.graph.active
    n = len(active)
    if n > limit:
        raise ValueError(f"{n} variables exceeds the brute-force limit of {limit}")
    free = independent_set(model)
    order = np.array([i for i in active if not free[i]], np.int64)
    symmetric = not model.has_fields and len(order) > 0
    n_enum = len(order) - 1 if symmetric else len(order)
    spins = np.ones(model.num_vars, np.int8)
    indptr, nbr, wts, h = model.csr()
    tol = 1e-12 * model.scale() * max(1, n)
    best, count, k = _kernels.gray_enumerate(spins, order, n_enum, free, indptr, nbr, wts, h, tol)
    if symmetric:
        count *= 2
    best = float(best)
    if not return_state:
        return best, int(count)
    gray = k ^ (k >> 1)
    ground = np.ones(model.num_vars, np.int8)
    for b in range(n_enum):
        if (gray >> b) & 1:
            ground[order[b]] = -1
    for i in np.flatnonzero(free):
        f = model.h[i] + sum(model.wts[q] * ground[model.graph.nbr[q]]
                             for q in range(model.graph.indptr[i], model.graph.indptr[i + 1]))
        ground[i] = -1 if f > 0 else 1
    st = SpinState(ground)
    st.cached_energy = energy(model, st)
    return best, int(count), st
