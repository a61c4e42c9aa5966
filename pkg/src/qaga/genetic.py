"""Genetic algorithm with cluster-move recombination and annealing mutation.

Population members are kept as rows of an int8 matrix with a parallel
energy vector, which keeps shared-energy and selection passes vectorised.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from qaga import _kernels
from qaga.analysis import DEFAULT_COST, CostModel, EffortMeter, RunRecord, StopCriterion
from qaga.ising import IsingModel, SpinState, energy_of
from qaga.mutation import (
    QAGA_DEFAULT_SCHEDULE,
    AnnealSchedule,
    MutationOperator,
    SurrogateConfig,
    SurrogateReverseAnneal,
    schedule_from_config,
)


@dataclass
class Individual:
    state: SpinState
    raw_energy: float
    shared_energy: float = 0.0


@dataclass
class QagaConfig:
    population_size: int = 40
    keep_size: int = 30
    fresh_random: int = 10
    mutation_rate: float = 1.0
    recombination_rate: int = 10
    max_generations: int = 50
    selection: str = "pareto"
    schedule: AnnealSchedule = field(default_factory=lambda: QAGA_DEFAULT_SCHEDULE)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    batch_limit: int = 40
    stop: StopCriterion = field(default_factory=StopCriterion)

    def __post_init__(self):
        if self.keep_size + self.fresh_random != self.population_size:
            raise ValueError("keep_size + fresh_random must equal population_size")
        if self.keep_size < 1:
            raise ValueError("keep_size must be >= 1")
        if self.mutation_rate < 0 or self.recombination_rate < 0:
            raise ValueError("rates must be non-negative")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if self.selection not in ("pareto", "truncation"):
            raise ValueError(f"unknown selection scheme {self.selection!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "QagaConfig":
        d = dict(data)
        if "schedule" in d:
            d["schedule"] = schedule_from_config(d["schedule"])
        if "surrogate" in d:
            d["surrogate"] = SurrogateConfig(**d["surrogate"])
        if "stop" in d:
            d["stop"] = StopCriterion(**d["stop"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.to_dict()
        return d

    def backend(self) -> MutationOperator:
        return SurrogateReverseAnneal(self.schedule, self.surrogate, self.batch_limit)


class Population:
    """Spin matrix plus energies."""

    def __init__(self, spins: np.ndarray, energies: np.ndarray):
        self.spins = np.ascontiguousarray(spins, dtype=np.int8)
        self.energies = np.asarray(energies, dtype=np.float64)

    @classmethod
    def random(cls, model: IsingModel, size: int, rng: np.random.Generator) -> "Population":
        s = np.ones((size, model.num_vars), np.int8)
        act = model.graph.active
        s[:, act] = rng.integers(0, 2, size=(size, len(act)), dtype=np.int8) * 2 - 1
        return cls(s, batch_energy(model, s))

    @classmethod
    def from_individuals(cls, items) -> "Population":
        items = list(items)
        return cls(np.array([it.state.spins for it in items], np.int8).reshape(len(items), -1),
                   np.array([it.raw_energy for it in items]))

    def individuals(self, shared=None) -> list[Individual]:
        sh = np.zeros(len(self)) if shared is None else shared
        return [Individual(SpinState(self.spins[k], self.energies[k]), float(self.energies[k]), float(sh[k]))
                for k in range(len(self))]

    def __len__(self):
        return len(self.energies)

    def take(self, idx) -> "Population":
        idx = np.asarray(idx, np.int64)
        return Population(self.spins[idx], self.energies[idx])

    def extend(self, other: "Population") -> "Population":
        return Population(np.vstack([self.spins, other.spins]), np.concatenate([self.energies, other.energies]))

    def state(self, k) -> SpinState:
        return SpinState(self.spins[k], self.energies[k])


def batch_energy(model: IsingModel, spins: np.ndarray) -> np.ndarray:
    s = spins.astype(np.float64)
    e = model.graph.edges
    out = s @ model.h
    if len(e):
        out = out + (s[:, e[:, 0]] * s[:, e[:, 1]]) @ model.J
    return out


def _as_matrix(population):
    if isinstance(population, Population):
        return population.spins
    return np.array([getattr(p, "state", p).spins if not isinstance(p, np.ndarray) else p
                     for p in population], np.int8)


def shared_energies(model: IsingModel, population) -> np.ndarray:
    """Implicit-fitness-sharing energy of each member.

    Each satisfied term (``h_i s_i < 0`` or ``J_ij s_i s_j < 0``) contributes
    its value divided by the number of members that satisfy it.
    """
    S = _as_matrix(population).astype(np.float64)
    if len(S) == 0:
        raise ValueError("empty population")
    e = model.graph.edges
    out = np.zeros(len(S))
    terms = []
    if model.has_fields:
        terms.append(S * model.h)
    if len(e):
        terms.append(S[:, e[:, 0]] * S[:, e[:, 1]] * model.J)
    for t in terms:
        sat = t < 0
        n = sat.sum(axis=0)
        share = np.where(sat, t / np.maximum(n, 1), 0.0)
        out += share.sum(axis=1)
    return out


def pareto_layers(raw, shared) -> list[np.ndarray]:
    """Non-dominated layers under (minimise raw, minimise shared).

    Equal score pairs count as one point per layer, so duplicates of a
    frontier member are pushed to later layers.
    """
    raw = np.asarray(raw, np.float64)
    shared = np.asarray(shared, np.float64)
    if raw.shape != shared.shape:
        raise ValueError("raw and shared must have equal length")
    n = len(raw)
    le = (raw[:, None] <= raw[None, :]) & (shared[:, None] <= shared[None, :])
    lt = (raw[:, None] < raw[None, :]) | (shared[:, None] < shared[None, :])
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    remaining = np.ones(n, bool)
    layers = []
    while remaining.any():
        front = np.flatnonzero(remaining & (counts == 0))
        # coincident points: the first stays in this layer, copies wait for the next
        _, first = np.unique(np.stack([raw[front], shared[front]], axis=1), axis=0, return_index=True)
        front = np.sort(front[first])
        layers.append(front)
        remaining[front] = False
        counts = counts - dom[front].sum(axis=0)
    return layers


def pareto_order(raw, shared) -> np.ndarray:
    """Peel Pareto layers; inside a layer sort by raw, then shared, then index."""
    raw = np.asarray(raw, np.float64)
    shared = np.asarray(shared, np.float64)
    out = []
    for front in pareto_layers(raw, shared):
        out.append(front[np.lexsort((front, shared[front], raw[front]))])
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def _select_indices(model, pop: Population, keep: int, scheme: str):
    if scheme == "truncation":
        order = np.lexsort((np.arange(len(pop)), pop.energies))
        return order[:keep], None
    shared = shared_energies(model, pop)
    return pareto_order(pop.energies, shared)[:keep], shared


def select(model: IsingModel, population, config: QagaConfig):
    """Keep the first ``keep_size`` members in Pareto order (raw energy first).

    Accepts a :class:`Population` (returns one) or a list of
    :class:`Individual` (returns a list with shared energies filled in).
    """
    as_list = not isinstance(population, Population)
    pop = Population.from_individuals(population) if as_list else population
    if len(pop) < config.keep_size:
        raise ValueError("population smaller than keep_size")
    idx, shared = _select_indices(model, pop, config.keep_size, config.selection)
    kept = pop.take(idx)
    if as_list:
        return kept.individuals(None if shared is None else shared[idx])
    return kept


def random_matchings(n: int, rate: int, rng: np.random.Generator) -> np.ndarray:
    """``rate`` independent random perfect matchings of ``n`` items (odd one out skipped)."""
    pairs = []
    for _ in range(rate):
        perm = rng.permutation(n)
        m = n - n % 2
        pairs.append(perm[:m].reshape(-1, 2))
    if not pairs:
        return np.zeros((0, 2), np.int64)
    return np.vstack(pairs).astype(np.int64)


def recombination_round(model: IsingModel, population, rate: int, rng: np.random.Generator):
    """Cluster-move recombination over ``rate`` random matchings.

    Returns ``(offspring, moves)`` where ``moves`` counts attempted cluster
    moves (each is charged, no-ops included). Identical-parent pairs yield
    no offspring.
    """
    as_list = not isinstance(population, Population)
    pop = Population.from_individuals(population) if as_list else population
    if len(pop) < 2 or rate == 0:
        empty = Population(np.zeros((0, model.num_vars), np.int8), np.zeros(0))
        return (empty.individuals() if as_list else empty), 0
    pairs = random_matchings(len(pop), int(rate), rng)
    u = rng.random(len(pairs))
    indptr, nbr, wts, h = model.csr()
    children, child_e, sizes = _kernels.houdayer_pairs(
        pop.spins, pop.energies, pairs, u, model.graph.active, indptr, nbr, wts, h)
    keep = np.repeat(sizes > 0, 2)
    off = Population(children[keep], child_e[keep])
    return (off.individuals() if as_list else off), len(pairs)


def _mutate(model, pop: Population, rate: float, backend: MutationOperator, rng):
    whole = int(math.floor(rate))
    frac = rate - whole
    idx = list(np.repeat(np.arange(len(pop)), whole))
    if frac > 0:
        idx.extend(np.flatnonzero(rng.random(len(pop)) < frac))
    idx = sorted(int(i) for i in idx)
    if not idx:
        return Population(np.zeros((0, model.num_vars), np.int8), np.zeros(0)), 0.0, 0
    states = [pop.state(i) for i in idx]
    out, effort = backend.mutate_many(model, states, rng)
    mutants = Population(np.array([s.spins for s in out], np.int8), np.array([s.cached_energy for s in out]))
    return mutants, effort, len(idx)


@dataclass
class GenerationTrace:
    restart: int
    generation: int
    best_energy: float
    population_best: float
    population_size: int
    effort_us: float


def qaga_run(model: IsingModel, config: QagaConfig, backend: MutationOperator | None,
             rng: np.random.Generator, cost: CostModel = DEFAULT_COST,
             stop: StopCriterion | None = None):
    """Run the genetic algorithm with restarts. Returns ``(RunRecord, trace)``.

    Per generation: mutate (each member with probability ``mutation_rate``),
    add mutants; recombine over ``recombination_rate`` matchings, add
    offspring; stop checks; select to ``keep_size`` and add
    ``fresh_random`` random states. After ``max_generations`` without
    reaching the target the population restarts from scratch.
    ``stop`` overrides ``config.stop``; ``max_iterations`` caps total
    generations across restarts.
    """
    stop = config.stop if stop is None else stop
    backend = config.backend() if backend is None else backend
    n_act = model.graph.num_active
    meter = EffortMeter(n_act, cost)
    rec = RunRecord("qaga", target_energy=stop.target_energy)
    trace: list[GenerationTrace] = []
    best = math.inf
    total_gens = 0
    restart = 0
    done = False

    def consider(p: Population):
        nonlocal best
        if len(p) == 0:
            return
        k = int(np.argmin(p.energies))
        if p.energies[k] < best:
            best = float(p.energies[k])
            rec.best_state = p.state(k)

    def halted():
        return (stop.reached_target(best) or stop.out_of_effort(meter.effort_us)
                or stop.out_of_iterations(total_gens))

    unbounded = stop.target_energy is None and stop.max_effort_us is None and stop.max_iterations is None
    while not done:
        pop = Population.random(model, config.population_size, rng)
        consider(pop)
        gen = 0
        if halted():
            break
        while gen < config.max_generations:
            gen += 1
            total_gens += 1
            mutants, effort, _ = _mutate(model, pop, config.mutation_rate, backend, rng)
            meter.anneal_time_us += effort
            pop = pop.extend(mutants)
            consider(mutants)
            if not (stop.reached_target(best) or stop.out_of_effort(meter.effort_us)):
                offspring, moves = recombination_round(model, pop, config.recombination_rate, rng)
                meter.cluster_moves += moves
                pop = pop.extend(offspring)
                consider(offspring)
            trace.append(GenerationTrace(restart, gen, best, float(pop.energies.min()), len(pop), meter.effort_us))
            if halted():
                done = True
                break
            pop = select(model, pop, config)
            if config.fresh_random:
                pop = pop.extend(Population.random(model, config.fresh_random, rng))
                consider(pop)
        if not done:
            restart += 1
            if unbounded:
                break

    rec.best_energy = best
    rec.success = stop.reached_target(best)
    rec.generations = gen
    rec.restarts = restart
    rec.iterations = total_gens
    rec.unit_cost_us = meter.effort_us / total_gens if total_gens else 0.0
    rec.trace = [(t.effort_us, t.best_energy) for t in trace]
    return meter.fill(rec), trace


def best_of_random(model: IsingModel, n: int, rng: np.random.Generator) -> float:
    return float(Population.random(model, n, rng).energies.min())


def verify_population(model: IsingModel, pop: Population) -> bool:
    return bool(np.allclose(batch_energy(model, pop.spins), pop.energies, rtol=0, atol=1e-9 * model.scale()))


__all__ = [
    "Individual", "QagaConfig", "Population", "shared_energies", "pareto_order", "pareto_layers",
    "select", "recombination_round", "qaga_run", "random_matchings", "batch_energy", "energy_of",
]
