"""Classical baselines: simulated annealing, parallel tempering, PT-ICM."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from qaga import _kernels
from qaga.analysis import DEFAULT_COST, CostModel, EffortMeter, RunRecord, StopCriterion
from qaga.ising import IsingModel, SpinState, debug_enabled, ensure_energy, random_state, validate_cache

# sweeps per block of pre-drawn uniforms, bounded by UNIFORM_BLOCK / n
UNIFORM_BLOCK = 1 << 20


@dataclass(frozen=True)
class BetaLadder:
    betas: tuple
    measured_exchange_rates: tuple | None = None
    converged: bool = True

    def __post_init__(self):
        b = tuple(float(x) for x in self.betas)
        if not b:
            raise ValueError("ladder needs at least one beta")
        if any(x <= 0 for x in b):
            raise ValueError("betas must be positive")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("betas must be strictly increasing")
        object.__setattr__(self, "betas", b)

    def __len__(self):
        return len(self.betas)


@dataclass(frozen=True)
class SaSchedule:
    betas_per_sweep: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.betas_per_sweep)
        if any(y < x for x, y in zip(b, b[1:])):
            raise ValueError("SA schedule must be non-decreasing")
        object.__setattr__(self, "betas_per_sweep", b)

    def __len__(self):
        return len(self.betas_per_sweep)


def run_sweeps(model: IsingModel, state: SpinState, betas, rng: np.random.Generator) -> int:
    """Metropolis sweeps at the given per-sweep betas, in place. Returns accepted flips."""
    betas = np.asarray(betas, dtype=np.float64)
    active = model.graph.active
    indptr, nbr, wts, h = model.csr()
    e = ensure_energy(model, state)
    n = max(1, len(active))
    block = max(1, UNIFORM_BLOCK // n)
    flips = 0
    for start in range(0, len(betas), block):
        chunk = betas[start:start + block]
        u = rng.random((len(chunk), len(active)))
        e, f = _kernels.metropolis_sweeps(state.spins, e, active, indptr, nbr, wts, h, chunk, u)
        flips += f
    state.cached_energy = float(e)
    if debug_enabled():
        validate_cache(model, state)
    return flips


def sweep_metropolis(model: IsingModel, state: SpinState, beta: float, rng: np.random.Generator):
    """One fixed-order Metropolis sweep. Returns ``(state, flips)``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    flips = run_sweeps(model, state, [beta], rng)
    return state, flips


def simulated_anneal(model: IsingModel, schedule: SaSchedule, rng: np.random.Generator) -> SpinState:
    state = random_state(model, rng)
    if len(schedule):
        run_sweeps(model, state, schedule.betas_per_sweep, rng)
    return state


def sa_schedule_from_ladder(ladder: BetaLadder, num_sweeps: int) -> SaSchedule:
    """Linear ramp from the hottest to the coldest ladder beta.

    A single-sweep schedule sits at the coldest beta.
    """
    if num_sweeps < 1:
        raise ValueError("num_sweeps must be >= 1")
    lo, hi = min(ladder.betas), max(ladder.betas)
    if num_sweeps == 1:
        return SaSchedule((hi,))
    return SaSchedule(tuple(np.linspace(lo, hi, num_sweeps)))


def sa_run(model: IsingModel, schedule: SaSchedule, stop: StopCriterion, rng: np.random.Generator,
           cost: CostModel = DEFAULT_COST) -> RunRecord:
    """Independent anneals until the target, the effort budget or the anneal cap."""
    meter = EffortMeter(model.graph.num_active, cost)
    rec = RunRecord("sa", target_energy=stop.target_energy)
    rec.unit_cost_us = cost.effort(model.graph.num_active, sweeps=len(schedule))
    best = math.inf
    while True:
        st = simulated_anneal(model, schedule, rng)
        meter.sweeps += len(schedule)
        rec.anneals += 1
        e = st.cached_energy
        if e < best:
            best = e
            rec.best_state = st
        rec.trace.append((meter.effort_us, best))
        if stop.reached_target(best):
            rec.success = True
            break
        if stop.out_of_effort(meter.effort_us) or stop.out_of_iterations(rec.anneals):
            break
        if stop.max_effort_us is None and stop.max_iterations is None and stop.target_energy is None:
            break
    rec.best_energy = best
    rec.iterations = rec.anneals
    return meter.fill(rec)


# ---------------------------------------------------------------- tempering

def exchange_probability(beta_i: float, beta_j: float, e_i: float, e_j: float) -> float:
    x = (beta_i - beta_j) * (e_i - e_j)
    return 1.0 if x >= 0 else math.exp(x)


@dataclass
class ExchangeStats:
    attempts: np.ndarray
    accepts: np.ndarray

    @classmethod
    def empty(cls, n_pairs: int) -> "ExchangeStats":
        return cls(np.zeros(n_pairs, np.int64), np.zeros(n_pairs, np.int64))

    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempts > 0, self.accepts / np.maximum(self.attempts, 1), np.nan)


def pt_step(model: IsingModel, replicas: list, ladder: BetaLadder, rng: np.random.Generator,
            parity: int = 0, stats: ExchangeStats | None = None) -> list:
    """One sweep per replica, then exchanges on pairs ``(k, k+1)`` with ``k % 2 == parity``.

    ``replicas[k]`` is the state currently held at ``ladder.betas[k]``; states
    move, betas stay.
    """
    betas = ladder.betas
    if len(replicas) != len(betas):
        raise ValueError(f"{len(replicas)} replicas for {len(betas)} betas")
    for st, b in zip(replicas, betas):
        run_sweeps(model, st, [b], rng)
    n_pairs = len(betas) - 1
    for k in range(parity % 2, n_pairs, 2):
        p = exchange_probability(betas[k], betas[k + 1], replicas[k].cached_energy, replicas[k + 1].cached_energy)
        ok = p >= 1.0 or rng.random() < p
        if stats is not None:
            stats.attempts[k] += 1
            stats.accepts[k] += ok
        if ok:
            replicas[k], replicas[k + 1] = replicas[k + 1], replicas[k]
    return replicas


def houdayer_move(model: IsingModel, a: SpinState, b: SpinState, rng: np.random.Generator,
                  inplace: bool = False):
    """Isoenergetic cluster move. Returns ``(a', b', cluster_size)``.

    ``cluster_size == 0`` flags a no-op (identical inputs).
    """
    if len(a) != len(b):
        raise ValueError("states differ in dimension")
    ea, eb = ensure_energy(model, a), ensure_energy(model, b)
    if not inplace:
        a, b = a.copy(), b.copy()
    indptr, nbr, wts, h = model.csr()
    size, da, db = _kernels.houdayer(a.spins, b.spins, model.graph.active, indptr, nbr, wts, h, rng.random())
    a.cached_energy = ea + da
    b.cached_energy = eb + db
    if debug_enabled():
        validate_cache(model, a)
        validate_cache(model, b)
    return a, b, int(size)


def _tempering_run(model, ladder, copies, icm_period, stop, rng, cost, solver):
    n_act = model.graph.num_active
    meter = EffortMeter(n_act, cost)
    rec = RunRecord(solver, target_energy=stop.target_energy)
    sets = [[random_state(model, rng) for _ in ladder.betas] for _ in range(copies)]
    best = math.inf
    for rs in sets:
        for st in rs:
            if st.cached_energy < best:
                best, rec.best_state = st.cached_energy, st.copy()
    rec.trace.append((0.0, best))
    sweeps_per_step = len(ladder) * copies
    rec.unit_cost_us = cost.effort(n_act, sweeps=sweeps_per_step)
    step = 0
    while not (stop.reached_target(best) or stop.out_of_effort(meter.effort_us) or stop.out_of_iterations(step)):
        for rs in sets:
            pt_step(model, rs, ladder, rng, parity=step)
        meter.sweeps += sweeps_per_step
        step += 1
        if icm_period and copies >= 2 and step % icm_period == 0:
            for k in range(len(ladder)):
                for c in range(0, copies - 1, 2):
                    houdayer_move(model, sets[c][k], sets[c + 1][k], rng, inplace=True)
                    meter.cluster_moves += 1
        improved = False
        for rs in sets:
            for st in rs:
                if st.cached_energy < best:
                    best, rec.best_state, improved = st.cached_energy, st.copy(), True
        if improved:
            rec.trace.append((meter.effort_us, best))
    rec.best_energy = best
    rec.success = stop.reached_target(best)
    rec.iterations = step
    return meter.fill(rec)


def pt_run(model: IsingModel, ladder: BetaLadder, stop: StopCriterion, rng: np.random.Generator,
           cost: CostModel = DEFAULT_COST) -> RunRecord:
    """Plain parallel tempering, one replica per beta."""
    return _tempering_run(model, ladder, 1, None, stop, rng, cost, "pt")


def pt_icm_run(model: IsingModel, ladder: BetaLadder, icm_period: int | float | None,
               stop: StopCriterion, rng: np.random.Generator, copies: int = 2,
               cost: CostModel = DEFAULT_COST) -> RunRecord:
    """Parallel tempering on ``copies`` replica sets with cluster moves at every beta.

    A cluster move between paired sets happens every ``icm_period`` steps;
    ``None`` or ``inf`` disables them.
    """
    if copies < 2 or copies % 2:
        raise ValueError("PT-ICM needs an even number (>= 2) of replicas per beta")
    period = None if icm_period is None or math.isinf(icm_period) else int(icm_period)
    if period is not None and period < 1:
        raise ValueError("icm_period must be >= 1")
    return _tempering_run(model, ladder, copies, period, stop, rng, cost, "pt-icm")


# ---------------------------------------------------------------- ladder tuning

def measure_exchange_rates(model: IsingModel, ladder: BetaLadder, rng: np.random.Generator,
                           steps: int = 2000, burn_in: int = 500) -> np.ndarray:
    """Adjacent-pair exchange acceptance rates from a plain PT calibration run."""
    replicas = [random_state(model, rng) for _ in ladder.betas]
    for t in range(burn_in):
        pt_step(model, replicas, ladder, rng, parity=t)
    stats = ExchangeStats.empty(len(ladder) - 1)
    for t in range(steps):
        pt_step(model, replicas, ladder, rng, parity=t, stats=stats)
    return stats.rates()


def default_beta_range(model: IsingModel) -> tuple[float, float]:
    """Hot and cold ends scaled to the typical nonzero coupling magnitude."""
    mags = np.abs(np.concatenate([model.J[model.J != 0], model.h[model.h != 0]]))
    scale = float(mags.mean()) if len(mags) else 1.0
    return 0.1 / scale, 5.0 / scale


@dataclass
class _TuneState:
    betas: list
    rates: np.ndarray = field(default=None)

    def violation(self, low, high) -> float:
        r = self.rates
        return float(np.sum(np.clip(low - r, 0, None) + np.clip(r - high, 0, None)))


def tune_beta_ladder(model: IsingModel, target_low: float = 0.3, target_high: float = 0.8,
                     rng: np.random.Generator | None = None, beta_min: float | None = None,
                     beta_max: float | None = None, initial_size: int = 4, max_iterations: int = 30,
                     calibration_steps: int = 2000, burn_in: int = 500,
                     max_size: int = 200) -> BetaLadder:
    """Adjust a geometric ladder until every adjacent exchange rate is in band.

    Endpoints stay fixed. Pairs below ``target_low`` get a geometric midpoint
    inserted; an interior beta whose two adjacent pairs are both above
    ``target_high`` is removed; an interior beta next to a single high pair
    is shifted geometrically away from it. If the iteration cap is hit the
    ladder with the smallest total band violation is returned with
    ``converged=False``.
    """
    rng = np.random.default_rng() if rng is None else rng
    lo_default, hi_default = default_beta_range(model)
    bmin = lo_default if beta_min is None else beta_min
    bmax = hi_default if beta_max is None else beta_max
    betas = list(np.geomspace(bmin, bmax, max(2, initial_size)))
    best = None
    for _ in range(max_iterations):
        ladder = BetaLadder(tuple(betas))
        rates = measure_exchange_rates(model, ladder, rng, calibration_steps, burn_in)
        cur = _TuneState(list(betas), rates)
        if best is None or cur.violation(target_low, target_high) < best.violation(target_low, target_high):
            best = cur
        if np.all((rates >= target_low) & (rates <= target_high)):
            return BetaLadder(tuple(betas), tuple(float(r) for r in rates), True)
        betas = _revise(betas, rates, target_low, target_high)
        if len(betas) > max_size:
            break
    warnings.warn("beta ladder tuning hit its iteration cap", RuntimeWarning, stacklevel=2)
    return BetaLadder(tuple(best.betas), tuple(float(r) for r in best.rates), False)


def _revise(betas, rates, low, high):
    n = len(betas)
    b = list(betas)
    high_pair = rates > high
    remove = set()
    for k in range(1, n - 1):
        if high_pair[k - 1] and high_pair[k] and (k - 1) not in remove:
            remove.add(k)
    shifted = list(b)
    for k in range(1, n - 1):
        if k in remove:
            continue
        left, right = high_pair[k - 1], high_pair[k]
        if left and not right and rates[k] > low:
            shifted[k] = math.sqrt(b[k] * math.sqrt(b[k] * b[k + 1]))
        elif right and not left and rates[k - 1] > low:
            shifted[k] = math.sqrt(b[k] * math.sqrt(b[k - 1] * b[k]))
    out = []
    for k in range(n):
        if k in remove:
            continue
        out.append(shifted[k])
        if k + 1 < n and rates[k] < low:
            nxt = shifted[k + 1]
            out.append(math.sqrt(shifted[k] * nxt))
    out = sorted(set(out))
    return out
