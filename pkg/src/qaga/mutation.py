"""Reverse-anneal mutation operators.

The genetic algorithm only sees :class:`MutationOperator`: hand it states,
get new states and the effort charged. :class:`SurrogateReverseAnneal` is a
classical stand-in that maps the anneal fraction ``s`` to an inverse
temperature and runs Metropolis sweeps along the schedule. It does not
simulate transverse-field dynamics.
"""

from __future__ import annotations

import abc
import hashlib
import math
from dataclasses import dataclass

import numpy as np

from qaga.annealers import run_sweeps
from qaga.ising import IsingModel, SpinState, ensure_energy, random_state

DEFAULT_BATCH_LIMIT = 40


class AnnealSchedule:
    """Piecewise-linear (time in µs, s) path ending at s = 1."""

    def __init__(self, points):
        pts = tuple((float(t), float(s)) for t, s in points)
        if len(pts) < 2:
            raise ValueError("schedule needs at least two points")
        if pts[0][0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        if any(t2 <= t1 for (t1, _), (t2, _) in zip(pts, pts[1:])):
            raise ValueError("schedule times must be strictly increasing")
        if any(not 0.0 <= s <= 1.0 for _, s in pts):
            raise ValueError("s values must lie in [0, 1]")
        if pts[-1][1] != 1.0:
            raise ValueError("schedule must end at s = 1")
        self.points = pts
        self._validate()

    def _validate(self):
        pass

    def __eq__(self, other):
        return type(self) is type(other) and self.points == other.points

    def __hash__(self):
        return hash(self.points)

    def __repr__(self):
        return f"{type(self).__name__}({list(self.points)})"

    @property
    def duration(self) -> float:
        return self.points[-1][0]

    @property
    def s_min(self) -> float:
        return min(s for _, s in self.points)

    def s_at(self, t):
        ts, ss = zip(*self.points)
        return np.interp(t, ts, ss)

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points]}


class ReverseSchedule(AnnealSchedule):
    """Schedule that starts and ends classical (s = 1)."""

    def _validate(self):
        if self.points[0][1] != 1.0:
            raise ValueError("reverse schedule must start at s = 1")


def forward_schedule(anneal_time_us: float) -> AnnealSchedule:
    return AnnealSchedule([(0.0, 0.0), (anneal_time_us, 1.0)])


def schedule_from_params(annealing_time_us: float, s_star: float, pause_fraction: float) -> ReverseSchedule:
    """(time, s*, pause fraction) parameterisation.

    The non-pause time is split evenly between the ramp down to ``s_star``
    and the ramp back. A zero pause gives a three-point V.
    """
    if not annealing_time_us > 0:
        raise ValueError("annealing time must be positive")
    if not 0.0 < s_star < 1.0:
        raise ValueError("s_star must lie in (0, 1)")
    if not 0.0 <= pause_fraction < 1.0:
        raise ValueError("pause_fraction must lie in [0, 1)")
    T = float(annealing_time_us)
    ramp = T * (1.0 - pause_fraction) / 2.0
    if pause_fraction == 0.0:
        return ReverseSchedule([(0.0, 1.0), (ramp, s_star), (T, 1.0)])
    return ReverseSchedule([(0.0, 1.0), (ramp, s_star), (T - ramp, s_star), (T, 1.0)])


QAGA_DEFAULT_SCHEDULE = ReverseSchedule([(0.0, 1.0), (1.0, 0.5), (7.0, 0.5), (10.0, 1.0)])


def schedule_from_config(cfg) -> AnnealSchedule:
    """Accept a point list, ``{"points": ...}`` or ``{"anneal_time", "s_star", "pause_fraction"}``."""
    if isinstance(cfg, AnnealSchedule):
        return cfg
    if isinstance(cfg, (list, tuple)):
        pts = cfg
    elif "points" in cfg:
        pts = cfg["points"]
    else:
        return schedule_from_params(cfg["anneal_time"], cfg["s_star"], cfg["pause_fraction"])
    pts = [tuple(p) for p in pts]
    return ReverseSchedule(pts) if pts[0][1] == 1.0 else AnnealSchedule(pts)


@dataclass(frozen=True)
class SurrogateConfig:
    """Map from anneal fraction s to inverse temperature.

    ``log beta`` is linear in ``s`` between ``(s_min, beta_hot)`` and
    ``(1, beta_cold)``. ``s_min`` is fixed per config, not per schedule, so
    shallower reversals stay colder.
    """

    beta_hot: float = 0.5
    beta_cold: float = 5.0
    sweeps_per_us: float = 10.0
    s_min: float = 0.0

    def __post_init__(self):
        if not self.beta_cold > self.beta_hot > 0:
            raise ValueError("need beta_cold > beta_hot > 0")
        if not self.sweeps_per_us >= 1:
            raise ValueError("sweeps_per_us must be >= 1")
        if not 0.0 <= self.s_min < 1.0:
            raise ValueError("s_min must lie in [0, 1)")


def effective_beta(s, config: SurrogateConfig):
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < config.s_min - 1e-12) or np.any(s_arr > 1.0 + 1e-12):
        raise ValueError(f"s outside [{config.s_min}, 1]")
    x = (s_arr - config.s_min) / (1.0 - config.s_min)
    out = config.beta_hot * (config.beta_cold / config.beta_hot) ** x
    return float(out) if out.ndim == 0 else out


def sweep_betas(schedule: AnnealSchedule, config: SurrogateConfig) -> np.ndarray:
    """Per-sweep betas, sampling the schedule at sweep midpoints."""
    n = int(round(config.sweeps_per_us * schedule.duration))
    t = (np.arange(n) + 0.5) / config.sweeps_per_us
    return np.atleast_1d(effective_beta(schedule.s_at(t), config))


def _state_key(spins: np.ndarray) -> tuple[int, int]:
    d = hashlib.blake2b(spins.tobytes(), digest_size=16).digest()
    return int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little")


def substreams(states, batch_key: int):
    """One generator per state, keyed by content and occurrence, not slot.

    Reordering the batch reorders the outputs the same way.
    """
    seen: dict[tuple[int, int], int] = {}
    rngs = []
    for st in states:
        key = _state_key(st.spins)
        occ = seen.get(key, 0)
        seen[key] = occ + 1
        rngs.append(np.random.default_rng(np.random.SeedSequence([batch_key, *key, occ])))
    return rngs


def _surrogate_one(model, state, betas, rng):
    out = state.copy()
    ensure_energy(model, out)
    if len(betas):
        run_sweeps(model, out, betas, rng)
    return out


def mutate(model: IsingModel, state: SpinState, schedule: AnnealSchedule, config: SurrogateConfig,
           rng: np.random.Generator) -> SpinState:
    """Surrogate reverse anneal from ``state``; the input is left untouched."""
    return mutate_batch(model, [state], schedule, config, rng)[0][0]


def mutate_batch(model: IsingModel, states, schedule: AnnealSchedule, config: SurrogateConfig,
                 rng: np.random.Generator, batch_limit: int = DEFAULT_BATCH_LIMIT):
    """Mutate up to ``batch_limit`` states. Returns ``(states, effort_us)``."""
    states = list(states)
    if len(states) > batch_limit:
        raise ValueError(f"batch of {len(states)} exceeds the limit of {batch_limit}")
    betas = sweep_betas(schedule, config)
    batch_key = int(rng.integers(2**63))
    out = [_surrogate_one(model, st, betas, r) for st, r in zip(states, substreams(states, batch_key))]
    return out, schedule.duration * len(states)


class MutationOperator(abc.ABC):
    """Initialise-with-state, return-new-state, batchable."""

    batch_limit: int = DEFAULT_BATCH_LIMIT

    @abc.abstractmethod
    def mutate_batch(self, model: IsingModel, states, rng: np.random.Generator):
        """Return ``(new_states, effort_us)`` for at most ``batch_limit`` states."""

    def mutate_many(self, model, states, rng):
        """Split into batches of ``batch_limit``."""
        outs, effort = [], 0.0
        for i in range(0, len(states), self.batch_limit):
            o, e = self.mutate_batch(model, states[i:i + self.batch_limit], rng)
            outs.extend(o)
            effort += e
        return outs, effort


class SurrogateReverseAnneal(MutationOperator):
    def __init__(self, schedule: AnnealSchedule = QAGA_DEFAULT_SCHEDULE,
                 config: SurrogateConfig = SurrogateConfig(), batch_limit: int = DEFAULT_BATCH_LIMIT):
        self.schedule = schedule
        self.config = config
        self.batch_limit = batch_limit

    def mutate_batch(self, model, states, rng):
        return mutate_batch(model, states, self.schedule, self.config, rng, self.batch_limit)

    def __repr__(self):
        return f"SurrogateReverseAnneal({self.schedule!r}, {self.config!r})"


class NoOpMutation(MutationOperator):
    """Returns copies and charges nothing; for tests and ablations."""

    def mutate_batch(self, model, states, rng):
        if len(states) > self.batch_limit:
            raise ValueError("batch too large")
        return [s.copy() for s in states], 0.0


def qa_surrogate_run(model: IsingModel, anneal_time_us: float, config: SurrogateConfig, stop,
                     rng: np.random.Generator):
    """Forward-anneal baseline: surrogate anneals from random states until a stop condition.

    Stands in for hardware quantum annealing in solver comparisons; it is the
    surrogate backend with a forward (s: 0 -> 1) schedule.
    """
    from qaga.analysis import EffortMeter, RunRecord

    sched = forward_schedule(anneal_time_us)
    betas = sweep_betas(sched, config)
    meter = EffortMeter(model.graph.num_active)
    rec = RunRecord("qa-surrogate", target_energy=stop.target_energy, unit_cost_us=sched.duration)
    best = math.inf
    while True:
        st = random_state(model, rng)
        if len(betas):
            run_sweeps(model, st, betas, rng)
        meter.anneal_time_us += sched.duration
        rec.anneals += 1
        if st.cached_energy < best:
            best, rec.best_state = st.cached_energy, st
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
