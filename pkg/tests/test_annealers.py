import itertools
import math

import numpy as np
import pytest

from conftest import k44, two_var
from qaga.analysis import StopCriterion, brute_force
from qaga.annealers import (
    BetaLadder, SaSchedule, exchange_probability, houdayer_move, measure_exchange_rates, pt_icm_run,
    pt_run, pt_step, run_sweeps, sa_run, sa_schedule_from_ladder, simulated_anneal, sweep_metropolis,
    tune_beta_ladder,
)
from qaga.generators import generate
from qaga.ising import SpinState, energy, random_state

STATES = [np.array(s, np.int8) for s in itertools.product([1, -1], repeat=2)]


def exact_sweep_matrix(m, beta):
    """Transition matrix of one typewriter sweep on a 2-variable model."""
    def energy_of(s):
        return energy(m, SpinState(s))

    T = np.zeros((4, 4))
    for a, s in enumerate(STATES):
        dist = {tuple(s): 1.0}
        for i in range(2):
            nxt = {}
            for cfg, p in dist.items():
                c = np.array(cfg, np.int8)
                f = c.copy()
                f[i] = -f[i]
                de = energy_of(f) - energy_of(c)
                acc = 1.0 if de <= 0 else math.exp(-beta * de)
                nxt[tuple(f)] = nxt.get(tuple(f), 0.0) + p * acc
                nxt[cfg] = nxt.get(cfg, 0.0) + p * (1 - acc)
            dist = nxt
        for cfg, p in dist.items():
            T[a, [tuple(x) for x in STATES].index(cfg)] += p
    return T


def boltzmann(m, beta):
    w = np.array([math.exp(-beta * energy(m, SpinState(s))) for s in STATES])
    return w / w.sum()


def test_beta_zero_accepts_everything(ran1_small):
    st = random_state(ran1_small, np.random.default_rng(0))
    before = st.spins.copy()
    _, flips = sweep_metropolis(ran1_small, st, 0.0, np.random.default_rng(1))
    assert flips == ran1_small.num_vars
    assert np.array_equal(st.spins, -before)
    assert st.cached_energy == pytest.approx(energy(ran1_small, st))


def test_negative_beta_rejected(ran1_small):
    st = random_state(ran1_small, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sweep_metropolis(ran1_small, st, -1.0, np.random.default_rng(0))


def test_single_sweep_matches_exact_chain():
    m = two_var(-1.0, (0.3, 0.0))
    beta = 0.7
    T = exact_sweep_matrix(m, beta)
    rng = np.random.default_rng(5)
    n = 20_000
    for a, s in enumerate(STATES):
        counts = np.zeros(4)
        for _ in range(n):
            st = SpinState(s.copy())
            run_sweeps(m, st, [beta], rng)
            counts[[tuple(x) for x in STATES].index(tuple(st.spins))] += 1
        sigma = np.sqrt(T[a] * (1 - T[a]) / n)
        assert np.all(np.abs(counts / n - T[a]) <= 4 * sigma + 1e-12)


def test_exact_chain_has_boltzmann_stationary():
    m = two_var(1.0, (0.2, -0.5))
    for beta in (0.1, 1.0, 3.0):
        pi = boltzmann(m, beta)
        assert np.allclose(pi @ exact_sweep_matrix(m, beta), pi)


def test_boltzmann_marginals():
    m = two_var(-1.0, (0.5, 0.0))
    beta = 0.8
    st = SpinState([1, 1])
    rng = np.random.default_rng(2)
    run_sweeps(m, st, np.full(1000, beta), rng)
    counts = np.zeros(4)
    for _ in range(200):
        for _ in range(100):
            run_sweeps(m, st, [beta], rng)
            counts[[tuple(x) for x in STATES].index(tuple(st.spins))] += 1
    assert np.max(np.abs(counts / counts.sum() - boltzmann(m, beta))) < 0.02


def test_sa_two_var_ground():
    m = two_var(1.0)
    st = simulated_anneal(m, SaSchedule(tuple(np.linspace(0.1, 5, 100))), np.random.default_rng(0))
    assert st.cached_energy == -1.0


def test_sa_run_reaches_target(ran1_small):
    gs, _ = brute_force(ran1_small)
    sched = sa_schedule_from_ladder(BetaLadder((0.1, 5.0)), 2000)
    rec = sa_run(ran1_small, sched, StopCriterion(gs, 1e6), np.random.default_rng(0))
    assert rec.success and rec.best_energy == gs
    assert rec.effort_us == pytest.approx(rec.anneals * 2000 * 32 * 0.2e-3)


def test_sa_schedule_from_ladder():
    lad = BetaLadder((0.1, 0.5, 3.0))
    assert sa_schedule_from_ladder(lad, 1).betas_per_sweep == (3.0,)
    s = sa_schedule_from_ladder(lad, 5).betas_per_sweep
    assert s[0] == 0.1 and s[-1] == 3.0 and len(s) == 5
    assert np.allclose(np.diff(s), (3.0 - 0.1) / 4)
    with pytest.raises(ValueError):
        sa_schedule_from_ladder(lad, 0)


def test_ladder_validation():
    with pytest.raises(ValueError):
        BetaLadder((1.0, 0.5))
    with pytest.raises(ValueError):
        BetaLadder((0.0, 1.0))


def test_exchange_probability():
    assert exchange_probability(1.0, 2.0, 0.0, -2.0) == pytest.approx(math.exp(-2))
    assert exchange_probability(1.0, 2.0, -2.0, 0.0) == 1.0


def test_pt_swaps_states_not_betas(ran1_small):
    lad = BetaLadder((0.1, 0.2, 0.4))
    reps = [random_state(ran1_small, np.random.default_rng(k)) for k in range(3)]
    ids = [id(r) for r in reps]
    pt_step(ran1_small, reps, lad, np.random.default_rng(0))
    assert sorted(id(r) for r in reps) == sorted(ids)
    assert lad.betas == (0.1, 0.2, 0.4)
    with pytest.raises(ValueError):
        pt_step(ran1_small, reps[:2], lad, np.random.default_rng(0))


def test_pt_boltzmann_marginals():
    m = two_var(-1.0, (0.4, 0.0))
    lad = BetaLadder((0.3, 0.6, 1.0))
    rng = np.random.default_rng(3)
    reps = [SpinState([1, 1]) for _ in lad.betas]
    for t in range(500):
        pt_step(m, reps, lad, rng, parity=t)
    counts = np.zeros((3, 4))
    idx = [tuple(x) for x in STATES]
    for t in range(40_000):
        pt_step(m, reps, lad, rng, parity=t)
        for k, r in enumerate(reps):
            counts[k, idx.index(tuple(r.spins))] += 1
    for k, b in enumerate(lad.betas):
        assert np.max(np.abs(counts[k] / counts[k].sum() - boltzmann(m, b))) < 0.02


def test_houdayer_examples():
    m = k44()
    a = SpinState(np.ones(8))
    b = SpinState(np.ones(8))
    a2, b2, size = houdayer_move(m, a, b, np.random.default_rng(0))
    assert size == 0 and np.array_equal(a2.spins, a.spins)
    b = SpinState([1, 1, 1, 1, 1, 1, 1, -1])
    a2, b2, size = houdayer_move(m, a, b, np.random.default_rng(0))
    # single differing site: the move swaps it between replicas
    assert size == 1
    assert np.array_equal(a2.spins, b.spins) and np.array_equal(b2.spins, a.spins)
    with pytest.raises(ValueError):
        houdayer_move(m, a, SpinState([1, 1]), np.random.default_rng(0))


def test_houdayer_conserves_energy_sum(c224):
    rng = np.random.default_rng(0)
    for seed in range(20):
        m = generate("ran1", c224, seed)
        for _ in range(20):
            a, b = random_state(m, rng), random_state(m, rng)
            a2, b2, size = houdayer_move(m, a, b, rng)
            assert size > 0
            assert energy(m, a2) + energy(m, b2) == energy(m, a) + energy(m, b)
            assert a2.cached_energy == energy(m, a2)
            # differing set is unchanged by the move
            assert np.array_equal(a2.spins != b2.spins, a.spins != b.spins)


def test_ladder_on_ferromagnet_is_small():
    lad = tune_beta_ladder(two_var(-1.0), rng=np.random.default_rng(0))
    assert lad.converged and len(lad) <= 5
    r = measure_exchange_rates(two_var(-1.0), lad, np.random.default_rng(1))
    assert np.all((r >= 0.25) & (r <= 0.85))


def test_ladder_cap_warns(ran1_small):
    with pytest.warns(RuntimeWarning):
        lad = tune_beta_ladder(ran1_small, 0.7, 0.71, rng=np.random.default_rng(0), max_iterations=2,
                               calibration_steps=200, burn_in=50)
    assert not lad.converged


@pytest.mark.parametrize("runner", ["pt", "pt-icm"])
def test_tempering_trace_monotone_and_effort(ran1_small, runner):
    lad = tune_beta_ladder(ran1_small, rng=np.random.default_rng(0))
    stop = StopCriterion(max_iterations=300)
    if runner == "pt":
        rec = pt_run(ran1_small, lad, stop, np.random.default_rng(1))
    else:
        rec = pt_icm_run(ran1_small, lad, 3, stop, np.random.default_rng(1))
        assert rec.cluster_moves == 100 * len(lad)
    best = [b for _, b in rec.trace]
    assert all(y <= x for x, y in zip(best, best[1:]))
    assert rec.best_energy == energy(ran1_small, rec.best_state)
    assert rec.effort_us == pytest.approx((rec.sweeps + rec.cluster_moves) * 32 * 0.2e-3)


def test_pt_icm_validation(ran1_small):
    lad = BetaLadder((0.5, 1.0))
    with pytest.raises(ValueError):
        pt_icm_run(ran1_small, lad, 3, StopCriterion(max_iterations=1), np.random.default_rng(0), copies=3)
    with pytest.raises(ValueError):
        pt_icm_run(ran1_small, lad, 0, StopCriterion(max_iterations=1), np.random.default_rng(0))
