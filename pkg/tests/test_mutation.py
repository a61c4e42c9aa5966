import numpy as np
import pytest

from qaga.analysis import brute_force
from qaga.mutation import (
    QAGA_DEFAULT_SCHEDULE, AnnealSchedule, NoOpMutation, ReverseSchedule, SurrogateConfig,
    SurrogateReverseAnneal, effective_beta, forward_schedule, mutate, mutate_batch, schedule_from_config,
    schedule_from_params, sweep_betas,
)
from qaga.ising import energy, random_state


def test_schedule_examples():
    assert schedule_from_params(10, 0.3, 0.6).points == ((0, 1.0), (2, 0.3), (8, 0.3), (10, 1.0))
    assert schedule_from_params(10, 0.5, 0.6).points == ((0, 1.0), (2, 0.5), (8, 0.5), (10, 1.0))
    v = schedule_from_params(10, 0.5, 0.0)
    assert v.points == ((0, 1.0), (5, 0.5), (10, 1.0))
    assert QAGA_DEFAULT_SCHEDULE.duration == 10.0 and QAGA_DEFAULT_SCHEDULE.s_min == 0.5


@pytest.mark.parametrize("args", [(0, 0.3, 0.5), (10, 0.0, 0.5), (10, 1.0, 0.5), (10, 0.3, 1.0), (10, 0.3, -0.1)])
def test_schedule_bounds(args):
    with pytest.raises(ValueError):
        schedule_from_params(*args)


def test_schedule_invariants():
    with pytest.raises(ValueError):
        ReverseSchedule([(0, 0.5), (1, 1.0)])
    with pytest.raises(ValueError):
        ReverseSchedule([(0, 1.0), (1, 0.5)])
    with pytest.raises(ValueError):
        ReverseSchedule([(0, 1.0), (1, 0.5), (1, 1.0)])
    with pytest.raises(ValueError):
        AnnealSchedule([(1, 0.0), (2, 1.0)])
    assert forward_schedule(5).points == ((0, 0), (5, 1))


def test_schedule_from_config_forms():
    pts = [[0, 1], [1, 0.5], [7, 0.5], [10, 1]]
    assert schedule_from_config(pts) == QAGA_DEFAULT_SCHEDULE
    assert schedule_from_config({"points": pts}) == QAGA_DEFAULT_SCHEDULE
    s = schedule_from_config({"anneal_time": 10, "s_star": 0.3, "pause_fraction": 0.6})
    assert s == schedule_from_params(10, 0.3, 0.6)
    assert isinstance(schedule_from_config([[0, 0], [3, 1]]), AnnealSchedule)


def test_effective_beta():
    c = SurrogateConfig()
    assert effective_beta(1.0, c) == pytest.approx(c.beta_cold)
    assert effective_beta(c.s_min, c) == pytest.approx(c.beta_hot)
    assert effective_beta(0.5, c) == pytest.approx(np.sqrt(c.beta_hot * c.beta_cold))
    c2 = SurrogateConfig(s_min=0.2)
    assert effective_beta(0.6, c2) == pytest.approx(np.sqrt(c2.beta_hot * c2.beta_cold))
    s = np.linspace(0, 1, 11)
    assert np.all(np.diff(effective_beta(s, c)) > 0)
    with pytest.raises(ValueError):
        effective_beta(0.1, c2)
    with pytest.raises(ValueError):
        effective_beta(1.1, c)


def test_surrogate_config_validation():
    with pytest.raises(ValueError):
        SurrogateConfig(beta_hot=2, beta_cold=1)
    with pytest.raises(ValueError):
        SurrogateConfig(sweeps_per_us=0.5)


def test_sweep_count():
    assert len(sweep_betas(QAGA_DEFAULT_SCHEDULE, SurrogateConfig())) == 100


def test_frozen_dynamics_keep_local_minimum(ran1_small):
    _, _, gs = brute_force(ran1_small, return_state=True)
    cold = SurrogateConfig(beta_hot=1e6, beta_cold=1e7)
    out = mutate(ran1_small, gs, schedule_from_params(10, 0.2, 0.5), cold, np.random.default_rng(0))
    assert np.array_equal(out.spins, gs.spins)


def test_mutate_leaves_input_and_is_valid(ran1_small):
    st = random_state(ran1_small, np.random.default_rng(0))
    before = st.spins.copy()
    out = mutate(ran1_small, st, QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), np.random.default_rng(1))
    assert np.array_equal(st.spins, before)
    assert set(np.unique(out.spins)) <= {-1, 1}
    assert out.cached_energy == energy(ran1_small, out)


def test_determinism(ran1_small):
    st = random_state(ran1_small, np.random.default_rng(0))
    a = mutate(ran1_small, st, QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), np.random.default_rng(7))
    b = mutate(ran1_small, st, QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), np.random.default_rng(7))
    assert np.array_equal(a.spins, b.spins)


def test_batch_of_one_is_mutate(ran1_small):
    st = random_state(ran1_small, np.random.default_rng(0))
    a = mutate(ran1_small, st, QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), np.random.default_rng(3))
    (b,), eff = mutate_batch(ran1_small, [st], QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), np.random.default_rng(3))
    assert np.array_equal(a.spins, b.spins) and eff == 10.0


def test_batch_permutation(ran1_small):
    rng = np.random.default_rng(0)
    states = [random_state(ran1_small, rng) for _ in range(8)]
    states.append(states[0].copy())  # duplicates get distinct streams
    perm = rng.permutation(len(states))
    out1, _ = mutate_batch(ran1_small, states, QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), np.random.default_rng(5))
    out2, _ = mutate_batch(ran1_small, [states[k] for k in perm], QAGA_DEFAULT_SCHEDULE, SurrogateConfig(),
                           np.random.default_rng(5))
    dup = {0, len(states) - 1}
    for pos, k in enumerate(perm):
        if k in dup:
            continue
        assert np.array_equal(out2[pos].spins, out1[k].spins)


def test_batch_of_40_effort(ran1_small):
    rng = np.random.default_rng(0)
    states = [random_state(ran1_small, rng) for _ in range(40)]
    out, eff = mutate_batch(ran1_small, states, QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), rng)
    assert len(out) == 40 and eff == 400.0
    with pytest.raises(ValueError):
        mutate_batch(ran1_small, states + states[:1], QAGA_DEFAULT_SCHEDULE, SurrogateConfig(), rng)


def test_operators(ran1_small):
    rng = np.random.default_rng(0)
    states = [random_state(ran1_small, rng) for _ in range(90)]
    out, eff = SurrogateReverseAnneal().mutate_many(ran1_small, states, rng)
    assert len(out) == 90 and eff == 900.0
    out, eff = NoOpMutation().mutate_many(ran1_small, states, rng)
    assert eff == 0.0 and all(np.array_equal(a.spins, b.spins) for a, b in zip(out, states))


def test_locality_monotone_small(ran1_small):
    _, _, gs = brute_force(ran1_small, return_state=True)
    rng = np.random.default_rng(0)
    means = []
    for s_star in (0.9, 0.5, 0.2):
        out, _ = mutate_batch(ran1_small, [gs] * 40, schedule_from_params(10, s_star, 0.6), SurrogateConfig(), rng)
        means.append(np.mean([np.sum(o.spins != gs.spins) for o in out]))
    assert means[0] < means[1] < means[2]
