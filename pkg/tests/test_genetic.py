import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import k44, two_var
from qaga.analysis import StopCriterion, brute_force
from qaga.genetic import (
    Individual, Population, QagaConfig, best_of_random, pareto_layers, pareto_order, qaga_run,
    random_matchings, recombination_round, select, shared_energies, verify_population,
)
from qaga.ising import IsingModel, SpinGraph, SpinState, energy
from qaga.mutation import NoOpMutation


def pair_population(satisfied, n=40, aligned=False):
    """Two spins; the first ``satisfied`` rows satisfy an antiferro (or ferro, if aligned) bond."""
    good = [1, 1] if aligned else [1, -1]
    bad = [1, -1] if aligned else [1, 1]
    return np.array([good] * satisfied + [bad] * (n - satisfied), np.int8)


def test_shared_energy_examples():
    sh = shared_energies(two_var(1.0), pair_population(5))
    assert np.allclose(sh[:5], -0.2) and np.all(sh[5:] == 0)
    sh = shared_energies(two_var(-0.5), pair_population(1, aligned=True))
    assert sh[0] == -0.5 and np.all(sh[1:] == 0)


def test_shared_energy_identical_population(ran1_small):
    s = np.tile(np.where(np.arange(32) % 3, 1, -1).astype(np.int8), (40, 1))
    raw = energy(ran1_small, SpinState(s[0]))
    sat = sum(t for t in (ran1_small.J * s[0][ran1_small.graph.edges[:, 0]] * s[0][ran1_small.graph.edges[:, 1]])
              if t < 0)
    assert np.allclose(shared_energies(ran1_small, s), sat / 40)
    assert raw >= sat


def _satisfied_total(model, S):
    e = model.graph.edges
    t = S[:, e[:, 0]] * S[:, e[:, 1]] * model.J
    ht = S * model.h
    return t[:, (t < 0).any(axis=0)].min(axis=0).sum() + ht[:, (ht < 0).any(axis=0)].min(axis=0).sum()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 60))
def test_shared_energy_population_sum(seed, size):
    rng = np.random.default_rng(seed)
    n = 8
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
    m = IsingModel(SpinGraph.from_edges(n, edges), rng.normal(size=n) * (rng.random(n) < 0.5),
                   rng.normal(size=len(edges)))
    S = Population.random(m, size, rng).spins
    assert shared_energies(m, S).sum() == pytest.approx(_satisfied_total(m, S.astype(float)))


def test_pareto_examples():
    assert list(pareto_order([-5, -3], [-1, -2])) == [0, 1]
    layers = pareto_layers([-5, -3], [-2, -1])
    assert [list(x) for x in layers] == [[0], [1]]
    assert list(pareto_order([-5, -3], [-2, -1])) == [0, 1]


def _dominated(i, j, raw, sh):
    return raw[j] <= raw[i] and sh[j] <= sh[i] and (raw[j] < raw[i] or sh[j] < sh[i])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_pareto_random_points(seed):
    rng = np.random.default_rng(seed)
    raw = rng.integers(-10, 0, 100).astype(float)
    sh = rng.integers(-10, 0, 100).astype(float)
    order = pareto_order(raw, sh)
    assert sorted(order) == list(range(100))
    assert raw[order[0]] == raw.min()
    layers = pareto_layers(raw, sh)
    first = set(layers[0])
    # first layer: non-dominated and pairwise distinct points
    for i in range(100):
        non_dom = not any(_dominated(i, j, raw, sh) for j in range(100))
        if i in first:
            assert non_dom
        elif non_dom:
            assert any(raw[j] == raw[i] and sh[j] == sh[i] for j in first)


def test_select_identity_at_keep_size(ran1_small):
    cfg = QagaConfig(population_size=4, keep_size=3, fresh_random=1)
    pop = Population.random(ran1_small, 3, np.random.default_rng(0))
    out = select(ran1_small, pop, cfg)
    assert sorted(map(bytes, out.spins)) == sorted(map(bytes, pop.spins))


def test_duplicate_best_does_not_evict_unique_second():
    g = SpinGraph.from_edges(4, [])
    m = IsingModel(g, np.array([-2.0, -2.0, -1.5, -1.5]), np.zeros(0))
    A = SpinState([1, 1, -1, -1], -1.0)
    B = SpinState([-1, -1, 1, 1], 1.0)
    items = [Individual(A, -1.0), Individual(A.copy(), -1.0), Individual(B, 1.0)]
    # A's two rewards are split with its copy; B's are its own
    assert np.allclose(shared_energies(m, items), [-2.0, -2.0, -3.0])
    kept = select(m, items, QagaConfig(population_size=3, keep_size=2, fresh_random=1))
    assert {tuple(k.state.spins) for k in kept} == {tuple(A.spins), tuple(B.spins)}
    assert kept[0].raw_energy == -1.0


def test_elitism_property(ran1_small):
    rng = np.random.default_rng(0)
    cfg = QagaConfig()
    for _ in range(100):
        pop = Population.random(ran1_small, int(rng.integers(30, 120)), rng)
        out = select(ran1_small, pop, cfg)
        assert len(out) == 30 and out.energies.min() == pop.energies.min()


def test_random_matchings():
    p = random_matchings(40, 10, np.random.default_rng(0))
    assert p.shape == (200, 2)
    assert np.all(np.bincount(p.ravel(), minlength=40) == 10)
    assert random_matchings(5, 0, np.random.default_rng(0)).shape == (0, 2)


def test_recombination_rates(ran1_small):
    rng = np.random.default_rng(0)
    pop = Population.random(ran1_small, 2, rng)
    off, moves = recombination_round(ran1_small, pop, 0, rng)
    assert len(off) == 0 and moves == 0
    off, moves = recombination_round(ran1_small, pop, 1, rng)
    assert moves == 1 and len(off) <= 2


def test_recombination_conserves_pair_energy(ran1_small):
    rng = np.random.default_rng(1)
    pop = Population.random(ran1_small, 40, rng)
    off, moves = recombination_round(ran1_small, pop, 10, rng)
    assert moves == 200 and len(off) > 0 and len(off) % 2 == 0
    assert verify_population(ran1_small, off)
    parent_sums = {round(a + b, 9) for a in pop.energies for b in pop.energies}
    for k in range(0, len(off), 2):
        assert round(off.energies[k] + off.energies[k + 1], 9) in parent_sums


def test_list_interface(ran1_small):
    pop = Population.random(ran1_small, 40, np.random.default_rng(0))
    items = pop.individuals()
    kept = select(ran1_small, items, QagaConfig())
    assert len(kept) == 30 and all(isinstance(k, Individual) for k in kept)
    assert all(k.raw_energy == energy(ran1_small, k.state) for k in kept)
    off, _ = recombination_round(ran1_small, items, 1, np.random.default_rng(0))
    assert all(isinstance(o, Individual) for o in off)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        QagaConfig(population_size=40, keep_size=20, fresh_random=10)
    with pytest.raises(ValueError):
        QagaConfig(selection="roulette")
    cfg = QagaConfig(recombination_rate=3)
    assert QagaConfig.from_dict(cfg.to_dict()) == cfg


def test_ferromagnet_solved_quickly():
    m = k44(-1.0)
    assert brute_force(m) == (-16.0, 2)
    for seed in range(10):
        rec, trace = qaga_run(m, QagaConfig(), None, np.random.default_rng(seed), stop=StopCriterion(-16.0))
        assert rec.success and rec.generations <= 2 and rec.restarts == 0


def test_noop_reduces_to_best_of_random(ran1_small):
    cfg = QagaConfig(mutation_rate=0, recombination_rate=0, max_generations=1)
    rec, _ = qaga_run(ran1_small, cfg, NoOpMutation(), np.random.default_rng(4), stop=StopCriterion(max_iterations=1))
    assert rec.best_energy == best_of_random(ran1_small, 40, np.random.default_rng(4))
    assert rec.effort_us == 0.0


def test_trace_monotone_across_restarts(ran1_small):
    cfg = QagaConfig(max_generations=3)
    rec, trace = qaga_run(ran1_small, cfg, None, np.random.default_rng(0),
                          stop=StopCriterion(target_energy=-1e9, max_iterations=12))
    assert rec.restarts == 3 and not rec.success
    b = [t.best_energy for t in trace]
    assert all(y <= x for x, y in zip(b, b[1:]))
    assert {t.restart for t in trace} == {0, 1, 2, 3}
    assert rec.best_energy == energy(ran1_small, rec.best_state)


def test_population_size_after_selection(ran1_small):
    cfg = QagaConfig()
    rec, trace = qaga_run(ran1_small, cfg, None, np.random.default_rng(0), stop=StopCriterion(max_iterations=4))
    # each generation starts from 40, adds 40 mutants, then at most 2 offspring per pair over 400 pairs
    assert all(80 <= t.population_size <= 80 + 800 for t in trace)


def test_effort_accounting(ran1_small):
    rec, trace = qaga_run(ran1_small, QagaConfig(), None, np.random.default_rng(0),
                          stop=StopCriterion(max_iterations=3))
    assert rec.anneal_time_us == 3 * 40 * 10.0
    assert rec.cluster_moves == 3 * 400
    assert rec.effort_us == pytest.approx(rec.anneal_time_us + rec.cluster_moves * 32 * 0.2e-3)
    assert trace[-1].effort_us == pytest.approx(rec.effort_us)


def test_c224_suite(c224):
    from qaga.generators import generate

    for seed in range(100):
        m = generate("ran1", c224, 500 + seed)
        gs, _ = brute_force(m)
        rec, _ = qaga_run(m, QagaConfig(), None, np.random.default_rng(seed), stop=StopCriterion(gs, 1e8))
        assert rec.success
