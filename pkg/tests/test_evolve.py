import copy
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from treepipe import pipeline as pl
from treepipe.dataset import stratified_split
from treepipe.errors import ContractError
from treepipe.evolve import (MUTATIONS, GpConfig, Individual, OperatorSet,
                             crossover_one_point, fitness_key, models_only_restriction,
                             mutate, run, run_gp, run_random_search, tournament_select)
from treepipe.pipeline import INPUT, ClassifyDT, ClassifyRF, Combine, SelectPairs

from conftest import make_dataset


def ind(fitness, complexity, tag=0):
    return Individual(ClassifyDT(INPUT, tag + 1), fitness, complexity)


def test_config_defaults_and_validation():
    cfg = GpConfig()
    assert (cfg.population_size, cfg.generations, cfg.mutation_rate, cfg.crossover_rate,
            cfg.elitism_fraction, cfg.tournament_size) == (100, 100, 0.9, 0.05, 0.1, 3)
    assert cfg.n_elite == 10
    assert GpConfig(population_size=15).n_elite == 2  # 1.5 rounds half up
    for bad in (dict(mutation_rate=1.5), dict(population_size=9), dict(mode="x"),
                dict(elitism_fraction=0.0)):
        with pytest.raises(ContractError):
            GpConfig(**bad)


def test_tournament_rule_trace():
    pop = [ind(0.9, 5), ind(0.5, 1), ind(0.7, 2)]
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert tournament_select(pop, rng) is pop[2]


def test_tournament_failed_sorts_lowest():
    pop = [ind(None, 1), ind(None, 1), ind(0.3, 9)]
    rng = np.random.default_rng(1)
    assert all(tournament_select(pop, rng) is pop[2] for _ in range(20))
    assert fitness_key(pop[0]) < fitness_key(ind(0.0, 1))


def test_tournament_equal_complexity_prefers_fitter_then_coin():
    rng = np.random.default_rng(2)
    pop = [ind(0.1, 3), ind(0.6, 3), ind(0.8, 3)]
    assert all(tournament_select(pop, rng) is pop[2] for _ in range(20))
    tied = [ind(0.1, 3), ind(0.6, 3, 1), ind(0.6, 3, 2)]
    wins = Counter(id(tournament_select(tied, rng)) for _ in range(2000))
    assert set(wins) == {id(tied[1]), id(tied[2])}
    assert stats.binomtest(wins[id(tied[1])], 2000).pvalue > 0.001


def test_tournament_needs_three():
    with pytest.raises(ContractError):
        tournament_select([ind(0.5, 1), ind(0.4, 1)], np.random.default_rng(0))


def test_dominant_individual_win_rate():
    # the best-and-simplest individual wins exactly when it is drawn: 1 - C(n-1,3)/C(n,3) = 3/n
    n, trials = 20, 10_000
    pop = [ind(0.9, 1)] + [ind(0.1 + 0.01 * i, 2 + i % 4) for i in range(n - 1)]
    rng = np.random.default_rng(3)
    wins = sum(tournament_select(pop, rng) is pop[0] for _ in range(trials))
    p = 1 - stats.hypergeom(n, 1, 3).pmf(0)
    assert p == pytest.approx(3 / n)
    assert stats.binomtest(wins, trials, p).pvalue > 0.001


def test_tournament_never_picks_failed_over_numeric():
    rng = np.random.default_rng(4)
    pop = [ind(None, 1) for _ in range(7)] + [ind(0.2, 9), ind(0.3, 8)]
    for _ in range(2000):
        drawn = copy.deepcopy(rng).choice(len(pop), size=3, replace=False)
        winner = tournament_select(pop, rng)
        if any(not pop[i].failed for i in drawn):
            assert not winner.failed


def test_crossover_at_roots_swaps_parents():
    a, b = ClassifyDT(INPUT, 3), ClassifyRF(INPUT, 40)

    class Roots:
        def integers(self, n):
            return 0
    assert crossover_one_point(a, b, Roots()) == (b, a)


def test_crossover_and_mutation_validity_ten_thousand():
    rng = np.random.default_rng(5)
    ops = OperatorSet()
    trees = [pl.random_pipeline(rng, 4) for _ in range(200)]
    for k in range(10_000):
        a, b = trees[k % 200], trees[(7 * k + 3) % 200]
        c, d = crossover_one_point(a, b, rng, ops)
        assert pl.is_valid(c) and pl.is_valid(d)
        assert Counter(pl.kinds(a) + pl.kinds(b)) == Counter(pl.kinds(c) + pl.kinds(d))
        m = mutate(c, rng, ops)
        assert pl.is_valid(m)
        trees[k % 200] = m


def test_mutation_frequencies_chi_square():
    rng = np.random.default_rng(6)
    trace = []
    tree = pl.parse_pipeline("(rf (combine (pairs input n=2) (dt input depth=3)) trees=50)")
    for _ in range(10_000):
        mutate(tree, rng, trace=trace)
    counts = Counter(trace)
    observed = [counts[m] for m in MUTATIONS]
    assert sum(observed) == 10_000
    assert stats.chisquare(observed).pvalue > 0.01


def test_shrink_on_single_classifier_is_identity():
    tree = ClassifyDT(INPUT, 4)
    rng = np.random.default_rng(7)
    seen = 0
    for _ in range(300):
        trace = []
        out = mutate(tree, rng, trace=trace)
        if trace == ["shrink"]:
            seen += 1
            assert out == tree
    assert seen > 50


def test_each_mutation_kind_changes_trees():
    rng = np.random.default_rng(8)
    tree = pl.parse_pipeline("(rf (dt input depth=2) trees=30)")
    changed = Counter()
    for _ in range(600):
        trace = []
        out = mutate(tree, rng, trace=trace)
        if out != tree:
            changed[trace[0]] += 1
            if trace[0] == "insert":
                assert pl.size(out) > pl.size(tree)
            if trace[0] == "shrink":
                assert pl.size(out) == pl.size(tree) - 1
    assert set(changed) == set(MUTATIONS)


def test_models_only_operator_set_is_closed():
    ops = models_only_restriction(GpConfig(mode="models-only"))
    rng = np.random.default_rng(9)
    tree = ops.random_pipeline(rng)
    other = ops.random_pipeline(rng)
    for _ in range(3000):
        tree = mutate(tree, rng, ops)
        tree, other = crossover_one_point(tree, other, rng, ops)
        for t in (tree, other):
            assert ops.valid(t)
            assert not any(isinstance(n, (SelectPairs, Combine)) for _, n in pl.walk(t))
            assert pl.depth(t) == 1


@pytest.fixture(scope="module")
def toy_split():
    X = np.random.default_rng(0).integers(0, 3, (60, 6))
    y = (X[:, 2] > 0).astype(int)
    return stratified_split(make_dataset(X, y), 0.75, 1)


@pytest.fixture(scope="module")
def noisy_split(sim_small):
    return sim_small[1]


def test_zero_generations_is_best_of_initial(toy_split):
    cfg = GpConfig(population_size=10, generations=0, seed=3)
    res = run_gp(cfg, toy_split)
    assert len(res.log) == 1
    rng = np.random.default_rng(3)
    initial = [pl.random_pipeline(rng, 3) for _ in range(10)]
    fits = [pl.evaluate_pipeline(t, toy_split, 3) for t in initial]
    assert res.best.fitness == max(f for f in fits if f is not None)


def test_separable_data_reaches_one_quickly(toy_split):
    res = run_gp(GpConfig(generations=5, seed=1), toy_split)
    assert res.best.fitness == 1.0


def test_gp_log_and_determinism(noisy_split):
    cfg = GpConfig(population_size=12, generations=4, seed=8)
    a = run_gp(cfg, noisy_split)
    b = run_gp(cfg, noisy_split)
    assert a.best.text == b.best.text and a.log == b.log
    best = [s.best_fitness for s in a.log]
    assert all(x <= y for x, y in zip(best, best[1:]))
    assert [s.generation for s in a.log] == list(range(5))
    assert all(s.n_elite == 1 and s.n_crossover == 0 and s.n_mutation == 10 for s in a.log[1:])
    assert a.best.fitness == pl.evaluate_pipeline(a.best.genome, noisy_split, cfg.seed)


def test_variation_counts(noisy_split):
    # 100 * 0.1 = 10 elites; 5% of 90 = 4.5 -> 5 -> 4 in pairs; 90% of 86 = 77.4 -> 77
    cfg = GpConfig(population_size=100, generations=1, seed=2)
    res = run_gp(cfg, noisy_split.select(range(6)))
    last = res.log[-1]
    assert (last.n_elite, last.n_crossover, last.n_mutation) == (10, 4, 77)


def test_random_search_budget_and_prefix(noisy_split):
    cfg = GpConfig(population_size=10, generations=2, seed=4, mode="random-search")
    one = run_random_search(cfg, noisy_split, budget=1)
    rng = np.random.default_rng(4)
    assert one.best.fitness == pl.evaluate_pipeline(pl.random_pipeline(rng, 3), noisy_split, 4)
    bests = [run_random_search(cfg, noisy_split, budget=b).best.fitness for b in (1, 5, 20)]
    assert bests == sorted(bests)
    full = run(cfg, noisy_split)
    assert len(full.log) == 2 and full.best.fitness == bests[-1]
