"""Genetic programming over pipeline trees, plus random-search and models-only modes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import pipeline as pl
from .dataset import Dataset, round_half_up
from .errors import ContractError
from .pipeline import (CLASSIFIERS, HYPERPARAMETERS, Combine, InputLeaf, Node,
                       SelectPairs, complexity, evaluate_pipeline, serialize_pipeline)

log = logging.getLogger(__name__)

MODES = ("gp", "random-search", "models-only")
MUTATIONS = ("uniform", "insert", "shrink")
MAX_RETRIES = 50


@dataclass(frozen=True)
class GpConfig:
    population_size: int = 100
    generations: int = 100
    mutation_rate: float = 0.90
    crossover_rate: float = 0.05
    elitism_fraction: float = 0.10
    tournament_size: int = 3
    seed: int = 0
    mode: str = "gp"
    init_depth: int = 3
    mutation_depth: int = 2
    max_tree_size: int = pl.MAX_TREE_SIZE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}")
        for name in ("mutation_rate", "crossover_rate", "elitism_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if self.population_size < 10:
            raise ContractError("population_size must be >= 10")
        if self.generations < 0:
            raise ContractError("generations must be >= 0")
        if self.tournament_size != 3:
            raise ContractError("only 3-way tournaments are supported")
        if self.n_elite < 1:
            raise ContractError("elitism must keep at least one individual")

    @property
    def n_elite(self) -> int:
        return round_half_up(self.elitism_fraction * self.population_size)


@dataclass(frozen=True)
class OperatorSet:
    """Which trees generation and variation may produce."""

    models_only: bool = False
    init_depth: int = 3
    mutation_depth: int = 2
    max_size: int = pl.MAX_TREE_SIZE

    def valid(self, tree: Node) -> bool:
        if not pl.is_valid(tree, self.max_size):
            return False
        if self.models_only:
            return all(isinstance(n, (InputLeaf,) + CLASSIFIERS) for _, n in pl.walk(tree)) \
                and pl.depth(tree) <= 1
        return True

    def random_pipeline(self, rng) -> Node:
        return pl.random_pipeline(rng, self.init_depth, self.models_only, self.max_size)

    def random_subtree(self, rng, at_root: bool) -> Node:
        if self.models_only and not at_root:
            return pl.INPUT
        roots = CLASSIFIERS if at_root else None
        return pl.grow_subtree(rng, self.mutation_depth, self.models_only, roots)


def models_only_restriction(cfg: GpConfig) -> OperatorSet:
    """Operator set for ``cfg``: models-only runs are single classifiers over the input."""
    return OperatorSet(models_only=cfg.mode == "models-only", init_depth=cfg.init_depth,
                       mutation_depth=cfg.mutation_depth, max_size=cfg.max_tree_size)


@dataclass(frozen=True, eq=False)
class Individual:
    genome: Node
    fitness: float | None
    complexity: int

    @property
    def failed(self) -> bool:
        return self.fitness is None

    @property
    def text(self) -> str:
        return serialize_pipeline(self.genome)


def fitness_key(ind: Individual) -> float:
    """Failed individuals sort below every numeric fitness."""
    return -math.inf if ind.fitness is None else ind.fitness


def _better(a: Individual, b: Individual) -> bool:
    """True if ``a`` beats ``b``: higher fitness, then fewer operators."""
    return (fitness_key(a), -a.complexity) > (fitness_key(b), -b.complexity)


def best_of(pop) -> Individual:
    best = pop[0]
    for ind in pop[1:]:
        if _better(ind, best):
            best = ind
    return best


def tournament_select(pop, rng) -> Individual:
    """3-way tournament with 2-way parsimony.

    The least fit of three distinct draws is dropped; of the other two the
    one with fewer operators wins, then the fitter one, then a coin flip.
    A failed individual never beats one with a numeric fitness.
    """
    if len(pop) < 3:
        raise ContractError("tournament needs at least 3 individuals")
    picks = [pop[i] for i in rng.choice(len(pop), size=3, replace=False)]
    # stable sort over a random draw order drops a random one among tied-lowest
    a, b = sorted(picks, key=fitness_key)[1:]
    if a.failed != b.failed:
        return b if a.failed else a
    if a.complexity != b.complexity:
        return a if a.complexity < b.complexity else b
    if fitness_key(a) != fitness_key(b):
        return a if fitness_key(a) > fitness_key(b) else b
    return (a, b)[rng.integers(2)]


def _paths(tree):
    return [p for p, _ in pl.walk(tree)]


def crossover_one_point(a: Node, b: Node, rng, ops: OperatorSet = OperatorSet()):
    """Swap random subtrees of ``a`` and ``b``; fall back to the parents."""
    pa, pb = _paths(a), _paths(b)
    for _ in range(MAX_RETRIES):
        i = pa[rng.integers(len(pa))]
        j = pb[rng.integers(len(pb))]
        sa, sb = pl.subtree(a, i), pl.subtree(b, j)
        ca, cb = pl.replace(a, i, sb), pl.replace(b, j, sa)
        if ops.valid(ca) and ops.valid(cb):
            return ca, cb
    return a, b


def _uniform(tree, rng, ops):
    # mutation points: every dataset node plus every hyperparameter slot
    points = [(p, False) for p in _paths(tree)]
    points += [(p, True) for p, n in pl.walk(tree) if type(n) in HYPERPARAMETERS]
    path, is_slot = points[rng.integers(len(points))]
    if is_slot:
        node = pl.subtree(tree, path)
        value = pl.random_hyperparameter(type(node), rng)
        return pl.replace(tree, path, pl.with_hyperparameter(node, value))
    return pl.replace(tree, path, ops.random_subtree(rng, at_root=not path))


def _insert(tree, rng, ops):
    paths = _paths(tree)
    path = paths[rng.integers(len(paths))]
    below = pl.subtree(tree, path)
    kinds = CLASSIFIERS if ops.models_only else CLASSIFIERS + (SelectPairs, Combine)
    kind = kinds[rng.integers(len(kinds))]
    if kind is Combine:
        other = ops.random_subtree(rng, at_root=False)
        new = Combine(below, other) if rng.integers(2) == 0 else Combine(other, below)
    else:
        new = kind(below, pl.random_hyperparameter(kind, rng))
    return pl.replace(tree, path, new)


def _shrink(tree, rng, ops):
    paths = [p for p, n in pl.walk(tree) if not isinstance(n, InputLeaf)]
    path = paths[rng.integers(len(paths))]
    return pl.replace(tree, path, pl.subtree(tree, path).children[0])


_MUTATORS = {"uniform": _uniform, "insert": _insert, "shrink": _shrink}


def mutate(tree: Node, rng, ops: OperatorSet = OperatorSet(),
           trace: list | None = None) -> Node:
    """Apply uniform, insert or shrink mutation (1/3 each).

    The operator is chosen once; invalid results are retried with it up to
    50 times before the tree is returned unchanged.  The chosen operator's
    name is appended to ``trace`` when given.
    """
    name = MUTATIONS[rng.integers(len(MUTATIONS))]
    if trace is not None:
        trace.append(name)
    for _ in range(MAX_RETRIES):
        child = _MUTATORS[name](tree, rng, ops)
        if ops.valid(child):
            return child
    return tree


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float | None
    mean_fitness: float | None
    mean_complexity: float
    best_pipeline: str
    n_elite: int = 0
    n_crossover: int = 0
    n_mutation: int = 0


@dataclass
class SearchResult:
    best: Individual
    log: list[GenerationStats] = field(default_factory=list)
    n_evaluations: int = 0


class Evaluator:
    """Fitness of a genome on one split, memoised by its text form.

    Every genome is evaluated with the same evaluation seed, so fitness is
    a pure function of the genome and memoisation changes nothing.
    """

    def __init__(self, ds: Dataset, eval_seed: int):
        self.ds = ds
        self.eval_seed = eval_seed
        self.cache: dict[str, float | None] = {}
        self.calls = 0

    def __call__(self, genome: Node) -> Individual:
        key = serialize_pipeline(genome)
        if key not in self.cache:
            self.cache[key] = evaluate_pipeline(genome, self.ds, self.eval_seed)
            self.calls += 1
        return Individual(genome, self.cache[key], complexity(genome))


def _stats(generation, pop, best, counts=(0, 0, 0)) -> GenerationStats:
    scores = [i.fitness for i in pop if i.fitness is not None]
    return GenerationStats(
        generation, best.fitness,
        float(np.mean(scores)) if scores else None,
        float(np.mean([i.complexity for i in pop])),
        best.text, *counts)


def run_gp(cfg: GpConfig, ds: Dataset) -> SearchResult:
    """Evolve pipelines on a split dataset; returns the best-ever individual.

    Generation 0 is random.  Each later generation holds ``n_elite`` clones
    of the previous best, tournament winners for the rest, crossover on
    ``crossover_rate`` of the non-elites (in pairs) and mutation on
    ``mutation_rate`` of the non-elites crossover left untouched.
    """
    ops = models_only_restriction(cfg)
    rng = np.random.default_rng(cfg.seed)
    evaluate = Evaluator(ds, cfg.seed)
    pop = [evaluate(ops.random_pipeline(rng)) for _ in range(cfg.population_size)]
    best = best_of(pop)
    history = [_stats(0, pop, best)]
    n_elite = cfg.n_elite
    for gen in range(1, cfg.generations + 1):
        elite = best_of(pop)
        offspring = [tournament_select(pop, rng).genome
                     for _ in range(cfg.population_size - n_elite)]
        order = rng.permutation(len(offspring))
        n_cx = round_half_up(cfg.crossover_rate * len(offspring)) // 2 * 2
        crossed = order[:n_cx]
        for i, j in zip(crossed[::2], crossed[1::2]):
            offspring[i], offspring[j] = crossover_one_point(offspring[i], offspring[j], rng, ops)
        untouched = order[n_cx:]
        n_mut = round_half_up(cfg.mutation_rate * len(untouched))
        for i in rng.permutation(untouched)[:n_mut]:
            offspring[i] = mutate(offspring[i], rng, ops)
        pop = [elite] * n_elite + [evaluate(g) for g in offspring]
        current = best_of(pop)
        if _better(current, best):
            best = current
        history.append(_stats(gen, pop, best, (n_elite, n_cx, n_mut)))
        log.debug("generation %d best %.4f", gen, fitness_key(best))
    return SearchResult(best, history, evaluate.calls)


def run_random_search(cfg: GpConfig, ds: Dataset, budget: int | None = None) -> SearchResult:
    """Evaluate ``population_size * generations`` independent random pipelines.

    The log has one row per population-sized chunk.  A larger budget with
    the same seed extends the same stream of pipelines.
    """
    ops = models_only_restriction(cfg)
    budget = cfg.population_size * cfg.generations if budget is None else budget
    if budget < 1:
        raise ContractError("random search needs a budget of at least 1")
    rng = np.random.default_rng(cfg.seed)
    evaluate = Evaluator(ds, cfg.seed)
    best = None
    chunk = []
    history = []
    for k in range(budget):
        ind = evaluate(ops.random_pipeline(rng))
        if best is None or _better(ind, best):
            best = ind
        chunk.append(ind)
        if len(chunk) == cfg.population_size or k == budget - 1:
            history.append(_stats(len(history), chunk, best))
            chunk = []
    return SearchResult(best, history, evaluate.calls)


def run(cfg: GpConfig, ds: Dataset) -> SearchResult:
    if cfg.mode == "random-search":
        return run_random_search(cfg, ds)
    return run_gp(cfg, ds)
