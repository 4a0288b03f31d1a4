"""
Evolving pipelines
==================

Genetic programming with elitism, 3-way tournaments that prefer smaller
pipelines, one-point crossover and three mutation operators.  Random search
and a models-only search run on the same split for comparison.
"""

from treepipe.dataset import stratified_split
from treepipe.evolve import GpConfig, run
from treepipe.simdata import model_set, simulate_dataset

sim = simulate_dataset(model_set(0.4, seed=1), 400, 100, seed=7)
ds = stratified_split(sim.dataset, 0.75, seed=0)

for mode in ("gp", "random-search", "models-only"):
    cfg = GpConfig(population_size=20, generations=5, seed=0, mode=mode)
    result = run(cfg, ds)
    print(f"{mode:>14}: {result.best.fitness:.3f} {result.best.text}")

cfg = GpConfig(population_size=20, generations=5, seed=0)
for row in run(cfg, ds).log:
    print(row.generation, round(row.best_fitness, 3), round(row.mean_complexity, 2))
