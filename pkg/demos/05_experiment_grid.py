"""
A miniature experiment grid
===========================

Heritability x sample size x replicate, with every mode run on the same
replicate datasets.  The full default grid is 3 x 4 x 30 cells; this one is
small enough to finish in a minute or two.
"""

from treepipe import experiments as ex

grid = ex.ExperimentGrid(heritabilities=(0.1, 0.4), sample_sizes=(200,), replicates=2,
                         modes=("gp", "rf-baseline"), population_size=10, generations=3,
                         cv_folds=5)
rows = ex.run_grid(grid)
for r in rows:
    print(r.h2, r.samples, r.replicate, f"{r.mode:>12}", f"{r.holdout:.3f}", f"{r.cv_mean:.3f}",
          r.pipeline)
for s in ex.summarize(rows):
    print(s)
