"""
Pipelines as trees
==================

A pipeline is an S-expression.  Leaves are copies of the input data;
classifiers append their predictions as a new feature, pair selection keeps
the features of the best-scoring feature pairs, and combine merges two
branches.
"""

from treepipe import pipeline as pl
from treepipe.dataset import stratified_split
from treepipe.report import replay
from treepipe.simdata import model_set, simulate_dataset

sim = simulate_dataset(model_set(0.4, seed=1), 800, 100, seed=7)
ds = stratified_split(sim.dataset, 0.75, seed=0)

text = "(rf (combine (pairs input n=4) (dt input depth=3)) trees=100)"
tree = pl.parse_pipeline(text)
print("operators:", pl.complexity(tree), "nodes:", pl.size(tree))
print("holdout balanced accuracy:", pl.evaluate_pipeline(tree, ds, eval_seed=0))

# step by step: accuracy after every classifier and its top features
for step in replay(tree, ds, eval_seed=0, top=3):
    print(step.step, step.subtree, round(step.test_accuracy, 3), step.importances)

# the same pipeline scored by 10-fold cross validation on the full data
scores = pl.crossval_pipeline(tree, sim.dataset, k=10, seed=0)
print("10-fold mean:", sum(scores) / len(scores))

# malformed text is rejected with a byte offset
try:
    pl.parse_pipeline("(dt input depth=0)")
except ValueError as err:
    print(err)
