"""
Decision trees, forests and Gini importance
===========================================
"""

from treepipe.dataset import balanced_accuracy, stratified_split
from treepipe.learners import (fit_decision_tree, fit_random_forest, gini_importance,
                               predict_forest, predict_tree)
from treepipe.simdata import model_set, simulate_dataset

sim = simulate_dataset(model_set(0.4, seed=1), 800, 100, seed=7)
ds = stratified_split(sim.dataset, 0.75, seed=0)
test = ds.test

tree = fit_decision_tree(ds, max_depth=4)
print("tree nodes:", tree.n_nodes, "depth:", tree.depth())
print("tree test accuracy:", balanced_accuracy(ds.y[test], predict_tree(tree, ds)[test]))

forest = fit_random_forest(ds, n_trees=100, seed=0)
print("forest test accuracy:", balanced_accuracy(ds.y[test], predict_forest(forest, ds)[test]))

# Gini importance over 100 noisy SNPs; the planted ones tend to rank high
top = sorted(gini_importance(forest).items(), key=lambda kv: -kv[1])[:8]
truth = {ds.feature_names[c] for c in sim.predictive_columns}
for name, score in top:
    print(f"{name:>6} {score:.4f}", "*" if name in truth else "")
