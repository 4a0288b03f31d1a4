"""Step-by-step replay of a pipeline: per-classifier accuracy and importances."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .dataset import Dataset, balanced_accuracy
from .learners import gini_importance
from .pipeline import CLASSIFIERS, Node, run_pipeline, serialize_pipeline


@dataclass(frozen=True)
class ClassifierStep:
    step: int
    path: tuple[int, ...]
    operator: str
    subtree: str
    n_features: int
    test_accuracy: float
    importances: list[tuple[str, float]]


def replay(tree: Node, ds: Dataset, eval_seed: int = 0, top: int = 10) -> list[ClassifierStep]:
    """Execute ``tree`` and describe every classifier in execution order.

    Accuracy is the balanced accuracy of the guess column on Test rows right
    after that classifier ran; importances are the ``top`` largest Gini
    importances of the model it fitted.
    """
    trace = []
    run_pipeline(tree, ds, eval_seed, trace)
    steps = []
    for st in trace:
        if not isinstance(st.node, CLASSIFIERS):
            continue
        test = st.output.test
        acc = balanced_accuracy(st.output.y[test], st.output.guess[test])
        ranked = sorted(gini_importance(st.model).items(), key=lambda kv: (-kv[1], kv[0]))
        steps.append(ClassifierStep(
            step=len(steps) + 1, path=st.path,
            operator="dt" if type(st.node).__name__ == "ClassifyDT" else "rf",
            subtree=serialize_pipeline(st.node),
            n_features=st.output.n_features - 1, test_accuracy=acc,
            importances=ranked[:top]))
    return steps


def path_text(path) -> str:
    return "/".join(map(str, path)) or "root"


def write_report(steps: list[ClassifierStep], accuracy_path, importance_path) -> None:
    with Path(accuracy_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "path", "operator", "n_input_features",
                    "test_balanced_accuracy", "pipeline"])
        for s in steps:
            w.writerow([s.step, path_text(s.path), s.operator, s.n_features,
                        repr(s.test_accuracy), s.subtree])
    with Path(importance_path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "rank", "feature", "gini_importance"])
        for s in steps:
            for rank, (name, score) in enumerate(s.importances, start=1):
                w.writerow([s.step, rank, name, repr(score)])
