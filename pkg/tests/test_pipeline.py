from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treepipe import pipeline as pl
from treepipe.dataset import stratified_folds
from treepipe.errors import ContractError, DataError, PipelineSyntaxError
from treepipe.pipeline import (INPUT, ClassifyDT, ClassifyRF, Combine, SelectPairs,
                               complexity, crossval_pipeline, evaluate_pipeline,
                               parse_pipeline, random_pipeline, run_pipeline,
                               serialize_pipeline)

from conftest import make_dataset
from oracles import balanced_accuracy_ref, grow_reference, pair_scores_ref

FIG2 = "(rf (combine (pairs input n=2) (dt input depth=3)) trees=50)"


def test_complexity_examples():
    assert complexity(ClassifyDT(INPUT, 3)) == 1
    tree = ClassifyRF(Combine(ClassifyDT(INPUT, 2), SelectPairs(INPUT, 4)), 100)
    assert complexity(tree) == 4
    assert complexity(parse_pipeline(serialize_pipeline(tree))) == 4


def test_serialize_fixed_point():
    text = "(dt input depth=5)"
    assert serialize_pipeline(parse_pipeline(text)) == text
    assert parse_pipeline(FIG2) == ClassifyRF(
        Combine(SelectPairs(INPUT, 2), ClassifyDT(INPUT, 3)), 50)


@pytest.mark.parametrize("text, offset, message", [
    ("(pairs input n=3)", 0, "root must be a classifier"),
    ("(dt input depth=11)", 16, "outside"),
    ("(rf input trees=9)", 16, "outside"),
    ("(xx input depth=1)", 1, "unknown operator"),
    ("(dt input depth=1", 17, "end of input"),
    ("(dt input depth=1))", 18, "trailing"),
    ("(dt input size=1)", 10, "expected depth"),
    ("(dt input depth=01)", 16, "malformed"),
    ("(dt input  depth=1)", 10, "non-canonical"),
    ("(dt input depth=1)\n", 18, "non-canonical"),
    ("", 0, "end of input"),
    ("input", 0, "root must be a classifier"),
])
def test_parse_errors_carry_offsets(text, offset, message):
    with pytest.raises(PipelineSyntaxError) as info:
        parse_pipeline(text)
    assert info.value.offset == offset
    assert message in str(info.value)
    assert f"byte offset {offset}" in str(info.value)


def test_parse_rejects_oversized_tree():
    tree = INPUT
    for _ in range(50):
        tree = ClassifyDT(tree, 1)
    with pytest.raises(PipelineSyntaxError):
        parse_pipeline(serialize_pipeline(tree))


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_round_trip(seed, depth):
    tree = random_pipeline(seed, depth)
    text = serialize_pipeline(tree)
    back = parse_pipeline(text)
    assert back == tree
    assert serialize_pipeline(back) == text
    assert parse_pipeline(text.encode()) == tree


def test_round_trip_thousand_pipelines():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        tree = random_pipeline(rng, int(rng.integers(1, 6)))
        assert parse_pipeline(serialize_pipeline(tree)) == tree


ALPHABET = "() =abcdefghijklmnopqrstuvwxyz0123456789\n\t"


@given(st.integers(0, 2**32 - 1), st.lists(st.tuples(st.integers(0, 10**6), st.sampled_from(
    ["insert", "delete", "replace"]), st.sampled_from(ALPHABET)), min_size=1, max_size=3))
def test_parse_accepts_exactly_serializer_output(seed, edits):
    text = list(serialize_pipeline(random_pipeline(seed, 3)))
    for pos, op, ch in edits:
        i = pos % (len(text) + 1)
        if op == "insert":
            text.insert(i, ch)
        elif text and i < len(text):
            if op == "delete":
                del text[i]
            else:
                text[i] = ch
    s = "".join(text)
    try:
        tree = parse_pipeline(s)
    except PipelineSyntaxError:
        return
    assert serialize_pipeline(tree) == s


def test_random_pipeline_depth_one_is_single_classifier():
    for seed in range(50):
        tree = random_pipeline(seed, 1)
        assert isinstance(tree, pl.CLASSIFIERS) and tree.child == INPUT


def test_random_pipeline_always_valid_and_deterministic():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        tree = random_pipeline(rng, 4)
        assert pl.violations(tree) == []
    assert random_pipeline(42, 4) == random_pipeline(42, 4)
    with pytest.raises(ContractError):
        random_pipeline(0, 0)


def test_models_only_generation():
    for seed in range(200):
        tree = random_pipeline(seed, 3, models_only=True)
        assert isinstance(tree, pl.CLASSIFIERS) and tree.child == INPUT


def test_tree_helpers():
    tree = parse_pipeline(FIG2)
    assert [p for p, _ in pl.walk(tree)] == [(), (0,), (0, 0), (0, 0, 0), (0, 1), (0, 1, 0)]
    assert pl.size(tree) == 6 and pl.depth(tree) == 3
    assert pl.subtree(tree, (0, 1)) == ClassifyDT(INPUT, 3)
    swapped = pl.replace(tree, (0, 1), INPUT)
    assert serialize_pipeline(swapped) == "(rf (combine (pairs input n=2) input) trees=50)"


# -- evaluation ----------------------------------------------------------------

# a, b, c features; labels are a XOR b on Train rows; row 10 breaks the pattern
HAND_ROWS = [
    # a  b  c  y  train
    (0, 0, 0, 0, 1), (0, 1, 1, 1, 1), (1, 0, 0, 1, 1), (1, 1, 1, 0, 1),
    (0, 0, 1, 0, 1), (0, 1, 0, 1, 1), (1, 0, 1, 1, 1), (0, 0, 0, 0, 1),
    (0, 1, 0, 1, 0), (1, 1, 0, 1, 0), (0, 0, 1, 0, 0), (1, 0, 0, 1, 0),
]
HAND_PIPELINE = "(dt (combine (pairs input n=1) (dt input depth=1)) depth=2)"


def hand_dataset():
    rows = np.array(HAND_ROWS)
    return make_dataset(rows[:, :3], rows[:, 3], names=["a", "b", "c"],
                        train=rows[:, 4].astype(bool))


def test_hand_traced_pipeline():
    """Operator-by-operator trace on 12 rows.

    pairs n=1: (a, b) fits Train perfectly, so {a, b} survive.
    dt depth=1 on {a, b, c}: a and b tie on gain, a wins by index; the leaf
    majorities make SynF_1 equal to a.
    combine: (a, b) + (c, SynF_1).
    root dt depth=2: split a, then b, i.e. XOR.  Test predictions
    (1, 0, 0, 1) against labels (1, 1, 0, 1): recalls 2/3 and 1.
    """
    ds = hand_dataset()
    trace = []
    fitness = evaluate_pipeline(parse_pipeline(HAND_PIPELINE), ds, 0, trace)
    assert fitness == pytest.approx(5 / 6)
    kinds = [type(s.node).__name__ for s in trace]
    assert kinds == ["SelectPairs", "ClassifyDT", "Combine", "ClassifyDT"]
    assert trace[0].output.feature_names == ("a", "b")
    assert np.array_equal(trace[1].output.column("SynF_1"), ds.column("a"))
    assert trace[2].output.feature_names == ("a", "b", "c", "SynF_1")
    root = trace[-1]
    assert root.path == () and root.output.guess[~ds.train].tolist() == [1, 0, 0, 1]


def test_hand_trace_with_independent_oracles():
    ds = hand_dataset()
    tr = ds.train
    X, y = ds.X.tolist(), ds.y.tolist()
    Xt = [r for r, t in zip(X, tr) if t]
    yt = [v for v, t in zip(y, tr) if t]
    scores = pair_scores_ref(Xt, yt)
    top = min(scores, key=lambda p: (-scores[p], p))
    left = [[r[i] for i in top] for r in X]
    predict = grow_reference(Xt, yt, 1)
    synf = [predict(r) for r in X]
    merged = [l + [r[j] for j in range(3) if j not in top] + [s]
              for l, r, s in zip(left, X, synf)]
    root = grow_reference([m for m, t in zip(merged, tr) if t], yt, 2)
    guesses = [root(m) for m in merged]
    test = [i for i in range(12) if not tr[i]]
    expected = balanced_accuracy_ref([y[i] for i in test], [guesses[i] for i in test])
    assert evaluate_pipeline(parse_pipeline(HAND_PIPELINE), ds) == pytest.approx(float(expected))
    assert expected == Fraction(5, 6)


def test_separable_data_scores_one():
    X = np.array([[0, 1], [1, 2], [0, 0], [1, 1]] * 5)
    train = np.arange(20) < 12
    ds = make_dataset(X, X[:, 0], train=train)
    for d in (1, 4):
        assert evaluate_pipeline(ClassifyDT(INPUT, d), ds) == 1.0


def test_fig2_pipeline_runs_and_is_deterministic(sim_small):
    _, ds = sim_small
    tree = parse_pipeline(FIG2)
    before = ds.X.copy()
    a = evaluate_pipeline(tree, ds, eval_seed=4)
    b = evaluate_pipeline(tree, ds, eval_seed=4)
    assert 0.0 <= a <= 1.0 and a == b
    assert np.array_equal(ds.X, before) and ds.guess is None


def test_root_classifier_writes_the_scored_guess(sim_small):
    _, ds = sim_small
    tree = parse_pipeline(FIG2)
    trace = []
    out = run_pipeline(tree, ds, 2, trace)
    assert trace[-1].node == tree and trace[-1].path == ()
    assert np.array_equal(out.guess, trace[-1].output.column(out.feature_names[-1]))


def test_subtree_reproduces_at_its_path(sim_small):
    _, ds = sim_small
    tree = parse_pipeline("(dt (combine (rf input trees=20) (rf (pairs input n=3) trees=15)) depth=4)")
    trace = []
    run_pipeline(tree, ds, 9, trace)
    for step in trace:
        if isinstance(step.node, ClassifyRF):
            alone = run_pipeline(step.node, ds, 9, path=step.path)
            assert np.array_equal(alone.guess, step.output.guess)


def test_sibling_order_does_not_change_seeds(sim_small):
    _, ds = sim_small
    a = pl.node_seed(5, (0, 1))
    assert a == pl.node_seed(5, (0, 1)) and a != pl.node_seed(5, (1, 0))
    left = ClassifyRF(INPUT, 10)
    t1 = ClassifyDT(Combine(left, ClassifyDT(INPUT, 1)), 3)
    t2 = ClassifyDT(Combine(left, ClassifyDT(INPUT, 2)), 3)
    g1, g2 = [], []
    run_pipeline(t1, ds, 1, g1)
    run_pipeline(t2, ds, 1, g2)
    assert np.array_equal(g1[0].output.guess, g2[0].output.guess)


def test_failure_becomes_none():
    ds = make_dataset([[0], [1], [0], [1]], [0, 1, 0, 1], train=[True, True, False, False])
    assert evaluate_pipeline(parse_pipeline("(dt (pairs input n=1) depth=2)"), ds) is None


def test_unsplit_dataset_rejected():
    ds = make_dataset([[0], [1]], [0, 1])
    with pytest.raises(DataError):
        evaluate_pipeline(ClassifyDT(INPUT, 1), ds)


def test_crossval_shapes():
    ds = make_dataset([[0], [1], [0], [1]], [0, 1, 0, 1])
    scores = crossval_pipeline(ClassifyDT(INPUT, 1), ds, k=2)
    assert len(scores) == 2 and scores == [1.0, 1.0]


def test_crossval_constant_pipeline_floor():
    y = np.array([0, 1] * 20)
    ds = make_dataset(np.zeros((40, 2), int), y)
    scores = crossval_pipeline(ClassifyDT(INPUT, 3), ds, k=10, seed=3)
    assert np.mean(scores) == 0.5


def test_crossval_folds_match_stratified_folds(sim_small):
    sim, _ = sim_small
    ds = sim.dataset
    folds = stratified_folds(ds.y, 5, seed=7)
    scores = crossval_pipeline(ClassifyDT(INPUT, 2), ds, k=5, seed=7)
    for fold, score in zip(folds, scores):
        train = np.ones(ds.n_rows, bool)
        train[fold] = False
        assert evaluate_pipeline(ClassifyDT(INPUT, 2), ds.replace(train=train), 7) == score


def test_crossval_small_class():
    ds = make_dataset([[0]] * 5, [0, 0, 0, 1, 1])
    with pytest.raises(DataError):
        crossval_pipeline(ClassifyDT(INPUT, 1), ds, k=3)
