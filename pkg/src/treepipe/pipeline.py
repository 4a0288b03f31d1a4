"""Typed pipeline trees: construction, validation, evaluation and text form.

A pipeline is an immutable tree of dataset-valued nodes.  Integer
hyperparameters are stored on their operator node.  Positions inside a
tree are addressed by paths, i.e. tuples of child indices from the root.

Text form::

    (dt <child> depth=<int>)   (rf <child> trees=<int>)
    (pairs <child> n=<int>)    (combine <child> <child>)    input
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .dataset import Dataset, balanced_accuracy, stratified_folds
from .errors import ContractError, DataError, PipelineEvaluationError, PipelineSyntaxError
from .operators import SyntheticFeatureCounter, classify_dt, classify_rf, op_combine, op_select_pairs

MAX_TREE_SIZE = 50


@dataclass(frozen=True)
class InputLeaf:
    children = ()


@dataclass(frozen=True)
class ClassifyDT:
    child: "Node"
    max_depth: int

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class ClassifyRF:
    child: "Node"
    n_trees: int

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class SelectPairs:
    child: "Node"
    n_pairs: int

    @property
    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Combine:
    left: "Node"
    right: "Node"

    @property
    def children(self):
        return (self.left, self.right)


Node = Union[InputLeaf, ClassifyDT, ClassifyRF, SelectPairs, Combine]

CLASSIFIERS = (ClassifyDT, ClassifyRF)

# operator -> (text name, hyperparameter attribute, text key, lo, hi)
HYPERPARAMETERS = {
    ClassifyDT: ("dt", "max_depth", "depth", 1, 10),
    ClassifyRF: ("rf", "n_trees", "trees", 10, 500),
    SelectPairs: ("pairs", "n_pairs", "n", 1, 50),
}
_BY_NAME = {spec[0]: kind for kind, spec in HYPERPARAMETERS.items()}

INPUT = InputLeaf()


def hyperparameter(node) -> int | None:
    spec = HYPERPARAMETERS.get(type(node))
    return None if spec is None else getattr(node, spec[1])


def with_children(node, children) -> Node:
    if isinstance(node, InputLeaf):
        return node
    if isinstance(node, Combine):
        return Combine(*children)
    return type(node)(children[0], hyperparameter(node))


def with_hyperparameter(node, value: int) -> Node:
    return type(node)(node.child, value)


# -- structure ---------------------------------------------------------------

def walk(tree: Node, path=()) -> Iterator[tuple[tuple[int, ...], Node]]:
    """Pre-order (path, node) pairs."""
    yield path, tree
    for i, child in enumerate(tree.children):
        yield from walk(child, path + (i,))


def size(tree: Node) -> int:
    """Number of dataset nodes, InputLeaf included."""
    return 1 + sum(size(c) for c in tree.children)


def depth(tree: Node) -> int:
    """Operator levels on the longest root-to-leaf path."""
    if isinstance(tree, InputLeaf):
        return 0
    return 1 + max(depth(c) for c in tree.children)


def complexity(tree: Node) -> int:
    """Operator count: classifiers, selectors and combines."""
    own = 0 if isinstance(tree, InputLeaf) else 1
    return own + sum(complexity(c) for c in tree.children)


def subtree(tree: Node, path) -> Node:
    for i in path:
        tree = tree.children[i]
    return tree


def replace(tree: Node, path, new: Node) -> Node:
    if not path:
        return new
    kids = list(tree.children)
    kids[path[0]] = replace(kids[path[0]], path[1:], new)
    return with_children(tree, kids)


def kinds(tree: Node) -> list[str]:
    return [type(n).__name__ for _, n in walk(tree)]


def violations(tree: Node, max_size: int = MAX_TREE_SIZE) -> list[str]:
    problems = []
    if not isinstance(tree, CLASSIFIERS):
        problems.append("root must be a classifier")
    for _, node in walk(tree):
        spec = HYPERPARAMETERS.get(type(node))
        if spec is not None:
            value = getattr(node, spec[1])
            if not (isinstance(value, (int, np.integer)) and spec[3] <= value <= spec[4]):
                problems.append(f"{spec[0]} {spec[2]}={value} outside [{spec[3]}, {spec[4]}]")
    if size(tree) > max_size:
        problems.append(f"tree has {size(tree)} nodes, limit is {max_size}")
    return problems


def is_valid(tree: Node, max_size: int = MAX_TREE_SIZE) -> bool:
    return not violations(tree, max_size)


# -- random generation -------------------------------------------------------

_KINDS = (InputLeaf, ClassifyDT, ClassifyRF, SelectPairs, Combine)


def random_hyperparameter(kind, rng) -> int:
    lo, hi = HYPERPARAMETERS[kind][3:]
    return int(rng.integers(lo, hi + 1))


def _grow(rng, level: int, max_depth: int, choices) -> Node:
    kind = choices[rng.integers(len(choices))] if level < max_depth else InputLeaf
    return _build(kind, rng, level, max_depth, choices)


def _build(kind, rng, level, max_depth, choices) -> Node:
    if kind is InputLeaf:
        return INPUT
    if kind is Combine:
        return Combine(_grow(rng, level + 1, max_depth, choices),
                       _grow(rng, level + 1, max_depth, choices))
    child = _grow(rng, level + 1, max_depth, choices)
    return kind(child, random_hyperparameter(kind, rng))


def grow_subtree(rng, max_depth: int, models_only: bool = False,
                 root_kinds=None) -> Node:
    """Grow-method subtree of at most ``max_depth`` operator levels."""
    if models_only:
        choices = (InputLeaf, ClassifyDT, ClassifyRF)
        max_depth = 1
    else:
        choices = _KINDS
    roots = root_kinds if root_kinds is not None else choices
    kind = roots[rng.integers(len(roots))] if max_depth >= 1 else InputLeaf
    return _build(kind, rng, 1, max_depth, choices)


def random_pipeline(seed, max_depth: int = 3, models_only: bool = False,
                    max_size: int = MAX_TREE_SIZE) -> Node:
    """Random valid pipeline with a classifier at the root.

    ``seed`` may be an int or a ``numpy.random.Generator``.  In models-only
    mode the result is a single classifier over the input.
    """
    if max_depth < 1:
        raise ContractError("max_depth must be >= 1")
    rng = np.random.default_rng(seed)
    while True:
        tree = grow_subtree(rng, max_depth, models_only, root_kinds=CLASSIFIERS)
        if is_valid(tree, max_size):
            return tree


# -- text form ---------------------------------------------------------------

def serialize_pipeline(tree: Node) -> str:
    if isinstance(tree, InputLeaf):
        return "input"
    if isinstance(tree, Combine):
        return f"(combine {serialize_pipeline(tree.left)} {serialize_pipeline(tree.right)})"
    name, attr, key, _, _ = HYPERPARAMETERS[type(tree)]
    return f"({name} {serialize_pipeline(tree.child)} {key}={getattr(tree, attr)})"


_TOKEN = re.compile(rb"\s*(?:(\()|(\))|([^\s()]+))")
_INT = re.compile(rb"0|[1-9][0-9]*")


def _tokenize(data: bytes):
    pos = 0
    tokens = []
    while pos < len(data):
        m = _TOKEN.match(data, pos)
        if m is None:
            break
        tokens.append((m.start(m.lastindex), m.group(m.lastindex)))
        pos = m.end()
    return tokens, len(data)


def parse_pipeline(text: str | bytes, max_size: int = MAX_TREE_SIZE) -> Node:
    """Parse pipeline text; raises PipelineSyntaxError with a byte offset.

    Only the canonical form is accepted: tokens separated by exactly one
    space, no space inside parentheses, no leading or trailing whitespace.
    """
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    tokens, end = _tokenize(data)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (end, None)

    def take():
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    def expect_close():
        off, tok = take()
        if tok != b")":
            raise PipelineSyntaxError(
                "expected ')'" if tok is not None else "unexpected end of input", off)

    def expr():
        off, tok = take()
        if tok is None:
            raise PipelineSyntaxError("unexpected end of input", off)
        if tok == b"input":
            return INPUT
        if tok != b"(":
            raise PipelineSyntaxError(f"unexpected token {tok.decode(errors='replace')!r}", off)
        name_off, name = take()
        if name is None:
            raise PipelineSyntaxError("unexpected end of input", name_off)
        if name == b"combine":
            left = expr()
            right = expr()
            expect_close()
            return Combine(left, right)
        kind = _BY_NAME.get(name.decode(errors="replace"))
        if kind is None:
            raise PipelineSyntaxError(
                f"unknown operator {name.decode(errors='replace')!r}", name_off)
        child = expr()
        _, attr, key, lo, hi = HYPERPARAMETERS[kind]
        arg_off, arg = take()
        prefix = key.encode() + b"="
        if arg is None or not arg.startswith(prefix):
            raise PipelineSyntaxError(f"expected {key}=<int>", arg_off)
        digits = arg[len(prefix):]
        if not _INT.fullmatch(digits):
            raise PipelineSyntaxError(f"malformed integer for {key}", arg_off + len(prefix))
        value = int(digits)
        if not lo <= value <= hi:
            raise PipelineSyntaxError(
                f"{key}={value} outside [{lo}, {hi}]", arg_off + len(prefix))
        expect_close()
        return kind(child, value)

    tree = expr()
    if pos < len(tokens):
        raise PipelineSyntaxError("trailing input after expression", tokens[pos][0])
    if not isinstance(tree, CLASSIFIERS):
        raise PipelineSyntaxError("root must be a classifier", tokens[0][0] if tokens else 0)
    if size(tree) > max_size:
        raise PipelineSyntaxError(f"tree exceeds {max_size} nodes", 0)
    canonical = serialize_pipeline(tree).encode()
    if data != canonical:
        off = next((i for i, (a, b) in enumerate(zip(data, canonical)) if a != b),
                   min(len(data), len(canonical)))
        raise PipelineSyntaxError("non-canonical spacing", off)
    return tree


# -- evaluation --------------------------------------------------------------

def node_seed(eval_seed: int, path) -> int:
    """Seed for the node at ``path``; independent of sibling evaluation order."""
    ss = np.random.SeedSequence(eval_seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Step:
    """One executed operator, recorded when tracing an evaluation."""

    path: tuple[int, ...]
    node: Node
    output: Dataset
    model: object = None


def run_pipeline(tree: Node, ds: Dataset, eval_seed: int = 0,
                 trace: list | None = None, path=()) -> Dataset:
    """Execute ``tree`` bottom-up and return the root's output dataset.

    ``path`` is the position of ``tree`` inside a larger pipeline; node seeds
    derive from full paths, so a subtree evaluated at its original position
    reproduces its operators exactly.  Operator failures propagate as
    PipelineEvaluationError.
    """
    counter = SyntheticFeatureCounter()

    def run(node, path):
        if isinstance(node, InputLeaf):
            return ds
        inputs = [run(c, path + (i,)) for i, c in enumerate(node.children)]
        model = None
        if isinstance(node, ClassifyDT):
            out, model = classify_dt(inputs[0], node.max_depth, counter)
        elif isinstance(node, ClassifyRF):
            out, model = classify_rf(inputs[0], node.n_trees, counter,
                                     seed=node_seed(eval_seed, path))
        elif isinstance(node, SelectPairs):
            out = op_select_pairs(inputs[0], node.n_pairs)
        else:
            out = op_combine(*inputs)
        if trace is not None:
            trace.append(Step(path, node, out, model))
        return out

    return run(tree, tuple(path))


def _check_split(ds: Dataset):
    for mask, label in ((ds.train, "Train"), (ds.test, "Test")):
        if len(np.unique(ds.y[mask])) < 2:
            raise DataError(f"{label} rows must contain both classes")


def evaluate_pipeline(tree: Node, ds: Dataset, eval_seed: int = 0,
                      trace: list | None = None, path=()) -> float | None:
    """Balanced accuracy of the root guess on Test rows; None if the pipeline fails."""
    _check_split(ds)
    try:
        out = run_pipeline(tree, ds, eval_seed, trace, path)
    except PipelineEvaluationError:
        return None
    if out.guess is None:
        return None
    test = ds.test
    return balanced_accuracy(ds.y[test], out.guess[test])


def crossval_pipeline(tree: Node, ds: Dataset, k: int = 10,
                      seed: int = 0) -> list[float]:
    """Stratified k-fold scores; each fold is Test once, with a fresh evaluation.

    A fold whose evaluation fails scores NaN.
    """
    scores = []
    for fold in stratified_folds(ds.y, k, seed):
        train = np.ones(ds.n_rows, dtype=bool)
        train[fold] = False
        score = evaluate_pipeline(tree, ds.replace(train=train, guess=None), seed)
        scores.append(float("nan") if score is None else score)
    return scores
