"""Experiment grid: heritability x sample size x replicate x search mode.

Every replicate dataset is shared by all modes, so mode comparisons are
paired.  All randomness derives from the grid seed through SeedSequence
spawn keys built from cell coordinates, so a row does not depend on which
other cells or modes were requested, nor on execution order.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dataset import Dataset, load_csv, stratified_split, write_csv
from .errors import ContractError, TreePipeError
from .evolve import GpConfig, run_gp, run_random_search
from .pipeline import crossval_pipeline, evaluate_pipeline, parse_pipeline, serialize_pipeline
from .simdata import DEFAULT_PREVALENCE, model_set, simulate_dataset

GRID_MODES = ("gp", "random-search", "models-only", "rf-baseline")
RF_BASELINE = "(rf input trees=100)"
RESULT_COLUMNS = ("h2", "samples", "replicate", "mode", "status", "holdout",
                  "cv_mean", "cv_median", "cv_scores", "pipeline", "evaluations")


@dataclass(frozen=True)
class ExperimentGrid:
    heritabilities: tuple[float, ...] = (0.1, 0.2, 0.4)
    sample_sizes: tuple[int, ...] = (200, 400, 800, 1600)
    replicates: int = 30
    modes: tuple[str, ...] = GRID_MODES
    population_size: int = 100
    generations: int = 100
    seed: int = 0
    n_snps: int = 100
    maf: float = 0.2
    prevalence: float = DEFAULT_PREVALENCE
    combination: str = "additive"
    train_fraction: float = 0.75
    cv_folds: int = 10

    def __post_init__(self):
        for name in ("heritabilities", "sample_sizes", "modes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ContractError(f"{name} must not be empty")
        if self.replicates < 1:
            raise ContractError("replicates must be >= 1")
        unknown = set(self.modes) - set(GRID_MODES)
        if unknown:
            raise ContractError(f"unknown modes {sorted(unknown)}; use {GRID_MODES}")
        if self.cv_folds == 1 or self.cv_folds < 0:
            raise ContractError("cv_folds must be 0 (off) or >= 2")
        # validates population/generation settings up front
        GpConfig(population_size=self.population_size, generations=self.generations)

    def cells(self):
        return [(h2, n, rep) for h2 in self.heritabilities for n in self.sample_sizes
                for rep in range(self.replicates)]


def _key(h2: float) -> int:
    return int(round(h2 * 1_000_000))


def _seed(grid_seed: int, *key) -> int:
    ss = np.random.SeedSequence(grid_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def models_seed(grid: ExperimentGrid, h2: float) -> int:
    """One model set per heritability, shared by every sample size and replicate."""
    return _seed(grid.seed, 1, _key(h2))


def dataset_seed(grid: ExperimentGrid, h2: float, n: int, rep: int) -> int:
    return _seed(grid.seed, 2, _key(h2), n, rep)


def search_seed(grid: ExperimentGrid, h2: float, n: int, rep: int) -> int:
    """Split, search and evaluation seed of a replicate, shared across modes."""
    return _seed(grid.seed, 3, _key(h2), n, rep)


@lru_cache(maxsize=16)
def _models(h2, maf, prevalence, seed):
    return model_set(h2, maf, prevalence=prevalence, seed=seed)


def replicate_dataset(grid: ExperimentGrid, h2: float, n: int, rep: int,
                      cache_dir=None) -> Dataset:
    """The simulated dataset of one replicate, read from ``cache_dir`` when present."""
    seed = dataset_seed(grid, h2, n, rep)
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / (f"h2_{_key(h2)}_n{n}_r{rep}_snps{grid.n_snps}_maf{_key(grid.maf)}"
                                  f"_k{_key(grid.prevalence)}_{grid.combination}_s{seed}.csv")
        if path.exists():
            return load_csv(path)
    models = _models(h2, grid.maf, grid.prevalence, models_seed(grid, h2))
    ds = simulate_dataset(models, n, grid.n_snps, seed=seed,
                          combination=grid.combination).dataset
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        write_csv(ds, tmp)
        tmp.replace(path)
    return ds


@dataclass(frozen=True)
class ResultRow:
    h2: float
    samples: int
    replicate: int
    mode: str
    status: str
    holdout: float = math.nan
    cv_scores: tuple[float, ...] = field(default=())
    pipeline: str = ""
    evaluations: int = 0

    @property
    def cv_mean(self) -> float:
        return float(np.nanmean(self.cv_scores)) if _any_finite(self.cv_scores) else math.nan

    @property
    def cv_median(self) -> float:
        return float(np.nanmedian(self.cv_scores)) if _any_finite(self.cv_scores) else math.nan

    def as_record(self) -> list[str]:
        return [repr(self.h2), str(self.samples), str(self.replicate), self.mode,
                self.status, _fmt(self.holdout), _fmt(self.cv_mean), _fmt(self.cv_median),
                ";".join(_fmt(s) for s in self.cv_scores), self.pipeline,
                str(self.evaluations)]


def _any_finite(values) -> bool:
    return any(math.isfinite(v) for v in values)


def _fmt(x: float) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))


def _search(mode: str, grid: ExperimentGrid, ds: Dataset, seed: int):
    if mode == "rf-baseline":
        tree = parse_pipeline(RF_BASELINE)
        return tree, evaluate_pipeline(tree, ds, seed), 1
    cfg = GpConfig(population_size=grid.population_size, generations=grid.generations,
                   seed=seed, mode="models-only" if mode == "models-only" else "gp")
    if mode == "random-search":
        # same number of fitness calls as GP: the initial population plus one per generation
        result = run_random_search(cfg, ds, grid.population_size * (grid.generations + 1))
    else:
        result = run_gp(cfg, ds)
    return result.best.genome, result.best.fitness, result.n_evaluations


def run_replicate(grid: ExperimentGrid, h2: float, n: int, rep: int,
                  cache_dir=None) -> list[ResultRow]:
    """Every requested mode on one replicate dataset; failures become status rows."""
    seed = search_seed(grid, h2, n, rep)
    try:
        full = replicate_dataset(grid, h2, n, rep, cache_dir)
        ds = stratified_split(full, grid.train_fraction, seed)
    except TreePipeError as exc:
        return [ResultRow(h2, n, rep, mode, f"error: {exc}") for mode in grid.modes]
    rows = []
    for mode in grid.modes:
        try:
            tree, fitness, evals = _search(mode, grid, ds, seed)
            cv = tuple(crossval_pipeline(tree, full, grid.cv_folds, seed)) if grid.cv_folds else ()
        except TreePipeError as exc:
            rows.append(ResultRow(h2, n, rep, mode, f"error: {exc}"))
            continue
        status = "ok" if fitness is not None else "failed"
        rows.append(ResultRow(h2, n, rep, mode, status,
                              math.nan if fitness is None else fitness, cv,
                              serialize_pipeline(tree), evals))
    return rows


def _run_cell(args):
    return run_replicate(*args)


def run_grid(grid: ExperimentGrid, jobs: int = 1, cache_dir=None) -> list[ResultRow]:
    """All rows in canonical order (h2, samples, replicate, mode as listed)."""
    tasks = [(grid, h2, n, rep, cache_dir) for h2, n, rep in grid.cells()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    order = {m: i for i, m in enumerate(grid.modes)}
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=lambda r: (r.h2, r.samples, r.replicate, order[r.mode]))


def write_results(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.as_record())


def read_results(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows, metric: str = "holdout") -> list[dict]:
    """Median and count of ``metric`` per (h2, samples, mode), over successful rows."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        value = getattr(r, metric)
        groups.setdefault((r.h2, r.samples, r.mode), [])
        if r.status == "ok" and math.isfinite(value):
            groups[(r.h2, r.samples, r.mode)].append(value)
    return [{"h2": h2, "samples": n, "mode": mode, "n": len(v),
             "median": float(np.median(v)) if v else math.nan}
            for (h2, n, mode), v in groups.items()]


def write_summary(summary, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h2", "samples", "mode", "n", "median"])
        for s in summary:
            w.writerow([repr(s["h2"]), s["samples"], s["mode"], s["n"], _fmt(s["median"])])
