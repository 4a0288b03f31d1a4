"""Command-line entry point: simulate, optimize, evaluate, report, grid."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .dataset import load_csv, stratified_split
from .errors import TreePipeError
from .evolve import GpConfig, run
from .pipeline import crossval_pipeline, evaluate_pipeline, parse_pipeline, serialize_pipeline
from .report import replay, write_report
from .simdata import (COMBINATIONS, DEFAULT_PREVALENCE, model_set, simulate_dataset,
                      write_simulation)

MODE_ALIASES = {"gp": "gp", "random": "random-search", "random-search": "random-search",
                "models-only": "models-only"}
LOG_COLUMNS = ("generation", "best_fitness", "mean_fitness", "mean_complexity",
               "best_pipeline", "n_elite", "n_crossover", "n_mutation")


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def read_pipeline(path):
    """Parse a pipeline file; one trailing newline is allowed."""
    data = Path(path).read_bytes()
    if data.endswith(b"\n"):
        data = data[:-1]
    return parse_pipeline(data)


def write_pipeline(tree, path) -> None:
    Path(path).write_text(serialize_pipeline(tree) + "\n")


def _split(args):
    return stratified_split(load_csv(args.input), args.train_fraction, args.seed)


def cmd_simulate(args) -> None:
    models = model_set(args.h2, args.maf, args.models, args.prevalence, seed=args.seed)
    sim = simulate_dataset(models, args.samples, args.snps, seed=args.seed,
                           combination=args.combination)
    manifest = write_simulation(sim, args.out, args.manifest)
    logging.info("wrote %s and %s", args.out, manifest)


def cmd_optimize(args) -> None:
    cfg = GpConfig(population_size=args.pop, generations=args.gens, seed=args.seed,
                   mode=MODE_ALIASES[args.mode])
    result = run(cfg, _split(args))
    write_pipeline(result.best.genome, args.out)
    if args.log:
        with Path(args.log).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for s in result.log:
                w.writerow([s.generation, _num(s.best_fitness), _num(s.mean_fitness),
                            _num(s.mean_complexity), s.best_pipeline,
                            s.n_elite, s.n_crossover, s.n_mutation])
    logging.info("best fitness %s: %s", _num(result.best.fitness), result.best.text)


def cmd_evaluate(args) -> None:
    tree = read_pipeline(args.pipeline)
    if args.holdout:
        rows = [("holdout", evaluate_pipeline(tree, _split(args), args.seed))]
    else:
        scores = crossval_pipeline(tree, load_csv(args.input), args.cv, args.seed)
        rows = [(i, s) for i, s in enumerate(scores)]
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "balanced_accuracy"])
        for fold, score in rows:
            w.writerow([fold, "" if score is None or score != score else repr(score)])


def cmd_report(args) -> None:
    tree = read_pipeline(args.pipeline)
    steps = replay(tree, _split(args), args.seed, args.top)
    out = Path(args.out)
    importances = args.importances or out.with_name(out.stem + "_importances.csv")
    write_report(steps, out, importances)


def cmd_grid(args) -> None:
    grid = ex.ExperimentGrid(
        heritabilities=args.h2, sample_sizes=args.samples, replicates=args.replicates,
        modes=args.modes, population_size=args.pop, generations=args.gens, seed=args.seed,
        n_snps=args.snps, maf=args.maf, prevalence=args.prevalence,
        combination=args.combination, train_fraction=args.train_fraction, cv_folds=args.cv)
    rows = ex.run_grid(grid, args.jobs, args.cache_dir)
    ex.write_results(rows, args.out)
    if args.summary:
        ex.write_summary(ex.summarize(rows, args.metric), args.summary)


def _positive(kind):
    def parse(text):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def _fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treepipe", allow_abbrev=False,
                                description="Evolve tree-shaped classifier pipelines.")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, allow_abbrev=False)
        sp.set_defaults(func=func)
        return sp

    def sim_flags(sp, required_h2):
        sp.add_argument("--maf", type=_fraction, default=0.2)
        sp.add_argument("--prevalence", type=_fraction, default=DEFAULT_PREVALENCE)
        sp.add_argument("--snps", type=_positive(int), default=100)
        sp.add_argument("--combination", choices=COMBINATIONS, default="additive")
        sp.add_argument("--seed", type=int, default=0)
        if required_h2:
            sp.add_argument("--h2", type=_fraction, required=True)
            sp.add_argument("--samples", type=_positive(int), default=800)

    sp = command("simulate", cmd_simulate, "write a simulated case/control dataset")
    sim_flags(sp, True)
    sp.add_argument("--models", type=_positive(int), default=4)
    sp.add_argument("--out", required=True)
    sp.add_argument("--manifest", help="manifest path (default: <out>.manifest)")

    sp = command("optimize", cmd_optimize, "search for the best pipeline on a dataset")
    sp.add_argument("--input", required=True)
    sp.add_argument("--mode", choices=sorted(MODE_ALIASES), default="gp")
    sp.add_argument("--pop", type=_positive(int), default=100)
    sp.add_argument("--gens", type=_positive(int), default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--train-fraction", type=_fraction, default=0.75)
    sp.add_argument("--out", required=True)
    sp.add_argument("--log")

    for name, func, text in (("evaluate", cmd_evaluate, "score a pipeline file"),
                             ("report", cmd_report, "per-classifier accuracy and importances")):
        sp = command(name, func, text)
        sp.add_argument("--pipeline", required=True)
        sp.add_argument("--input", required=True)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--train-fraction", type=_fraction, default=0.75)
        sp.add_argument("--out", required=True)
        if name == "evaluate":
            how = sp.add_mutually_exclusive_group(required=True)
            how.add_argument("--cv", type=int, metavar="K")
            how.add_argument("--holdout", action="store_true")
        else:
            sp.add_argument("--importances", help="default: <out stem>_importances.csv")
            sp.add_argument("--top", type=_positive(int), default=10)

    sp = command("grid", cmd_grid, "run the heritability x sample-size experiment grid")
    sim_flags(sp, False)
    sp.add_argument("--h2", type=_fraction, nargs="+", default=[0.1, 0.2, 0.4])
    sp.add_argument("--samples", type=_positive(int), nargs="+", default=[200, 400, 800, 1600])
    sp.add_argument("--replicates", type=_positive(int), default=30)
    sp.add_argument("--modes", nargs="+", choices=ex.GRID_MODES, default=list(ex.GRID_MODES))
    sp.add_argument("--pop", type=_positive(int), default=100)
    sp.add_argument("--gens", type=_positive(int), default=100)
    sp.add_argument("--train-fraction", type=_fraction, default=0.75)
    sp.add_argument("--cv", type=int, default=10, metavar="K", help="0 disables CV")
    sp.add_argument("--jobs", type=_positive(int), default=1)
    sp.add_argument("--cache-dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--summary")
    sp.add_argument("--metric", choices=("holdout", "cv_mean", "cv_median"), default="holdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (TreePipeError, OSError) as exc:
        print(f"treepipe {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
