"""Pure two-locus epistatic models and balanced case/control SNP simulation.

Genotypes are minor-allele counts {0, 1, 2} under Hardy-Weinberg
equilibrium.  A model is *pure* when every single-locus marginal penetrance
equals the prevalence K, so neither locus has a main effect.  Heritability
is the genotype-weighted penetrance variance over K(1 - K).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, write_csv
from .errors import ContractError, GenerationError, SimulationError

# h2 = 0.4 at maf 0.2 is unreachable for a pure model at K = 0.5 (max ~0.31);
# K = 0.35 sits near the feasibility peak (~0.50).
DEFAULT_PREVALENCE = 0.35
PURITY_TOL = 1e-6
H2_RTOL = 0.05
COMBINATIONS = ("additive", "mean")


def hwe_frequencies(maf: float) -> np.ndarray:
    q = maf
    return np.array([(1 - q) ** 2, 2 * q * (1 - q), q * q])


def heritability(penetrance, maf: float, prevalence: float) -> float:
    f = hwe_frequencies(maf)
    d = np.asarray(penetrance, dtype=float) - prevalence
    return float(f @ (d * d) @ f / (prevalence * (1 - prevalence)))


@dataclass(frozen=True, eq=False)
class EpistaticModel:
    penetrance: np.ndarray
    maf: float
    prevalence: float
    target_h2: float = field(default=float("nan"))

    def __post_init__(self):
        p = np.array(self.penetrance, dtype=float)
        if p.shape != (3, 3):
            raise ContractError("penetrance table must be 3x3")
        if not 0 < self.maf <= 0.5:
            raise ContractError("maf must lie in (0, 0.5]")
        if not 0 < self.prevalence < 1:
            raise ContractError("prevalence must lie in (0, 1)")
        p.setflags(write=False)
        object.__setattr__(self, "penetrance", p)

    @property
    def genotype_frequencies(self) -> np.ndarray:
        return hwe_frequencies(self.maf)

    @property
    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-genotype marginal penetrance at locus 1 and at locus 2."""
        f = self.genotype_frequencies
        return self.penetrance @ f, f @ self.penetrance

    @property
    def purity_error(self) -> float:
        rows, cols = self.marginals
        return float(np.abs(np.concatenate([rows, cols]) - self.prevalence).max())

    @property
    def heritability(self) -> float:
        return heritability(self.penetrance, self.maf, self.prevalence)

    def is_pure(self, tol: float = PURITY_TOL) -> bool:
        return self.purity_error <= tol

    def penetrance_of(self, g1, g2) -> np.ndarray:
        return self.penetrance[g1, g2]


def _purity_projector(maf):
    # C @ v removes the f-weighted mean; f @ C == 0
    f = hwe_frequencies(maf)
    return np.eye(3) - np.outer(np.ones(3), f)


def generate_epistatic_model(h2: float, maf: float,
                             prevalence: float = DEFAULT_PREVALENCE,
                             seed=0, max_attempts: int = 100_000,
                             inner_iterations: int = 50) -> EpistaticModel:
    """Random pure 2-locus penetrance table hitting ``h2`` at ``maf`` and ``prevalence``.

    Each attempt draws a random deviation table and alternates between
    projecting onto the zero-marginal subspace, rescaling to the target
    heritability, and clamping into [0, 1].  The first table satisfying all
    constraints is returned.
    """
    if not 0 < h2 < 1:
        raise ContractError("h2 must lie in (0, 1)")
    if not 0 < maf <= 0.5:
        raise ContractError("maf must lie in (0, 0.5]")
    if not 0 < prevalence < 1:
        raise ContractError("prevalence must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    C = _purity_projector(maf)
    f = hwe_frequencies(maf)
    K = prevalence
    var_target = h2 * K * (1 - K)
    lo, hi = -K, 1 - K
    for _ in range(max_attempts):
        d = rng.uniform(lo, hi, size=(3, 3))
        for _ in range(inner_iterations):
            d = C @ d @ C.T
            var = f @ (d * d) @ f
            if var <= 1e-300:
                break
            d = d * np.sqrt(var_target / var)
            if d.min() >= lo and d.max() <= hi:
                model = EpistaticModel(np.clip(K + d, 0.0, 1.0), maf, K, h2)
                if (model.is_pure()
                        and abs(model.heritability - h2) <= H2_RTOL * h2):
                    return model
                break
            d = np.clip(d, lo, hi)
    raise GenerationError(
        f"no pure model with h2={h2}, maf={maf}, prevalence={prevalence} "
        f"after {max_attempts} attempts")



def combined_penetrance(models, genotypes, combination: str = "additive") -> np.ndarray:
    """Disease probability per row from each model's locus pair.

    ``genotypes`` has two columns per model.  ``additive`` sums each model's
    deviation from its prevalence onto the mean prevalence and clips to
    [0, 1]; ``mean`` averages the penetrances.
    """
    genotypes = np.asarray(genotypes)
    pens = np.stack([m.penetrance[genotypes[:, 2 * i], genotypes[:, 2 * i + 1]]
                     for i, m in enumerate(models)])
    if combination == "mean":
        return pens.mean(axis=0)
    if combination == "additive":
        ks = np.array([m.prevalence for m in models])[:, None]
        return np.clip(ks.mean() + (pens - ks).sum(axis=0), 0.0, 1.0)
    raise ContractError(f"unknown combination {combination!r}; use one of {COMBINATIONS}")


@dataclass(frozen=True, eq=False)
class Simulation:
    """A simulated dataset plus the ground truth needed to audit it."""

    dataset: Dataset
    models: tuple[EpistaticModel, ...]
    predictive_columns: tuple[int, ...]
    snp_mafs: np.ndarray
    combination: str
    seed: int

    def manifest(self) -> dict[str, str]:
        out = {
            "seed": str(self.seed),
            "n_samples": str(self.dataset.n_rows),
            "n_snps": str(self.dataset.n_features),
            "combination": self.combination,
            "n_models": str(len(self.models)),
            "predictive_columns": ",".join(map(str, self.predictive_columns)),
            "predictive_names": ",".join(self.dataset.feature_names[c]
                                         for c in self.predictive_columns),
            "snp_mafs": ",".join(repr(float(q)) for q in self.snp_mafs),
        }
        for i, m in enumerate(self.models):
            out[f"model{i}_h2_target"] = repr(float(m.target_h2))
            out[f"model{i}_h2"] = repr(m.heritability)
            out[f"model{i}_maf"] = repr(float(m.maf))
            out[f"model{i}_prevalence"] = repr(float(m.prevalence))
            out[f"model{i}_penetrance"] = ",".join(repr(float(v)) for v in m.penetrance.ravel())
            out[f"model{i}_columns"] = ",".join(map(str, self.predictive_columns[2 * i:2 * i + 2]))
        return out


def simulate_dataset(models, n_samples: int, n_snps: int = 100,
                     maf_range=(0.05, 0.5), seed: int = 0,
                     combination: str = "additive", shuffle: bool = True,
                     max_draws: int | None = None) -> Simulation:
    """Balanced case/control sample with two predictive SNPs per model.

    Candidate individuals are drawn and labelled by a Bernoulli draw on the
    combined penetrance; cases and controls are kept until each quota of
    ``n_samples / 2`` is full.  Noise SNPs are independent of the label, so
    they are drawn only for kept rows, each SNP with its own MAF uniform in
    ``maf_range``.
    """
    models = tuple(models)
    if n_samples <= 0 or n_samples % 2:
        raise ContractError("n_samples must be a positive even number")
    if 2 * len(models) > n_snps:
        raise ContractError("more predictive SNPs than SNP columns")
    if combination not in COMBINATIONS:
        raise ContractError(f"unknown combination {combination!r}")
    lo, hi = maf_range
    if not 0 < lo <= hi <= 0.5:
        raise ContractError("maf_range must satisfy 0 < lo <= hi <= 0.5")
    rng = np.random.default_rng(seed)
    half = n_samples // 2
    max_draws = max_draws if max_draws is not None else 1000 * n_samples
    n_pred = 2 * len(models)
    mafs = np.repeat([m.maf for m in models], 2)

    kept = {0: [], 1: []}
    have = {0: 0, 1: 0}
    drawn = 0
    batch = max(2 * n_samples, 64)
    while min(have.values()) < half:
        if drawn >= max_draws:
            raise SimulationError(
                f"quota not filled after {drawn} draws (cases={have[1]}, controls={have[0]})")
        size = min(batch, max_draws - drawn)
        g = rng.binomial(2, mafs, size=(size, n_pred)).astype(np.int64)
        prob = combined_penetrance(models, g, combination)
        labels = (rng.random(size) < prob).astype(np.int8)
        drawn += size
        for c in (0, 1):
            take = g[labels == c][: half - have[c]]
            kept[c].append(take)
            have[c] += len(take)

    pred = np.concatenate([np.concatenate(kept[0]), np.concatenate(kept[1])])
    y = np.repeat(np.array([0, 1], dtype=np.int8), half)
    order = rng.permutation(n_samples)
    pred, y = pred[order], y[order]

    noise_mafs = rng.uniform(lo, hi, size=n_snps - n_pred)
    noise = rng.binomial(2, noise_mafs, size=(n_samples, n_snps - n_pred)).astype(np.int64)
    columns = rng.permutation(n_snps) if shuffle else np.arange(n_snps)
    X = np.empty((n_samples, n_snps), dtype=np.int64)
    X[:, columns[:n_pred]] = pred
    X[:, columns[n_pred:]] = noise
    snp_mafs = np.empty(n_snps)
    snp_mafs[columns[:n_pred]] = mafs
    snp_mafs[columns[n_pred:]] = noise_mafs
    names = [f"snp{i}" for i in range(n_snps)]
    return Simulation(Dataset(names, X, y), models,
                      tuple(int(c) for c in columns[:n_pred]),
                      snp_mafs, combination, int(seed))


def write_manifest(sim: Simulation, path) -> None:
    lines = [f"{k}={v}" for k, v in sim.manifest().items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_simulation(sim: Simulation, csv_path, manifest_path=None) -> Path:
    """Write the dataset CSV and its manifest (default: ``<csv>.manifest``)."""
    csv_path = Path(csv_path)
    manifest_path = Path(manifest_path) if manifest_path else csv_path.with_suffix(
        csv_path.suffix + ".manifest")
    write_csv(sim.dataset, csv_path)
    write_manifest(sim, manifest_path)
    return manifest_path


def model_set(h2: float, maf: float = 0.2, n_models: int = 4,
              prevalence: float = DEFAULT_PREVALENCE, seed: int = 0):
    """``n_models`` independent models at one heritability setting."""
    children = np.random.SeedSequence(seed).spawn(n_models)
    return tuple(generate_epistatic_model(h2, maf, prevalence, np.random.default_rng(c))
                 for c in children)
