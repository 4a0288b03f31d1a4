"""
Simulating case/control data with purely epistatic signal
=========================================================

Each model is a 3x3 penetrance table over the genotypes of two SNPs.  It is
*pure*: averaged over either SNP alone, the disease risk is flat, so only
the pair carries information.
"""

import numpy as np

from treepipe.simdata import generate_epistatic_model, model_set, simulate_dataset

model = generate_epistatic_model(h2=0.4, maf=0.2, seed=1)
np.set_printoptions(precision=3, suppress=True)
print("penetrance table:\n", model.penetrance)
print("heritability:", round(model.heritability, 4))

# the marginals: every entry equals the prevalence
rows, cols = model.marginals
print("marginals per genotype:", rows, cols, "prevalence", model.prevalence)

# four such models, 800 individuals, 100 SNPs of which 8 are predictive
sim = simulate_dataset(model_set(0.4, seed=1), n_samples=800, n_snps=100, seed=7)
ds = sim.dataset
print(ds.n_rows, "rows,", ds.n_features, "SNPs, cases:", int(ds.y.sum()))
print("predictive columns:", [ds.feature_names[c] for c in sim.predictive_columns])

# no single predictive SNP shifts the case rate much on its own
for c in sim.predictive_columns[:2]:
    rates = [ds.y[ds.X[:, c] == g].mean() for g in range(3)]
    print(ds.feature_names[c], "case rate by genotype:", np.round(rates, 3))
