import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from treepipe.dataset import Dataset, stratified_split
from treepipe.simdata import model_set, simulate_dataset

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(X, y, names=None, train=None):
    X = np.asarray(X)
    names = names or [f"f{i}" for i in range(X.shape[1])]
    return Dataset(names, X, y, train)


@pytest.fixture(scope="session")
def sim_small():
    """A 200-row, 20-SNP simulated dataset with a 75/25 split."""
    sim = simulate_dataset(model_set(0.4, seed=3), 200, n_snps=20, seed=5)
    return sim, stratified_split(sim.dataset, 0.75, seed=1)


@pytest.fixture
def xor_data():
    """Planted XOR between f3 and f7 among 10 random genotype columns."""
    rng = np.random.default_rng(0)
    X = rng.integers(0, 3, size=(240, 10))
    y = ((X[:, 3] > 0) ^ (X[:, 7] > 0)).astype(int)
    return make_dataset(X, y)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
