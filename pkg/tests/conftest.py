"""Shared fixtures: small random competing-risks datasets and simulated ones."""

import numpy as np
import pytest

from mpple import Dataset, fit
from mpple.simulation import ScenarioConfig, generate_dataset


def random_dataset(n=40, p=2, k=2, missing=0.3, seed=0, ties=False, q=0):
    """Censored competing-risks data with a random share of missing causes."""
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, p))
    A = rng.normal(size=(n, q))
    time = rng.exponential(size=n)
    if ties:
        time = np.ceil(time * 4) / 4
    event = (rng.uniform(size=n) < 0.75).astype(int)
    cause = np.where(event == 1, rng.integers(1, k + 1, size=n), 0)
    for j in range(1, k + 1):  # every cause observed at least twice
        idx = np.flatnonzero(event == 1)[2 * (j - 1):2 * j]
        cause[idx] = j
    observed = np.ones(n, dtype=int)
    miss = (event == 1) & (rng.uniform(size=n) < missing)
    miss[np.flatnonzero(event == 1)[:2 * k]] = False
    observed[miss] = 0
    cause[miss] = 0
    return Dataset(time, event, observed, cause, Z, A, k=k)


@pytest.fixture
def small_ds():
    return random_dataset()


@pytest.fixture(scope="session")
def sim_ds():
    """Scenario 1 (about 25% missing causes), n = 400."""
    return generate_dataset(ScenarioConfig(scenario=1, n=400, seed=2024), 0)


@pytest.fixture(scope="session")
def sim_model(sim_ds):
    return fit(sim_ds, ["1", "t", "z1", "z2"])


@pytest.fixture(scope="session")
def sim_ds_complete(sim_ds):
    """The same subjects with every cause observed."""
    ds, true_cause, _ = generate_dataset(ScenarioConfig(scenario=1, n=400, seed=2024), 0,
                                         return_truth=True)
    cause = np.where(ds.event == 1, true_cause, 0)
    return Dataset(ds.time, ds.event, np.ones(ds.n, dtype=int), cause, ds.covariates,
                   k=2, covariate_names=ds.covariate_names, tau=ds.tau)


# PASS/FAIL lines of the acceptance suite, repeated after the test report
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
