import numpy as np
import pytest

from priorgsa.benchmarks.linear import IS_PRIOR, linear_problem
from priorgsa.importance import PosteriorSampleSet
from priorgsa.sampling import default_dram_config, dram_sample

# lines recorded by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lin():
    return linear_problem()


@pytest.fixture(scope="session")
def lin_chain(lin):
    """Linear-problem chain under the IS prior, M = 2e4."""
    cfg = default_dram_config(IS_PRIOR.var, 20_000, seed=11)
    return dram_sample(lin.log_posterior_with(IS_PRIOR), IS_PRIOR.mean, cfg)


@pytest.fixture(scope="session")
def lin_samples(lin, lin_chain):
    return PosteriorSampleSet.from_chain(lin_chain, lin.qoi, IS_PRIOR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
