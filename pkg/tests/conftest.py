"""Session-wide benchmark runs shared by the harness and acceptance tests.

Each fixture executes one full experiment; results are cached for the whole
session so the expensive runs happen once.
"""

import pytest

from resesop.experiment_cli import ExperimentConfig, run_experiment

NOISY_SEED = 7


@pytest.fixture(scope='session')
def exact_report_a():
    return run_experiment(ExperimentConfig(method='A'))


@pytest.fixture(scope='session')
def exact_report_b():
    return run_experiment(ExperimentConfig(method='B'))


@pytest.fixture(scope='session')
def noisy_report_a():
    return run_experiment(ExperimentConfig(method='A', delta=5e-4, seed=NOISY_SEED))


@pytest.fixture(scope='session')
def noisy_report_b():
    return run_experiment(ExperimentConfig(method='B', delta=5e-4, seed=NOISY_SEED))


@pytest.fixture(scope='session')
def containment_reports():
    """Exact-data runs with a cone constant large enough to be honest."""
    return tuple(run_experiment(ExperimentConfig(method=method, cone_constant=0.05))
                 for method in ('A', 'B'))
