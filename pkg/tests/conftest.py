from __future__ import annotations

import os

import pytest

from stresslens import aggregate, features, synth
from stresslens.forest import ForestConfig

THREADS = os.cpu_count() or 1


def pipeline_forest_config(**overrides) -> ForestConfig:
    params = {"n_threads": THREADS}
    params.update(overrides)
    return ForestConfig(**params)


@pytest.fixture(scope="session")
def small_cohort():
    """14 subjects x 40 days; fast enough for per-module tests."""
    config = synth.CohortConfig(n_subjects=14, n_days=40, seed=3)
    dataset = synth.generate(config)
    return config, dataset


@pytest.fixture(scope="session")
def small_matrix(small_cohort):
    _config, dataset = small_cohort
    daily = features.extract_daily(dataset)
    matrix, report = aggregate.assemble(daily, dataset)
    return matrix, report


@pytest.fixture(scope="session")
def full_cohort():
    """The default 111 x 180 cohort used by the acceptance gate."""
    config = synth.CohortConfig()
    dataset = synth.generate(config)
    return config, dataset


@pytest.fixture(scope="session")
def full_matrix(full_cohort):
    _config, dataset = full_cohort
    daily = features.extract_daily(dataset)
    matrix, report = aggregate.assemble(daily, dataset)
    return matrix, report
