import os
from dataclasses import replace

import pytest

from pongsnn.config import ExperimentConfig
from pongsnn.experiment import run_sweep

SEEDS = list(range(10))


def _workers():
    return max(1, min(len(SEEDS), os.cpu_count() or 1))


@pytest.fixture(scope="session")
def default_sweep():
    """Ten full-length runs at the default configuration."""
    return run_sweep(ExperimentConfig(), SEEDS, workers=_workers())


@pytest.fixture(scope="session")
def mismatch_sweep():
    """Ten full-length runs with 10 % fixed-pattern noise."""
    cfg = ExperimentConfig()
    cfg = replace(cfg, noise=replace(cfg.noise, fixed_pattern_sigma=0.1))
    return run_sweep(cfg, SEEDS, workers=_workers())


@pytest.fixture
def small_cfg():
    return replace(ExperimentConfig(), n_iterations=60, eval_every=20, eval_repeats=2)
