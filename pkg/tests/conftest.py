import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'bin'))

from tsproto import synth  # noqa: E402
from tsproto.core import Dataset, HyperParams  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the synthetic benchmarks')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: synthetic benchmark, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny():
    """ A small labeled benchmark: 3 classes, T=30, C=2. """
    return synth.generate(k_true=3, n=24, n_test=12, length=30, channels=2, shift_range=2.0,
                          offset_range=0.1, noise_sd=0.02, seed=5)


@pytest.fixture
def tiny_hyper():
    return HyperParams(filters=(4, 4, 4), kernels=(3, 3, 3), batch_size=8, validation_interval=2,
                       patience=1, max_steps=12, learning_rate=1e-3, k=3)


def make_dataset(values, weights=None, labels=None, raw=True, **kwargs):
    values = np.asarray(values, dtype=np.float64)
    if weights is None:
        weights = np.ones(values.shape[:2])
    return Dataset.from_arrays(values, weights, labels=labels, raw=raw, **kwargs)
