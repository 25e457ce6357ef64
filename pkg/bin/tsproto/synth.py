""" Synthetic labeled datasets with known intra-class variability.

Every class gets a smooth template (a sum of at most three sinusoids per channel). A sample is its
class template, time-warped by a random smooth shift within ``+-shift_range`` days, shifted per
channel by a random offset within ``+-offset_range``, with Gaussian noise added; stamps are dropped
independently with probability ``missing_rate``.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from tsproto.core import Dataset
from tsproto.exceptions import ConfigError
from tsproto.transform import WarpConfig, sample

logger = logging.getLogger(__name__)

MAX_SINUSOIDS = 3


@dataclass(frozen=True)
class SynthConfig:
    k_true: int = 4
    n: int = 4000
    n_test: int = 0
    length: int = 180
    channels: int = 4
    shift_range: float = 7.0
    offset_range: float = 0.3
    noise_sd: float = 0.05
    missing_rate: float = 0.0
    test_shift_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k_true < 2:
            raise ConfigError('k_true', self.k_true, 'need at least two classes')
        if self.n < self.k_true:
            raise ConfigError('n', self.n, 'need one series per class at least')
        if self.length < 2 or self.channels < 1:
            raise ConfigError('length', (self.length, self.channels), 'need T >= 2 and C >= 1')
        for name in ('shift_range', 'offset_range', 'noise_sd'):
            if getattr(self, name) < 0:
                raise ConfigError(name, getattr(self, name), 'must be >= 0')
        if not 0 <= self.missing_rate < 1:
            raise ConfigError('missing_rate', self.missing_rate,
                              'must be in [0, 1); every series needs an observation')

    @property
    def test_size(self):
        return self.n_test or max(self.k_true, self.n // 4)


class Synthetic(NamedTuple):
    train: Dataset
    test: Dataset
    templates: np.ndarray
    # per split: labels, landmark shifts and channel offsets actually drawn
    truth: dict


def _templates(cfg, rng):
    t = np.arange(cfg.length, dtype=np.float64) / cfg.length
    templates = np.zeros((cfg.k_true, cfg.length, cfg.channels))
    for k in range(cfg.k_true):
        for c in range(cfg.channels):
            for _ in range(rng.integers(1, MAX_SINUSOIDS + 1)):
                cycles = rng.uniform(0.5, 3.0)
                amplitude = rng.uniform(0.2, 1.0)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                templates[k, :, c] += amplitude * np.sin(2.0 * np.pi * cycles * t + phase)
    return templates


def _draw(cfg, templates, n, rng, bias):
    warp = WarpConfig(cfg.length)
    labels = rng.permutation(np.arange(n) % cfg.k_true) + 1
    shifts = rng.uniform(-cfg.shift_range, cfg.shift_range, size=(n, warp.n_landmarks)) + bias
    offsets = rng.uniform(-cfg.offset_range, cfg.offset_range, size=(n, cfg.channels))
    times = warp.grid + shifts @ warp.operator.T
    values = np.empty((n, cfg.length, cfg.channels))
    for i in range(n):
        values[i] = sample(templates[labels[i] - 1], times[i]) + offsets[i]
    if cfg.noise_sd:
        values += rng.normal(0.0, cfg.noise_sd, size=values.shape)
    weights = (rng.random((n, cfg.length)) >= cfg.missing_rate).astype(np.float32)
    for i in np.flatnonzero(weights.sum(axis=1) == 0):
        weights[i, rng.integers(cfg.length)] = 1.0
    values[weights == 0] = 0.0
    return values, weights, labels, shifts, offsets


def generate(cfg=None, **kwargs):
    """ Draw a (train, test) pair. Keyword arguments override fields of ``cfg``. """
    if cfg is None:
        cfg = SynthConfig(**kwargs)
    elif kwargs:
        cfg = SynthConfig(**dict(cfg.__dict__, **kwargs))
    template_seq, train_seq, test_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    templates = _templates(cfg, np.random.default_rng(template_seq))
    truth = {}
    splits = {}
    for split, seq, n, bias in (('train', train_seq, cfg.n, 0.0),
                                ('test', test_seq, cfg.test_size, cfg.test_shift_bias)):
        values, weights, labels, shifts, offsets = _draw(cfg, templates, n,
                                                         np.random.default_rng(seq), bias)
        splits[split] = Dataset.from_arrays(values, weights, labels=labels, raw=True,
                                            n_classes=cfg.k_true, split=split)
        truth[split] = {'labels': labels, 'shifts': shifts, 'offsets': offsets}
    logger.info('Generated {} train and {} test series, K={}, T={}, C={}'.format(
        cfg.n, cfg.test_size, cfg.k_true, cfg.length, cfg.channels))
    return Synthetic(splits['train'], splits['test'], templates, truth)
