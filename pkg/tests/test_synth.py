import numpy as np
import pytest

from tsproto import synth
from tsproto.core import validate_dataset
from tsproto.exceptions import ConfigError
from tsproto.synth import SynthConfig


def small(**kwargs):
    options = dict(k_true=3, n=30, length=40, channels=2, seed=1)
    options.update(kwargs)
    return synth.generate(**options)


def test_shapes_and_labels():
    data = small(n_test=9)
    assert data.train.values.shape == (30, 40, 2)
    assert data.test.values.shape == (9, 40, 2)
    assert data.templates.shape == (3, 40, 2)
    assert data.train.split == 'train'
    assert data.test.split == 'test'
    assert data.train.n_classes == 3
    np.testing.assert_array_equal(np.bincount(data.train.labels), [0, 10, 10, 10])
    assert validate_dataset(data.train) == []
    assert validate_dataset(data.test) == []


def test_default_test_size():
    assert SynthConfig(k_true=3, n=30).test_size == 7
    assert SynthConfig(k_true=5, n=8).test_size == 5
    assert small().test.values.shape[0] == 7


def test_same_seed_same_data():
    a, b = small(), small()
    np.testing.assert_array_equal(a.train.values, b.train.values)
    np.testing.assert_array_equal(a.test.labels, b.test.labels)
    assert not np.array_equal(a.train.values, small(seed=2).train.values)


def test_noise_free_samples_are_their_templates():
    data = small(shift_range=0.0, offset_range=0.0, noise_sd=0.0)
    for values, label in zip(data.train.values, data.train.labels):
        np.testing.assert_allclose(values, data.templates[label - 1], atol=1e-6)


def test_offsets_only_shift_channels():
    data = small(shift_range=0.0, noise_sd=0.0, offset_range=0.3)
    offsets = data.truth['train']['offsets']
    assert np.all(np.abs(offsets) <= 0.3)
    for i in range(5):
        label = data.train.labels[i]
        np.testing.assert_allclose(data.train.values[i], data.templates[label - 1] + offsets[i],
                                   atol=1e-5)


def test_shift_ranges_and_bias():
    data = small(shift_range=4.0, test_shift_bias=5.0, n_test=200)
    train_shifts = data.truth['train']['shifts']
    test_shifts = data.truth['test']['shifts']
    assert np.all(np.abs(train_shifts) <= 4.0)
    assert np.all((test_shifts >= 1.0) & (test_shifts <= 9.0))
    assert abs(test_shifts.mean() - 5.0) < 1.0


def test_missing_stamps_are_zero_and_every_series_is_observed():
    data = small(missing_rate=0.9)
    weights = data.train.weights
    assert set(np.unique(weights)) <= {0.0, 1.0}
    assert np.all(weights.sum(axis=1) >= 1)
    assert np.all(data.train.values[weights == 0] == 0.0)
    assert 0.8 < 1.0 - weights.mean() < 0.97


@pytest.mark.parametrize('changes', [
    dict(k_true=1),
    dict(n=2),
    dict(length=1),
    dict(shift_range=-1.0),
    dict(missing_rate=1.0),
])
def test_config_rejects(changes):
    options = dict(k_true=3, n=30)
    options.update(changes)
    with pytest.raises(ConfigError):
        SynthConfig(**options)


def test_generate_overrides_a_config():
    data = synth.generate(SynthConfig(k_true=2, n=10, length=20, channels=1), seed=7)
    assert data.train.values.shape == (10, 20, 1)
    np.testing.assert_array_equal(
        data.train.values, synth.generate(k_true=2, n=10, length=20, channels=1, seed=7).train.values)
