import numpy as np
import pytest

from conftest import make_dataset
from tsproto import preprocess
from tsproto.core import Mask, TimeSeries
from tsproto.exceptions import ConfigError, EmptyInputError, ShapeError, TsprotoWarning
from tsproto.preprocess import FilterConfig


def column(values):
    return np.asarray(values, dtype=np.float64)[:, None]


def test_fill_previous_carries_last_observation():
    values, weights = preprocess.fill_previous(column([1, 9, 3, 9]), [1, 0, 1, 0])
    np.testing.assert_array_equal(values[:, 0], [1, 1, 3, 3])
    np.testing.assert_array_equal(weights, [1, 1, 1, 1])


def test_fill_previous_before_first_observation():
    values, weights = preprocess.fill_previous(column([5, 2, 7]), [0, 1, 0])
    np.testing.assert_array_equal(values[:, 0], [0, 2, 2])
    np.testing.assert_array_equal(weights, [0, 1, 1])


def test_moving_average_all_observed():
    values, weights = preprocess.fill_moving_average(column([1, 2, 3, 4, 5]), np.ones(5), 1.0)
    np.testing.assert_allclose(values[:, 0], [1.5, 2, 3, 4, 4.5])
    np.testing.assert_allclose(weights, [2 / 3., 1, 1, 1, 2 / 3.])


def test_moving_average_ignores_missing_values():
    values, weights = preprocess.fill_moving_average(column([1, 100, 3, 4, 5]), [1, 0, 1, 1, 1], 1.0)
    assert values[1, 0] == pytest.approx(2.0)
    assert weights[1] == pytest.approx(2 / 3.)


def test_moving_average_empty_window():
    values, weights = preprocess.fill_moving_average(column([1, 2, 3, 4, 5]), [1, 0, 0, 0, 1], 1.0)
    assert values[2, 0] == 0.0
    assert weights[2] == 0.0


def test_moving_average_needs_a_window():
    with pytest.raises(ConfigError):
        preprocess.fill_moving_average(column([1, 2]), [1, 1], 0.2)


def test_gaussian_kernel():
    kernel = preprocess.gaussian_kernel(2.0)
    assert kernel.size == 2 * 8 + 1
    assert kernel[8] == 1.0
    np.testing.assert_allclose(kernel, kernel[::-1])


def test_gaussian_filter_of_constant_is_constant(rng):
    weights = (rng.random(40) < 0.6).astype(float)
    weights[0] = 1.0
    values, mass = preprocess.fill_gaussian(np.full((40, 2), 3.5), weights, 3.0)
    present = mass > 0
    np.testing.assert_allclose(values[present], 3.5)


def test_gaussian_filter_weight_is_kernel_mass():
    sigma = 2.0
    values, mass = preprocess.fill_gaussian(column(np.zeros(30)), np.ones(30), sigma)
    assert mass[15] == pytest.approx(preprocess.gaussian_kernel(sigma).sum())
    assert mass[0] < mass[15]


def test_gaussian_filter_far_from_data_is_empty():
    weights = np.zeros(200)
    weights[0] = 1.0
    values, mass = preprocess.fill_gaussian(column(np.arange(200.0)), weights, 1.0)
    assert mass[100] == 0.0
    assert values[100, 0] == 0.0
    assert values[0, 0] == 0.0
    assert mass[0] == 1.0


def test_single_series_wrappers():
    series = TimeSeries(column([1, 2, 3, 4]))
    mask = Mask([1, 0, 1, 1])
    filled, weights = preprocess.gap_fill_previous(series, mask)
    np.testing.assert_array_equal(filled.values[:, 0], [1, 1, 3, 4])
    assert weights.raw
    filled, weights = preprocess.gaussian_filter(series, mask, 1.0)
    assert not weights.raw
    assert filled.values.shape == (4, 1)
    _, weights = preprocess.gap_fill_moving_average(series, mask, 1.0)
    assert not weights.raw


def test_threshold_clouds():
    series = TimeSeries(np.array([[0.1, 0.2], [0.9, 0.2], [0.3, 0.8]]))
    mask = preprocess.threshold_clouds(series, 0, 0.5)
    np.testing.assert_array_equal(mask.weights, [1, 0, 1])
    mask = preprocess.threshold_clouds(series, 1, 0.5, mask)
    np.testing.assert_array_equal(mask.weights, [1, 0, 0])
    with pytest.raises(ShapeError):
        preprocess.threshold_clouds(series, 2, 0.5)


def test_fill_gaps_modes(rng):
    weights = np.maximum((rng.random((3, 20)) < 0.5).astype(float), np.eye(3, 20))
    d = make_dataset(rng.normal(size=(3, 20, 2)), weights)
    assert preprocess.fill_gaps(d, 'none') is d
    assert preprocess.fill_gaps(d, 'previous').raw
    assert not preprocess.fill_gaps(d, 'movavg', 2.0).raw
    assert not preprocess.fill_gaps(d, 'gaussian', 2.0).raw
    with pytest.raises(ConfigError):
        preprocess.fill_gaps(d, 'cubic')


def test_prepare_filters_model_inputs(rng):
    d = make_dataset(rng.normal(size=(2, 20, 1)), np.ones((2, 20)))
    centroids, inputs = preprocess.prepare(d, FilterConfig(sigma=2.0, gap_fill_mode='previous'))
    assert centroids.raw
    assert not inputs.raw
    centroids, inputs = preprocess.prepare(d, FilterConfig(gap_fill_mode='previous',
                                                           input_filtering=False))
    assert centroids is inputs
    centroids, inputs = preprocess.prepare(d, FilterConfig(sigma=2.0))
    assert centroids is inputs


def test_filter_config_validates():
    with pytest.raises(ConfigError):
        FilterConfig(sigma=0.0)
    with pytest.raises(ConfigError):
        FilterConfig(gap_fill_mode='spline')


def test_filter_config_pairs_cloud_settings():
    with pytest.raises(ConfigError):
        FilterConfig(cloud_band=0)
    with pytest.raises(ConfigError):
        FilterConfig(cloud_threshold=0.5)


def test_mask_clouds_drops_bright_stamps():
    values = np.zeros((2, 4, 2))
    values[0, 1, 0] = 0.9
    values[1, 3, 0] = 0.7
    values[1, 2, 1] = 0.9
    d = make_dataset(values, [[1, 1, 1, 0], [1, 1, 1, 1]])
    masked = preprocess.mask_clouds(d, 0, 0.5)
    np.testing.assert_array_equal(masked.weights, [[1, 0, 1, 0], [1, 1, 1, 0]])
    assert masked.raw
    np.testing.assert_array_equal(masked.values, d.values)
    with pytest.raises(ConfigError):
        preprocess.mask_clouds(preprocess.fill_gaps(d, 'gaussian', 1.0), 0, 0.5)


def test_prepare_masks_clouds_before_gap_filling():
    values = np.zeros((1, 5, 1))
    values[0, 2, 0] = 10.0
    d = make_dataset(values)
    cfg = FilterConfig(gap_fill_mode='previous', input_filtering=False, cloud_band=0,
                       cloud_threshold=1.0)
    centroids, inputs = preprocess.prepare(d, cfg)
    # the cloudy stamp is filled from its predecessor
    np.testing.assert_array_equal(centroids.values[0, :, 0], 0.0)
    assert centroids is inputs


def test_neighbor_inputs_keep_the_raw_mask(rng):
    weights = np.ones((2, 20))
    weights[:, 5:9] = 0
    d = make_dataset(rng.normal(size=(2, 20, 1)), weights)
    smoothed = preprocess.neighbor_inputs(d, FilterConfig(sigma=2.0, gap_fill_mode='none'))
    np.testing.assert_array_equal(smoothed.weights, weights)
    assert smoothed.raw
    assert not np.allclose(smoothed.values[:, :5], d.values[:, :5])
    plain = preprocess.neighbor_inputs(d, FilterConfig(gap_fill_mode='none', input_filtering=False))
    np.testing.assert_array_equal(plain.values, d.values)
    np.testing.assert_array_equal(plain.weights, weights)


def test_normalize_uses_observed_stamps_only():
    values = np.array([[[1.0], [3.0], [100.0]]])
    d = make_dataset(values, [[1, 1, 0]])
    stats = preprocess.channel_stats(d)
    np.testing.assert_allclose(stats.mean, [2.0])
    np.testing.assert_allclose(stats.std, [1.0])
    normalized = preprocess.normalize(d)
    np.testing.assert_allclose(normalized.values[0, :, 0], [-1, 1, 0])
    np.testing.assert_allclose(normalized.stats.mean, stats.mean)


def test_normalize_then_denormalize(rng):
    d = make_dataset(rng.normal(3.0, 2.0, size=(4, 10, 2)))
    back = preprocess.denormalize(preprocess.normalize(d))
    np.testing.assert_allclose(back.values, d.values, atol=1e-5)
    assert back.stats is None


def test_normalize_applies_given_stats(rng):
    train = make_dataset(rng.normal(size=(4, 10, 2)))
    test = make_dataset(rng.normal(size=(2, 10, 2)))
    stats = preprocess.channel_stats(train)
    out = preprocess.normalize(test, stats)
    expected = (test.values.astype(np.float64) - stats.mean) / stats.std
    np.testing.assert_allclose(out.values, expected, rtol=1e-6, atol=1e-6)


def test_constant_channel_left_unscaled():
    values = np.zeros((2, 4, 2))
    values[..., 0] = 5.0
    values[..., 1] = np.arange(4.0)
    with pytest.warns(TsprotoWarning):
        stats = preprocess.channel_stats(make_dataset(values))
    assert stats.mean[0] == 0.0
    assert stats.std[0] == 1.0


def test_channel_stats_of_empty_split():
    with pytest.raises(EmptyInputError):
        preprocess.channel_stats(make_dataset(np.zeros((0, 3, 1)), np.zeros((0, 3))))
