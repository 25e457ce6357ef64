""" Missing-data handling and normalization.

All fillers work on stacked arrays (``values`` of shape (..., T, C), ``weights`` of shape (..., T))
so the same code serves one series or a whole dataset. The public single-series functions take and
return :class:`TimeSeries` / :class:`Mask` pairs.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import convolve1d

from tsproto import log
from tsproto.core import ChannelStats, Mask, TimeSeries
from tsproto.exceptions import ConfigError, EmptyInputError, ShapeError

logger = logging.getLogger(__name__)

# Filtered weights below this count as "no data".
EPSILON = 1e-6
# Gaussian kernels are cut at this many sigmas.
TRUNCATE = 4.0

GAP_FILL_MODES = ('none', 'previous', 'movavg', 'gaussian')


@dataclass(frozen=True)
class FilterConfig:
    sigma: float = 7.0
    gap_fill_mode: str = 'gaussian'
    input_filtering: bool = True
    cloud_band: Optional[int] = None
    cloud_threshold: Optional[float] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError('sigma', self.sigma, 'must be > 0')
        if self.gap_fill_mode not in GAP_FILL_MODES:
            raise ConfigError('gap_fill', self.gap_fill_mode,
                              'expected one of {}'.format(', '.join(GAP_FILL_MODES)))
        if (self.cloud_band is None) != (self.cloud_threshold is None):
            raise ConfigError('cloud_threshold', self.cloud_threshold,
                              'cloud_band and cloud_threshold go together')


def threshold_clouds(series, band, threshold, mask=None):
    """ Drop observed stamps whose ``band`` value exceeds ``threshold`` (bright, likely cloudy). """
    if not 0 <= band < series.channels:
        raise ShapeError('cloud band', 'index in [0, {})'.format(series.channels), band)
    weights = np.ones(series.length, np.float32) if mask is None else np.array(mask.weights)
    cloudy = series.values[:, band] > threshold
    weights[cloudy] = 0.0
    return Mask(weights, raw=True)


def _window_sums(array, kernel):
    # Zero padding outside [1, T] is the same as clipping the window.
    return convolve1d(array, kernel, axis=-1, mode='constant', cval=0.0)


def fill_previous(values, weights):
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(weights) > 0
    length = observed.shape[-1]
    last = np.where(observed, np.arange(length), -1)
    last = np.maximum.accumulate(last, axis=-1)
    has_previous = last >= 0
    index = np.maximum(last, 0)
    filled = np.take_along_axis(values, index[..., None], axis=-2)
    filled = np.where(has_previous[..., None], filled, 0.0)
    return filled, has_previous.astype(np.float64)


def fill_moving_average(values, weights, sigma):
    half = int(round(sigma))
    if half < 1:
        raise ConfigError('sigma', sigma, 'moving average needs a half width >= 1')
    width = 2 * half + 1
    kernel = np.ones(width)
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    counts = _window_sums(weights, kernel)
    # (T, C) -> sums along the time axis for every channel
    sums = _window_sums(np.moveaxis(values * weights[..., None], -1, -2), kernel)
    sums = np.moveaxis(sums, -2, -1)
    present = counts > 0
    filled = np.where(present[..., None], sums / np.where(present, counts, 1.0)[..., None], 0.0)
    return filled, counts / width


def gaussian_kernel(sigma):
    radius = int(math.ceil(TRUNCATE * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-offsets ** 2 / (2.0 * sigma ** 2))


def fill_gaussian(values, weights, sigma):
    kernel = gaussian_kernel(sigma)
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    mass = _window_sums(weights, kernel)
    sums = np.moveaxis(_window_sums(np.moveaxis(values * weights[..., None], -1, -2), kernel), -2, -1)
    present = mass >= EPSILON
    filled = np.where(present[..., None], sums / np.where(present, mass, 1.0)[..., None], 0.0)
    return filled, np.where(present, mass, 0.0)


def gap_fill_previous(x_raw, m_raw):
    values, weights = fill_previous(x_raw.values, m_raw.weights)
    return TimeSeries(values), Mask(weights, raw=True)


def gap_fill_moving_average(x_raw, m_raw, sigma):
    values, weights = fill_moving_average(x_raw.values, m_raw.weights, sigma)
    return TimeSeries(values), Mask(weights, raw=False)


def gaussian_filter(x_raw, m_raw, sigma):
    values, weights = fill_gaussian(x_raw.values, m_raw.weights, sigma)
    return TimeSeries(values), Mask(weights, raw=False)


def fill_gaps(d, mode, sigma=7.0):
    """ Apply one gap filler to every series of ``d``. ``none`` returns ``d`` itself. """
    if mode == 'none':
        return d
    if mode == 'previous':
        values, weights = fill_previous(d.values, d.weights)
        raw = True
    elif mode == 'movavg':
        values, weights = fill_moving_average(d.values, d.weights, sigma)
        raw = False
    elif mode == 'gaussian':
        values, weights = fill_gaussian(d.values, d.weights, sigma)
        raw = False
    else:
        raise ConfigError('gap_fill', mode, 'expected one of {}'.format(', '.join(GAP_FILL_MODES)))
    logger.debug('Gap filled {} series with {} (sigma={})'.format(len(d), mode, sigma))
    return d.with_arrays(values=values, weights=weights, raw=raw)


def mask_clouds(d, band, threshold):
    """ :func:`threshold_clouds` over every series of the raw dataset ``d``. """
    if not d.raw:
        raise ConfigError('cloud_band', band, 'clouds are masked on raw observations only')
    masks = [threshold_clouds(s, band, threshold, m) for s, m in zip(d.series, d.masks)]
    dropped = int(sum((m.weights > 0).sum() for m in d.masks) -
                  sum((m.weights > 0).sum() for m in masks))
    logger.debug('Cloud mask on channel {} > {} dropped {} stamps'.format(band, threshold, dropped))
    return dataclasses.replace(d, masks=masks)


def prepare(d, config):
    """ Split one dataset into (centroid data, model inputs) following ``config``.

    Cloudy stamps are dropped first. Centroids are computed from gap-filled series; models see the
    Gaussian-filtered series when input filtering is on, the gap-filled series otherwise.
    """
    if config.cloud_band is not None:
        d = mask_clouds(d, config.cloud_band, config.cloud_threshold)
    centroid_data = fill_gaps(d, config.gap_fill_mode, config.sigma)
    if not config.input_filtering or config.gap_fill_mode == 'gaussian':
        return centroid_data, centroid_data
    return centroid_data, fill_gaps(d, 'gaussian', config.sigma)


def neighbor_inputs(d, config):
    """ Model inputs of ``d`` under the observation mask, for nearest neighbor search.

    Values come from :func:`prepare`; weights are the raw mask (clouds dropped), so DTW skips every
    stamp that was never observed.
    """
    if config.cloud_band is not None:
        d = mask_clouds(d, config.cloud_band, config.cloud_threshold)
    inputs = prepare(d, dataclasses.replace(config, cloud_band=None, cloud_threshold=None))[1]
    return inputs.with_arrays(weights=d.weights, raw=d.raw)


def channel_stats(d):
    """ Mask-weighted per-channel mean and standard deviation of ``d`` (the train split). """
    if len(d) == 0:
        raise EmptyInputError('train split has no series')
    values = d.values.astype(np.float64)
    weights = d.weights.astype(np.float64)[..., None]
    mass = weights.sum(axis=(0, 1))
    if not np.all(mass > 0):
        raise EmptyInputError('train split has no observed stamp in some channel')
    mean = (weights * values).sum(axis=(0, 1)) / mass
    var = (weights * (values - mean) ** 2).sum(axis=(0, 1)) / mass
    std = np.sqrt(var)
    for c in np.flatnonzero(~(std > 1e-12)):
        log.warn(logger, 'Channel {} is constant over the train split; left unscaled', c)
        mean[c] = 0.0
        std[c] = 1.0
    return ChannelStats(mean, std)


def normalize(d, stats=None):
    """ Standardize every channel with ``stats`` (computed from ``d`` when omitted). """
    if stats is None:
        stats = channel_stats(d)
    observed = (d.weights > 0)[..., None]
    values = np.where(observed, (d.values.astype(np.float64) - stats.mean) / stats.std, 0.0)
    return d.with_arrays(values=values, stats=stats)


def denormalize(d):
    if d.stats is None:
        return d
    observed = (d.weights > 0)[..., None]
    values = np.where(observed, d.values.astype(np.float64) * d.stats.std + d.stats.mean, 0.0)
    return d.with_arrays(values=values, stats=None)
