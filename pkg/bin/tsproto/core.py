""" Domain types shared by every other module.

Series are stored as float32 (the on-disk type), masks as float32 weights. Labels are 1-based
everywhere a user can see them; model code converts to 0-based prototype indices itself.
"""
import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from tsproto.exceptions import ConfigError, EmptyInputError, LabelError, ShapeError

DAYS_PER_LANDMARK = 30


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """ One pixel: a T x C grid of spectral intensities on a daily time grid. """
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen(self.values, np.float32))

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1] if self.values.ndim == 2 else 0


@dataclass(frozen=True, eq=False)
class Mask:
    """ Observation weights per time step. ``raw`` masks hold only 0 and 1. """
    weights: np.ndarray
    raw: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'weights', _frozen(self.weights, np.float32))

    @property
    def mass(self):
        return float(np.sum(self.weights, dtype=np.float64))


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'mean', _frozen(self.mean, np.float64))
        object.__setattr__(self, 'std', _frozen(self.std, np.float64))


@dataclass(frozen=True, eq=False)
class Dataset:
    series: Tuple[TimeSeries, ...]
    masks: Tuple[Mask, ...]
    labels: Optional[np.ndarray] = None
    n_classes: Optional[int] = None
    split: str = 'train'
    stats: Optional[ChannelStats] = None

    def __post_init__(self):
        object.__setattr__(self, 'series', tuple(self.series))
        object.__setattr__(self, 'masks', tuple(self.masks))
        if self.labels is not None:
            object.__setattr__(self, 'labels', _frozen(self.labels, np.int64))
            if self.n_classes is None and self.labels.size:
                object.__setattr__(self, 'n_classes', int(self.labels.max()))

    @classmethod
    def from_arrays(cls, values, weights, labels=None, raw=True, **kwargs):
        values = np.asarray(values)
        weights = np.asarray(weights)
        if values.ndim != 3:
            raise ShapeError('series values', '(N, T, C)', values.shape)
        if weights.shape != values.shape[:2]:
            raise ShapeError('mask weights', values.shape[:2], weights.shape)
        series = [TimeSeries(v) for v in values]
        masks = [Mask(w, raw=raw) for w in weights]
        return cls(series, masks, labels=labels, **kwargs)

    def __len__(self):
        return len(self.series)

    @property
    def length(self):
        return self.series[0].length

    @property
    def channels(self):
        return self.series[0].channels

    @property
    def labeled(self):
        return self.labels is not None

    @property
    def raw(self):
        return all(m.raw for m in self.masks)

    @cached_property
    def values(self):
        """ Stacked (N, T, C) float32 view of every series. """
        stacked = np.stack([s.values for s in self.series])
        stacked.setflags(write=False)
        return stacked

    @cached_property
    def weights(self):
        stacked = np.stack([m.weights for m in self.masks])
        stacked.setflags(write=False)
        return stacked

    def zero_based_labels(self):
        if self.labels is None:
            raise LabelError(None, self.n_classes)
        return self.labels - 1

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_arrays(self, values=None, weights=None, raw=None, **changes):
        values = self.values if values is None else values
        weights = self.weights if weights is None else weights
        raw = self.raw if raw is None else raw
        series = [TimeSeries(v) for v in values]
        masks = [Mask(w, raw=raw) for w in weights]
        return dataclasses.replace(self, series=series, masks=masks, **changes)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return dataclasses.replace(
            self, series=[self.series[i] for i in indices], masks=[self.masks[i] for i in indices],
            labels=labels)


@dataclass(frozen=True, eq=False)
class PrototypeBank:
    prototypes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'prototypes', _frozen(self.prototypes, np.float64))
        if self.prototypes.ndim != 3 or self.prototypes.shape[0] < 1:
            raise ShapeError('prototype bank', '(K, T, C) with K >= 1', self.prototypes.shape)

    @property
    def k(self):
        return self.prototypes.shape[0]

    def check(self, dataset):
        if self.prototypes.shape[1:] != (dataset.length, dataset.channels):
            raise ShapeError('prototypes', (dataset.length, dataset.channels),
                             self.prototypes.shape[1:])


def default_landmarks(length):
    """ One landmark per month of days, never fewer than two. """
    return max(2, int(round(length / float(DAYS_PER_LANDMARK))))


@dataclass(frozen=True)
class HyperParams:
    lambda_tv: float = 1.0
    mu_tv: float = 1.0
    nu_cont: float = 0.01
    sigma: float = 7.0
    learning_rate: float = 1e-5
    landmarks: int = 0
    k: int = 32
    warp_scale: float = 7.0
    patience: int = 5
    batch_size: int = 2048
    validation_interval: int = 200
    max_steps: int = 20000
    cont_normalized: bool = False
    filters: Sequence[int] = (128, 256, 128)
    kernels: Sequence[int] = (8, 5, 3)
    bn_momentum: float = 0.9

    def __post_init__(self):
        for name in ('lambda_tv', 'mu_tv', 'nu_cont', 'sigma', 'learning_rate', 'warp_scale'):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(name, value, 'must be > 0')
        if self.landmarks == 1 or self.landmarks < 0:
            raise ConfigError('landmarks', self.landmarks, 'must be 0 (automatic) or >= 2')
        for name in ('k', 'patience', 'batch_size', 'validation_interval', 'max_steps'):
            if getattr(self, name) < 1:
                raise ConfigError(name, getattr(self, name), 'must be a positive integer')
        if len(self.filters) != len(self.kernels) or not self.filters:
            raise ConfigError('filters', self.filters, 'needs one kernel width per block')
        object.__setattr__(self, 'filters', tuple(int(f) for f in self.filters))
        object.__setattr__(self, 'kernels', tuple(int(k) for k in self.kernels))

    @classmethod
    def from_settings(cls, settings):
        names = set(f.name for f in dataclasses.fields(cls))
        return cls(**dict((k, v) for k, v in settings.as_dict().items() if k in names))

    def n_landmarks(self, length):
        return self.landmarks if self.landmarks else default_landmarks(length)


@dataclass(frozen=True)
class ConfusionCounts:
    """ Per-class tallies: ``tp[k]`` samples of class k+1 predicted right, ``fn[k]`` predicted wrong. """
    matrix: np.ndarray
    tp: np.ndarray = field(init=False)
    fn: np.ndarray = field(init=False)
    correct: int = field(init=False)
    total: int = field(init=False)

    def __post_init__(self):
        matrix = _frozen(self.matrix, np.int64)
        object.__setattr__(self, 'matrix', matrix)
        tp = _frozen(np.diag(matrix), np.int64)
        object.__setattr__(self, 'tp', tp)
        object.__setattr__(self, 'fn', _frozen(matrix.sum(axis=1) - tp, np.int64))
        object.__setattr__(self, 'correct', int(tp.sum()))
        object.__setattr__(self, 'total', int(matrix.sum()))

    @classmethod
    def from_predictions(cls, pred, truth, n_classes=None):
        pred = np.asarray(pred, dtype=np.int64)
        truth = np.asarray(truth, dtype=np.int64)
        if pred.shape != truth.shape:
            raise ShapeError('predictions', truth.shape, pred.shape)
        if truth.size == 0:
            raise EmptyInputError('no predictions to score')
        if n_classes is None:
            n_classes = int(max(pred.max(), truth.max()))
        for labels in (pred, truth):
            bad = labels[(labels < 1) | (labels > n_classes)]
            if bad.size:
                raise LabelError(int(bad[0]), n_classes)
        matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(matrix, (truth - 1, pred - 1), 1)
        return cls(matrix)

    @property
    def support(self):
        return self.tp + self.fn


def validate_dataset(d):
    """ Return every broken invariant of ``d`` as ``"series <i>: <rule>"`` strings.

    Never raises on malformed numeric content; an empty list means the dataset is usable.
    """
    violations = []
    try:
        n = len(d.series)
    except TypeError:
        return ['dataset: series is not a sequence']
    if n == 0:
        return ['dataset: no series']
    if len(d.masks) != n:
        violations.append('dataset: {} masks for {} series'.format(len(d.masks), n))

    ref_shape = None
    for i, s in enumerate(d.series):
        values = np.asarray(getattr(s, 'values', s))
        if values.ndim != 2:
            violations.append('series {}: not a T x C matrix'.format(i))
            continue
        if ref_shape is None:
            ref_shape = values.shape
        length, channels = values.shape
        if length < 2:
            violations.append('series {}: length below 2'.format(i))
        if channels < 1:
            violations.append('series {}: no channels'.format(i))
        if length != ref_shape[0]:
            violations.append('series {}: length mismatch'.format(i))
        elif channels != ref_shape[1]:
            violations.append('series {}: channel mismatch'.format(i))
        if not np.all(np.isfinite(values)):
            violations.append('series {}: non-finite values'.format(i))

    for i, m in enumerate(d.masks[:n]):
        weights = np.asarray(getattr(m, 'weights', m))
        series_values = np.asarray(getattr(d.series[i], 'values', d.series[i]))
        if weights.ndim != 1 or (series_values.ndim >= 1 and weights.shape[0] != series_values.shape[0]):
            violations.append('series {}: mask length mismatch'.format(i))
            continue
        if not np.all(np.isfinite(weights)):
            violations.append('series {}: non-finite mask weights'.format(i))
            continue
        if np.any(weights < 0):
            violations.append('series {}: negative mask weight'.format(i))
        if getattr(m, 'raw', False) and not np.all((weights == 0) | (weights == 1)):
            violations.append('series {}: raw mask not binary'.format(i))
        if not np.any(weights > 0):
            violations.append('series {}: mask has no observation'.format(i))

    if d.labels is not None:
        labels = np.asarray(d.labels)
        if labels.shape != (n,):
            violations.append('dataset: {} labels for {} series'.format(labels.size, n))
        else:
            upper = d.n_classes if d.n_classes is not None else np.inf
            for i in np.flatnonzero((labels < 1) | (labels > upper)):
                violations.append('series {}: label {} out of range'.format(i, labels[i]))
    return violations
