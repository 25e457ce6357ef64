""" Classical baselines: nearest class centroid, 1-nearest-neighbor and DTW. """
import logging
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from tsproto.exceptions import EmptyInputError, LabelError, ShapeError

logger = logging.getLogger(__name__)

METRICS = ('euclidean', 'dtw')


def masked_distance_matrix(values, weights, references):
    """ Masked MSE of every series (N, T, C) under its weights (N, T) to every reference (K, T, C).

    Evaluated in the same order as the training losses, so both give bit-identical values for
    undeformed prototypes. Callers break ties with ``argmin`` (lowest index).
    """
    values = np.asarray(values, dtype=np.float64)
    references = np.asarray(references, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    mass = weights.sum(axis=-1, keepdims=True)
    if np.any(mass <= 0):
        raise EmptyInputError('mask with zero total weight')
    weights = weights / mass
    out = np.empty((values.shape[0], references.shape[0]))
    for k in range(references.shape[0]):
        residual = references[k] - values
        out[:, k] = np.sum(np.mean(np.square(residual), axis=-1) * weights, axis=-1)
    return out


@dataclass(frozen=True, eq=False)
class CentroidModel:
    centroids: np.ndarray
    classes: np.ndarray

    @property
    def k(self):
        return self.centroids.shape[0]


def class_centroids(values, weights, labels, k):
    """ Mask-weighted class means; each sample's stamp counts ``m_i[t] / sum m_i``.

    ``labels`` are 0-based. Stamps no sample of a class observes are interpolated from the
    observed neighbors.
    """
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum(axis=1, keepdims=True)
    length = values.shape[1]
    centroids = np.zeros((k,) + values.shape[1:])
    for c in range(k):
        members = labels == c
        if not members.any():
            raise EmptyInputError('class {} has no sample'.format(c + 1))
        w = weights[members]
        total = w.sum(axis=0)
        observed = total > 0
        centroid = np.einsum('nt,ntc->tc', w, values[members])
        centroid[observed] /= total[observed, None]
        if not observed.all():
            t = np.arange(length)
            for channel in range(values.shape[2]):
                centroid[~observed, channel] = np.interp(t[~observed], t[observed],
                                                         centroid[observed, channel])
        centroids[c] = centroid
    return centroids


def ncc_fit(d):
    if d.labels is None:
        raise LabelError(None, d.n_classes)
    k = d.n_classes
    centroids = class_centroids(d.values, d.weights, d.zero_based_labels(), k)
    logger.debug('Fitted {} class centroids on {} series'.format(k, len(d)))
    return CentroidModel(centroids, np.arange(1, k + 1))


def ncc_predict_many(model, values, weights):
    distance = masked_distance_matrix(values, weights, model.centroids)
    return model.classes[np.argmin(distance, axis=1)]


def ncc_predict(model, x, m):
    """ Class of the closest centroid under the mask of ``x``; ties go to the lowest class. """
    values = np.asarray(getattr(x, 'values', x), dtype=np.float64)
    weights = np.asarray(getattr(m, 'weights', m), dtype=np.float64)
    if values.shape != model.centroids.shape[1:]:
        raise ShapeError('series', model.centroids.shape[1:], values.shape)
    return int(ncc_predict_many(model, values[None], weights[None])[0])


@njit(cache=True)
def _dtw(a, b, band):
    n, m = a.shape[0], b.shape[0]
    if band > 0:
        band = max(band, abs(n - m))
    cost = np.full((n + 1, m + 1), np.inf)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        lo, hi = 1, m
        if band > 0:
            lo = max(1, i - band)
            hi = min(m, i + band)
        for j in range(lo, hi + 1):
            step = 0.0
            for c in range(a.shape[1]):
                diff = a[i - 1, c] - b[j - 1, c]
                step += diff * diff
            best = cost[i - 1, j - 1]
            if cost[i - 1, j] < best:
                best = cost[i - 1, j]
            if cost[i, j - 1] < best:
                best = cost[i, j - 1]
            cost[i, j] = step + best
    return cost[n, m]


@njit(parallel=True, cache=True)
def _dtw_nearest(queries, query_bounds, train, train_bounds, band):
    nearest = np.empty(query_bounds.shape[0] - 1, dtype=np.int64)
    for q in prange(query_bounds.shape[0] - 1):
        a = queries[query_bounds[q]:query_bounds[q + 1]]
        best = np.inf
        best_index = 0
        for t in range(train_bounds.shape[0] - 1):
            distance = _dtw(a, train[train_bounds[t]:train_bounds[t + 1]], band)
            if distance < best:
                best = distance
                best_index = t
        nearest[q] = best_index
    return nearest


def _as_matrix(series):
    series = np.ascontiguousarray(getattr(series, 'values', series), dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if series.shape[0] == 0:
        raise EmptyInputError('empty series')
    return series


def dtw_distance(a, b, band=0):
    """ Accumulated squared-Euclidean cost of the best alignment (steps up, right, diagonal).

    ``band`` > 0 adds a Sakoe-Chiba constraint ``|i - j| <= band``.
    """
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError('series channels', a.shape[1], b.shape[1])
    return float(_dtw(a, b, int(band)))


def _observed(values, weights):
    """ Concatenate the observed rows of every series; returns (rows, bounds). """
    keep = np.asarray(weights) > 0
    rows = np.ascontiguousarray(np.asarray(values, dtype=np.float64)[keep])
    bounds = np.concatenate([[0], np.cumsum(keep.sum(axis=1))]).astype(np.int64)
    return rows, bounds


def knn1_predict_many(train, values, weights, metric='euclidean', band=0):
    if len(train) == 0:
        raise EmptyInputError('empty train set')
    if train.labels is None:
        raise LabelError(None, train.n_classes)
    if metric == 'euclidean':
        nearest = np.argmin(_euclidean(values, weights, train.values), axis=1)
    elif metric == 'dtw':
        queries, query_bounds = _observed(values, weights)
        rows, train_bounds = _observed(train.values, train.weights)
        nearest = _dtw_nearest(queries, query_bounds, rows, train_bounds, int(band))
    else:
        raise ValueError('metric must be one of {}, not {!r}'.format(', '.join(METRICS), metric))
    return train.labels[nearest]


def _euclidean(values, weights, references, chunk=256):
    # (N, K) in slices of the train set to bound memory
    references = np.asarray(references, dtype=np.float64)
    parts = [masked_distance_matrix(values, weights, references[start:start + chunk])
             for start in range(0, references.shape[0], chunk)]
    return np.concatenate(parts, axis=1)


def knn1_predict(train, x, m, metric='euclidean', band=0):
    """ Label of the nearest train series; ties go to the lowest train index. """
    values = np.asarray(getattr(x, 'values', x), dtype=np.float64)
    weights = np.asarray(getattr(m, 'weights', m), dtype=np.float64)
    return int(knn1_predict_many(train, values[None], weights[None], metric, band)[0])
