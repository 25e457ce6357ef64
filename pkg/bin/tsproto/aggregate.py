""" Field-level post-processing of per-pixel label rasters.

Three ways to smooth a pixel-wise prediction map:

* majority vote inside known instances (:func:`aggregate_instances`),
* majority vote inside a square window (:func:`aggregate_sliding_window`),
* instances built from several per-frame instance maps, by intersecting them
  (:func:`intersect_instance_maps`) and then dropping thin pieces and handing their pixels to
  the most similar surviving instance (:func:`filter_and_assign`).

Components use 4-connectivity; erosion uses a solid 3x3 element with pixels outside the raster
counted as inside.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from tsproto import log
from tsproto.exceptions import ConfigError, EmptyInputError, ShapeError
from tsproto.metrics import mean_accuracy, overall_accuracy

logger = logging.getLogger(__name__)

VOID = -1
# Rows of remaining-pixel tuples compared against instance tuples at once.
_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """ H x W class map; ``void`` marks pixels without a label. """
    labels: np.ndarray
    void: Optional[np.ndarray] = None

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ShapeError('label raster', '(H, W)', labels.shape)
        void = None
        if self.void is not None:
            void = np.array(self.void, dtype=bool)
            if void.shape != labels.shape:
                raise ShapeError('void mask', labels.shape, void.shape)
            labels[void] = 0
        if np.any(labels < 0):
            raise ValueError('Label raster holds negative labels outside the void mask')
        labels.setflags(write=False)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'void', void)

    @property
    def shape(self):
        return self.labels.shape

    def void_mask(self):
        return np.zeros(self.shape, dtype=bool) if self.void is None else self.void


@dataclass(frozen=True, eq=False)
class InstanceRaster:
    """ H x W instance ids; id 0 means "not in any instance". """
    ids: np.ndarray

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ShapeError('instance raster', '(H, W)', ids.shape)
        if np.any(ids < 0):
            raise ValueError('Instance ids must be non-negative')
        ids.setflags(write=False)
        object.__setattr__(self, 'ids', ids)

    @property
    def shape(self):
        return self.ids.shape


def _check_shapes(expected, *rasters):
    for raster in rasters:
        if raster.shape != expected:
            raise ShapeError('raster', expected, raster.shape)


def aggregate_instances(labels, instances):
    """ Give every labeled pixel of an instance the instance's most frequent label.

    Ties go to the lowest label. Void pixels neither vote nor change; instance 0 is left alone.
    """
    _check_shapes(labels.shape, instances)
    void = labels.void_mask()
    voters = (~void) & (instances.ids > 0)
    ids = instances.ids[voters]
    values = labels.labels[voters]
    result = np.array(labels.labels)
    if ids.size == 0:
        return LabelRaster(result, labels.void)

    n_labels = int(values.max()) + 1
    counts = np.zeros((int(ids.max()) + 1, n_labels), dtype=np.int64)
    np.add.at(counts, (ids, values), 1)
    winner = counts.argmax(axis=1)
    result[voters] = winner[ids]
    return LabelRaster(result, labels.void)


def aggregate_sliding_window(labels, window=5):
    """ Replace each labeled pixel with the majority label of the window centered on it. """
    if window < 1 or window % 2 == 0:
        raise ConfigError('window', window, 'must be an odd integer >= 1')
    void = labels.void_mask()
    present = np.unique(labels.labels[~void])
    if present.size == 0:
        return labels
    footprint = np.ones((window, window), dtype=np.int64)
    votes = np.stack([
        ndimage.convolve(((labels.labels == value) & ~void).astype(np.int64), footprint,
                         mode='constant', cval=0)
        for value in present])
    # argmax keeps the first maximum, so ties resolve to the lowest label
    result = np.where(void, labels.labels, present[votes.argmax(axis=0)])
    return LabelRaster(result, labels.void)


def _stack_frames(frames):
    frames = list(frames)
    if not frames:
        raise EmptyInputError('no instance frames')
    _check_shapes(frames[0].shape, *frames[1:])
    return np.stack([f.ids for f in frames], axis=-1)


def _components(classes):
    """ 4-connected components of equal-class pixels, numbered 1.. in raster order. """
    height, width = classes.shape
    index = np.arange(height * width).reshape(height, width)
    rows, cols = [], []
    same = classes[:, 1:] == classes[:, :-1]
    rows.append(index[:, :-1][same])
    cols.append(index[:, 1:][same])
    same = classes[1:, :] == classes[:-1, :]
    rows.append(index[:-1, :][same])
    cols.append(index[1:, :][same])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)),
                       shape=(height * width, height * width))
    _, component = connected_components(graph, directed=False)
    _, first = np.unique(component, return_index=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(1, first.size + 1)
    return rank[component].reshape(height, width)


def intersect_instance_maps(frames):
    """ Pixels fall in one instance iff they carry the same id in every frame and are connected. """
    stacked = _stack_frames(frames)
    height, width, depth = stacked.shape
    _, classes = np.unique(stacked.reshape(-1, depth), axis=0, return_inverse=True)
    ids = _components(classes.reshape(height, width))
    logger.debug('Intersected {} frames into {} instances'.format(depth, ids.max()))
    return InstanceRaster(ids)


def surviving_pixels(fine):
    """ Pixels of the instances that are not empty after a 3x3 erosion. """
    ids = fine.ids
    # mode='nearest' only repeats in-raster neighbors, the same as eroding with border_value=1
    interior = ((ndimage.maximum_filter(ids, size=3, mode='nearest') == ids)
                & (ndimage.minimum_filter(ids, size=3, mode='nearest') == ids)
                & (ids > 0))
    survivors = np.unique(ids[interior])
    return np.isin(ids, survivors) & (ids > 0)


def filter_and_assign(fine, frames):
    """ Keep instances that survive erosion and hand every other pixel to a surviving instance.

    A remaining pixel ``p`` joins the surviving instance holding the pixel ``p'`` with the fewest
    frames where ``p`` and ``p'`` carry different ids; ties go to the lowest instance id.
    """
    stacked = _stack_frames(frames)
    _check_shapes(stacked.shape[:2], fine)
    kept = surviving_pixels(fine)
    if not kept.any():
        log.warn(logger, 'No instance survives erosion; all pixels form one instance')
        return InstanceRaster(np.ones(fine.shape, dtype=np.int64))
    remaining = ~kept
    ids = np.array(fine.ids)
    if not remaining.any():
        return InstanceRaster(ids)

    depth = stacked.shape[-1]
    # d only depends on the id tuples, so compare unique tuples instead of pixels
    targets = np.unique(np.concatenate([stacked[kept], ids[kept][:, None]], axis=1), axis=0)
    target_tuples, target_ids = targets[:, :depth], targets[:, depth]
    sources, inverse = np.unique(stacked[remaining], axis=0, return_inverse=True)
    choice = np.empty(len(sources), dtype=np.int64)
    for start in range(0, len(sources), _CHUNK):
        block = sources[start:start + _CHUNK]
        distance = (block[:, None, :] != target_tuples[None, :, :]).sum(axis=-1)
        best = distance.min(axis=1, keepdims=True)
        candidates = np.where(distance == best, target_ids[None, :], np.iinfo(np.int64).max)
        choice[start:start + _CHUNK] = candidates.min(axis=1)
    ids[remaining] = choice[inverse.reshape(-1)]
    logger.debug('Assigned {} remaining pixels to {} surviving instances'.format(
        int(remaining.sum()), np.unique(target_ids).size))
    return InstanceRaster(ids)


def combine_frames(frames):
    """ Intersect per-frame instance maps, then filter and reassign. Returns (instances, kept mask). """
    frames = list(frames)
    fine = intersect_instance_maps(frames)
    return filter_and_assign(fine, frames), surviving_pixels(fine)


def aggregate_accuracy(pred, truth, region):
    """ OA and MA of ``pred`` against ``truth`` inside ``region`` and outside it.

    Void or zero truth pixels are ignored. A part without labeled pixels reports ``None`` scores.
    """
    _check_shapes(truth.shape, pred)
    region = np.asarray(region, dtype=bool)
    if region.shape != truth.shape:
        raise ShapeError('region mask', truth.shape, region.shape)
    valid = ~truth.void_mask() & ~pred.void_mask() & (truth.labels > 0)
    n_classes = int(max(truth.labels.max(), pred.labels.max()))
    scores = {}
    for name, part in (('filtered', region), ('remaining', ~region)):
        selected = valid & part
        pixels = int(selected.sum())
        if pixels == 0:
            scores[name] = {'pixels': 0, 'oa': None, 'ma': None}
            continue
        p = pred.labels[selected]
        t = truth.labels[selected]
        scores[name] = {'pixels': pixels, 'oa': overall_accuracy(p, t),
                        'ma': mean_accuracy(p, t, n_classes)}
    return scores
