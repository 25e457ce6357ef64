""" Accuracy metrics and cluster-to-class labeling.

Labels are 1-based class ids. Cluster indices are 0-based prototype indices.
"""
import csv
import logging

import numpy as np

from tsproto import log
from tsproto.core import ConfusionCounts
from tsproto.exceptions import ConfigError, EmptyInputError, LabelError, ShapeError

logger = logging.getLogger(__name__)


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise ShapeError('predictions', truth.shape, pred.shape)
    if truth.size == 0:
        raise EmptyInputError('no predictions to score')
    return pred, truth


def overall_accuracy(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.count_nonzero(pred == truth)) / truth.size


def per_class_accuracy(pred, truth, n_classes=None):
    """ Recall of every class 1..n_classes; ``nan`` for classes absent from ``truth``. """
    pred, truth = _pair(pred, truth)
    if n_classes is None:
        n_classes = int(truth.max())
    if truth.min() < 1 or truth.max() > n_classes:
        bad = truth[(truth < 1) | (truth > n_classes)][0]
        raise LabelError(int(bad), n_classes)
    support = np.bincount(truth - 1, minlength=n_classes)
    hits = np.bincount(truth[pred == truth] - 1, minlength=n_classes)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(support > 0, hits / np.maximum(support, 1), np.nan)


def mean_accuracy(pred, truth, n_classes=None):
    """ Class-averaged accuracy over the classes present in ``truth``. """
    recall = per_class_accuracy(pred, truth, n_classes)
    absent = np.flatnonzero(np.isnan(recall)) + 1
    if absent.size:
        log.warn(logger, 'Classes {} have no samples and are left out of the mean accuracy',
                 ', '.join(str(c) for c in absent))
    return float(np.nanmean(recall))


def confusion(pred, truth, n_classes=None):
    return ConfusionCounts.from_predictions(pred, truth, n_classes)


def write_confusion_csv(counts, path):
    """ Rows are true classes, columns predicted classes, both 1-based. """
    n = counts.matrix.shape[0]
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['truth\\pred'] + [str(c) for c in range(1, n + 1)])
        for k in range(n):
            writer.writerow([str(k + 1)] + [str(int(v)) for v in counts.matrix[k]])


def summarize(values):
    """ Mean and population standard deviation of repeated scores. """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError('no scores to summarize')
    return float(values.mean()), float(values.std())


def _modal(labels, n_classes):
    # bincount argmax keeps the first maximum: ties go to the lowest class
    return int(np.bincount(labels - 1, minlength=n_classes).argmax()) + 1


def label_clusters_majority(assignments, labels, k, n_classes=None):
    """ Map each of the ``k`` clusters to the most frequent train class among its members.

    Returns an int array ``m`` with ``m[cluster]`` a 1-based class.
    """
    if labels is None:
        raise LabelError(None, n_classes)
    assignments = np.asarray(assignments, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if assignments.shape != labels.shape:
        raise ShapeError('cluster assignments', labels.shape, assignments.shape)
    if labels.size == 0:
        raise EmptyInputError('no train labels')
    if n_classes is None:
        n_classes = int(labels.max())
    fallback = _modal(labels, n_classes)
    mapping = np.full(k, fallback, dtype=np.int64)
    empty = []
    for cluster in range(k):
        members = labels[assignments == cluster]
        if members.size:
            mapping[cluster] = _modal(members, n_classes)
        else:
            empty.append(cluster)
    if empty:
        log.warn(logger, 'Clusters {} are empty; mapped to the global majority class {}',
                 ', '.join(str(c) for c in empty), fallback)
    return mapping


def label_clusters_limited(assignment, labels, k, per_cluster, selection='closest', seed=0,
                           n_classes=None):
    """ Label each cluster from at most ``per_cluster`` annotated members.

    ``assignment`` is the result of assigning the train split (``indices`` and ``errors``).
    ``closest`` picks the members reconstructed best by the cluster prototype, ``random`` a
    uniform sample. Clusters smaller than ``per_cluster`` use all their members.
    """
    if selection not in ('closest', 'random'):
        raise ConfigError('selection', selection, 'expected closest or random')
    if per_cluster < 1:
        raise ConfigError('per_cluster', per_cluster, 'must be >= 1')
    if labels is None:
        raise LabelError(None, n_classes)
    indices = np.asarray(assignment.indices, dtype=np.int64)
    errors = np.asarray(assignment.errors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    chosen = []
    for cluster in range(k):
        members = np.flatnonzero(indices == cluster)
        if members.size > per_cluster:
            if selection == 'closest':
                order = np.argsort(errors[members], kind='stable')
                members = members[order[:per_cluster]]
            else:
                members = np.sort(rng.choice(members, size=per_cluster, replace=False))
        chosen.append(members)
    chosen = np.concatenate(chosen) if chosen else np.empty(0, dtype=np.int64)
    return label_clusters_majority(indices[chosen], labels[chosen], k,
                                   n_classes if n_classes is not None else int(labels.max()))
