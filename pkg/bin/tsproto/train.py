""" Prototype initialization, K-means, curriculum training and assignment.

Training grows the model in stages. Each stage runs until the validation metric (mean accuracy
when supervised, mean reconstruction error otherwise) has not strictly improved for ``patience``
consecutive validations::

    raw -> time_warp -> offset [-> contrastive, supervised only]

The run returned is the best validation snapshot over all stages.
"""
import copy
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from tsproto import grad, log
from tsproto.baselines import class_centroids, masked_distance_matrix
from tsproto.core import HyperParams, PrototypeBank
from tsproto.encoder import EncoderDims, encode, init_weights
from tsproto.exceptions import ConfigError, DivergenceError, EmptyInputError, LabelError
from tsproto.losses import Batch, Deformation, distances, loss_total
from tsproto.metrics import mean_accuracy
from tsproto.transform import WarpConfig

logger = logging.getLogger(__name__)

STAGES = ('raw', 'time_warp', 'offset', 'contrastive')
LOG_FIELDS = ('step', 'stage', 'rec', 'tv', 'cont', 'total', 'metric', 'patience')
# Relative size of the perturbation that reseeds an empty cluster.
REASSIGN_NOISE = 1e-4


class KMeansResult(NamedTuple):
    bank: PrototypeBank
    assignments: np.ndarray
    objective: List[float]


class Assignment(NamedTuple):
    """ Per series: best prototype (0-based), its error, and the full (N, K) error table. """
    indices: np.ndarray
    errors: np.ndarray
    distances: np.ndarray


@dataclass
class CurriculumState:
    stages: tuple = STAGES[:3]
    stage: int = 0
    best: Optional[float] = None
    counter: int = 0
    history: list = field(default_factory=list)
    steps: int = 0

    @property
    def name(self):
        return self.stages[self.stage]

    @property
    def final(self):
        return self.stage == len(self.stages) - 1

    def uses(self, stage_name):
        return stage_name in self.stages[:self.stage + 1]


@dataclass
class TrainRun:
    bank: PrototypeBank
    weights: object
    hyper: HyperParams
    mode: str
    cfg: WarpConfig
    state: CurriculumState
    seed: int = 0
    log_path: Optional[str] = None
    threads: int = 1

    @property
    def k(self):
        return self.bank.k


def _objective(distance, assignments):
    return float(distance[np.arange(len(assignments)), assignments].sum())


def _reseed_empty(centroids, counts, rng):
    largest = int(np.argmax(counts))
    empty = np.flatnonzero(counts == 0)
    for k in empty:
        base = centroids[largest]
        noise = rng.normal(size=base.shape)
        noise *= REASSIGN_NOISE * np.linalg.norm(base) / max(np.linalg.norm(noise), 1e-300)
        centroids[k] = base + noise
    return empty


def _kmeans_plus_plus(values, weights, k, rng):
    n = values.shape[0]
    chosen = [int(rng.integers(n))]
    closest = masked_distance_matrix(values, weights, values[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n, p=closest / total))
        else:
            index = int(rng.integers(n))
        chosen.append(index)
        closest = np.minimum(closest, masked_distance_matrix(values, weights, values[[index]])[:, 0])
    return np.array(values[chosen], dtype=np.float64)


def _weighted_means(values, weights, assignments, centroids):
    """ Stamp-wise weighted mean of every cluster; stamps nobody observes keep the old value. """
    updated = np.array(centroids)
    for k in range(centroids.shape[0]):
        members = assignments == k
        if not members.any():
            continue
        w = weights[members]
        total = w.sum(axis=0)
        observed = total > 0
        mean = np.einsum('nt,ntc->tc', w, values[members])
        updated[k, observed] = mean[observed] / total[observed, None]
    return updated


def kmeans(d, k, seed=0, max_iters=100, batch_size=0):
    """ Masked K-means with k-means++ seeding and empty cluster reseeding.

    ``batch_size`` 0 runs full-batch Lloyd iterations, whose objective never increases; a
    positive value runs mini-batch updates with per-cluster, per-stamp learning rates.
    """
    n = len(d)
    if k < 1:
        raise ConfigError('k', k, 'must be >= 1')
    if n < k:
        raise EmptyInputError('{} series for {} clusters'.format(n, k))
    rng = np.random.default_rng(seed)
    values = d.values.astype(np.float64)
    weights = d.weights.astype(np.float64)
    weights = weights / weights.sum(axis=1, keepdims=True)
    centroids = _kmeans_plus_plus(values, weights, k, rng)
    objective = []
    assignments = None

    if batch_size:
        counts = np.zeros((k,) + weights.shape[1:])
        for _ in range(max_iters):
            batch = rng.choice(n, size=min(batch_size, n), replace=False)
            distance = masked_distance_matrix(values[batch], weights[batch], centroids)
            nearest = np.argmin(distance, axis=1)
            for cluster in np.unique(nearest):
                members = batch[nearest == cluster]
                w = weights[members]
                counts[cluster] += w.sum(axis=0)
                seen = counts[cluster] > 0
                step = np.einsum('nt,ntc->tc', w, values[members] - centroids[cluster])
                centroids[cluster, seen] += step[seen] / counts[cluster, seen, None]
            populated = np.bincount(nearest, minlength=k)
            reseeded = _reseed_empty(centroids, populated, rng)
            counts[reseeded] = 0.0
        distance = masked_distance_matrix(values, weights, centroids)
        assignments = np.argmin(distance, axis=1)
        objective.append(_objective(distance, assignments))
    else:
        for iteration in range(max_iters):
            distance = masked_distance_matrix(values, weights, centroids)
            nearest = np.argmin(distance, axis=1)
            objective.append(_objective(distance, nearest))
            populated = np.bincount(nearest, minlength=k)
            converged = assignments is not None and np.array_equal(nearest, assignments)
            assignments = nearest
            if converged and populated.all():
                break
            reseeded = _reseed_empty(centroids, populated, rng)
            if reseeded.size:
                logger.debug('K-means iteration {}: reseeded clusters {}'.format(
                    iteration, reseeded.tolist()))
            centroids = _weighted_means(values, weights, assignments, centroids)
    logger.info('K-means with K={} on {} series: objective {:.6g}'.format(
        k, n, objective[-1] if objective else float('nan')))
    return KMeansResult(PrototypeBank(centroids), assignments, objective)


def init_prototypes(d, mode, k, seed=0, max_iters=100, batch_size=0):
    """ Class centroids (``ncc``) or K-means centroids (``kmeans``). """
    if mode == 'ncc':
        if d.labels is None:
            raise LabelError(None, k)
        if k != d.n_classes:
            raise ConfigError('k', k, 'nearest centroid initialization needs one prototype per '
                                      'class ({})'.format(d.n_classes))
        return PrototypeBank(class_centroids(d.values, d.weights, d.zero_based_labels(), k))
    if mode == 'kmeans':
        return kmeans(d, k, seed, max_iters, batch_size).bank
    raise ConfigError('init', mode, 'expected ncc or kmeans')


def init_run(d_train, mode, hyper, seed=0, kmeans_iters=100, kmeans_batch_size=0, log_path=None,
             threads=1):
    """ A fresh run: initialized prototypes, identity-predicting encoder, first stage. """
    if mode == 'sup':
        if d_train.labels is None:
            raise LabelError(None, d_train.n_classes)
        k = d_train.n_classes
        bank = init_prototypes(d_train, 'ncc', k, seed)
        stages = STAGES
    elif mode == 'unsup':
        k = hyper.k
        bank = init_prototypes(d_train, 'kmeans', k, seed, kmeans_iters, kmeans_batch_size)
        stages = STAGES[:3]
    else:
        raise ConfigError('mode', mode, 'expected sup or unsup')
    cfg = WarpConfig(d_train.length, hyper.n_landmarks(d_train.length))
    dims = EncoderDims(d_train.length, d_train.channels, k, cfg.n_landmarks, hyper.filters,
                       hyper.kernels)
    weights = init_weights(dims, seed)
    weights.warp_scale = hyper.warp_scale
    weights.momentum = hyper.bn_momentum
    return TrainRun(bank=bank, weights=weights, hyper=hyper, mode=mode, cfg=cfg,
                    state=CurriculumState(stages=stages), seed=seed, log_path=log_path,
                    threads=threads)


def _deformation(state, offset, warp):
    return Deformation(offset=offset if state.uses('offset') else None,
                       warp=warp if state.uses('time_warp') else None)


def _chunk_distances(run, batch):
    if not run.state.uses('time_warp'):
        return masked_distance_matrix(batch.values, batch.weights, run.bank.prototypes)
    offset, warp, _ = encode(run.weights, run.weights.params, batch.values, training=False)
    d = distances(batch, run.bank, _deformation(run.state, offset, warp), run.cfg)
    return d.value


def assign(run, d):
    """ Best prototype per series after deformation; ties go to the lowest index.

    Series are processed in chunks of ``batch_size``, on ``run.threads`` threads; results are
    concatenated in chunk order.
    """
    size = run.hyper.batch_size
    chunks = [Batch.from_dataset(d, np.arange(start, min(start + size, len(d))))
              for start in range(0, len(d), size)]
    if run.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=run.threads) as pool:
            parts = list(pool.map(lambda batch: _chunk_distances(run, batch), chunks))
    else:
        parts = [_chunk_distances(run, batch) for batch in chunks]
    table = np.concatenate(parts, axis=0)
    indices = np.argmin(table, axis=1)
    return Assignment(indices, table[np.arange(len(indices)), indices], table)


def predict(run, d):
    """ 1-based classes (supervised) or 0-based cluster indices (unsupervised). """
    indices = assign(run, d).indices
    return indices + 1 if run.mode == 'sup' else indices


def _validate(run, d_val):
    result = assign(run, d_val)
    if run.mode == 'sup':
        return mean_accuracy(result.indices + 1, d_val.labels, run.k)
    return float(result.errors.mean())


def _improved(run, metric, best):
    if best is None:
        return True
    return metric > best if run.mode == 'sup' else metric < best


def _snapshot(run):
    return run.bank, run.weights.copy(), copy.deepcopy(run.state)


def _write_log_row(run, row):
    if run.log_path is None:
        return
    with open(run.log_path, 'a', newline='') as stream:
        csv.DictWriter(stream, LOG_FIELDS).writerow(row)


def _train_step(run, params, adam, batch):
    state = run.state
    tape = grad.Tape()
    leaves = dict((name, tape.watch(value, name)) for name, value in params.items())
    if state.uses('time_warp'):
        offset, warp, running = encode(run.weights, leaves, batch.values, training=True)
        deformation = _deformation(state, offset, warp)
    else:
        running, deformation = None, None
    total, report = loss_total(batch, leaves['prototypes'], deformation, run.cfg, run.mode,
                               run.hyper, contrastive=state.uses('contrastive'))
    if not np.isfinite(report.total):
        raise DivergenceError(state.steps, state.name, report.total)
    params, adam = grad.adam_step(params, grad.backward(tape, total), adam,
                                  run.hyper.learning_rate)
    if running is not None:
        run.weights.running.update(running)
    return params, adam, report


def _trainable(run):
    params = {'prototypes': np.array(run.bank.prototypes)}
    if run.state.uses('time_warp'):
        params.update(run.weights.params)
    return params


def _store(run, params):
    run.bank = PrototypeBank(params['prototypes'])
    for name in run.weights.params:
        if name in params:
            run.weights.params[name] = params[name]


def train_curriculum(run, d_train, d_val, mode=None):
    """ Train ``run`` in place through its curriculum and return it at its best validation. """
    if mode is not None and mode != run.mode:
        raise ConfigError('mode', mode, 'run was initialized for {}'.format(run.mode))
    if len(d_train) == 0 or len(d_val) == 0:
        raise EmptyInputError('train and validation splits need series')
    if run.mode == 'sup' and d_val.labels is None:
        raise LabelError(None, run.k)
    run.bank.check(d_train)
    hyper = run.hyper
    state = run.state
    rng = np.random.default_rng(run.seed)
    if run.log_path is not None:
        with open(run.log_path, 'w', newline='') as stream:
            csv.DictWriter(stream, LOG_FIELDS).writeheader()

    metric = _validate(run, d_val)
    state.best = metric
    state.history.append({'step': 0, 'stage': state.name, 'metric': metric})
    _write_log_row(run, {'step': 0, 'stage': state.name, 'metric': metric, 'patience': 0})
    best_metric, best = metric, _snapshot(run)
    logger.info('Initial validation metric {:.6g}'.format(metric))

    adam = grad.AdamState()
    params = _trainable(run)
    size = min(hyper.batch_size, len(d_train))
    report = None
    while state.steps < hyper.max_steps:
        indices = np.sort(rng.choice(len(d_train), size=size, replace=False))
        params, adam, report = _train_step(run, params, adam, Batch.from_dataset(d_train, indices))
        state.steps += 1
        if state.steps % hyper.validation_interval:
            continue

        _store(run, params)
        metric = _validate(run, d_val)
        if _improved(run, metric, state.best):
            state.best = metric
            state.counter = 0
        else:
            state.counter += 1
        if _improved(run, metric, best_metric):
            best_metric, best = metric, _snapshot(run)
        row = {'step': state.steps, 'stage': state.name, 'rec': report.rec, 'tv': report.tv,
               'cont': report.cont, 'total': report.total, 'metric': metric,
               'patience': state.counter}
        state.history.append(row)
        _write_log_row(run, row)
        logger.debug('Step {} ({}): loss {:.6g}, metric {:.6g}, patience {}/{}'.format(
            state.steps, state.name, report.total, metric, state.counter, hyper.patience))

        if state.counter >= hyper.patience:
            if state.final:
                logger.info('Stage {} exhausted patience at step {}; training done'.format(
                    state.name, state.steps))
                break
            state.stage += 1
            state.counter = 0
            state.best = metric
            logger.info('Step {}: moving to stage {}'.format(state.steps, state.name))
            params = _trainable(run)
    else:
        _store(run, params)
        log.warn(logger, 'Reached max_steps={} in stage {}', hyper.max_steps, state.name)

    run.bank, run.weights, best_state = best
    # keep the full history, restore the stage the best snapshot was taken in
    best_state.history = state.history
    best_state.steps = state.steps
    run.state = best_state
    logger.info('Best validation metric {:.6g} in stage {}'.format(best_metric, run.state.name))
    return run
