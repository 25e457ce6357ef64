""" Training objectives.

All reconstruction terms share one (B, K) matrix of masked errors::

    d[i, k] = 1/C sum_t (m_i[t] / sum m_i) |x_i[t] - R_k(x_i)[t]|^2

which is :func:`masked_mse` of sample ``i`` against its reconstruction by prototype ``k``. Every
function accepts plain arrays or :class:`grad.Tensor` values; with tensors the result is recorded
on their tape.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from tsproto import grad
from tsproto.core import PrototypeBank
from tsproto.exceptions import EmptyInputError, LabelError, ShapeError
from tsproto.transform import warp_positions

logger = logging.getLogger(__name__)


class Batch(NamedTuple):
    """ Stacked inputs: values (B, T, C), mask weights (B, T), optional 1-based labels (B,). """
    values: np.ndarray
    weights: np.ndarray
    labels: Optional[np.ndarray] = None

    @classmethod
    def from_dataset(cls, d, indices=None):
        if indices is None:
            indices = np.arange(len(d))
        labels = None if d.labels is None else d.labels[indices]
        return cls(d.values[indices].astype(np.float64), d.weights[indices].astype(np.float64),
                   labels)

    def __len__(self):
        return self.values.shape[0]


class Deformation(NamedTuple):
    """ Offsets (B, K, C) and landmark shifts (B, K, M); ``None`` disables a transform. """
    offset: Optional[object] = None
    warp: Optional[object] = None


@dataclass(frozen=True)
class LossReport:
    rec: float
    tv: float
    cont: float
    total: float
    assignments: np.ndarray


def _prototypes(bank):
    return bank.prototypes if isinstance(bank, PrototypeBank) else bank


def _normalized_weights(weights):
    weights = np.asarray(weights, dtype=np.float64)
    mass = weights.sum(axis=-1, keepdims=True)
    if np.any(mass <= 0):
        raise EmptyInputError('mask with zero total weight')
    return weights / mass


def masked_mse(x, r, m):
    """ Weighted mean squared error of one series ``x`` against ``r`` (both T x C). """
    x = np.asarray(getattr(x, 'values', x), dtype=np.float64)
    r = np.asarray(getattr(r, 'values', r), dtype=np.float64)
    if x.shape != r.shape:
        raise ShapeError('reconstruction', x.shape, r.shape)
    weights = _normalized_weights(getattr(m, 'weights', m))
    return float(np.sum(weights * np.mean((x - r) ** 2, axis=-1)))


def reconstructions(bank, params, cfg, batch_size):
    """ R_k(x_i) for every sample and prototype: (B, K, T, C). Warp first, then offset. """
    prototypes = _prototypes(bank)
    k, length, channels = np.shape(getattr(prototypes, 'value', prototypes))
    offset = getattr(params, 'offset', None)
    warp = getattr(params, 'warp', None)
    if warp is not None:
        recon = grad.gather_interp(prototypes, warp_positions(cfg, warp))
    else:
        recon = grad.reshape(prototypes, (1, k, length, channels))
    if offset is not None:
        recon = recon + grad.reshape(offset, (batch_size, k, 1, channels))
    return recon


def distances(batch, bank, params=None, cfg=None):
    """ Masked reconstruction errors d (B, K). """
    if len(batch) == 0:
        raise EmptyInputError('empty batch')
    weights = _normalized_weights(batch.weights)
    recon = reconstructions(bank, params, cfg, len(batch))
    residual = recon - batch.values[:, None]
    per_step = grad.mean(grad.square(residual), axis=-1)
    return grad.sum(per_step * weights[:, None, :], axis=-1)


def _zero_based(labels, k):
    if labels is None:
        raise LabelError(None, k)
    labels = np.asarray(labels, dtype=np.int64)
    bad = labels[(labels < 1) | (labels > k)]
    if bad.size:
        raise LabelError(int(bad[0]), k)
    return labels - 1


def _value_of(d):
    return getattr(d, 'value', d)


def rec_unsup_from_distances(d):
    # np.argmin and grad.min agree on ties: the first minimum wins
    return grad.mean(grad.min(d, axis=-1)), np.argmin(_value_of(d), axis=-1)


def rec_sup_from_distances(d, labels):
    values = _value_of(d)
    target = _zero_based(labels, values.shape[-1])
    return grad.mean(grad.getitem(d, (np.arange(values.shape[0]), target)))


def contrastive_from_distances(d, labels, scale=1.0):
    """ Mean of -log softmax(-d / scale) at the true class, via log-sum-exp. """
    values = _value_of(d)
    target = _zero_based(labels, values.shape[-1])
    scaled = d * (1.0 / scale)
    picked = grad.getitem(scaled, (np.arange(values.shape[0]), target))
    return grad.mean(picked + grad.logsumexp(-scaled, axis=-1))


def _contrastive_scale(batch, normalized):
    # masked_mse averages over T and C; the contrastive exponent uses the plain squared norm
    length, channels = batch.values.shape[1:]
    return 1.0 if normalized else 1.0 / (length * channels)


def loss_rec_unsup(batch, bank, params=None, cfg=None):
    """ Mean over the batch of the best prototype's error; returns ``(loss, argmin)``. """
    return rec_unsup_from_distances(distances(batch, bank, params, cfg))


def loss_rec_sup(batch, bank, params=None, cfg=None):
    return rec_sup_from_distances(distances(batch, bank, params, cfg), batch.labels)


def loss_contrastive(batch, bank, params=None, cfg=None, normalized=False):
    d = distances(batch, bank, params, cfg)
    return contrastive_from_distances(d, batch.labels, _contrastive_scale(batch, normalized))


def loss_tv(bank):
    """ Mean L2 norm of consecutive prototype differences, per channel. """
    prototypes = _prototypes(bank)
    k, length, channels = np.shape(getattr(prototypes, 'value', prototypes))
    if length < 2:
        raise ShapeError('prototypes', 'T >= 2', length)
    steps = grad.getitem(prototypes, (slice(None), slice(1, None))) - grad.getitem(
        prototypes, (slice(None), slice(None, -1)))
    norms = grad.sqrt(grad.sum(grad.square(steps), axis=-1))
    return grad.sum(norms) * (1.0 / (k * (length - 1) * channels))


def loss_total(batch, bank, params, cfg, mode, hyper, contrastive=False):
    """ ``rec + lambda tv`` (unsup) or ``rec_sup + mu tv [+ nu cont]`` (sup).

    Returns ``(total, report)``; ``total`` is the value to differentiate.
    """
    d = distances(batch, bank, params, cfg)
    tv = loss_tv(bank)
    cont = None
    if mode == 'unsup':
        rec, assignments = rec_unsup_from_distances(d)
        total = rec + tv * hyper.lambda_tv
    elif mode == 'sup':
        rec = rec_sup_from_distances(d, batch.labels)
        assignments = np.argmin(_value_of(d), axis=-1)
        total = rec + tv * hyper.mu_tv
        if contrastive:
            scale = _contrastive_scale(batch, hyper.cont_normalized)
            cont = contrastive_from_distances(d, batch.labels, scale)
            total = total + cont * hyper.nu_cont
    else:
        raise ValueError('mode must be sup or unsup, not {!r}'.format(mode))
    report = LossReport(rec=float(rec.value), tv=float(tv.value),
                        cont=0.0 if cont is None else float(cont.value),
                        total=float(total.value), assignments=np.asarray(assignments))
    return total, report
