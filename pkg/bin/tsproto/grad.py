""" Reverse-mode gradients over the array operations the prototype model is built from.

Usage::

    tape = Tape()
    p = tape.watch(prototypes, 'prototypes')
    loss = grad.sum(p * p)
    grads = backward(tape, loss)      # {'prototypes': 2 * prototypes}

Every operation appends one node to the tape of its first recorded input. Nodes have the
structure ``{"type": <op>, "children": [inputs], "value": <output Tensor>, "saved": {...}}``
and are stored in creation order, which is a topological order. Inputs that are plain arrays
are constants and receive no gradient.
"""
import copy
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tsproto import log
from tsproto.exceptions import NonScalarLossError, ShapeError

logger = logging.getLogger(__name__)

BN_EPSILON = 1e-5


class Tensor(object):
    # Makes ndarray <op> Tensor defer to the reflected Tensor method.
    __array_priority__ = 100

    def __init__(self, value, tape=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return 'Tensor(shape=%s, name=%s)' % (self.shape, self.name)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = shape[0]
        return reshape(self, tuple(shape))


class Tape(object):
    def __init__(self):
        self.nodes = []
        self.leaves = []

    def watch(self, value, name):
        """ Register a leaf parameter; gradients are reported under ``name``. """
        if any(leaf.name == name for leaf in self.leaves):
            raise ValueError('Leaf {} is already watched'.format(name))
        leaf = Tensor(value, tape=self, name=name)
        self.leaves.append(leaf)
        return leaf

    def record(self, op, children, value, saved):
        output = Tensor(value, tape=self)
        self.nodes.append({'type': op, 'children': list(children), 'value': output,
                           'saved': saved})
        return output


def _value(a):
    return a.value if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)


def _record(op, children, value, **saved):
    for child in children:
        if isinstance(child, Tensor) and child.tape is not None:
            return child.tape.record(op, children, value, saved)
    return Tensor(value)


def _unbroadcast(grad, shape):
    """ Sum ``grad`` down to ``shape`` undoing numpy broadcasting. """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _expand(grad, shape, axis, keepdims):
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


def add(a, b):
    return _record('add', (a, b), _value(a) + _value(b))


def sub(a, b):
    return _record('sub', (a, b), _value(a) - _value(b))


def mul(a, b):
    return _record('mul', (a, b), _value(a) * _value(b))


def div(a, b):
    return _record('div', (a, b), _value(a) / _value(b))


def neg(a):
    return _record('neg', (a,), -_value(a))


def matmul(a, b):
    av, bv = _value(a), _value(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError('matmul operands', 'at least 2-D', (av.shape, bv.shape))
    return _record('matmul', (a, b), np.matmul(av, bv))


def sum(a, axis=None, keepdims=False):
    return _record('sum', (a,), np.sum(_value(a), axis=axis, keepdims=keepdims),
                   axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False):
    return _record('mean', (a,), np.mean(_value(a), axis=axis, keepdims=keepdims),
                   axis=axis, keepdims=keepdims)


def reshape(a, shape):
    return _record('reshape', (a,), np.reshape(_value(a), shape))


def transpose(a, axes):
    return _record('transpose', (a,), np.transpose(_value(a), axes), axes=tuple(axes))


def getitem(a, index):
    return _record('getitem', (a,), _value(a)[index], index=index)


def concat(tensors, axis=-1):
    values = [_value(t) for t in tensors]
    sizes = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _record('concat', tuple(tensors), np.concatenate(values, axis=axis), axis=axis,
                   sizes=sizes)


def tanh(a):
    return _record('tanh', (a,), np.tanh(_value(a)))


def relu(a):
    return _record('relu', (a,), np.maximum(_value(a), 0.0))


def exp(a):
    return _record('exp', (a,), np.exp(_value(a)))


def square(a):
    return _record('square', (a,), np.square(_value(a)))


def sqrt(a):
    """ Square root with a zero subgradient at 0. """
    return _record('sqrt', (a,), np.sqrt(_value(a)))


def clip(a, low, high):
    return _record('clip', (a,), np.clip(_value(a), low, high), low=low, high=high)


def logsumexp(a, axis=-1):
    av = _value(a)
    top = np.max(av, axis=axis, keepdims=True)
    out = top + np.log(np.sum(np.exp(av - top), axis=axis, keepdims=True))
    return _record('logsumexp', (a,), np.squeeze(out, axis=axis), axis=axis)


def min(a, axis=-1):
    """ Minimum along ``axis``; the gradient flows to the first minimal entry only. """
    av = _value(a)
    index = np.expand_dims(np.argmin(av, axis=axis), axis)
    out = np.take_along_axis(av, index, axis=axis)
    return _record('min', (a,), np.squeeze(out, axis=axis), axis=axis, index=index)


def conv1d(x, w):
    """ 'same' convolution of x (B, T, Cin) with w (k, Cin, Cout); left padding (k - 1) // 2. """
    xv, wv = _value(x), _value(w)
    width = wv.shape[0]
    if xv.ndim != 3 or wv.ndim != 3 or xv.shape[2] != wv.shape[1]:
        raise ShapeError('conv1d operands', '(B, T, Cin) and (k, Cin, Cout)', (xv.shape, wv.shape))
    left = (width - 1) // 2
    padded = np.pad(xv, ((0, 0), (left, width - 1 - left), (0, 0)))
    # (B, T, Cin, k) -> (B, T, k * Cin)
    columns = sliding_window_view(padded, width, axis=1).transpose(0, 1, 3, 2)
    columns = columns.reshape(xv.shape[0], xv.shape[1], width * xv.shape[2])
    out = columns @ wv.reshape(width * wv.shape[1], wv.shape[2])
    return _record('conv1d', (x, w), out, columns=columns, left=left)


def batchnorm(x, gamma, beta, axes=(0, 1)):
    """ Normalize every feature with the statistics of the batch. Returns (output, mean, var). """
    xv = _value(x)
    batch_mean = xv.mean(axis=axes, keepdims=True)
    batch_var = xv.var(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(batch_var + BN_EPSILON)
    normalized = (xv - batch_mean) * inv_std
    out = normalized * _value(gamma) + _value(beta)
    result = _record('batchnorm', (x, gamma, beta), out, normalized=normalized,
                     inv_std=inv_std, axes=axes)
    return result, np.squeeze(batch_mean, axis=axes), np.squeeze(batch_var, axis=axes)


def gather_interp(prototypes, positions):
    """ Sample prototypes (K, T, C) at fractional 0-based positions (B, K, T).

    Positions must already lie in [0, T - 1]. Returns (B, K, T, C).
    """
    pv, tv = _value(prototypes), _value(positions)
    length = pv.shape[1]
    lower = np.clip(np.floor(tv), 0, length - 2).astype(np.int64)
    frac = tv - lower
    k = np.arange(pv.shape[0])[None, :, None]
    low, high = pv[k, lower], pv[k, lower + 1]
    out = low * (1.0 - frac)[..., None] + high * frac[..., None]
    return _record('gather_interp', (prototypes, positions), out, lower=lower, frac=frac,
                   slope=high - low)


class Backward(object):
    """ Maps an output gradient to input gradients, one ``_grad_<op>`` method per primitive. """

    def __init__(self):
        self._method_cache = {}

    def visit(self, node, grad):
        node_type = node['type']
        method = self._method_cache.get(node_type)
        if method is None:
            method = getattr(self, '_grad_%s' % node_type, self.default_visit)
            self._method_cache[node_type] = method
        return method(node, grad)

    def default_visit(self, node, grad):
        raise NotImplementedError(node['type'])

    def _grad_add(self, node, grad):
        return grad, grad

    def _grad_sub(self, node, grad):
        return grad, -grad

    def _grad_mul(self, node, grad):
        a, b = node['children']
        return grad * _value(b), grad * _value(a)

    def _grad_div(self, node, grad):
        a, b = node['children']
        bv = _value(b)
        return grad / bv, -grad * _value(a) / (bv * bv)

    def _grad_neg(self, node, grad):
        return -grad,

    def _grad_matmul(self, node, grad):
        a, b = node['children']
        return (np.matmul(grad, np.swapaxes(_value(b), -1, -2)),
                np.matmul(np.swapaxes(_value(a), -1, -2), grad))

    def _grad_sum(self, node, grad):
        a = node['children'][0]
        return _expand(grad, a.shape, node['saved']['axis'], node['saved']['keepdims']),

    def _grad_mean(self, node, grad):
        a = node['children'][0]
        count = np.size(_value(a)) // max(np.size(node['value'].value), 1)
        expanded = _expand(grad, a.shape, node['saved']['axis'], node['saved']['keepdims'])
        return expanded / count,

    def _grad_reshape(self, node, grad):
        return grad.reshape(node['children'][0].shape),

    def _grad_transpose(self, node, grad):
        return grad.transpose(np.argsort(node['saved']['axes'])),

    def _grad_getitem(self, node, grad):
        a = node['children'][0]
        result = np.zeros(a.shape)
        np.add.at(result, node['saved']['index'], grad)
        return result,

    def _grad_concat(self, node, grad):
        return tuple(np.split(grad, node['saved']['sizes'], axis=node['saved']['axis']))

    def _grad_tanh(self, node, grad):
        out = node['value'].value
        return grad * (1.0 - out * out),

    def _grad_relu(self, node, grad):
        return grad * (_value(node['children'][0]) > 0),

    def _grad_exp(self, node, grad):
        return grad * node['value'].value,

    def _grad_square(self, node, grad):
        return 2.0 * grad * _value(node['children'][0]),

    def _grad_sqrt(self, node, grad):
        out = node['value'].value
        positive = out > 0
        return np.where(positive, grad / (2.0 * np.where(positive, out, 1.0)), 0.0),

    def _grad_clip(self, node, grad):
        av = _value(node['children'][0])
        inside = (av >= node['saved']['low']) & (av <= node['saved']['high'])
        return grad * inside,

    def _grad_logsumexp(self, node, grad):
        axis = node['saved']['axis']
        av = _value(node['children'][0])
        out = np.expand_dims(node['value'].value, axis)
        return np.expand_dims(grad, axis) * np.exp(av - out),

    def _grad_min(self, node, grad):
        axis = node['saved']['axis']
        result = np.zeros(node['children'][0].shape)
        np.put_along_axis(result, node['saved']['index'], np.expand_dims(grad, axis), axis=axis)
        return result,

    def _grad_conv1d(self, node, grad):
        x, w = node['children']
        wv = _value(w)
        width, channels, features = wv.shape
        columns = node['saved']['columns']
        batch, length = grad.shape[:2]
        grad_w = np.tensordot(columns, grad, axes=([0, 1], [0, 1])).reshape(wv.shape)
        grad_columns = (grad @ wv.reshape(width * channels, features).T).reshape(
            batch, length, width, channels)
        padded = np.zeros((batch, length + width - 1, channels))
        for j in range(width):
            padded[:, j:j + length] += grad_columns[:, :, j]
        left = node['saved']['left']
        return padded[:, left:left + length], grad_w

    def _grad_batchnorm(self, node, grad):
        _, gamma, _ = node['children']
        saved = node['saved']
        axes = saved['axes']
        normalized = saved['normalized']
        count = np.prod([normalized.shape[a] for a in axes])
        grad_gamma = np.sum(grad * normalized, axis=axes, keepdims=True)
        grad_beta = np.sum(grad, axis=axes, keepdims=True)
        scaled = grad * _value(gamma)
        grad_x = saved['inv_std'] / count * (
            count * scaled - np.sum(scaled, axis=axes, keepdims=True)
            - normalized * np.sum(scaled * normalized, axis=axes, keepdims=True))
        return grad_x, grad_gamma, grad_beta

    def _grad_gather_interp(self, node, grad):
        prototypes = node['children'][0]
        saved = node['saved']
        lower, frac = saved['lower'], saved['frac']
        k = np.arange(prototypes.shape[0])[None, :, None]
        grad_p = np.zeros(prototypes.shape)
        np.add.at(grad_p, (k, lower), grad * (1.0 - frac)[..., None])
        np.add.at(grad_p, (k, lower + 1), grad * frac[..., None])
        # right-sided slope at integer positions
        grad_positions = np.sum(grad * saved['slope'], axis=-1)
        return grad_p, grad_positions


def backward(tape, loss):
    """ Gradients of the scalar ``loss`` for every leaf watched on ``tape``, keyed by leaf name.

    Leaves the loss does not depend on get zeros.
    """
    if not isinstance(loss, Tensor) or loss.value.shape != ():
        raise NonScalarLossError(np.shape(_value(loss)))
    visitor = Backward()
    grads = {id(loss): np.ones(())}
    for node in reversed(tape.nodes):
        grad = grads.pop(id(node['value']), None)
        if grad is None:
            continue
        for child, child_grad in zip(node['children'], visitor.visit(node, grad)):
            if child_grad is None or not isinstance(child, Tensor) or child.tape is not tape:
                continue
            child_grad = _unbroadcast(np.asarray(child_grad, dtype=np.float64), child.shape)
            key = id(child)
            grads[key] = grads[key] + child_grad if key in grads else child_grad
    return OrderedDict((leaf.name, np.array(grads.get(id(leaf), np.zeros(leaf.shape))))
                       for leaf in tape.leaves)


@dataclass
class AdamState:
    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)
    # updates seen per parameter; one joining later gets its own bias correction
    counts: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(params, grads, state, learning_rate):
    """ One bias-corrected ADAM update. Returns ``(params, state)`` as new objects.

    A gradient holding NaN skips the whole step and leaves params and state as they were.
    """
    for name, value in params.items():
        if name not in grads or np.shape(grads[name]) != np.shape(value):
            raise ShapeError('gradient of %s' % name, np.shape(value),
                             np.shape(grads.get(name)))
    bad = [name for name in params if not np.all(np.isfinite(grads[name]))]
    if bad:
        log.warn(logger, 'Non-finite gradient for {}; optimizer step {} skipped',
                 ', '.join(bad), state.step + 1)
        return params, state

    state = copy.deepcopy(state)
    state.step += 1
    updated = OrderedDict()
    for name, value in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        count = state.counts.get(name, 0) + 1
        state.counts[name] = count
        correction1 = 1.0 - state.beta1 ** count
        correction2 = 1.0 - state.beta2 ** count
        first = state.beta1 * state.first.get(name, 0.0) + (1.0 - state.beta1) * g
        second = state.beta2 * state.second.get(name, 0.0) + (1.0 - state.beta2) * g * g
        state.first[name] = first
        state.second[name] = second
        step = learning_rate * (first / correction1) / (np.sqrt(second / correction2) + state.epsilon)
        updated[name] = value - step
    return updated, state
