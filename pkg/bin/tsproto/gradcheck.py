""" Finite-difference checks of the gradient engine.

Two suites share :func:`check_gradients`: one random instance per primitive, and random small
models (encoder, deformations and full loss, supervised and unsupervised). Instances whose
forward pass lies within ``margin`` of a kink (ReLU at zero, an interpolation position at an
integer, a tie in a minimum, a clip bound) are redrawn, since central differences straddle the
kink there.
"""
import logging
from collections import OrderedDict
from typing import NamedTuple

import numpy as np

from tsproto import grad
from tsproto.core import HyperParams
from tsproto.encoder import EncoderDims, encode, init_weights
from tsproto.losses import Batch, Deformation, loss_total
from tsproto.transform import WarpConfig

logger = logging.getLogger(__name__)

EPSILON = 1e-6
MARGIN = 1e-4
TOLERANCE = 1e-3
FLOOR = 1e-8
MAX_REDRAWS = 20


class CheckResult(NamedTuple):
    case: str
    errors: dict
    redraws: int

    @property
    def max_error(self):
        return max(self.errors.values()) if self.errors else 0.0


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    numeric = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), FLOOR)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _evaluate(build, params):
    tape = grad.Tape()
    leaves = OrderedDict((name, tape.watch(value, name)) for name, value in params.items())
    return tape, build(leaves)


def _central_difference(build, params, name, index, eps):
    results = []
    for sign in (1.0, -1.0):
        shifted = OrderedDict(params)
        value = np.array(params[name], dtype=np.float64)
        value.reshape(-1)[index] += sign * eps
        shifted[name] = value
        results.append(float(_evaluate(build, shifted)[1].value))
    return (results[0] - results[1]) / (2.0 * eps)


def check_gradients(build, params, eps=EPSILON, coordinates=0, rng=None):
    """ Relative error of the taped gradient of ``build(leaves)`` against central differences.

    ``coordinates`` > 0 compares that many randomly chosen entries of each parameter instead of
    all of them.
    """
    tape, loss = _evaluate(build, params)
    analytic = grad.backward(tape, loss)
    errors = OrderedDict()
    for name, value in params.items():
        size = np.size(value)
        indices = np.arange(size)
        if coordinates and size > coordinates:
            indices = np.sort((rng or np.random.default_rng()).choice(size, coordinates,
                                                                      replace=False))
        numeric = [_central_difference(build, params, name, i, eps) for i in indices]
        errors[name] = relative_error(analytic[name].reshape(-1)[indices], numeric)
    return errors


def near_kink(tape, margin=MARGIN):
    """ Whether any recorded non-smooth operation sits within ``margin`` of its kink. """
    for node in tape.nodes:
        op, saved = node['type'], node['saved']
        if op == 'relu':
            if np.any(np.abs(grad._value(node['children'][0])) < margin):
                return True
        elif op == 'sqrt':
            if np.any(node['value'].value < margin):
                return True
        elif op == 'clip':
            x = grad._value(node['children'][0])
            if np.any(np.abs(x - saved['low']) < margin) or np.any(np.abs(x - saved['high']) < margin):
                return True
        elif op == 'min':
            x = np.sort(grad._value(node['children'][0]), axis=saved['axis'])
            if x.shape[saved['axis']] > 1:
                gap = np.diff(np.take(x, [0, 1], axis=saved['axis']), axis=saved['axis'])
                if np.any(gap < margin):
                    return True
        elif op == 'gather_interp':
            positions = saved['lower'] + saved['frac']
            length = grad._value(node['children'][0]).shape[1]
            inside = (positions > margin) & (positions < length - 1 - margin)
            if np.any(np.abs(positions - np.round(positions))[inside] < margin):
                return True
    return False


def _case_arithmetic(rng):
    params = OrderedDict(a=rng.normal(size=(3, 4)), b=rng.uniform(0.5, 2.0, size=(4,)))

    def build(v):
        a, b = v['a'], v['b']
        return grad.sum((a * b + a / b - a) * grad.exp(-a * 0.5) + grad.neg(b))
    return build, params


def _case_matmul(rng):
    params = OrderedDict(w=rng.normal(size=(2, 3, 4)), x=rng.normal(size=(4, 5)))

    def build(v):
        return grad.sum(grad.tanh(grad.matmul(v['w'], v['x'])))
    return build, params


def _case_shapes(rng):
    params = OrderedDict(a=rng.normal(size=(2, 3, 4)), b=rng.normal(size=(2, 3, 2)))
    weights = rng.normal(size=(3, 6, 2))

    def build(v):
        joined = grad.concat([v['a'], v['b']], axis=-1)
        moved = grad.transpose(joined, (1, 2, 0))
        picked = grad.getitem(moved, (slice(None), slice(1, None)))
        return grad.sum(grad.reshape(picked, (3, 5, 2)) * weights[:, 1:]) + grad.mean(v['a'])
    return build, params


def _case_relu_clip(rng):
    params = OrderedDict(a=rng.normal(size=(5, 6)))
    weights = rng.normal(size=(5, 6))

    def build(v):
        return grad.sum(grad.relu(v['a']) * weights + grad.clip(v['a'], -0.5, 0.5))
    return build, params


def _case_sqrt_square(rng):
    params = OrderedDict(a=rng.normal(size=(4, 3)))

    def build(v):
        return grad.sum(grad.sqrt(grad.sum(grad.square(v['a']), axis=-1)))
    return build, params


def _case_reductions(rng):
    params = OrderedDict(a=rng.normal(size=(4, 5)))
    weights = rng.normal(size=4)

    def build(v):
        return (grad.sum(grad.logsumexp(v['a'], axis=-1) * weights)
                + grad.sum(grad.min(v['a'], axis=-1) * weights))
    return build, params


def _case_conv1d(rng):
    width = int(rng.integers(1, 5))
    params = OrderedDict(x=rng.normal(size=(2, 7, 3)), w=rng.normal(size=(width, 3, 4)))
    weights = rng.normal(size=(2, 7, 4))

    def build(v):
        return grad.sum(grad.conv1d(v['x'], v['w']) * weights)
    return build, params


def _case_batchnorm(rng):
    params = OrderedDict(x=rng.normal(size=(3, 5, 4)), gamma=rng.normal(size=4),
                         beta=rng.normal(size=4))
    weights = rng.normal(size=(3, 5, 4))

    def build(v):
        out, _, _ = grad.batchnorm(v['x'], v['gamma'], v['beta'])
        return grad.sum(out * weights)
    return build, params


def _case_gather(rng):
    length = 9
    params = OrderedDict(p=rng.normal(size=(2, length, 3)),
                         t=rng.uniform(0.0, length - 1.0, size=(3, 2, length)))
    weights = rng.normal(size=(3, 2, length, 3))

    def build(v):
        return grad.sum(grad.gather_interp(v['p'], v['t']) * weights)
    return build, params


PRIMITIVE_CASES = OrderedDict([
    ('arithmetic', _case_arithmetic),
    ('matmul', _case_matmul),
    ('shapes', _case_shapes),
    ('relu_clip', _case_relu_clip),
    ('sqrt_square', _case_sqrt_square),
    ('reductions', _case_reductions),
    ('conv1d', _case_conv1d),
    ('batchnorm', _case_batchnorm),
    ('gather_interp', _case_gather),
])


def model_case(rng, mode):
    """ A random small model: T <= 40, C <= 4, K <= 3, M <= 4, a non-zero head. """
    length = int(rng.integers(8, 41))
    channels = int(rng.integers(1, 5))
    k = int(rng.integers(1 if mode == 'unsup' else 2, 4))
    n_landmarks = int(rng.integers(2, 5))
    size = int(rng.integers(2, 5))
    cfg = WarpConfig(length, n_landmarks)
    dims = EncoderDims(length, channels, k, n_landmarks, filters=(4, 6, 4), kernels=(3, 3, 2))
    weights = init_weights(dims, int(rng.integers(2 ** 31)))
    weights.params['head.kernel'] = rng.normal(0.0, 0.3, size=weights.params['head.kernel'].shape)
    weights.params['head.bias'] = rng.normal(0.0, 0.1, size=weights.params['head.bias'].shape)
    values = rng.normal(size=(size, length, channels))
    mask = rng.uniform(0.1, 1.0, size=(size, length))
    mask[rng.random((size, length)) < 0.2] = 0.0
    mask[:, 0] = np.maximum(mask[:, 0], 0.1)
    labels = rng.integers(1, k + 1, size=size) if mode == 'sup' else None
    batch = Batch(values, mask, labels)
    hyper = HyperParams(k=k, filters=dims.filters, kernels=dims.kernels)

    def build(v):
        offset, warp, _ = encode(weights, v, values, training=True)
        total, _ = loss_total(batch, v['prototypes'], Deformation(offset, warp), cfg, mode, hyper,
                              contrastive=mode == 'sup')
        return total

    params = OrderedDict(prototypes=rng.normal(size=(k, length, channels)))
    params.update(weights.params)
    return build, params


def _run(name, make, rng, eps, coordinates, margin):
    for redraws in range(MAX_REDRAWS):
        build, params = make(rng)
        tape, _ = _evaluate(build, params)
        if not near_kink(tape, margin):
            break
    else:
        logger.warning('Case {} stayed near a kink after {} draws'.format(name, MAX_REDRAWS))
    errors = check_gradients(build, params, eps, coordinates, rng)
    return CheckResult(name, errors, redraws)


def run_suite(instances=100, seed=0, eps=EPSILON, coordinates=16, margin=MARGIN):
    """ ``instances`` draws of every primitive case and of the sup and unsup models. """
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(instances):
        for name, make in PRIMITIVE_CASES.items():
            results.append(_run(name, make, rng, eps, 0, margin))
        for mode in ('unsup', 'sup'):
            results.append(_run('model_' + mode, lambda r, m=mode: model_case(r, m), rng, eps,
                                coordinates, margin))
    worst = max(results, key=lambda r: r.max_error)
    logger.info('Gradient check: {} cases, max relative error {:.3g} ({})'.format(
        len(results), worst.max_error, worst.case))
    return results
