""" The parameter predictor: a fully convolutional encoder shared by all prototypes and one
linear head with K x (C + M) outputs.

Each encoder block is a 'same' convolution (no bias), batch normalization and ReLU; the blocks
are followed by global average pooling over time. Head outputs go through tanh; for prototype
``k`` the first C give the offset and the next M, multiplied by ``warp_scale``, the landmark
shifts. The head starts at zero so every predicted deformation is the identity.

Parameters are kept in an ordered ``{name: array}`` dict, the order the checkpoint manifest
records::

    conv0.kernel  conv0.gamma  conv0.beta   (one triple per block)
    head.kernel   head.bias

Running normalization statistics (``conv<i>.mean`` / ``conv<i>.var``) live beside them in
``PredictorWeights.running``; they are updated by training, not by the optimizer.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from tsproto import grad
from tsproto.exceptions import ShapeError
from tsproto.transform import TransformParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderDims:
    length: int
    channels: int
    k: int
    n_landmarks: int
    filters: Sequence[int] = (128, 256, 128)
    kernels: Sequence[int] = (8, 5, 3)

    @property
    def head_width(self):
        return self.k * (self.channels + self.n_landmarks)


@dataclass(eq=False)
class PredictorWeights:
    dims: EncoderDims
    params: OrderedDict
    running: OrderedDict
    warp_scale: float = 7.0
    momentum: float = 0.9

    @property
    def blocks(self):
        return len(self.dims.filters)

    def copy(self):
        return PredictorWeights(self.dims, OrderedDict((n, np.array(v)) for n, v in self.params.items()),
                                OrderedDict((n, np.array(v)) for n, v in self.running.items()),
                                self.warp_scale, self.momentum)


@dataclass(frozen=True, eq=False)
class ParamBatch:
    """ Deformations for B inputs and K prototypes: offsets (B, K, C), shifts (B, K, M). """
    offset: np.ndarray
    warp: np.ndarray
    warp_scale: float = 7.0

    def __len__(self):
        return self.offset.shape[0]

    def params(self, i, k):
        return TransformParams(self.offset[i, k], self.warp[i, k], self.warp_scale)


def init_weights(dims, seed=0):
    """ He-normal convolution kernels, unit normalization scale, all-zero head. """
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    running = OrderedDict()
    channels = dims.channels
    for i, (features, width) in enumerate(zip(dims.filters, dims.kernels)):
        fan_in = width * channels
        params['conv%d.kernel' % i] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                                 size=(width, channels, features))
        params['conv%d.gamma' % i] = np.ones(features)
        params['conv%d.beta' % i] = np.zeros(features)
        running['conv%d.mean' % i] = np.zeros(features)
        running['conv%d.var' % i] = np.ones(features)
        channels = features
    params['head.kernel'] = np.zeros((channels, dims.head_width))
    params['head.bias'] = np.zeros(dims.head_width)
    return PredictorWeights(dims, params, running)


def encode(weights, values, x, training=False):
    """ Forward pass on x (B, T, C). ``values`` maps parameter names to arrays or tape leaves.

    Returns ``(offset, warp, running)``: Tensors of shape (B, K, C) and (B, K, M), and the
    normalization statistics after this pass (unchanged unless ``training``).
    """
    dims = weights.dims
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (dims.length, dims.channels):
        raise ShapeError('encoder input', ('B', dims.length, dims.channels), x.shape)
    running = OrderedDict(weights.running)
    hidden = x
    for i in range(weights.blocks):
        hidden = grad.conv1d(hidden, values['conv%d.kernel' % i])
        gamma, beta = values['conv%d.gamma' % i], values['conv%d.beta' % i]
        if training:
            hidden, batch_mean, batch_var = grad.batchnorm(hidden, gamma, beta)
            m = weights.momentum
            running['conv%d.mean' % i] = m * running['conv%d.mean' % i] + (1 - m) * batch_mean
            running['conv%d.var' % i] = m * running['conv%d.var' % i] + (1 - m) * batch_var
        else:
            scale = 1.0 / np.sqrt(running['conv%d.var' % i] + grad.BN_EPSILON)
            hidden = (hidden - running['conv%d.mean' % i]) * scale * gamma + beta
        hidden = grad.relu(hidden)
    pooled = grad.mean(hidden, axis=1)
    out = grad.tanh(grad.matmul(pooled, values['head.kernel']) + values['head.bias'])
    out = out.reshape(x.shape[0], dims.k, dims.channels + dims.n_landmarks)
    offset = out[:, :, :dims.channels]
    warp = out[:, :, dims.channels:] * weights.warp_scale
    return offset, warp, running


def predict_params(x, weights):
    """ Inference-mode deformations for the series x (B, T, C). """
    offset, warp, _ = encode(weights, weights.params, x, training=False)
    return ParamBatch(offset.value, warp.value, weights.warp_scale)
