""" Model checkpoints.

A checkpoint is one JSON header line followed by raw little-endian float32 data::

    {"format": "tsproto-checkpoint", "version": 1, "mode": "sup", ...,
     "layers": [{"name": "prototypes", "shape": [K, T, C]}, {"name": "conv0.kernel", ...}, ...]}
    <float32 data of every layer, in manifest order>

The manifest lists the prototypes first, then the trainable encoder parameters, then the running
normalization statistics.
"""
import dataclasses
import json
import logging
from collections import OrderedDict

import numpy as np

from tsproto.core import ChannelStats, HyperParams, PrototypeBank
from tsproto.encoder import EncoderDims, PredictorWeights
from tsproto.exceptions import DataFormatError
from tsproto.train import CurriculumState, TrainRun
from tsproto.transform import WarpConfig

logger = logging.getLogger(__name__)

FORMAT = 'tsproto-checkpoint'
VERSION = 1


def _layers(run):
    layers = OrderedDict([('prototypes', run.bank.prototypes)])
    layers.update(run.weights.params)
    layers.update(run.weights.running)
    return layers


def save(run, path, stats=None):
    """ Write ``run`` (and the channel statistics its inputs were normalized with) to ``path``. """
    layers = _layers(run)
    header = OrderedDict([
        ('format', FORMAT),
        ('version', VERSION),
        ('mode', run.mode),
        ('stages', list(run.state.stages)),
        ('stage', run.state.stage),
        ('seed', run.seed),
        ('hyper', dataclasses.asdict(run.hyper)),
        ('dims', dataclasses.asdict(run.weights.dims)),
        ('warp_scale', run.weights.warp_scale),
        ('momentum', run.weights.momentum),
        ('stats', None if stats is None else {'mean': stats.mean.tolist(),
                                              'std': stats.std.tolist()}),
        ('layers', [{'name': name, 'shape': list(value.shape)} for name, value in layers.items()]),
    ])
    with open(path, 'wb') as stream:
        stream.write(json.dumps(header, separators=(',', ':')).encode('utf-8') + b'\n')
        for value in layers.values():
            stream.write(np.ascontiguousarray(value, dtype='<f4').tobytes())
    logger.info('Saved checkpoint with {} layers to {}'.format(len(layers), path))


def load(path):
    """ Read a checkpoint. Returns ``(run, stats)``; ``stats`` is ``None`` when none were saved. """
    with open(path, 'rb') as stream:
        data = stream.read()
    end = data.find(b'\n')
    try:
        if end < 0:
            raise DataFormatError(1, 'missing checkpoint header')
        try:
            header = json.loads(data[:end].decode('utf-8'), object_pairs_hook=OrderedDict)
        except ValueError as e:
            raise DataFormatError(1, 'bad checkpoint header: {}'.format(e))
        if header.get('format') != FORMAT:
            raise DataFormatError(1, 'not a checkpoint file')
        if header.get('version') != VERSION:
            raise DataFormatError(1, 'unsupported checkpoint version {}'.format(header.get('version')))

        layers = OrderedDict()
        offset = end + 1
        for layer in header['layers']:
            shape = tuple(layer['shape'])
            count = int(np.prod(shape))
            if offset + 4 * count > len(data):
                raise DataFormatError(None, 'checkpoint truncated in layer {}'.format(layer['name']))
            values = np.frombuffer(data, dtype='<f4', count=count, offset=offset)
            layers[layer['name']] = values.astype(np.float64).reshape(shape)
            offset += 4 * count
        if offset != len(data):
            raise DataFormatError(None, '{} unexpected trailing bytes'.format(len(data) - offset))
    except DataFormatError as e:
        e.path = path
        raise

    hyper = header['hyper']
    hyper = HyperParams(**dict(hyper, filters=tuple(hyper['filters']),
                               kernels=tuple(hyper['kernels'])))
    dims = header['dims']
    dims = EncoderDims(**dict(dims, filters=tuple(dims['filters']), kernels=tuple(dims['kernels'])))
    bank = PrototypeBank(layers.pop('prototypes'))
    running = OrderedDict((n, layers.pop(n)) for n in list(layers) if n.endswith(('.mean', '.var')))
    weights = PredictorWeights(dims, layers, running, header['warp_scale'], header['momentum'])
    state = CurriculumState(stages=tuple(header['stages']), stage=header['stage'])
    run = TrainRun(bank=bank, weights=weights, hyper=hyper, mode=header['mode'],
                   cfg=WarpConfig(dims.length, dims.n_landmarks), state=state, seed=header['seed'])
    stats = None
    if header.get('stats') is not None:
        stats = ChannelStats(header['stats']['mean'], header['stats']['std'])
    return run, stats
