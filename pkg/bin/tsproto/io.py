""" Dataset and raster files.

Dataset text format (one file per split)::

    T=<int>,C=<int>,N=<int>,labeled=<0|1>[,raw=<0|1>]
    <T*C values, time-major>          # one line per series
    <T mask weights>
    <label>                           # only when labeled=1

The binary variant starts with the magic ``PTS1`` followed by T, C, N, labeled, raw as
little-endian int32 (files without the raw field are still read) and then, per series, T*C
float32 values, T float32 weights and an int32 label when labeled.

Raster text format::

    H=<int>,W=<int>,kind=<labels|instances>
    <W integers>                      # H lines; -1 marks a void label pixel

The binary raster variant starts with ``PTR1`` then H, W, kind (0 labels, 1 instances) as int32
and H*W int32 cells, row-major.
"""
import logging

import numpy as np

from tsproto.aggregate import InstanceRaster, LabelRaster, VOID
from tsproto.core import Dataset, validate_dataset
from tsproto.exceptions import DataFormatError, ValidationError

logger = logging.getLogger(__name__)

DATASET_MAGIC = b'PTS1'
RASTER_MAGIC = b'PTR1'
_RASTER_KINDS = ('labels', 'instances')


def _parse_header(line, required, path=None):
    fields = {}
    for item in line.strip().split(','):
        if '=' not in item:
            raise DataFormatError(1, 'bad header item {!r}'.format(item), path)
        key, value = item.split('=', 1)
        fields[key.strip()] = value.strip()
    for key in required:
        if key not in fields:
            raise DataFormatError(1, 'header is missing {}'.format(key), path)
    return fields


def _header_int(fields, key, minimum, path=None):
    try:
        value = int(fields[key])
    except ValueError:
        raise DataFormatError(1, '{} must be an integer, not {!r}'.format(key, fields[key]), path)
    if value < minimum:
        raise DataFormatError(1, '{} must be >= {}, not {}'.format(key, minimum, value), path)
    return value


def _floats(line, count, number, what):
    try:
        values = np.array(line.split(','), dtype=np.float64)
    except ValueError:
        raise DataFormatError(number, 'non-numeric {}'.format(what))
    if values.size != count:
        raise DataFormatError(number, 'expected {} {}, found {}'.format(count, what, values.size))
    return values.astype(np.float32)


def _read_dataset_text(text, split):
    lines = text.splitlines()
    if not lines:
        raise DataFormatError(1, 'empty file')
    fields = _parse_header(lines[0], ('T', 'C', 'N', 'labeled'))
    length = _header_int(fields, 'T', 1)
    channels = _header_int(fields, 'C', 1)
    n = _header_int(fields, 'N', 1)
    labeled = fields['labeled'] == '1'
    per_series = 3 if labeled else 2
    body = lines[1:]
    if len(body) < n * per_series:
        raise DataFormatError(len(lines) + 1, 'truncated: expected {} series'.format(n))

    values = np.empty((n, length, channels), dtype=np.float32)
    weights = np.empty((n, length), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64) if labeled else None
    for i in range(n):
        first = 2 + i * per_series
        values[i] = _floats(body[i * per_series], length * channels, first,
                            'values').reshape(length, channels)
        weights[i] = _floats(body[i * per_series + 1], length, first + 1, 'mask weights')
        if labeled:
            try:
                labels[i] = int(body[i * per_series + 2])
            except ValueError:
                raise DataFormatError(first + 2, 'bad label {!r}'.format(body[i * per_series + 2]))
    if 'raw' in fields:
        raw = fields['raw'] == '1'
    else:
        raw = bool(np.all((weights == 0) | (weights == 1)))
    return Dataset.from_arrays(values, weights, labels=labels, raw=raw, split=split)


def _series_dtype(length, channels, labeled):
    fields = [('values', '<f4', (length, channels)), ('mask', '<f4', (length,))]
    if labeled:
        fields.append(('label', '<i4'))
    return np.dtype(fields)


def _read_dataset_binary(data, split):
    if len(data) < 20:
        raise DataFormatError(None, 'binary header truncated')
    length, channels, n, labeled = np.frombuffer(data, dtype='<i4', count=4, offset=4)
    if length < 1 or channels < 1 or n < 1:
        raise DataFormatError(None, 'bad binary header T={} C={} N={}'.format(length, channels, n))
    dtype = _series_dtype(int(length), int(channels), bool(labeled))
    body = n * dtype.itemsize
    if len(data) - 24 == body:
        offset = 24
        raw = bool(np.frombuffer(data, dtype='<i4', count=1, offset=20)[0])
    elif len(data) - 20 == body:
        # written without the raw flag
        offset = 20
        raw = None
    else:
        raise DataFormatError(None, 'expected {} bytes of series data, found {}'.format(
            body, len(data) - 24))
    records = np.frombuffer(data, dtype=dtype, count=int(n), offset=offset)
    weights = records['mask']
    labels = records['label'].astype(np.int64) if labeled else None
    if raw is None:
        raw = bool(np.all((weights == 0) | (weights == 1)))
    return Dataset.from_arrays(records['values'], weights, labels=labels, raw=raw, split=split)


def read_dataset(path, split=None, validate=True):
    """ Read a dataset file in either format. Raises :class:`ValidationError` on broken invariants. """
    with open(path, 'rb') as stream:
        data = stream.read()
    split = split if split is not None else 'train'
    try:
        if data[:4] == DATASET_MAGIC:
            dataset = _read_dataset_binary(data, split)
        else:
            try:
                text = data.decode('ascii')
            except UnicodeDecodeError:
                raise DataFormatError(None, 'neither a text dataset nor a PTS1 binary file')
            dataset = _read_dataset_text(text, split)
    except DataFormatError as e:
        e.path = path
        raise
    if validate:
        violations = validate_dataset(dataset)
        if violations:
            raise ValidationError(violations)
    logger.debug('Read {} series (T={}, C={}) from {}'.format(
        len(dataset), dataset.length, dataset.channels, path))
    return dataset


def write_dataset(dataset, path, binary=False):
    values = dataset.values
    weights = dataset.weights
    n, length, channels = values.shape
    labeled = dataset.labeled
    if binary:
        records = np.empty(n, dtype=_series_dtype(length, channels, labeled))
        records['values'] = values
        records['mask'] = weights
        if labeled:
            records['label'] = dataset.labels
        with open(path, 'wb') as stream:
            stream.write(DATASET_MAGIC)
            stream.write(np.array([length, channels, n, int(labeled), int(dataset.raw)],
                                  dtype='<i4').tobytes())
            stream.write(records.tobytes())
        return

    header = 'T={},C={},N={},labeled={}'.format(length, channels, n, int(labeled))
    if not dataset.raw:
        header += ',raw=0'
    with open(path, 'w') as stream:
        stream.write(header + '\n')
        for i in range(n):
            # float32 widened to float64 prints exactly and reads back to the same float32
            stream.write(','.join(map(repr, values[i].ravel().tolist())) + '\n')
            stream.write(','.join(map(repr, weights[i].tolist())) + '\n')
            if labeled:
                stream.write('{}\n'.format(int(dataset.labels[i])))


def _raster_from(kind, cells):
    if kind == 'labels':
        void = cells == VOID
        return LabelRaster(np.where(void, 0, cells), void if void.any() else None)
    return InstanceRaster(cells)


def read_raster(path):
    with open(path, 'rb') as stream:
        data = stream.read()
    try:
        if data[:4] == RASTER_MAGIC:
            if len(data) < 16:
                raise DataFormatError(None, 'binary raster header truncated')
            height, width, kind = np.frombuffer(data, dtype='<i4', count=3, offset=4)
            if kind not in (0, 1) or height < 1 or width < 1:
                raise DataFormatError(None, 'bad raster header')
            if len(data) - 16 != 4 * height * width:
                raise DataFormatError(None, 'raster data truncated')
            cells = np.frombuffer(data, dtype='<i4', offset=16).reshape(height, width)
            return _raster_from(_RASTER_KINDS[kind], cells.astype(np.int64))

        lines = data.decode('ascii').splitlines()
        if not lines:
            raise DataFormatError(1, 'empty file')
        fields = _parse_header(lines[0], ('H', 'W', 'kind'))
        height = _header_int(fields, 'H', 1)
        width = _header_int(fields, 'W', 1)
        kind = fields['kind']
        if kind not in _RASTER_KINDS:
            raise DataFormatError(1, 'kind must be labels or instances, not {!r}'.format(kind))
        if len(lines) - 1 < height:
            raise DataFormatError(len(lines) + 1, 'expected {} rows'.format(height))
        cells = np.empty((height, width), dtype=np.int64)
        for row in range(height):
            try:
                items = [int(v) for v in lines[row + 1].split(',')]
            except ValueError:
                raise DataFormatError(row + 2, 'non-integer cell')
            if len(items) != width:
                raise DataFormatError(row + 2, 'expected {} cells, found {}'.format(width, len(items)))
            cells[row] = items
        return _raster_from(kind, cells)
    except DataFormatError as e:
        e.path = path
        raise
    except UnicodeDecodeError:
        raise DataFormatError(None, 'neither a text raster nor a PTR1 binary file', path)


def write_raster(raster, path, binary=False):
    if isinstance(raster, LabelRaster):
        kind = 'labels'
        cells = np.where(raster.void_mask(), VOID, raster.labels)
    else:
        kind = 'instances'
        cells = raster.ids
    height, width = cells.shape
    if binary:
        with open(path, 'wb') as stream:
            stream.write(RASTER_MAGIC)
            stream.write(np.array([height, width, _RASTER_KINDS.index(kind)], dtype='<i4').tobytes())
            stream.write(cells.astype('<i4').tobytes())
        return
    with open(path, 'w') as stream:
        stream.write('H={},W={},kind={}\n'.format(height, width, kind))
        for row in cells:
            stream.write(','.join(str(int(v)) for v in row) + '\n')
