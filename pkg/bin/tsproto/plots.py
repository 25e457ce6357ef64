""" Plot-ready artifacts: CSV tables and bare SVG polylines.

The SVG files hold one ``<polyline>`` per curve inside a viewBox scaled to the data, with no
axes or fonts; any viewer or vector editor renders them.
"""
import csv
import logging
import xml.etree.ElementTree as ET

import numpy as np

from tsproto.exceptions import ConfigError, EmptyInputError
from tsproto.transform import apply_offset, fit_warp

logger = logging.getLogger(__name__)

WIDTH = 640
HEIGHT = 240
PALETTE = ('#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd', '#8c564b', '#e377c2',
           '#7f7f7f', '#bcbd22', '#17becf')


def _polyline_svg(curves, path, width=WIDTH, height=HEIGHT):
    """ ``curves`` maps a title to (x, y); every curve shares the same axes. """
    xs = np.concatenate([np.asarray(x, dtype=np.float64) for x, _ in curves.values()])
    ys = np.concatenate([np.asarray(y, dtype=np.float64) for _, y in curves.values()])
    finite = np.isfinite(ys)
    if not finite.any():
        raise EmptyInputError('no finite value to plot')
    x0, x1 = xs.min(), xs.max()
    y0, y1 = ys[finite].min(), ys[finite].max()
    x_span = (x1 - x0) or 1.0
    y_span = (y1 - y0) or 1.0
    svg = ET.Element('svg', xmlns='http://www.w3.org/2000/svg', width=str(width),
                     height=str(height), viewBox='0 0 {} {}'.format(width, height))
    for i, (title, (x, y)) in enumerate(curves.items()):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        keep = np.isfinite(y)
        px = (x[keep] - x0) / x_span * width
        py = height - (y[keep] - y0) / y_span * height
        points = ' '.join('{:.2f},{:.2f}'.format(a, b) for a, b in zip(px, py))
        line = ET.SubElement(svg, 'polyline', points=points, fill='none',
                             stroke=PALETTE[i % len(PALETTE)])
        line.set('stroke-width', '1.5')
        ET.SubElement(line, 'title').text = title
    ET.ElementTree(svg).write(path, encoding='utf-8', xml_declaration=True)


def write_prototypes_csv(bank, path):
    prototypes = np.asarray(getattr(bank, 'prototypes', bank))
    k, length, channels = prototypes.shape
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['prototype', 't'] + ['c{}'.format(c) for c in range(channels)])
        for i in range(k):
            for t in range(length):
                writer.writerow([i, t + 1] + ['{:.9g}'.format(v) for v in prototypes[i, t]])


def write_prototypes_svg(bank, path, channel=0):
    prototypes = np.asarray(getattr(bank, 'prototypes', bank))
    t = np.arange(1, prototypes.shape[1] + 1)
    _polyline_svg(dict(('prototype {}'.format(i), (t, p[:, channel]))
                       for i, p in enumerate(prototypes)), path)


def warp_curves(cfg, shifts):
    """ Rows ``(t, h(t))`` of every warp in ``shifts`` (W, M), on the time grid. """
    shifts = np.atleast_2d(np.asarray(shifts, dtype=np.float64))
    return [fit_warp(cfg, beta)(cfg.grid) for beta in shifts]


def write_warp_csv(cfg, shifts, path):
    curves = warp_curves(cfg, shifts)
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['t'] + ['h{}'.format(i) for i in range(len(curves))])
        for t, row in zip(cfg.grid, np.stack(curves, axis=1)):
            writer.writerow(['{:g}'.format(t)] + ['{:.12g}'.format(v) for v in row])


def write_warp_svg(cfg, shifts, path):
    curves = warp_curves(cfg, shifts)
    lines = {'identity': (cfg.grid, cfg.grid)}
    lines.update(('h{}'.format(i), (cfg.grid, h)) for i, h in enumerate(curves))
    _polyline_svg(lines, path)


def write_offset_csv(series, offset, path):
    """ Columns t, original and offset values of a (T, C) series, per channel. """
    series = np.asarray(series, dtype=np.float64)
    shifted = apply_offset(series, offset)
    channels = series.shape[1]
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['t'] + ['c{}'.format(c) for c in range(channels)]
                        + ['c{}_offset'.format(c) for c in range(channels)])
        for t in range(series.shape[0]):
            writer.writerow([t + 1] + ['{:.12g}'.format(v) for v in series[t]]
                            + ['{:.12g}'.format(v) for v in shifted[t]])


def normalized_difference(values, red, nir):
    """ ``(nir - red) / (nir + red)`` per stamp; stamps with ``nir + red == 0`` give nan. """
    values = np.asarray(values, dtype=np.float64)
    channels = values.shape[-1]
    for name, channel in (('red', red), ('nir', nir)):
        if not 0 <= channel < channels:
            raise ConfigError(name, channel, 'no such channel among {}'.format(channels))
    r, n = values[..., red], values[..., nir]
    total = n + r
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(total != 0, (n - r) / total, np.nan)


def class_mean_index(d, red=2, nir=3):
    """ Per class, the mask-weighted mean index curve (n_classes, T) of a labeled dataset.

    Works on raw (not normalized) reflectances. Stamps no series of a class observes are nan.
    """
    if d.labels is None:
        raise EmptyInputError('class means need labels')
    index = normalized_difference(d.values, red, nir)
    weights = np.where(np.isfinite(index), d.weights, 0.0)
    index = np.nan_to_num(index)
    n_classes = d.n_classes or int(d.labels.max())
    curves = np.full((n_classes, d.length), np.nan)
    for c in range(n_classes):
        members = d.labels == c + 1
        total = weights[members].sum(axis=0)
        observed = total > 0
        curves[c, observed] = (weights[members] * index[members]).sum(axis=0)[observed] / total[observed]
    return curves


def write_index_csv(curves_by_split, path):
    """ ``curves_by_split`` maps a split name to the output of :func:`class_mean_index`. """
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['split', 'class', 't', 'index'])
        for split, curves in curves_by_split.items():
            for c, curve in enumerate(curves):
                for t, value in enumerate(curve):
                    writer.writerow([split, c + 1, t + 1,
                                     '' if np.isnan(value) else '{:.9g}'.format(value)])
    logger.debug('Wrote class mean index curves of {} splits to {}'.format(
        len(curves_by_split), path))
