""" The ``tsp`` command line.

Every subcommand reads its settings from an optional ``--config`` file of ``key=value`` lines,
overridden by ``--set key=value`` and by dedicated flags, and echoes the effective settings to
``<out>/config.txt`` next to a ``report.json`` of its results.

Exit status: 0 on success, 1 on a usage or configuration error, 2 on a data or file error.
"""
import argparse
import csv
import logging
import os
import sys
import time
from collections import OrderedDict

import numba
import numpy as np

from tsproto import (__version__, aggregate, baselines, checkpoint, config, gradcheck, io, log,
                     metrics, plots, report, synth, train)
from tsproto.core import HyperParams
from tsproto.exceptions import ConfigError, DataFormatError, EmptyInputError, TsprotoError, UsageError
from tsproto.preprocess import FilterConfig, channel_stats, neighbor_inputs, normalize, prepare
from tsproto.transform import TransformParams, WarpConfig, align, fit_warp

logger = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """ Raises :class:`UsageError` instead of exiting, so :func:`run` owns the exit status. """

    def error(self, message):
        raise UsageError('{}\n{}'.format(message, self.format_usage().strip()))


def _list_of(validator):
    convert = config.List(validator)

    def parse(text):
        try:
            return convert(text)
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e))
    return parse


_ints = _list_of(config.Integer())
_floats = _list_of(config.Float())


def _common():
    parent = ArgumentParser(add_help=False)
    parent.add_argument('--config', help='key=value settings file')
    parent.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='override one setting; repeatable')
    parent.add_argument('--out', default='tsp-out', help='output directory (default: %(default)s)')
    parent.add_argument('--seed', type=int, help='random seed')
    parent.add_argument('--threads', type=int, help='worker threads for inference and DTW')
    parent.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')
    return parent


def build_parser():
    common = _common()
    parser = ArgumentParser(prog='tsp', description='Deformable prototypes for time series '
                                                    'classification and clustering.')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    commands = parser.add_subparsers(dest='command', metavar='COMMAND', required=True,
                                     parser_class=ArgumentParser)

    p = commands.add_parser('preprocess', parents=[common], help='gap fill, filter and normalize')
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--gap-fill', dest='gap_fill', choices=('none', 'previous', 'movavg', 'gaussian'))
    p.add_argument('--sigma', type=float, help='Gaussian filter width in days')
    p.add_argument('--cloud-band', dest='cloud_band', type=int,
                   help='channel thresholded to drop cloudy stamps')
    p.add_argument('--cloud-threshold', dest='cloud_threshold', type=float)
    p.add_argument('--normalize', action=argparse.BooleanOptionalAction,
                   help='standardize channels with train statistics')
    p.add_argument('--reference', help='train split whose channel statistics normalize the input')
    p.add_argument('--centroid-output', help='also write the gap-filled (centroid) series here')
    p.add_argument('--binary', action='store_true')

    p = commands.add_parser('synth', parents=[common], help='generate a synthetic benchmark')
    p.add_argument('--k-true', type=int)
    p.add_argument('--n', dest='n_train', type=int, help='train series')
    p.add_argument('--n-test', type=int)
    p.add_argument('--length', type=int)
    p.add_argument('--channels', type=int)
    p.add_argument('--shift-range', type=float)
    p.add_argument('--offset-range', type=float)
    p.add_argument('--noise-sd', type=float)
    p.add_argument('--missing-rate', type=float)
    p.add_argument('--test-shift-bias', type=float)
    p.add_argument('--binary', action='store_true')

    for name, text in (('train', 'train prototypes and the transformation predictor'),
                       ('cluster', 'unsupervised training and cluster labeling')):
        p = commands.add_parser(name, parents=[common], help=text)
        p.add_argument('train')
        p.add_argument('val')
        p.add_argument('--test', help='split scored after training')
        p.add_argument('--k', type=int, help='number of prototypes (unsupervised)')
        p.add_argument('--train-fraction', type=float,
                       help='train on a random fraction of the train split')
        p.add_argument('--seeds', type=_ints, help='comma separated seeds; results are summarized')
        if name == 'train':
            p.add_argument('--mode', choices=('sup', 'unsup'))
        else:
            p.set_defaults(mode='unsup')
            p.add_argument('--per-cluster', type=int,
                           help='label clusters from this many annotated series each (0: all)')
            p.add_argument('--selection', choices=('closest', 'random'))

    p = commands.add_parser('predict', parents=[common], help='apply a saved model')
    p.add_argument('model')
    p.add_argument('data')
    p.add_argument('--mapping', help='clusters.csv mapping clusters to classes')

    p = commands.add_parser('baseline', parents=[common], help='NCC, 1NN, 1NN-DTW or K-means')
    p.add_argument('train')
    p.add_argument('test')
    p.add_argument('--method', dest='baseline', choices=('ncc', '1nn', '1nn-dtw', 'kmeans'))
    p.add_argument('--k', type=int, help='clusters for the kmeans method')
    p.add_argument('--train-subsample', type=float,
                   help='fraction of the train split used per run')
    p.add_argument('--runs', type=int)

    p = commands.add_parser('eval', parents=[common], help='score predictions')
    p.add_argument('predictions', help='CSV written by predict')
    p.add_argument('truth', help='labeled dataset')

    p = commands.add_parser('aggregate', parents=[common], help='smooth a label raster')
    p.add_argument('pred', help='predicted label raster')
    p.add_argument('--method', choices=('instances', 'window', 'intersect'), default='instances')
    p.add_argument('--instances', help='instance raster (instances method)')
    p.add_argument('--frames', nargs='+', help='per-frame instance rasters (intersect method)')
    p.add_argument('--window', type=int, default=5)
    p.add_argument('--truth', help='label raster to score against')
    p.add_argument('--binary', action='store_true')

    p = commands.add_parser('warp-demo', parents=[common], help='write one warp and one offset')
    p.add_argument('--length', type=int)
    p.add_argument('--shifts', type=_floats, default=[-7.0, 0.0, 7.0],
                   help='landmark shifts in days, e.g. --shifts=-7,0,7')
    p.add_argument('--offset', type=float, default=0.3)

    p = commands.add_parser('grad-check', parents=[common], help='finite-difference suite')
    p.add_argument('--instances', type=int, default=100)
    p.add_argument('--coordinates', type=int, default=16)

    p = commands.add_parser('sweep-k', parents=[common], help='clustering accuracy per K')
    p.add_argument('train')
    p.add_argument('val')
    p.add_argument('--test', help='split scored (default: val)')
    p.add_argument('--ks', type=_ints, default=[2, 4, 8, 16, 32])
    p.add_argument('--seeds', type=_ints)

    p = commands.add_parser('align', parents=[common], help='align test class means to train')
    p.add_argument('train')
    p.add_argument('test')
    p.add_argument('--steps', type=int, default=500)
    p.add_argument('--step-size', type=float, default=0.01)

    p = commands.add_parser('ndvi', parents=[common], help='class mean index curves')
    p.add_argument('datasets', nargs='+')
    p.add_argument('--red', type=int, default=2)
    p.add_argument('--nir', type=int, default=3)

    p = commands.add_parser('report', help='query a report.json')
    p.add_argument('report')
    p.add_argument('--query', default='@')
    return parser


class Context(object):
    """ What a command needs besides its own arguments: settings and the output directory. """

    def __init__(self, args):
        self.args = args
        overrides = config.parse_pairs('\n'.join(args.set), '--set') if args.set else {}
        # flags share their dest with the setting they override
        for key in config.RunSettings.options():
            if getattr(args, key, None) is not None:
                overrides[key] = getattr(args, key)
        self.settings = config.load(config.RunSettings, args.config, overrides)
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.settings.write(self.path('config.txt'))
        numba.set_num_threads(min(self.settings.threads, numba.config.NUMBA_NUM_THREADS))
        self.started = time.perf_counter()

    def path(self, name):
        return os.path.join(self.out, name)

    @property
    def hyper(self):
        return HyperParams.from_settings(self.settings)

    @property
    def filtering(self):
        s = self.settings
        return FilterConfig(s.sigma, s.gap_fill, s.input_filtering, s.cloud_band, s.cloud_threshold)

    def read(self, path, split=None):
        return io.read_dataset(path, split)

    def report(self, metrics_, **timings):
        timings['total'] = time.perf_counter() - self.started
        return report.write_report(self.path('report.json'), self.args.command,
                                   self.settings.as_dict(), metrics_, timings)


def _model_inputs(ctx, datasets, stats=None):
    """ Filtered (and normalized) copies of ``datasets``; statistics come from the first one. """
    prepared = [prepare(d, ctx.filtering)[1] for d in datasets]
    if ctx.settings.normalize:
        if stats is None:
            stats = channel_stats(prepared[0])
        prepared = [normalize(d, stats) for d in prepared]
    return prepared, stats


def _centroid_inputs(ctx, datasets):
    prepared = [prepare(d, ctx.filtering)[0] for d in datasets]
    if ctx.settings.normalize:
        stats = channel_stats(prepared[0])
        prepared = [normalize(d, stats) for d in prepared]
    return prepared


def _print_table(rows, columns):
    widths = [max([len(c)] + [len(_cell(r.get(c))) for r in rows]) for c in columns]
    print('  '.join(c.ljust(w) for c, w in zip(columns, widths)))
    for row in rows:
        print('  '.join(_cell(row.get(c)).ljust(w) for c, w in zip(columns, widths)))


def _cell(value):
    if value is None:
        return '-'
    if isinstance(value, float):
        return '{:.4f}'.format(value)
    return str(value)


def _scores(pred, truth, n_classes):
    return {'oa': metrics.overall_accuracy(pred, truth),
            'ma': metrics.mean_accuracy(pred, truth, n_classes)}


def _summary(rows, keys=('oa', 'ma')):
    out = {}
    for key in keys:
        values = [r[key] for r in rows if r.get(key) is not None]
        if values:
            out[key + '_mean'], out[key + '_std'] = metrics.summarize(values)
    return out


def _fraction(d, fraction, seed):
    if not 0 < fraction <= 1:
        raise ConfigError('train_fraction', fraction, 'must be in (0, 1]')
    if fraction == 1:
        return d
    count = max(1, int(round(fraction * len(d))))
    rng = np.random.default_rng(seed)
    return d.subset(np.sort(rng.choice(len(d), size=count, replace=False)))


def _write_predictions(pred, path):
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['index', 'prediction'])
        writer.writerows(enumerate(int(p) for p in pred))


def _read_predictions(path):
    with open(path, newline='') as stream:
        rows = list(csv.reader(stream))
    if not rows or rows[0] != ['index', 'prediction']:
        raise DataFormatError(1, 'expected an index,prediction header', path)
    try:
        return np.array([int(row[1]) for row in rows[1:]], dtype=np.int64)
    except (IndexError, ValueError):
        raise DataFormatError(None, 'predictions must be integers', path)


def _write_mapping(mapping, path):
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['cluster', 'class'])
        writer.writerows(enumerate(int(c) for c in mapping))


def _write_assignments(assignment, path):
    with open(path, 'w', newline='') as stream:
        writer = csv.writer(stream)
        writer.writerow(['index', 'cluster', 'error'])
        for i, (cluster, error) in enumerate(zip(assignment.indices, assignment.errors)):
            writer.writerow([i, int(cluster), '{:.9g}'.format(error)])


def _read_mapping(path):
    with open(path, newline='') as stream:
        rows = list(csv.reader(stream))[1:]
    try:
        mapping = dict((int(cluster), int(label)) for cluster, label in rows)
    except ValueError:
        raise DataFormatError(None, 'cluster mapping must hold integers', path)
    return np.array([mapping[c] for c in range(len(mapping))], dtype=np.int64)


def cmd_preprocess(ctx):
    args = ctx.args
    d = ctx.read(args.input)
    reference = ctx.read(args.reference, 'train') if args.reference else d
    stats = None
    if ctx.settings.normalize:
        stats = channel_stats(prepare(reference, ctx.filtering)[1])
    centroids, inputs = prepare(d, ctx.filtering)
    if stats is not None:
        centroids, inputs = normalize(centroids, stats), normalize(inputs, stats)
    io.write_dataset(inputs, args.output, binary=args.binary)
    if args.centroid_output:
        io.write_dataset(centroids, args.centroid_output, binary=args.binary)
    ctx.report({'series': len(d), 'stats': None if stats is None else
                {'mean': stats.mean, 'std': stats.std}})
    print('Wrote {} series to {}'.format(len(d), args.output))
    return 0


def cmd_synth(ctx):
    args = ctx.args
    s = ctx.settings
    cfg = synth.SynthConfig(k_true=s.k_true, n=s.n_train, n_test=s.n_test, length=s.length,
                            channels=s.channels, shift_range=s.shift_range,
                            offset_range=s.offset_range, noise_sd=s.noise_sd,
                            missing_rate=s.missing_rate, test_shift_bias=s.test_shift_bias,
                            seed=s.seed)
    data = synth.generate(cfg)
    io.write_dataset(data.train, ctx.path('train.tsd'), binary=args.binary)
    io.write_dataset(data.test, ctx.path('test.tsd'), binary=args.binary)
    plots.write_prototypes_csv(data.templates, ctx.path('templates.csv'))
    ctx.report({'generator': dict(cfg.__dict__), 'train': len(data.train),
                'test': len(data.test),
                'max_abs_shift': {split: float(np.abs(t['shifts']).max())
                                  for split, t in data.truth.items()}})
    print('Wrote {} train and {} test series to {}'.format(len(data.train), len(data.test),
                                                           ctx.out))
    return 0


def _fit(ctx, mode, train_in, val_in, seed, out):
    hyper = ctx.hyper
    run = train.init_run(train_in, mode, hyper, seed, ctx.settings.kmeans_iters,
                         ctx.settings.kmeans_batch_size,
                         log_path=os.path.join(out, 'train_log.csv'),
                         threads=ctx.settings.threads)
    return train.train_curriculum(run, train_in, val_in)


def _train_seeds(ctx, mode):
    args = ctx.args
    seeds = ctx.settings.seeds or [ctx.settings.seed]
    d_train = ctx.read(args.train, 'train')
    d_val = ctx.read(args.val, 'val')
    d_test = ctx.read(args.test, 'test') if args.test else None
    rows = []
    for seed in seeds:
        out = ctx.out if len(seeds) == 1 else ctx.path('seed-{}'.format(seed))
        os.makedirs(out, exist_ok=True)
        subset = _fraction(d_train, ctx.settings.train_fraction, seed)
        datasets = [subset, d_val] + ([d_test] if d_test is not None else [])
        inputs, stats = _model_inputs(ctx, datasets)
        run = _fit(ctx, mode, inputs[0], inputs[1], seed, out)
        checkpoint.save(run, os.path.join(out, 'model.ckpt'), stats)
        plots.write_prototypes_csv(run.bank, os.path.join(out, 'prototypes.csv'))
        plots.write_prototypes_svg(run.bank, os.path.join(out, 'prototypes.svg'))
        row = OrderedDict([('seed', seed), ('stage', run.state.name), ('steps', run.state.steps),
                           ('val', run.state.best)])
        rows.append((row, run, inputs, out))
    return rows, d_train


def cmd_train(ctx):
    mode = ctx.settings.mode
    results, _ = _train_seeds(ctx, mode)
    table = []
    for row, run, inputs, _ in results:
        if len(inputs) > 2 and inputs[2].labels is not None:
            pred = train.predict(run, inputs[2])
            if mode == 'sup':
                row.update(_scores(pred, inputs[2].labels, run.k))
            elif inputs[0].labels is not None:
                mapping = metrics.label_clusters_majority(train.assign(run, inputs[0]).indices,
                                                          inputs[0].labels, run.k)
                row.update(_scores(mapping[pred], inputs[2].labels, inputs[0].n_classes))
        table.append(row)
    _print_table(table, [c for c in ('seed', 'stage', 'steps', 'val', 'oa', 'ma')
                         if any(c in r for r in table)])
    summary = _summary(table)
    if len(table) > 1 and summary:
        print('MA {:.4f} +- {:.4f} over {} seeds'.format(summary.get('ma_mean', float('nan')),
                                                        summary.get('ma_std', float('nan')),
                                                        len(table)))
    ctx.report({'runs': table, 'summary': summary})
    return 0


def cmd_cluster(ctx):
    s = ctx.settings
    results, d_train = _train_seeds(ctx, 'unsup')
    table = []
    for row, run, inputs, out in results:
        assignment = train.assign(run, inputs[0])
        _write_assignments(assignment, os.path.join(out, 'assignments.csv'))
        if d_train.labels is None:
            table.append(row)
            continue
        if s.per_cluster:
            mapping = metrics.label_clusters_limited(assignment, inputs[0].labels, run.k,
                                                     s.per_cluster, s.selection, row['seed'],
                                                     d_train.n_classes)
        else:
            mapping = metrics.label_clusters_majority(assignment.indices, inputs[0].labels, run.k,
                                                      d_train.n_classes)
        _write_mapping(mapping, os.path.join(out, 'clusters.csv'))
        scored = inputs[2] if len(inputs) > 2 else inputs[1]
        if scored.labels is not None:
            row.update(_scores(mapping[train.predict(run, scored)], scored.labels,
                               d_train.n_classes))
        table.append(row)
    _print_table(table, [c for c in ('seed', 'stage', 'steps', 'val', 'oa', 'ma')
                         if any(c in r for r in table)])
    summary = _summary(table)
    ctx.report({'runs': table, 'summary': summary})
    return 0


def cmd_predict(ctx):
    args = ctx.args
    run, stats = checkpoint.load(args.model)
    run.threads = ctx.settings.threads
    d = ctx.read(args.data, 'test')
    # normalized exactly when the model was trained on normalized inputs
    inputs = prepare(d, ctx.filtering)[1]
    if stats is not None:
        inputs = normalize(inputs, stats)
    pred = train.predict(run, inputs)
    if args.mapping:
        if run.mode == 'sup':
            raise UsageError('--mapping applies to clustering models only')
        pred = _read_mapping(args.mapping)[pred]
    _write_predictions(pred, ctx.path('predictions.csv'))
    ctx.report({'series': len(d), 'mode': run.mode})
    print('Wrote {} predictions to {}'.format(len(pred), ctx.path('predictions.csv')))
    return 0


def _baseline_once(ctx, method, train_c, test_c, train_nn, test_nn, seed):
    if method == 'ncc':
        model = baselines.ncc_fit(train_c)
        return baselines.ncc_predict_many(model, test_c.values, test_c.weights)
    if method == 'kmeans':
        k = ctx.settings.k
        result = train.kmeans(train_c, k, seed, ctx.settings.kmeans_iters,
                              ctx.settings.kmeans_batch_size)
        mapping = metrics.label_clusters_majority(result.assignments, train_c.labels, k,
                                                  train_c.n_classes)
        distance = baselines.masked_distance_matrix(test_c.values, test_c.weights,
                                                    result.bank.prototypes)
        return mapping[np.argmin(distance, axis=1)]
    metric = 'dtw' if method == '1nn-dtw' else 'euclidean'
    return baselines.knn1_predict_many(train_nn, test_nn.values, test_nn.weights, metric,
                                       ctx.settings.dtw_band)


def _neighbor_inputs(ctx, datasets):
    """ Filtered series under their raw masks, for DTW; statistics come from the first one. """
    prepared = [neighbor_inputs(d, ctx.filtering) for d in datasets]
    if ctx.settings.normalize:
        stats = channel_stats(prepared[0])
        prepared = [normalize(d, stats) for d in prepared]
    return prepared


def cmd_baseline(ctx):
    args = ctx.args
    s = ctx.settings
    d_train = ctx.read(args.train, 'train')
    d_test = ctx.read(args.test, 'test')
    if d_test.labels is None:
        raise EmptyInputError('the test split needs labels')
    n_classes = d_train.n_classes
    rows = []
    for run in range(s.runs):
        seed = s.seed + run
        subset = _fraction(d_train, s.train_subsample, seed)
        train_c, test_c = _centroid_inputs(ctx, [subset, d_test])
        train_nn = test_nn = None
        if s.baseline == '1nn':
            (train_nn, test_nn), _ = _model_inputs(ctx, [subset, d_test])
        elif s.baseline == '1nn-dtw':
            train_nn, test_nn = _neighbor_inputs(ctx, [subset, d_test])
        started = time.perf_counter()
        pred = _baseline_once(ctx, s.baseline, train_c, test_c, train_nn, test_nn, seed)
        row = OrderedDict([('run', run), ('train', len(subset))])
        row.update(_scores(pred, d_test.labels, n_classes))
        row['seconds'] = time.perf_counter() - started
        rows.append(row)
    _print_table(rows, ['run', 'train', 'oa', 'ma', 'seconds'])
    summary = _summary(rows)
    if len(rows) > 1:
        print('OA {oa_mean:.4f} +- {oa_std:.4f}  MA {ma_mean:.4f} +- {ma_std:.4f}'.format(**summary))
    ctx.report({'method': s.baseline, 'runs': rows, 'summary': summary})
    return 0


def cmd_eval(ctx):
    args = ctx.args
    pred = _read_predictions(args.predictions)
    truth = ctx.read(args.truth, 'test')
    if truth.labels is None:
        raise EmptyInputError('{} has no labels'.format(args.truth))
    n_classes = truth.n_classes
    counts = metrics.confusion(pred, truth.labels, n_classes)
    scores = _scores(pred, truth.labels, n_classes)
    recall = metrics.per_class_accuracy(pred, truth.labels, n_classes)
    rows = [{'class': c + 1, 'support': int(counts.support[c]),
             'accuracy': None if np.isnan(r) else float(r)} for c, r in enumerate(recall)]
    _print_table(rows, ['class', 'support', 'accuracy'])
    print('OA {oa:.4f}  MA {ma:.4f}'.format(**scores))
    metrics.write_confusion_csv(counts, ctx.path('confusion.csv'))
    ctx.report(dict(scores, classes=rows))
    return 0


def cmd_aggregate(ctx):
    args = ctx.args
    pred = io.read_raster(args.pred)
    if not isinstance(pred, aggregate.LabelRaster):
        raise DataFormatError(None, 'expected a label raster', args.pred)
    result = {}
    if args.method == 'instances':
        if not args.instances:
            raise UsageError('--instances is required by the instances method')
        smoothed = aggregate.aggregate_instances(pred, io.read_raster(args.instances))
        kept = None
    elif args.method == 'window':
        smoothed = aggregate.aggregate_sliding_window(pred, args.window)
        kept = None
    else:
        if not args.frames:
            raise UsageError('--frames is required by the intersect method')
        instances, kept = aggregate.combine_frames([io.read_raster(f) for f in args.frames])
        io.write_raster(instances, ctx.path('instances.ptr'), binary=args.binary)
        smoothed = aggregate.aggregate_instances(pred, instances)
        result['instances'] = int(np.unique(instances.ids[instances.ids > 0]).size)
    io.write_raster(smoothed, ctx.path('aggregated.ptr'), binary=args.binary)
    if args.truth:
        truth = io.read_raster(args.truth)
        valid = ~truth.void_mask() & (truth.labels > 0)
        for name, raster in (('before', pred), ('after', smoothed)):
            result[name] = _scores(raster.labels[valid], truth.labels[valid], None)
        if kept is not None:
            result['by_region'] = aggregate.aggregate_accuracy(smoothed, truth, kept)
        _print_table([dict(stage=k, **result[k]) for k in ('before', 'after')],
                     ['stage', 'oa', 'ma'])
    ctx.report(result)
    print('Wrote {}'.format(ctx.path('aggregated.ptr')))
    return 0


def cmd_warp_demo(ctx):
    args = ctx.args
    shifts = np.asarray(args.shifts, dtype=np.float64)
    cfg = WarpConfig(ctx.settings.length, len(shifts))
    h = fit_warp(cfg, shifts)
    plots.write_warp_csv(cfg, shifts, ctx.path('warp.csv'))
    plots.write_warp_svg(cfg, shifts, ctx.path('warp.svg'))
    t = cfg.grid / cfg.length
    series = np.stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)], axis=1)
    offset = np.full(series.shape[1], args.offset)
    params = TransformParams(offset, shifts, ctx.settings.warp_scale)
    plots.write_offset_csv(series, params.offset, ctx.path('offset.csv'))
    endpoints = {'h_first': float(h(cfg.grid[0])), 'h_last': float(h(cfg.grid[-1])),
                 'landmark_error': float(np.max(np.abs(h(cfg.landmarks) - cfg.landmarks - shifts)))}
    print('h(1) = {h_first:.6f}  h(T) = {h_last:.6f}  max landmark error {landmark_error:.3g}'
          .format(**endpoints))
    ctx.report(endpoints)
    return 0


def cmd_grad_check(ctx):
    args = ctx.args
    results = gradcheck.run_suite(args.instances, ctx.settings.seed,
                                  coordinates=args.coordinates)
    worst = OrderedDict()
    for result in results:
        worst[result.case] = max(worst.get(result.case, 0.0), result.max_error)
    _print_table([{'case': k, 'max_error': '{:.3g}'.format(v)} for k, v in worst.items()],
                 ['case', 'max_error'])
    overall = max(worst.values())
    ctx.report({'max_error': overall, 'cases': worst})
    if overall >= gradcheck.TOLERANCE:
        print('FAILED: max relative error {:.3g} >= {:g}'.format(overall, gradcheck.TOLERANCE),
              file=sys.stderr)
        return 2
    print('OK: max relative error {:.3g}'.format(overall))
    return 0


def _parameter_count(run):
    return int(run.bank.prototypes.size + sum(v.size for v in run.weights.params.values()))


def cmd_sweep_k(ctx):
    args = ctx.args
    d_train = ctx.read(args.train, 'train')
    d_val = ctx.read(args.val, 'val')
    d_test = ctx.read(args.test, 'test') if args.test else d_val
    if d_train.labels is None or d_test.labels is None:
        raise EmptyInputError('sweep-k scores clusters and needs labeled train and test splits')
    inputs, _ = _model_inputs(ctx, [d_train, d_val, d_test])
    seeds = ctx.settings.seeds or [ctx.settings.seed]
    rows = []
    for k in args.ks:
        ctx.settings.k = k
        scores = []
        for seed in seeds:
            out = ctx.path('k{}-seed{}'.format(k, seed))
            os.makedirs(out, exist_ok=True)
            run = _fit(ctx, 'unsup', inputs[0], inputs[1], seed, out)
            mapping = metrics.label_clusters_majority(train.assign(run, inputs[0]).indices,
                                                      inputs[0].labels, k, d_train.n_classes)
            pred = mapping[train.predict(run, inputs[2])]
            scores.append(_scores(pred, inputs[2].labels, d_train.n_classes))
        row = OrderedDict([('k', k), ('parameters', _parameter_count(run))])
        row.update(_summary(scores))
        rows.append(row)
    _print_table(rows, ['k', 'parameters', 'ma_mean', 'ma_std', 'oa_mean'])
    ctx.report({'runs': rows})
    return 0


def cmd_align(ctx):
    args = ctx.args
    d_train = ctx.read(args.train, 'train')
    d_test = ctx.read(args.test, 'test')
    train_c, test_c = _centroid_inputs(ctx, [d_train, d_test])
    source = baselines.ncc_fit(train_c)
    target = baselines.ncc_fit(test_c.replace(n_classes=train_c.n_classes))
    cfg = WarpConfig(d_train.length, ctx.hyper.n_landmarks(d_train.length))
    rows = []
    shifts = []
    for c in range(source.k):
        fitted, history = align(source.centroids[c], target.centroids[c],
                                np.ones(d_train.length), cfg, ctx.settings.warp_scale,
                                args.step_size, args.steps)
        shifts.append(fitted.warp)
        rows.append(OrderedDict([('class', c + 1), ('before', history[0] if history else None),
                                 ('after', history[-1] if history else None),
                                 ('max_shift', float(np.abs(fitted.warp).max())),
                                 ('offset', fitted.offset.tolist())]))
    plots.write_warp_csv(cfg, np.array(shifts), ctx.path('alignment_warps.csv'))
    _print_table(rows, ['class', 'before', 'after', 'max_shift'])
    ctx.report({'classes': rows})
    return 0


def cmd_ndvi(ctx):
    args = ctx.args
    curves = OrderedDict()
    for path in args.datasets:
        d = ctx.read(path)
        name = os.path.splitext(os.path.basename(path))[0]
        curves[name] = plots.class_mean_index(d, args.red, args.nir)
    plots.write_index_csv(curves, ctx.path('index.csv'))
    ctx.report({'splits': list(curves)})
    print('Wrote {}'.format(ctx.path('index.csv')))
    return 0


def cmd_report(args):
    print(report.format_result(report.query(report.read_report(args.report), args.query)))
    return 0


HANDLERS = {
    'preprocess': cmd_preprocess, 'synth': cmd_synth, 'train': cmd_train, 'cluster': cmd_cluster,
    'predict': cmd_predict, 'baseline': cmd_baseline, 'eval': cmd_eval,
    'aggregate': cmd_aggregate, 'warp-demo': cmd_warp_demo, 'grad-check': cmd_grad_check,
    'sweep-k': cmd_sweep_k, 'align': cmd_align, 'ndvi': cmd_ndvi,
}


def run(argv=None):
    """ Run one ``tsp`` command and return its exit status. """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        log.configure_logging(getattr(args, 'log_level', None))
        if args.command == 'report':
            return cmd_report(args)
        return HANDLERS[args.command](Context(args))
    except SystemExit as e:
        # --help and --version
        return e.code or 0
    except (UsageError, ConfigError) as e:
        print('Error: {}'.format(e), file=sys.stderr)
        return 1
    except (TsprotoError, OSError) as e:
        logger.debug('Command failed', exc_info=True)
        print('Error: {}'.format(e), file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))
