import csv
import json

import numpy as np
import pytest

from conftest import make_dataset
from tsproto import cli, io, log
from tsproto.aggregate import LabelRaster

SMALL = ['--set', 'filters=4,4,4', '--set', 'kernels=3,3,3', '--set', 'max_steps=4',
         '--set', 'validation_interval=2', '--set', 'batch_size=8', '--set', 'patience=1']


@pytest.fixture(scope='module', autouse=True)
def logging_configured():
    # bind the stderr handler before any test swaps sys.stderr
    log.configure_logging()


@pytest.fixture(scope='module')
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp('bench')
    status = cli.run(['synth', '--k-true', '3', '--n', '30', '--length', '30', '--channels', '4',
                      '--seed', '1', '--out', str(out)])
    assert status == 0
    return out


def read_report(directory):
    with open(str(directory / 'report.json')) as stream:
        return json.load(stream)


def test_help_and_version(capsys):
    assert cli.run(['--help']) == 0
    assert 'warp-demo' in capsys.readouterr().out
    assert cli.run(['--version']) == 0


def test_usage_errors(tmp_path, capsys):
    assert cli.run(['frobnicate']) == 1
    assert cli.run([]) == 1
    assert cli.run(['warp-demo', '--out', str(tmp_path), '--set', 'bogus=1']) == 1
    assert 'bogus' in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert cli.run(['eval', str(tmp_path / 'nope.csv'), str(tmp_path / 'nope.tsd'),
                    '--out', str(tmp_path)]) == 2


def test_synth_outputs(bench):
    d = io.read_dataset(str(bench / 'train.tsd'))
    assert d.values.shape == (30, 30, 4)
    assert len(io.read_dataset(str(bench / 'test.tsd'))) == 7
    assert (bench / 'templates.csv').exists()
    assert read_report(bench)['command'] == 'synth'
    assert 'seed=1' in (bench / 'config.txt').read_text().splitlines()


def test_train_predict_eval(bench, tmp_path, capsys):
    train_tsd, test_tsd = str(bench / 'train.tsd'), str(bench / 'test.tsd')
    model = tmp_path / 'model'
    assert cli.run(['train', train_tsd, test_tsd, '--test', test_tsd, '--out', str(model)]
                   + SMALL) == 0
    for name in ('model.ckpt', 'prototypes.csv', 'prototypes.svg', 'train_log.csv',
                 'config.txt', 'report.json'):
        assert (model / name).exists()
    runs = read_report(model)['metrics']['runs']
    assert len(runs) == 1
    assert 0.0 <= runs[0]['ma'] <= 1.0
    assert read_report(model)['config']['max_steps'] == 4

    pred = tmp_path / 'pred'
    assert cli.run(['predict', str(model / 'model.ckpt'), test_tsd, '--out', str(pred)]) == 0
    with open(str(pred / 'predictions.csv')) as stream:
        rows = list(csv.reader(stream))
    assert rows[0] == ['index', 'prediction']
    assert len(rows) == 8
    assert all(1 <= int(r[1]) <= 3 for r in rows[1:])

    scored = tmp_path / 'eval'
    assert cli.run(['eval', str(pred / 'predictions.csv'), test_tsd, '--out', str(scored)]) == 0
    assert 'OA ' in capsys.readouterr().out
    result = read_report(scored)['metrics']
    assert 0.0 <= result['oa'] <= 1.0
    assert [c['class'] for c in result['classes']] == [1, 2, 3]
    assert (scored / 'confusion.csv').exists()


def test_cluster(bench, tmp_path):
    out = tmp_path / 'cluster'
    assert cli.run(['cluster', str(bench / 'train.tsd'), str(bench / 'test.tsd'), '--k', '3',
                    '--seeds', '0,1', '--out', str(out)] + SMALL) == 0
    for seed in (0, 1):
        for name in ('model.ckpt', 'assignments.csv', 'clusters.csv'):
            assert (out / 'seed-{}'.format(seed) / name).exists()
    metrics = read_report(out)['metrics']
    assert [r['seed'] for r in metrics['runs']] == [0, 1]
    assert 'ma_mean' in metrics['summary']


@pytest.mark.parametrize('method', ['ncc', '1nn', '1nn-dtw', 'kmeans'])
def test_baselines(bench, tmp_path, method):
    assert cli.run(['baseline', str(bench / 'train.tsd'), str(bench / 'test.tsd'), '--method',
                    method, '--k', '6', '--out', str(tmp_path)]) == 0
    metrics = read_report(tmp_path)['metrics']
    assert metrics['method'] == method
    assert 0.0 <= metrics['runs'][0]['oa'] <= 1.0


def test_warp_demo_and_report(tmp_path, capsys):
    assert cli.run(['warp-demo', '--out', str(tmp_path)]) == 0
    assert 'h(1) = -6.000000' in capsys.readouterr().out
    metrics = read_report(tmp_path)['metrics']
    assert metrics['h_first'] == pytest.approx(-6.0, abs=1e-6)
    assert metrics['h_last'] == pytest.approx(187.0, abs=1e-6)
    assert metrics['landmark_error'] < 1e-6
    for name in ('warp.csv', 'warp.svg', 'offset.csv'):
        assert (tmp_path / name).exists()

    assert cli.run(['report', str(tmp_path / 'report.json'), '--query', 'command']) == 0
    assert capsys.readouterr().out.strip() == 'warp-demo'
    assert cli.run(['report', str(tmp_path / 'report.json'), '--query', 'metrics.[']) == 1


def test_warp_demo_rejects_large_shifts(tmp_path):
    assert cli.run(['warp-demo', '--shifts=-9,0,9', '--out', str(tmp_path)]) == 2


def test_aggregate_window(tmp_path):
    labels = np.ones((5, 5), dtype=np.int64)
    labels[2, 2] = 2
    pred = str(tmp_path / 'pred.ptr')
    io.write_raster(LabelRaster(labels), pred)
    truth = str(tmp_path / 'truth.ptr')
    io.write_raster(LabelRaster(np.ones((5, 5), dtype=np.int64)), truth)
    out = tmp_path / 'out'
    assert cli.run(['aggregate', pred, '--method', 'window', '--window', '3', '--truth', truth,
                    '--out', str(out)]) == 0
    np.testing.assert_array_equal(io.read_raster(str(out / 'aggregated.ptr')).labels, 1)
    metrics = read_report(out)['metrics']
    assert metrics['before']['oa'] == pytest.approx(24 / 25.)
    assert metrics['after']['oa'] == 1.0


def test_aggregate_needs_instances(tmp_path):
    pred = str(tmp_path / 'pred.ptr')
    io.write_raster(LabelRaster(np.ones((2, 2), dtype=np.int64)), pred)
    assert cli.run(['aggregate', pred, '--out', str(tmp_path)]) == 1


def test_ndvi(bench, tmp_path):
    assert cli.run(['ndvi', str(bench / 'train.tsd'), str(bench / 'test.tsd'),
                    '--out', str(tmp_path)]) == 0
    with open(str(tmp_path / 'index.csv')) as stream:
        rows = list(csv.reader(stream))
    assert rows[0] == ['split', 'class', 't', 'index']
    assert len(rows) == 1 + 2 * 3 * 30
    assert cli.run(['ndvi', str(bench / 'train.tsd'), '--nir', '4', '--out', str(tmp_path)]) == 1


def test_grad_check(tmp_path):
    assert cli.run(['grad-check', '--instances', '1', '--coordinates', '4',
                    '--out', str(tmp_path)]) == 0
    assert read_report(tmp_path)['metrics']['max_error'] < 1e-3


def test_preprocess_masks_cloudy_stamps(tmp_path):
    values = np.zeros((2, 6, 2))
    values[..., 1] = np.arange(6.0)
    values[0, 3, 0] = 0.9
    source = str(tmp_path / 'in.tsd')
    io.write_dataset(make_dataset(values, labels=[1, 2]), source)
    output = tmp_path / 'out.tsd'
    assert cli.run(['preprocess', source, str(output), '--gap-fill', 'none', '--cloud-band', '0',
                    '--cloud-threshold', '0.5', '--no-normalize', '--set', 'input_filtering=false',
                    '--out', str(tmp_path / 'run')]) == 0
    d = io.read_dataset(str(output))
    np.testing.assert_array_equal(d.weights[0], [1, 1, 1, 0, 1, 1])
    np.testing.assert_array_equal(d.weights[1], 1)
    echoed = (tmp_path / 'run' / 'config.txt').read_text().splitlines()
    for line in ('cloud_band=0', 'cloud_threshold=0.5', 'gap_fill=none', 'normalize=false'):
        assert line in echoed


def test_preprocess_rejects_a_lone_cloud_band(bench, tmp_path):
    assert cli.run(['preprocess', str(bench / 'train.tsd'), str(tmp_path / 'out.tsd'),
                    '--cloud-band', '0', '--out', str(tmp_path)]) == 1


def test_synth_reruns_from_its_echoed_config(tmp_path):
    first = tmp_path / 'first'
    assert cli.run(['synth', '--k-true', '2', '--n', '6', '--length', '12', '--channels', '1',
                    '--missing-rate', '0.25', '--test-shift-bias', '1.5', '--seed', '3',
                    '--out', str(first)]) == 0
    echoed = (first / 'config.txt').read_text().splitlines()
    for line in ('k_true=2', 'n_train=6', 'length=12', 'channels=1', 'missing_rate=0.25',
                 'test_shift_bias=1.5'):
        assert line in echoed
    second = tmp_path / 'second'
    assert cli.run(['synth', '--config', str(first / 'config.txt'), '--out', str(second)]) == 0
    for name in ('train.tsd', 'test.tsd'):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_baseline_settings_are_echoed(bench, tmp_path):
    first = tmp_path / 'first'
    assert cli.run(['baseline', str(bench / 'train.tsd'), str(bench / 'test.tsd'), '--method',
                    '1nn-dtw', '--train-subsample', '0.5', '--runs', '2', '--out', str(first)]) == 0
    echoed = (first / 'config.txt').read_text().splitlines()
    for line in ('baseline=1nn-dtw', 'train_subsample=0.5', 'runs=2'):
        assert line in echoed
    second = tmp_path / 'second'
    assert cli.run(['baseline', str(bench / 'train.tsd'), str(bench / 'test.tsd'),
                    '--config', str(first / 'config.txt'), '--out', str(second)]) == 0
    again = read_report(second)['metrics']
    assert again['method'] == '1nn-dtw'
    assert again['runs'] == [dict(r, seconds=s['seconds']) for r, s in
                             zip(read_report(first)['metrics']['runs'], again['runs'])]


def test_dtw_baseline_follows_the_filter_settings(bench, tmp_path):
    assert cli.run(['baseline', str(bench / 'train.tsd'), str(bench / 'test.tsd'), '--method',
                    '1nn-dtw', '--set', 'gap_fill=none', '--set', 'input_filtering=false',
                    '--out', str(tmp_path)]) == 0
    assert read_report(tmp_path)['config']['input_filtering'] is False


def test_train_and_cluster_echo_their_mode(bench, tmp_path):
    out = tmp_path / 'train'
    assert cli.run(['train', str(bench / 'train.tsd'), str(bench / 'test.tsd'), '--mode', 'unsup',
                    '--k', '3', '--train-fraction', '0.5', '--out', str(out)] + SMALL) == 0
    echoed = (out / 'config.txt').read_text().splitlines()
    assert 'mode=unsup' in echoed
    assert 'train_fraction=0.5' in echoed
    out = tmp_path / 'cluster'
    assert cli.run(['cluster', str(bench / 'train.tsd'), str(bench / 'test.tsd'), '--k', '3',
                    '--per-cluster', '2', '--seeds', '4', '--out', str(out)] + SMALL) == 0
    echoed = (out / 'config.txt').read_text().splitlines()
    for line in ('mode=unsup', 'per_cluster=2', 'selection=closest', 'seeds=4'):
        assert line in echoed
