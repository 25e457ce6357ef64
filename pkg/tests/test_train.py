import csv
import dataclasses

import numpy as np
import pytest

from conftest import make_dataset
from tsproto import baselines, checkpoint, train
from tsproto.core import ChannelStats
from tsproto.exceptions import ConfigError, DataFormatError, EmptyInputError, LabelError


def gappy_dataset(rng, n=40, length=16, channels=2):
    weights = (rng.random((n, length)) < 0.7).astype(float)
    weights[:, 0] = 1.0
    centers = rng.normal(0.0, 3.0, size=(4, 1, channels))
    values = centers[rng.integers(0, 4, n)] + rng.normal(size=(n, length, channels))
    return make_dataset(values * weights[..., None], weights)


def test_full_batch_kmeans_never_increases_the_objective(rng):
    for seed in range(10):
        d = gappy_dataset(rng)
        result = train.kmeans(d, 4, seed=seed, max_iters=50)
        objective = np.array(result.objective)
        assert np.all(np.diff(objective) <= 1e-12 * objective[:-1])
        assert result.bank.k == 4
        assert result.assignments.shape == (40,)


def test_kmeans_assignments_are_nearest_centroids(rng):
    d = gappy_dataset(rng)
    result = train.kmeans(d, 3, seed=1)
    table = baselines.masked_distance_matrix(d.values, d.weights, result.bank.prototypes)
    np.testing.assert_array_equal(result.assignments, table.argmin(axis=1))


def test_kmeans_is_seeded(rng):
    d = gappy_dataset(rng)
    a = train.kmeans(d, 3, seed=5)
    b = train.kmeans(d, 3, seed=5)
    np.testing.assert_array_equal(a.bank.prototypes, b.bank.prototypes)


def test_mini_batch_kmeans(rng):
    d = gappy_dataset(rng)
    result = train.kmeans(d, 3, seed=0, max_iters=20, batch_size=8)
    assert result.bank.k == 3
    assert len(result.objective) == 1
    assert np.all(np.isfinite(result.bank.prototypes))


def test_kmeans_arguments(rng):
    d = gappy_dataset(rng, n=3)
    with pytest.raises(EmptyInputError):
        train.kmeans(d, 4)
    with pytest.raises(ConfigError):
        train.kmeans(d, 0)


def test_empty_cluster_reseeded_next_to_the_largest(rng):
    centroids = np.stack([np.full((4, 2), 1.0), np.full((4, 2), 9.0), np.full((4, 2), -3.0)])
    reseeded = train._reseed_empty(centroids, np.array([2, 5, 0]), rng)
    np.testing.assert_array_equal(reseeded, [2])
    moved = np.linalg.norm(centroids[2] - centroids[1])
    assert moved == pytest.approx(train.REASSIGN_NOISE * np.linalg.norm(centroids[1]))
    np.testing.assert_array_equal(centroids[0], 1.0)


def test_ncc_initialization_needs_one_prototype_per_class(tiny):
    with pytest.raises(ConfigError):
        train.init_prototypes(tiny.train, 'ncc', 4)
    with pytest.raises(ConfigError):
        train.init_prototypes(tiny.train, 'random', 3)


def test_init_run(tiny, tiny_hyper):
    run = train.init_run(tiny.train, 'sup', tiny_hyper, seed=0)
    assert run.k == 3
    assert run.state.stages == train.STAGES
    assert run.state.name == 'raw'
    model = baselines.ncc_fit(tiny.train)
    np.testing.assert_array_equal(run.bank.prototypes, model.centroids)

    run = train.init_run(tiny.train, 'unsup', dataclasses.replace(tiny_hyper, k=5), seed=0)
    assert run.k == 5
    assert run.state.stages == train.STAGES[:3]


def test_init_run_arguments(tiny, tiny_hyper):
    with pytest.raises(LabelError):
        train.init_run(tiny.train.replace(labels=None), 'sup', tiny_hyper)
    with pytest.raises(ConfigError):
        train.init_run(tiny.train, 'semi', tiny_hyper)


@pytest.mark.parametrize('stage', [0, 1, 2, 3])
def test_untrained_model_matches_nearest_centroid(tiny, tiny_hyper, stage):
    run = train.init_run(tiny.train, 'sup', tiny_hyper)
    run.state.stage = stage
    result = train.assign(run, tiny.test)
    model = baselines.ncc_fit(tiny.train)
    expected = baselines.masked_distance_matrix(tiny.test.values, tiny.test.weights, model.centroids)
    np.testing.assert_allclose(result.distances, expected, rtol=1e-12, atol=0.0)
    np.testing.assert_array_equal(train.predict(run, tiny.test),
                                  baselines.ncc_predict_many(model, tiny.test.values,
                                                             tiny.test.weights))


def test_assign_is_thread_independent(tiny, tiny_hyper):
    run = train.init_run(tiny.train, 'sup', dataclasses.replace(tiny_hyper, batch_size=5))
    run.state.stage = 2
    single = train.assign(run, tiny.test)
    run.threads = 3
    threaded = train.assign(run, tiny.test)
    np.testing.assert_array_equal(single.distances, threaded.distances)
    np.testing.assert_array_equal(single.indices, threaded.indices)


def test_unsupervised_predictions_are_cluster_indices(tiny, tiny_hyper):
    run = train.init_run(tiny.train, 'unsup', tiny_hyper)
    predicted = train.predict(run, tiny.test)
    assert predicted.min() >= 0
    assert predicted.max() < run.k


@pytest.mark.parametrize('mode', ['sup', 'unsup'])
def test_curriculum_returns_the_best_snapshot(tmp_path, tiny, tiny_hyper, mode):
    log_path = str(tmp_path / 'train_log.csv')
    run = train.init_run(tiny.train, mode, tiny_hyper, seed=0, log_path=log_path)
    run = train.train_curriculum(run, tiny.train, tiny.test)
    history = run.state.history
    assert history[0]['step'] == 0
    assert run.state.steps <= tiny_hyper.max_steps
    assert train._validate(run, tiny.test) == run.state.best
    metrics = [row['metric'] for row in history]
    if mode == 'sup':
        assert run.state.best == max(metrics)
    else:
        assert run.state.best == min(metrics)
    assert all(row['stage'] in run.state.stages for row in history)

    with open(log_path) as stream:
        rows = list(csv.DictReader(stream))
    assert tuple(rows[0]) == train.LOG_FIELDS
    assert len(rows) == len(history)


def test_curriculum_arguments(tiny, tiny_hyper):
    run = train.init_run(tiny.train, 'sup', tiny_hyper)
    with pytest.raises(ConfigError):
        train.train_curriculum(run, tiny.train, tiny.test, mode='unsup')
    with pytest.raises(LabelError):
        train.train_curriculum(run, tiny.train, tiny.test.replace(labels=None))


def test_checkpoint_round_trip(tmp_path, tiny, tiny_hyper):
    run = train.init_run(tiny.train, 'sup', tiny_hyper, seed=3)
    run.state.stage = 2
    stats = ChannelStats([0.5, -1.0], [2.0, 3.0])
    path = str(tmp_path / 'model.ckpt')
    checkpoint.save(run, path, stats)
    loaded, loaded_stats = checkpoint.load(path)
    assert loaded.mode == 'sup'
    assert loaded.state.stage == 2
    assert loaded.state.stages == train.STAGES
    assert loaded.hyper == run.hyper
    assert loaded.weights.dims == run.weights.dims
    assert list(loaded.weights.params) == list(run.weights.params)
    np.testing.assert_allclose(loaded.bank.prototypes, run.bank.prototypes, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(loaded.weights.params['conv0.kernel'],
                               run.weights.params['conv0.kernel'], rtol=1e-6, atol=1e-7)
    np.testing.assert_array_equal(loaded_stats.mean, stats.mean)
    np.testing.assert_array_equal(loaded_stats.std, stats.std)


def test_checkpoint_without_stats(tmp_path, tiny, tiny_hyper):
    path = str(tmp_path / 'model.ckpt')
    checkpoint.save(train.init_run(tiny.train, 'unsup', tiny_hyper), path)
    run, stats = checkpoint.load(path)
    assert stats is None
    assert run.mode == 'unsup'


def test_corrupt_checkpoints(tmp_path, tiny, tiny_hyper):
    path = tmp_path / 'model.ckpt'
    path.write_bytes(b'not a checkpoint\n')
    with pytest.raises(DataFormatError) as info:
        checkpoint.load(str(path))
    assert info.value.path == str(path)

    checkpoint.save(train.init_run(tiny.train, 'sup', tiny_hyper), str(path))
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(DataFormatError):
        checkpoint.load(str(path))
    path.write_bytes(data + b'\0\0\0\0')
    with pytest.raises(DataFormatError):
        checkpoint.load(str(path))


def test_package_helpers(tmp_path, tiny, tiny_hyper):
    import tsproto
    from tsproto import io

    path = str(tmp_path / 'train.tsd')
    io.write_dataset(tiny.train, path)
    d = tsproto.load(path, 'train')
    assert len(d) == len(tiny.train)
    run = tsproto.fit(d, tiny.test, 'sup', tiny_hyper)
    assert set(tsproto.predict(run, tiny.test)) <= {1, 2, 3}
