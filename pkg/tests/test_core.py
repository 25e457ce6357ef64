import numpy as np
import pytest

from conftest import make_dataset
from tsproto import io
from tsproto.aggregate import InstanceRaster, LabelRaster
from tsproto.core import (ConfusionCounts, Dataset, HyperParams, Mask, PrototypeBank, TimeSeries,
                          default_landmarks, validate_dataset)
from tsproto.exceptions import (ConfigError, DataFormatError, EmptyInputError, LabelError,
                                ShapeError, ValidationError)


def test_series_are_frozen_float32():
    series = TimeSeries(np.arange(6.0).reshape(3, 2))
    assert series.values.dtype == np.float32
    assert (series.length, series.channels) == (3, 2)
    with pytest.raises(ValueError):
        series.values[0, 0] = 1.0


def test_mask_mass():
    assert Mask([1, 0, 1, 1]).mass == 3.0


def test_dataset_from_arrays(rng):
    d = make_dataset(rng.normal(size=(4, 5, 2)), labels=[1, 2, 2, 3])
    assert len(d) == 4
    assert (d.length, d.channels) == (5, 2)
    assert d.n_classes == 3
    assert d.raw
    np.testing.assert_array_equal(d.zero_based_labels(), [0, 1, 1, 2])
    sub = d.subset([3, 0])
    np.testing.assert_array_equal(sub.labels, [3, 1])
    np.testing.assert_array_equal(sub.values[1], d.values[0])


def test_dataset_shape_checks():
    with pytest.raises(ShapeError):
        Dataset.from_arrays(np.zeros((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        Dataset.from_arrays(np.zeros((2, 3, 1)), np.ones((2, 4)))


def test_unlabeled_dataset_has_no_zero_based_labels():
    d = make_dataset(np.zeros((2, 3, 1)))
    with pytest.raises(LabelError):
        d.zero_based_labels()


def test_validate_dataset_accepts_good_data(rng):
    assert validate_dataset(make_dataset(rng.normal(size=(3, 4, 2)), labels=[1, 2, 1])) == []


def test_validate_dataset_lists_every_violation():
    values = np.zeros((3, 4, 1))
    values[1, 2, 0] = np.nan
    weights = np.ones((3, 4))
    weights[2] = 0.0
    weights[0, 1] = 0.5
    d = Dataset.from_arrays(values, weights, labels=[1, 5, 1], raw=True, n_classes=2)
    violations = validate_dataset(d)
    assert 'series 0: raw mask not binary' in violations
    assert 'series 1: non-finite values' in violations
    assert 'series 2: mask has no observation' in violations
    assert 'series 1: label 5 out of range' in violations


def test_validate_dataset_length_mismatch():
    d = Dataset([TimeSeries(np.zeros((4, 1))), TimeSeries(np.zeros((5, 1)))],
                [Mask(np.ones(4)), Mask(np.ones(5))])
    assert validate_dataset(d) == ['series 1: length mismatch']


def test_validate_empty_dataset():
    assert validate_dataset(Dataset([], [])) == ['dataset: no series']


def test_prototype_bank_checks_shape(rng):
    d = make_dataset(rng.normal(size=(2, 6, 3)))
    PrototypeBank(np.zeros((4, 6, 3))).check(d)
    with pytest.raises(ShapeError):
        PrototypeBank(np.zeros((4, 5, 3))).check(d)
    with pytest.raises(ShapeError):
        PrototypeBank(np.zeros((0, 6, 3)))


@pytest.mark.parametrize('length, expected', [(10, 2), (180, 6), (365, 12), (30, 2)])
def test_default_landmarks(length, expected):
    assert default_landmarks(length) == expected


def test_hyper_params_defaults():
    hyper = HyperParams()
    assert hyper.n_landmarks(180) == 6
    assert HyperParams(landmarks=4).n_landmarks(180) == 4
    assert hyper.filters == (128, 256, 128)
    assert hyper.kernels == (8, 5, 3)


@pytest.mark.parametrize('changes', [
    dict(learning_rate=0.0),
    dict(lambda_tv=-1.0),
    dict(landmarks=1),
    dict(k=0),
    dict(filters=(4, 4), kernels=(3,)),
])
def test_hyper_params_rejects(changes):
    with pytest.raises(ConfigError):
        HyperParams(**changes)


def test_confusion_counts():
    counts = ConfusionCounts.from_predictions([1, 2, 2, 1], [1, 2, 1, 1])
    np.testing.assert_array_equal(counts.matrix, [[2, 1], [0, 1]])
    np.testing.assert_array_equal(counts.tp, [2, 1])
    np.testing.assert_array_equal(counts.fn, [1, 0])
    assert (counts.correct, counts.total) == (3, 4)


def test_confusion_counts_rejects_bad_input():
    with pytest.raises(EmptyInputError):
        ConfusionCounts.from_predictions([], [])
    with pytest.raises(LabelError):
        ConfusionCounts.from_predictions([0, 1], [1, 1])
    with pytest.raises(ShapeError):
        ConfusionCounts.from_predictions([1], [1, 1])


@pytest.mark.parametrize('binary', [False, True])
def test_dataset_file_round_trip(tmp_path, rng, binary):
    values = rng.normal(size=(3, 5, 2)).astype(np.float32)
    weights = np.ones((3, 5), dtype=np.float32)
    weights[1, 2] = 0.0
    d = Dataset.from_arrays(values, weights, labels=[2, 1, 2])
    path = str(tmp_path / 'd.tsd')
    io.write_dataset(d, path, binary=binary)
    back = io.read_dataset(path, 'test')
    assert back.split == 'test'
    np.testing.assert_array_equal(back.values, d.values)
    np.testing.assert_array_equal(back.weights, d.weights)
    np.testing.assert_array_equal(back.labels, d.labels)
    assert back.raw


def test_filtered_weights_survive_text_round_trip(tmp_path):
    d = Dataset.from_arrays(np.zeros((1, 3, 1)), np.array([[0.5, 1.0, 0.25]]), raw=False)
    path = str(tmp_path / 'f.tsd')
    io.write_dataset(d, path)
    back = io.read_dataset(path)
    assert not back.raw
    assert back.split == 'train'
    np.testing.assert_array_equal(back.weights, d.weights)


@pytest.mark.parametrize('binary', [False, True])
def test_filtered_flag_survives_binary_looking_weights(tmp_path, binary):
    d = Dataset.from_arrays(np.zeros((1, 3, 1)), np.array([[1.0, 0.0, 1.0]]), raw=False)
    path = str(tmp_path / 'f.tsd')
    io.write_dataset(d, path, binary=binary)
    assert not io.read_dataset(path).raw


def test_binary_dataset_without_raw_flag(tmp_path):
    path = tmp_path / 'old.tsd'
    header = np.array([2, 1, 1, 0], dtype='<i4').tobytes()
    body = np.array([3.0, 4.0, 1.0, 0.5], dtype='<f4').tobytes()
    path.write_bytes(io.DATASET_MAGIC + header + body)
    back = io.read_dataset(str(path))
    np.testing.assert_array_equal(back.values[0, :, 0], [3.0, 4.0])
    assert not back.raw


def test_truncated_dataset_reports_path(tmp_path):
    path = tmp_path / 'bad.tsd'
    path.write_text('T=3,C=1,N=2,labeled=0\n1,2,3\n1,1,1\n')
    with pytest.raises(DataFormatError) as info:
        io.read_dataset(str(path))
    assert info.value.path == str(path)
    assert str(path) in str(info.value)


def test_non_numeric_value_reports_line(tmp_path):
    path = tmp_path / 'bad.tsd'
    path.write_text('T=2,C=1,N=1,labeled=0\n1,x\n1,1\n')
    with pytest.raises(DataFormatError) as info:
        io.read_dataset(str(path))
    assert info.value.line == 2


def test_missing_header_key(tmp_path):
    path = tmp_path / 'bad.tsd'
    path.write_text('T=2,C=1,labeled=0\n')
    with pytest.raises(DataFormatError):
        io.read_dataset(str(path))


def test_read_rejects_invalid_content(tmp_path):
    path = tmp_path / 'empty-mask.tsd'
    path.write_text('T=2,C=1,N=1,labeled=0\n1,2\n0,0\n')
    with pytest.raises(ValidationError) as info:
        io.read_dataset(str(path))
    assert info.value.violations == ['series 0: mask has no observation']


@pytest.mark.parametrize('binary', [False, True])
def test_raster_round_trip(tmp_path, binary):
    labels = np.array([[1, 2, 0], [3, 1, 2]])
    void = np.array([[False, False, True], [False, False, False]])
    path = str(tmp_path / 'labels.ptr')
    io.write_raster(LabelRaster(labels, void), path, binary=binary)
    back = io.read_raster(path)
    assert isinstance(back, LabelRaster)
    np.testing.assert_array_equal(back.void_mask(), void)
    np.testing.assert_array_equal(back.labels[~void], labels[~void])

    ids = np.array([[0, 1, 1], [2, 2, 3]])
    io.write_raster(InstanceRaster(ids), path, binary=binary)
    back = io.read_raster(path)
    assert isinstance(back, InstanceRaster)
    np.testing.assert_array_equal(back.ids, ids)


def test_raster_row_width_checked(tmp_path):
    path = tmp_path / 'r.ptr'
    path.write_text('H=2,W=2,kind=labels\n1,2\n3\n')
    with pytest.raises(DataFormatError) as info:
        io.read_raster(str(path))
    assert info.value.line == 3
