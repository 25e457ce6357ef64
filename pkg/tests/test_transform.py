import numpy as np
import pytest

from tsproto import grad, transform
from tsproto.exceptions import ConfigError, ShapeError, ValidationError
from tsproto.transform import TransformParams, WarpConfig


def test_landmarks_span_the_grid():
    cfg = WarpConfig(180, 3)
    np.testing.assert_allclose(cfg.landmarks, [1.0, 90.5, 180.0])
    assert WarpConfig(180).n_landmarks == 6


@pytest.mark.parametrize('length, landmarks', [(1, 2), (10, 1)])
def test_warp_config_rejects(length, landmarks):
    with pytest.raises(ConfigError):
        WarpConfig(length, landmarks)


def test_warp_interpolates_landmark_shifts(rng):
    for _ in range(1000):
        length = int(rng.integers(10, 400))
        cfg = WarpConfig(length, int(rng.integers(2, 13)))
        beta = rng.uniform(-7.0, 7.0, cfg.n_landmarks)
        h = transform.fit_warp(cfg, beta)
        np.testing.assert_allclose(h(cfg.landmarks), cfg.landmarks + beta, atol=1e-6)


def test_demo_warp_end_points():
    cfg = WarpConfig(180, 3)
    h = transform.fit_warp(cfg, [-7.0, 0.0, 7.0])
    assert h(1.0) == pytest.approx(-6.0, abs=1e-9)
    assert h(90.5) == pytest.approx(90.5, abs=1e-9)
    assert h(180.0) == pytest.approx(187.0, abs=1e-9)


def test_zero_shift_is_identity():
    cfg = WarpConfig(50, 4)
    h = transform.fit_warp(cfg, np.zeros(4))
    np.testing.assert_allclose(h(cfg.grid), cfg.grid, atol=1e-12)


def test_affine_shifts_give_affine_warp():
    cfg = WarpConfig(60, 5)
    beta = 0.05 * cfg.landmarks + 2.0
    h = transform.fit_warp(cfg, beta)
    np.testing.assert_allclose(h(cfg.grid), 1.05 * cfg.grid + 2.0, atol=1e-9)


def test_operator_matches_fitted_warp(rng):
    cfg = WarpConfig(90, 4)
    beta = rng.uniform(-7.0, 7.0, 4)
    h = transform.fit_warp(cfg, beta)
    np.testing.assert_allclose(cfg.grid + cfg.operator @ beta, h(cfg.grid), atol=1e-9)


def test_fit_warp_checks_shape():
    with pytest.raises(ShapeError):
        transform.fit_warp(WarpConfig(20, 3), np.zeros(4))


def test_sample_interpolates_and_clamps():
    p = np.array([[0.0], [1.0], [3.0]])
    np.testing.assert_allclose(transform.sample(p, [1.0, 2.0, 3.0])[:, 0], [0, 1, 3])
    np.testing.assert_allclose(transform.sample(p, [1.5, 2.5])[:, 0], [0.5, 2.0])
    np.testing.assert_allclose(transform.sample(p, [-4.0, 9.0])[:, 0], [0, 3])


def test_identity_reconstruction_is_exact(rng):
    p = rng.normal(size=(40, 3))
    cfg = WarpConfig(40, 3)
    out = transform.reconstruct(p, TransformParams.identity(3, 3), cfg)
    np.testing.assert_array_equal(out, p)


def test_offset_only():
    p = np.zeros((5, 2))
    cfg = WarpConfig(5, 2)
    out = transform.reconstruct(p, TransformParams([0.5, -0.25], [0.0, 0.0]), cfg)
    np.testing.assert_array_equal(out[:, 0], 0.5)
    np.testing.assert_array_equal(out[:, 1], -0.25)
    with pytest.raises(ShapeError):
        transform.apply_offset(p, [1.0])


def test_transform_params_bounds():
    with pytest.raises(ValidationError):
        TransformParams([1.5], [0.0, 0.0])
    with pytest.raises(ValidationError) as info:
        TransformParams([0.0], [0.0, 8.0])
    assert 'warp shift' in str(info.value)
    TransformParams([1.0], [7.0, -7.0])


def test_warp_positions_array_and_tensor_agree(rng):
    cfg = WarpConfig(30, 3)
    beta = rng.uniform(-7.0, 7.0, (2, 3))
    array = transform.warp_positions(cfg, beta)
    tape = grad.Tape()
    tensor = transform.warp_positions(cfg, tape.watch(beta, 'beta'))
    np.testing.assert_allclose(tensor.value, array)
    assert array.min() >= 0.0
    assert array.max() <= 29.0


def test_align_lowers_the_error():
    cfg = WarpConfig(60, 3)
    t = cfg.grid
    prototype = np.stack([np.sin(t / 8.0), np.cos(t / 11.0)], axis=1)
    target = transform.reconstruct(prototype, TransformParams([0.3, -0.2], [3.0, -2.0, 4.0]), cfg)
    params, history = transform.align(prototype, target, np.ones(60), cfg, steps=150,
                                      learning_rate=0.05)
    assert len(history) == 150
    assert history[-1] < 0.2 * history[0]
    assert params.warp.shape == (3,)
    assert np.all(np.abs(params.offset) <= 1.0)


def test_align_needs_observations():
    cfg = WarpConfig(10, 2)
    with pytest.raises(ValidationError):
        transform.align(np.zeros((10, 1)), np.zeros((10, 1)), np.zeros(10), cfg, steps=1)
