""" Prototype deformations: a 1D thin-plate-spline time warp and a per-channel offset.

The warp ``h`` interpolates landmark shifts ``h(t_m) = t_m + beta[m]`` with the natural cubic
spline ``h(t) = a + b t + sum_m w_m |t - t_m|^3`` under the side conditions ``sum w = 0`` and
``sum w t_m = 0``. The system matrix depends on the landmarks only, so it is factorized once per
:class:`WarpConfig` and ``h`` on the time grid is linear in ``beta``::

    h(grid) = grid + operator @ beta

Times are 1-based days; sampling at fractional times interpolates linearly and clamps to [1, T].
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from tsproto import grad
from tsproto.core import default_landmarks
from tsproto.exceptions import ConfigError, ShapeError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WarpConfig:
    length: int
    n_landmarks: int = 0

    def __post_init__(self):
        if self.length < 2:
            raise ConfigError('length', self.length, 'time series need T >= 2')
        if self.n_landmarks == 0:
            object.__setattr__(self, 'n_landmarks', default_landmarks(self.length))
        if self.n_landmarks < 2:
            raise ConfigError('landmarks', self.n_landmarks, 'must be >= 2')

    @cached_property
    def landmarks(self):
        landmarks = np.linspace(1.0, float(self.length), self.n_landmarks)
        landmarks.setflags(write=False)
        return landmarks

    @property
    def grid(self):
        return np.arange(1, self.length + 1, dtype=np.float64)

    @property
    def _scale(self):
        return float(self.length - 1)

    def _unit(self, t):
        # Solving on [0, 1] keeps the cubic kernel well conditioned for long series.
        return (np.asarray(t, dtype=np.float64) - 1.0) / self._scale

    @cached_property
    def _factorization(self):
        u = self._unit(self.landmarks)
        m = self.n_landmarks
        system = np.zeros((m + 2, m + 2))
        system[:m, :m] = np.abs(u[:, None] - u[None, :]) ** 3
        system[:m, m] = 1.0
        system[:m, m + 1] = u
        system[m, :m] = 1.0
        system[m + 1, :m] = u
        return lu_factor(system)

    def solve(self, shifts):
        """ Spline coefficients ``(w, a, b)`` of the displacement ``h(t) - t`` in unit time. """
        shifts = np.asarray(shifts, dtype=np.float64)
        rhs = np.zeros(shifts.shape[:-1] + (self.n_landmarks + 2,))
        rhs[..., :self.n_landmarks] = shifts
        coefficients = lu_solve(self._factorization, rhs.reshape(-1, rhs.shape[-1]).T).T
        coefficients = coefficients.reshape(rhs.shape)
        m = self.n_landmarks
        return coefficients[..., :m], coefficients[..., m], coefficients[..., m + 1]

    def _basis(self, t):
        u = self._unit(t)
        return np.abs(u[:, None] - self._unit(self.landmarks)[None, :]) ** 3, u

    @cached_property
    def operator(self):
        """ (T, M) matrix mapping landmark shifts to the displacement on the time grid. """
        kernel, u = self._basis(self.grid)
        design = np.concatenate([kernel, np.ones((self.length, 1)), u[:, None]], axis=1)
        m = self.n_landmarks
        # columns of the inverse system matrix that multiply the shift part of the rhs
        inverse = lu_solve(self._factorization, np.eye(m + 2)[:, :m])
        operator = design @ inverse
        operator.setflags(write=False)
        return operator


@dataclass(frozen=True, eq=False)
class TransformParams:
    offset: np.ndarray
    warp: np.ndarray
    warp_scale: float = 7.0

    def __post_init__(self):
        offset = np.array(self.offset, dtype=np.float64).reshape(-1)
        warp = np.array(self.warp, dtype=np.float64).reshape(-1)
        violations = []
        if np.any(np.abs(offset) > 1.0):
            violations.append('offset outside [-1, 1]')
        if np.any(np.abs(warp) > self.warp_scale):
            violations.append('warp shift outside [-{0}, {0}]'.format(self.warp_scale))
        if violations:
            raise ValidationError(violations)
        object.__setattr__(self, 'offset', offset)
        object.__setattr__(self, 'warp', warp)

    @classmethod
    def identity(cls, channels, n_landmarks, warp_scale=7.0):
        return cls(np.zeros(channels), np.zeros(n_landmarks), warp_scale)


@dataclass(frozen=True, eq=False)
class WarpFunction:
    """ ``h(t) = a + b t + sum_m weights[m] |t - landmarks[m]|^3`` in day units. """
    a: float
    b: float
    weights: np.ndarray
    landmarks: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        radial = np.abs(t[..., None] - self.landmarks) ** 3 @ self.weights
        return self.a + self.b * t + radial


def fit_warp(cfg, warp):
    warp = np.asarray(warp, dtype=np.float64)
    if warp.shape != (cfg.n_landmarks,):
        raise ShapeError('warp shifts', (cfg.n_landmarks,), warp.shape)
    w, a, b = cfg.solve(warp)
    scale = cfg._scale
    # unit time u = (t - 1) / scale back to days, plus the identity part of h
    return WarpFunction(a=float(a - b / scale), b=float(1.0 + b / scale),
                        weights=w / scale ** 3, landmarks=np.array(cfg.landmarks))


def sample(p, times):
    """ Linear interpolation of ``p`` (T, C) at 1-based ``times``, clamped to [1, T]. """
    p = np.asarray(p, dtype=np.float64)
    length = p.shape[0]
    position = np.clip(np.asarray(times, dtype=np.float64), 1.0, float(length)) - 1.0
    lower = np.clip(np.floor(position), 0, length - 2).astype(np.int64)
    frac = (position - lower)[..., None]
    return p[lower] * (1.0 - frac) + p[lower + 1] * frac


def apply_time_warp(p, h):
    p = np.asarray(p, dtype=np.float64)
    return sample(p, h(np.arange(1, p.shape[0] + 1, dtype=np.float64)))


def apply_offset(p, offset):
    p = np.asarray(p, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    if offset.shape != (p.shape[-1],):
        raise ShapeError('offset', (p.shape[-1],), offset.shape)
    return p + offset


def reconstruct(p, params, cfg):
    """ Time warp, then offset. """
    return apply_offset(apply_time_warp(p, fit_warp(cfg, params.warp)), params.offset)


def warp_positions(cfg, warp):
    """ 0-based clamped sampling positions (..., T) for landmark shifts ``warp`` (..., M).

    Works on arrays and on :class:`grad.Tensor` values alike.
    """
    operator = cfg.operator
    if isinstance(warp, grad.Tensor):
        displacement = grad.matmul(warp, np.ascontiguousarray(operator.T))
        return grad.clip(displacement + (cfg.grid - 1.0), 0.0, cfg.length - 1.0)
    displacement = np.asarray(warp, dtype=np.float64) @ operator.T
    return np.clip(displacement + (cfg.grid - 1.0), 0.0, cfg.length - 1.0)


def align(prototype, target, mask, cfg, warp_scale=7.0, learning_rate=0.01, steps=500,
          use_offset=True):
    """ Fit one deformation of ``prototype`` to ``target`` (both T x C) under ``mask``.

    Free parameters pass through the same tanh bounds as the predicted ones. Returns the
    fitted :class:`TransformParams` and the masked reconstruction error per step.
    """
    prototype = np.asarray(prototype, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    weights = np.asarray(getattr(mask, 'weights', mask), dtype=np.float64)
    if prototype.shape != target.shape:
        raise ShapeError('alignment target', prototype.shape, target.shape)
    if not weights.sum() > 0:
        raise ValidationError(['alignment mask has no observation'])
    length, channels = prototype.shape
    weights = (weights / weights.sum())[:, None] / channels

    params = {'warp': np.zeros((1, cfg.n_landmarks))}
    if use_offset:
        params['offset'] = np.zeros(channels)
    state = grad.AdamState()
    history = []
    for _ in range(steps):
        tape = grad.Tape()
        leaves = dict((name, tape.watch(value, name)) for name, value in params.items())
        shifts = grad.tanh(leaves['warp']) * warp_scale
        positions = warp_positions(cfg, shifts).reshape(1, 1, length)
        warped = grad.gather_interp(prototype[None], positions).reshape(length, channels)
        if use_offset:
            warped = warped + grad.tanh(leaves['offset'])
        residual = warped - target
        loss = grad.sum(grad.square(residual) * weights)
        history.append(float(loss.value))
        params, state = grad.adam_step(params, grad.backward(tape, loss), state, learning_rate)

    offset = np.tanh(params['offset']) if use_offset else np.zeros(channels)
    fitted = TransformParams(offset, np.tanh(params['warp'][0]) * warp_scale, warp_scale)
    logger.debug('Aligned prototype in {} steps, error {:.6g} -> {:.6g}'.format(
        steps, history[0] if history else float('nan'), history[-1] if history else float('nan')))
    return fitted, history
