"""Constant-velocity Kalman filter over ``[u, v, gamma, h]`` and their rates.

The process and measurement noise are divided by ``similarity + lambda_c``,
where ``similarity`` is the association score of the track, so confident
associations tighten both noise terms.
"""
import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError

STATE_DIM = 8
MEAS_DIM = 4
CHI2_95_4DOF = 9.4877


def constant_velocity_transition(dt=1.0):
    F = np.eye(STATE_DIM)
    F[:MEAS_DIM, MEAS_DIM:] = dt * np.eye(MEAS_DIM)
    return F


def observation_matrix():
    return np.eye(MEAS_DIM, STATE_DIM)


@dataclass
class MotionState:
    mean: np.ndarray
    covariance: np.ndarray

    def copy(self):
        return MotionState(self.mean.copy(), self.covariance.copy())


@dataclass
class MotionModelConfig:
    """Filter matrices and noise settings.

    ``base_Q`` / ``base_R`` are used verbatim when given. Otherwise they are
    built per track from its current height: position std
    ``std_weight_position * h``, velocity std ``std_weight_velocity * h``.
    With ``scale_process_noise=False`` only the measurement noise is divided by
    ``similarity + lambda_c``.
    """

    F: np.ndarray = field(default_factory=constant_velocity_transition)
    H: np.ndarray = field(default_factory=observation_matrix)
    base_Q: Optional[np.ndarray] = None
    base_R: Optional[np.ndarray] = None
    lambda_c: float = 0.5
    gate_threshold: float = CHI2_95_4DOF
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    scale_process_noise: bool = True

    def __post_init__(self):
        if not self.lambda_c > 0:
            raise ValueError("lambda_c must be positive")
        for name in ("base_Q", "base_R"):
            m = getattr(self, name)
            if m is not None:
                m = np.asarray(m, dtype=float)
                if not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() < -1e-12:
                    raise ValueError(f"{name} must be symmetric positive semi-definite")
                setattr(self, name, m)

    def process_noise(self, mean):
        if self.base_Q is not None:
            return self.base_Q
        h = abs(mean[3])
        std = np.array([
            self.std_weight_position * h, self.std_weight_position * h, 1e-2, self.std_weight_position * h,
            self.std_weight_velocity * h, self.std_weight_velocity * h, 1e-5, self.std_weight_velocity * h,
        ])
        return np.diag(std ** 2)

    def measurement_noise(self, mean):
        if self.base_R is not None:
            return self.base_R
        h = abs(mean[3])
        std = np.array([self.std_weight_position * h, self.std_weight_position * h, 1e-1,
                        self.std_weight_position * h])
        return np.diag(std ** 2)

    def noise_scale(self, similarity):
        return 1.0 / (similarity + self.lambda_c)


def _check(state, what, track_id):
    if not (np.all(np.isfinite(state.mean)) and np.all(np.isfinite(state.covariance))):
        who = f"track {track_id}" if track_id is not None else "state"
        raise NumericalError(f"kalman.{what}: non-finite result for {who}")
    return state


def _symmetrize(P):
    return 0.5 * (P + P.T)


def initiate(measurement, cfg, velocity_inflation=10.0):
    """New state from a single measurement; velocities start at zero with an
    inflated covariance since they are unobservable at birth."""
    z = np.asarray(measurement, dtype=float)
    mean = np.r_[z, np.zeros(MEAS_DIM)]
    h = z[3]
    wp, wv = cfg.std_weight_position, cfg.std_weight_velocity
    std = [2 * wp * h, 2 * wp * h, 1e-2, 2 * wp * h,
           velocity_inflation * wv * h, velocity_inflation * wv * h, 1e-5, velocity_inflation * wv * h]
    return MotionState(mean, np.diag(np.square(std)))


def predict(state, cfg, similarity=0.5, track_id=None):
    """Propagate one frame: ``x' = F x``, ``P' = F P F^T + Q / (C + lambda_c)``."""
    F = cfg.F
    Q = cfg.process_noise(state.mean)
    if cfg.scale_process_noise:
        Q = Q * cfg.noise_scale(similarity)
    mean = F @ state.mean
    cov = _symmetrize(F @ state.covariance @ F.T + Q)
    return _check(MotionState(mean, cov), "predict", track_id)


def kalman_gain(P, H, R):
    S = H @ P @ H.T + R
    try:
        cho = scipy.linalg.cho_factor(S, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"kalman.update: innovation covariance not invertible ({exc})") from exc
    return scipy.linalg.cho_solve(cho, H @ P, check_finite=False).T


def update(state, z, cfg, similarity=0.5, track_id=None):
    """Measurement update with ``R / (C + lambda_c)`` and the Joseph-form
    covariance, which keeps the posterior symmetric positive definite."""
    H = cfg.H
    R = cfg.measurement_noise(state.mean) * cfg.noise_scale(similarity)
    P = state.covariance
    K = kalman_gain(P, H, R)
    innovation = np.asarray(z, dtype=float) - H @ state.mean
    mean = state.mean + K @ innovation
    A = np.eye(len(mean)) - K @ H
    cov = _symmetrize(A @ P @ A.T + K @ R @ K.T)
    return _check(MotionState(mean, cov), "update", track_id)


def _projected_cholesky(state, cfg):
    S = cfg.H @ state.covariance @ cfg.H.T
    try:
        return scipy.linalg.cho_factor(S, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"kalman.mahalanobis: projected covariance is singular ({exc})") from exc


def mahalanobis(state, z, cfg):
    """Squared Mahalanobis distance of measurement(s) ``z`` from the projected
    state, using ``S = H P H^T`` (no measurement noise term).

    ``z`` may be a single 4-vector or an ``(N, 4)`` array."""
    z = np.asarray(z, dtype=float)
    cho = _projected_cholesky(state, cfg)
    r = (z - cfg.H @ state.mean).T
    d = np.sum(r * scipy.linalg.cho_solve(cho, r), axis=0)
    d = np.maximum(d, 0.0)
    return float(d) if z.ndim == 1 else d


def gate(d, cfg):
    # boundary is inclusive
    return d <= cfg.gate_threshold


def nees(estimated, true_state):
    e = estimated.mean - np.asarray(true_state, dtype=float)
    try:
        cho = scipy.linalg.cho_factor(estimated.covariance, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"kalman.nees: covariance is singular ({exc})") from exc
    return float(e @ scipy.linalg.cho_solve(cho, e))


def steady_state_gain(F, H, Q, R, iterations=2000, tol=1e-14):
    """Iterate the Riccati recursion until the gain stops changing."""
    n = F.shape[0]
    P = np.eye(n)
    K_prev = None
    for _ in range(iterations):
        P = F @ P @ F.T + Q
        K = kalman_gain(P, H, R)
        A = np.eye(n) - K @ H
        P = _symmetrize(A @ P @ A.T + K @ R @ K.T)
        if K_prev is not None and np.max(np.abs(K - K_prev)) < tol:
            break
        K_prev = K
    return K


def simulate_target(z0, cfg, frames, rng, similarity=0.5):
    """Draw a target that matches the filter's own model.

    The initial state comes from the prior :func:`initiate` builds from
    ``z0``; after that the state follows ``F`` plus process noise and each
    measurement is ``H x`` plus measurement noise, both with the similarity
    scaling applied. Returns ``(measurements (T, 4), true_states (T, 8))``;
    row 0 holds ``z0`` and the initial state."""
    prior = initiate(z0, cfg)
    x = rng.multivariate_normal(prior.mean, prior.covariance)
    scale = cfg.noise_scale(similarity)
    states, meas = [x], [np.asarray(z0, dtype=float)]
    for _ in range(frames - 1):
        Q = cfg.process_noise(x) * (scale if cfg.scale_process_noise else 1.0)
        x = cfg.F @ x + rng.multivariate_normal(np.zeros(STATE_DIM), Q)
        R = cfg.measurement_noise(x) * scale
        states.append(x)
        meas.append(cfg.H @ x + rng.multivariate_normal(np.zeros(MEAS_DIM), R))
    return np.array(meas), np.array(states)


def filter_nees(measurements, true_states, cfg, similarity=0.5):
    """Run the filter over one sequence, returning per-step posterior NEES."""
    state = initiate(measurements[0], cfg)
    out = []
    for k in range(1, len(measurements)):
        state = predict(state, cfg, similarity)
        state = update(state, measurements[k], cfg, similarity)
        out.append(nees(state, true_states[k]))
    return np.array(out)


def tune_noise_weights(sequences, cfg, position_grid=None, velocity_grid=None):
    """Grid search over the height-proportional noise weights.

    ``sequences`` is an iterable of ``(measurements (T, 4), true_states (T, 8))``.
    Picks the pair whose mean NEES is closest (in log ratio) to the state
    dimension, the value a consistent filter attains. Returns
    ``(best_position_weight, best_velocity_weight, table)``.
    """
    sequences = list(sequences)
    position_grid = position_grid if position_grid is not None else [1 / 80, 1 / 60, 1 / 40, 1 / 30, 1 / 20, 1 / 15, 1 / 10]
    velocity_grid = velocity_grid if velocity_grid is not None else [1 / 640, 1 / 320, 1 / 160, 1 / 80, 1 / 40]
    table = []
    for wp, wv in itertools.product(position_grid, velocity_grid):
        trial = replace(cfg, std_weight_position=wp, std_weight_velocity=wv, base_Q=None, base_R=None)
        values = [filter_nees(m, x, trial) for m, x in sequences if len(m) > 1]
        mean = float(np.mean(np.concatenate(values))) if values else float("nan")
        table.append((wp, wv, mean))
    wp, wv, _ = min(table, key=lambda row: abs(np.log(row[2] / STATE_DIM)) if np.isfinite(row[2]) else np.inf)
    return wp, wv, table
