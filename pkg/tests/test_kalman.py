import numpy as np
import pytest
from scipy.stats import chi2

from gakp.errors import NumericalError
from gakp.kalman import (CHI2_95_4DOF, STATE_DIM, MotionModelConfig, MotionState, filter_nees, gate, initiate,
                         kalman_gain, mahalanobis, nees, predict, simulate_target, steady_state_gain,
                         tune_noise_weights, update)

Q0 = np.diag([4.0, 4.0, 1e-4, 4.0, 1.0, 1.0, 1e-6, 1.0])
R0 = np.diag([9.0, 9.0, 1e-2, 9.0])


def fixed_cfg(**kw):
    return MotionModelConfig(base_Q=Q0, base_R=R0, **kw)


def some_state(rng):
    A = rng.normal(size=(8, 8))
    return MotionState(np.r_[500.0, 400.0, 0.4, 120.0, rng.normal(size=4)], A @ A.T + 8 * np.eye(8))


def assert_valid_covariance(P):
    assert np.max(np.abs(P - P.T)) <= 1e-9
    assert np.linalg.eigvalsh(P).min() > 0


def test_identity_dynamics_zero_noise_leaves_state(rng):
    cfg = MotionModelConfig(F=np.eye(8), base_Q=np.zeros((8, 8)), base_R=R0)
    s = some_state(rng)
    out = predict(s, cfg)
    assert np.array_equal(out.mean, s.mean)
    assert np.allclose(out.covariance, s.covariance, rtol=0, atol=1e-12)


def test_neutral_similarity_keeps_noise_exact(rng):
    # C = 0.5 with lambda_c = 0.5 divides by exactly one
    cfg = fixed_cfg()
    s = some_state(rng)
    out = predict(s, cfg, similarity=0.5)
    expected = cfg.F @ s.covariance @ cfg.F.T + Q0
    assert np.array_equal(out.covariance, 0.5 * (expected + expected.T))
    assert cfg.noise_scale(0.5) == 1.0


def test_constant_velocity_step():
    cfg = fixed_cfg()
    s = MotionState(np.array([0, 0, 1, 10, 1, 0, 0, 0.0]), np.eye(8))
    assert predict(s, cfg).mean[0] == 1.0


def test_similarity_scales_process_noise():
    cfg = fixed_cfg()
    s = MotionState(np.r_[0, 0, 1, 10, np.zeros(4)], np.zeros((8, 8)))
    p1 = predict(s, cfg, similarity=1.0).covariance
    assert np.allclose(p1, Q0 / 1.5, rtol=1e-15)
    cfg_r = fixed_cfg(scale_process_noise=False)
    assert np.allclose(predict(s, cfg_r, similarity=1.0).covariance, Q0, rtol=1e-15)


def test_zero_innovation_keeps_mean(rng):
    cfg = fixed_cfg()
    s = some_state(rng)
    out = update(s, cfg.H @ s.mean, cfg)
    assert np.allclose(out.mean, s.mean, rtol=0, atol=1e-12)


def test_uninformative_measurement_limit(rng):
    cfg = MotionModelConfig(base_Q=Q0, base_R=R0 * 1e12)
    s = some_state(rng)
    out = update(s, cfg.H @ s.mean + np.array([30.0, -20, 0.1, 15]), cfg)
    assert np.allclose(out.mean, s.mean, rtol=1e-6)
    assert np.allclose(out.covariance, s.covariance, rtol=1e-6)


def test_scalar_recursion_oracle(rng):
    # With F = I the u component is a scalar random walk observed directly.
    q, r = 2.0, 5.0
    cfg = MotionModelConfig(F=np.eye(8), base_Q=np.eye(8) * q, base_R=np.eye(4) * r)
    s = MotionState(np.zeros(8), np.eye(8) * 3.0)
    x, P = 0.0, 3.0
    for _ in range(10):
        z = rng.normal(size=4) * 3
        s = update(predict(s, cfg), z, cfg)
        P = P + q
        K = P / (P + r)
        x = x + K * (z[0] - x)
        P = (1 - K) * P
        assert s.mean[0] == pytest.approx(x, abs=1e-12)
        assert s.covariance[0, 0] == pytest.approx(P, abs=1e-12)


def test_joseph_form_stays_symmetric_positive_definite(rng):
    cfg = MotionModelConfig()
    s = initiate(np.array([300.0, 200, 0.4, 100]), cfg)
    for k in range(200):
        c = rng.uniform(0, 1)
        s = predict(s, cfg, c)
        assert_valid_covariance(s.covariance)
        s = update(s, cfg.H @ s.mean + rng.normal(scale=[5, 5, 0.01, 5]), cfg, c)
        assert_valid_covariance(s.covariance)


def test_mahalanobis_examples():
    cfg = MotionModelConfig()
    P = np.zeros((8, 8))
    P[:4, :4] = np.eye(4)
    P[4:, 4:] = np.eye(4)
    s = MotionState(np.r_[10.0, 20, 0.5, 100, np.zeros(4)], P)
    assert mahalanobis(s, cfg.H @ s.mean, cfg) == 0.0
    assert mahalanobis(s, cfg.H @ s.mean + [3, 0, 0, 0], cfg) == pytest.approx(9.0, abs=1e-12)


def test_mahalanobis_dense_inverse_oracle(rng):
    cfg = MotionModelConfig()
    for _ in range(20):
        s = some_state(rng)
        z = cfg.H @ s.mean + rng.normal(size=4) * 3
        S = cfg.H @ s.covariance @ cfg.H.T
        r = z - cfg.H @ s.mean
        ref = r @ np.linalg.inv(S) @ r
        assert mahalanobis(s, z, cfg) == pytest.approx(ref, rel=1e-9)
    Z = cfg.H @ s.mean + rng.normal(size=(5, 4))
    batch = mahalanobis(s, Z, cfg)
    assert np.allclose(batch, [mahalanobis(s, z, cfg) for z in Z], rtol=1e-12)


def test_mahalanobis_ignores_measurement_noise(rng):
    s = some_state(rng)
    z = MotionModelConfig().H @ s.mean + 2.0
    a = mahalanobis(s, z, MotionModelConfig(base_R=np.eye(4)))
    b = mahalanobis(s, z, MotionModelConfig(base_R=np.eye(4) * 100))
    assert a == b


def test_gate_boundary():
    cfg = MotionModelConfig()
    assert cfg.gate_threshold == 9.4877
    assert gate(9.0, cfg)
    assert gate(CHI2_95_4DOF, cfg)
    assert not gate(20.0, cfg)


def test_gate_threshold_is_chi2_95_quantile():
    assert chi2.ppf(0.95, 4) == pytest.approx(CHI2_95_4DOF, abs=1e-4)


def test_nees_examples():
    s = MotionState(np.zeros(8), np.eye(8))
    assert nees(s, np.zeros(8)) == 0.0
    assert nees(s, np.eye(8)[3]) == pytest.approx(1.0)


def test_nees_monte_carlo_consistency():
    cfg = fixed_cfg()
    rng = np.random.default_rng(7)
    runs = [filter_nees(*simulate_target(np.array([500.0, 500, 0.41, 120]), cfg, 30, rng), cfg)
            for _ in range(60)]
    per_step = np.mean(runs, axis=0)
    lo, hi = chi2.ppf([0.025, 0.975], STATE_DIM * 60) / 60
    assert lo < per_step.mean() < hi


def test_steady_state_gain_invariant_to_joint_scaling():
    cfg = fixed_cfg()
    K1 = steady_state_gain(cfg.F, cfg.H, Q0, R0)
    for c in (1e-3, 0.37, 2.0, 50.0):
        K2 = steady_state_gain(cfg.F, cfg.H, Q0 * c, R0 * c)
        assert np.max(np.abs(K1 - K2)) < 1e-6


def test_joint_scaling_changes_mahalanobis(rng):
    # the gain is unchanged but the projected covariance is not
    s1 = MotionState(np.r_[0, 0, 1, 10, np.zeros(4)], np.eye(8))
    a = predict(s1, fixed_cfg(), similarity=0.0)
    b = predict(s1, fixed_cfg(), similarity=1.0)
    z = fixed_cfg().H @ a.mean + 3.0
    assert mahalanobis(a, z, fixed_cfg()) < mahalanobis(b, z, fixed_cfg())


def test_kalman_gain_formula(rng):
    cfg = fixed_cfg()
    s = some_state(rng)
    K = kalman_gain(s.covariance, cfg.H, R0)
    ref = s.covariance @ cfg.H.T @ np.linalg.inv(cfg.H @ s.covariance @ cfg.H.T + R0)
    assert np.allclose(K, ref, rtol=1e-10, atol=1e-12)


def test_non_finite_state_raises_with_track_id():
    s = MotionState(np.r_[np.nan, np.zeros(7)], np.eye(8))
    with pytest.raises(NumericalError, match="track 42"):
        predict(s, fixed_cfg(), track_id=42)


def test_singular_projection_raises():
    s = MotionState(np.zeros(8), np.zeros((8, 8)))
    with pytest.raises(NumericalError):
        mahalanobis(s, np.ones(4), fixed_cfg())
    with pytest.raises(NumericalError):
        nees(s, np.ones(8))


def test_config_validation():
    with pytest.raises(ValueError):
        MotionModelConfig(lambda_c=0.0)
    with pytest.raises(ValueError):
        MotionModelConfig(base_Q=-np.eye(8))


def test_initiate_prior():
    cfg = MotionModelConfig()
    s = initiate(np.array([100.0, 50, 0.5, 160]), cfg)
    assert np.array_equal(s.mean, [100, 50, 0.5, 160, 0, 0, 0, 0])
    sd = np.sqrt(np.diag(s.covariance))
    assert sd[0] == pytest.approx(2 * 160 / 20)
    assert sd[4] == pytest.approx(10 * 160 / 160)


@pytest.mark.parametrize("grid_axis", ["position", "velocity"])
def test_tuner_recovers_generating_weights(grid_axis):
    cfg = MotionModelConfig()
    rng = np.random.default_rng(3)
    seqs = [simulate_target(np.array([500.0, 500, 0.41, 120]), cfg, 30, rng) for _ in range(40)]
    if grid_axis == "position":
        wp, wv, table = tune_noise_weights(seqs, cfg, [1 / 80, 1 / 20, 1 / 5], [1 / 160])
    else:
        wp, wv, table = tune_noise_weights(seqs, cfg, [1 / 20], [1 / 640, 1 / 160, 1 / 40])
    assert (wp, wv) == (1 / 20, 1 / 160)
    assert len(table) == 3
