import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evtrack.geometry import Rotation, quat_multiply
from evtrack.preintegration import (ConsistencyError, FullState, ImuNoiseModel, ImuOrderError,
                                    ImuSample, InsufficientDataError, PredictionWarning,
                                    bias_corrected_terms, empty_preintegration, imu_residual,
                                    predict, preintegrate)
from evtrack.synth import SimConfig, MotionProfile, eval_trajectory, gen_imu, ground_truth_state


def acc_fn(t):
    return np.array([0.6 * np.sin(1.1 * t), 0.4 * np.cos(0.7 * t) - 0.1, 9.81 + 0.3 * np.sin(0.9 * t)])


def gyro_fn(t):
    return np.array([0.3 * np.sin(0.8 * t), 0.2 * np.cos(1.2 * t), 0.5 + 0.1 * np.sin(0.5 * t)])


def rk4_oracle(T=1.0, rate=20_000):
    """alpha, beta, quaternion from integrating the continuous signals with RK4."""
    def f(t, x):
        q = x[6:10] / np.linalg.norm(x[6:10])
        R = Rotation(q).matrix
        dq = 0.5 * quat_multiply(q, np.array([0.0, *gyro_fn(t)]))
        return np.concatenate([x[3:6], R @ acc_fn(t), dq])

    h = 1.0 / rate
    x = np.array([0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0])
    for k in range(int(round(T * rate))):
        t = k * h
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x[0:3], x[3:6], Rotation(x[6:10])


@pytest.fixture(scope="module")
def oracle():
    return rk4_oracle()


def samples_from(fa, fg, T=1.0, rate=200):
    return [ImuSample(k / rate, fa(k / rate), fg(k / rate)) for k in range(int(T * rate) + 1)]


def constant(a, w, T=1.0, rate=200):
    return samples_from(lambda t: np.array(a, float), lambda t: np.array(w, float), T, rate)


def test_constant_examples():
    p = preintegrate(constant([0, 0, 0], [0, 0, 0]))
    assert np.allclose(p.alpha, 0) and np.allclose(p.beta, 0) and p.gamma.angle() == 0
    p = preintegrate(constant([1, 0, 0], [0, 0, 0]))
    np.testing.assert_allclose(p.beta, [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(p.alpha, [0.5, 0, 0], atol=1e-12)
    assert abs(p.dt - 1.0) < 1e-9


def test_errors():
    with pytest.raises(InsufficientDataError):
        preintegrate(constant([0, 0, 0], [0, 0, 0])[:1])
    s = constant([0, 0, 0], [0, 0, 0])
    s[3], s[4] = s[4], s[3]
    with pytest.raises(ImuOrderError):
        preintegrate(s)


def test_empty_preintegration():
    p = empty_preintegration(2.0)
    assert p.dt == 0 and np.all(p.covariance == 0) and p.gamma.angle() == 0


def test_matches_rk4_oracle(oracle):
    a_ref, b_ref, g_ref = oracle
    p = preintegrate(samples_from(acc_fn, gyro_fn))
    assert np.linalg.norm(p.alpha - a_ref) / np.linalg.norm(a_ref) < 1e-5
    assert np.linalg.norm(p.beta - b_ref) / np.linalg.norm(b_ref) < 1e-5
    assert p.gamma.angle_to(g_ref) < 1e-5


@pytest.mark.parametrize("block,delta", [(0, [1e-4, 0, 0]), (1, [1e-4, 0, 0]), (1, [0, -1e-4, 5e-5])])
def test_bias_correction_matches_reintegration(block, delta):
    s = samples_from(acc_fn, gyro_fn)
    p = preintegrate(s)
    nb = [np.zeros(3), np.zeros(3)]
    nb[block] = np.array(delta)
    a, b, g = bias_corrected_terms(p, nb)
    q = preintegrate(s, nb)
    assert np.linalg.norm(a - q.alpha) < 1e-7
    assert np.linalg.norm(b - q.beta) < 1e-7
    assert g.angle_to(q.gamma) < 1e-7
    a0, b0, g0 = bias_corrected_terms(p, (np.zeros(3), np.zeros(3)))
    assert np.array_equal(a0, p.alpha) and np.array_equal(b0, p.beta) and np.array_equal(g0.q, p.gamma.q)


def test_large_bias_change_warns():
    p = preintegrate(constant([0, 0, 9.81], [0, 0, 0]))
    with pytest.warns(RuntimeWarning):
        bias_corrected_terms(p, (np.array([0.2, 0, 0]), np.zeros(3)))


def test_covariance_properties():
    s = samples_from(acc_fn, gyro_fn, T=0.5)
    traces = [np.trace(preintegrate(s[:n]).covariance) for n in range(2, len(s) + 1, 7)]
    assert np.all(np.diff(traces) >= 0)
    p = preintegrate(s)
    P = p.covariance
    assert np.array_equal(P, P.T)
    assert np.linalg.eigvalsh(P).min() >= -1e-10
    L = p.sqrt_information()
    info = np.linalg.inv(P)
    assert np.linalg.norm(L.T @ L - info) / np.linalg.norm(info) < 1e-8


def test_covariance_scales_with_noise_density():
    s = samples_from(acc_fn, gyro_fn, T=0.2)
    base = ImuNoiseModel()
    doubled = ImuNoiseModel(2 * base.accel_noise, 2 * base.gyro_noise, 2 * base.accel_walk, 2 * base.gyro_walk)
    np.testing.assert_allclose(preintegrate(s, noise=doubled).covariance,
                               4 * preintegrate(s, noise=base).covariance, rtol=1e-9, atol=1e-30)


def _trajectory_case(seed=0, T=0.1):
    motion = MotionProfile(kind="spline", amplitude=1.0, duration=2.0, orientation="look_at",
                          wobble_amplitude=(0.1, 0.1, 0.2), wobble_rate=(1.5, 2.0, 2.5), seed=seed)
    sim = SimConfig(imu_rate=1000.0)
    imu = [s for s in gen_imu(motion, sim) if 0.5 - 1e-9 <= s.t <= 0.5 + T + 1e-9]
    return motion, imu


def test_residual_zero_at_ground_truth():
    motion, imu = _trajectory_case()
    p = preintegrate(imu)
    si = ground_truth_state(motion, imu[0].t)
    sj = ground_truth_state(motion, imu[-1].t)
    r = imu_residual(si, sj, p)
    assert np.linalg.norm(r.raw[:9]) < 1e-5
    assert np.all(r.raw[9:] == 0)


def test_residual_consistency_with_forward_integration():
    _, imu = _trajectory_case()
    si = FullState(Rotation([0.9, 0.1, -0.2, 0.3]), [1, 2, 3], [0.3, -0.1, 0.2], t=imu[0].t)
    sj = predict(si, imu)
    r = imu_residual(si, sj, preintegrate(imu))
    assert np.linalg.norm(r.raw) < 1e-8


def test_residual_linear_in_position():
    _, imu = _trajectory_case()
    p = preintegrate(imu)
    si = FullState(Rotation([0.9, 0.1, -0.2, 0.3]), [1, 2, 3], [0.3, -0.1, 0.2], t=imu[0].t)
    sj = predict(si, imu)
    eps = 1e-3
    moved = FullState(sj.rotation, sj.position + [eps, 0, 0], sj.velocity, t=sj.t)
    d = imu_residual(si, moved, p).raw[0:3] - imu_residual(si, sj, p).raw[0:3]
    np.testing.assert_allclose(d, si.rotation.matrix.T @ [eps, 0, 0], atol=1e-15)


def test_dt_mismatch():
    _, imu = _trajectory_case()
    si = FullState(t=imu[0].t)
    with pytest.raises(ConsistencyError):
        imu_residual(si, FullState(t=imu[-1].t + 1e-3), preintegrate(imu))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_residual_jacobians_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    _, imu = _trajectory_case(T=0.05)
    p = preintegrate(imu, (rng.normal(0, 0.02, 3), rng.normal(0, 0.01, 3)))

    def rand_state(t):
        return FullState(Rotation(rng.normal(size=4)), rng.normal(size=3), rng.normal(size=3),
                         rng.normal(0, 0.05, 3), rng.normal(0, 0.02, 3), t)

    si, sj = rand_state(imu[0].t), rand_state(imu[-1].t)
    r = imu_residual(si, sj, p)
    h = 1e-6
    for which, J in ((0, r.jac_i), (1, r.jac_j)):
        fd = np.zeros((15, 15))
        for k in range(15):
            d = np.zeros(15)
            d[k] = h
            if which == 0:
                rp, rm = imu_residual(si.plus(d), sj, p), imu_residual(si.plus(-d), sj, p)
            else:
                rp, rm = imu_residual(si, sj.plus(d), p), imu_residual(si, sj.plus(-d), p)
            fd[:, k] = (rp.residual - rm.residual) / (2 * h)
        assert np.linalg.norm(J - fd) <= 1e-4 * max(np.linalg.norm(fd), 1.0)


def test_predict_stationary_and_pure_rotation():
    q0 = Rotation([0.9, 0.2, -0.1, 0.3])
    g = ImuNoiseModel().gravity
    s0 = FullState(q0, [1, 2, 3], t=0.0)
    still = constant(-q0.matrix.T @ g, [0, 0, 0])
    s1 = predict(s0, still)
    assert np.linalg.norm(s1.position - s0.position) < 1e-9 and s1.rotation.angle_to(q0) < 1e-9
    spin = constant(-g, [0, 0, 1])
    s2 = predict(FullState(t=0.0), spin)
    assert abs(s2.rotation.angle() - 1.0) < 1e-6
    np.testing.assert_allclose(s2.rotation.axis_angle(), [0, 0, 1], atol=1e-6)
    assert s2.t == 1.0


def test_predict_empty_warns():
    s = FullState(t=1.0)
    with pytest.warns(PredictionWarning):
        assert predict(s, []) is s


def test_predict_against_simulator():
    motion, imu = _trajectory_case(T=0.05)
    imu = imu[::5]  # 200 Hz
    s0 = ground_truth_state(motion, imu[0].t)
    s1 = predict(s0, imu)
    gt = eval_trajectory(motion, imu[-1].t)
    assert np.linalg.norm(s1.position - gt.pose.translation) < 1e-4
    assert np.array_equal(s1.bias_acc, s0.bias_acc)


def test_repropagate_uses_new_bias():
    s = samples_from(acc_fn, gyro_fn, T=0.3)
    p = preintegrate(s)
    q = p.repropagate(np.array([0.01, 0, 0]), np.zeros(3))
    np.testing.assert_array_equal(q.bias_acc, [0.01, 0, 0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a, _, _ = bias_corrected_terms(q, (q.bias_acc, q.bias_gyro))
    assert np.array_equal(a, q.alpha)
