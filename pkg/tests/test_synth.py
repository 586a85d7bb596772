import numpy as np
import pytest

from evtrack.geometry import Rotation
from evtrack.preintegration import ImuNoiseModel
from evtrack.synth import (SimConfig, SplitMix64, MotionProfile, edge_tangents, eval_trajectory,
                           events_from_tracks, gen_events, gen_imu, gen_scene, preset)

G = np.array([0.0, 0.0, -9.81])


def test_grid_and_lines():
    m = gen_scene("grid", 10.0, 1.0)
    assert len(m) == 100
    xs = np.unique(np.round(m.points[:, 0], 12))
    np.testing.assert_allclose(np.diff(xs), 0.1, atol=1e-12)
    assert np.all(m.points[:, 2] == 2.0)
    lines = gen_scene("parallel_lines", 50.0, 3.0)
    assert len(np.unique(lines.points[:, 1])) == 7
    a, b = gen_scene("random_edges", 100.0, 2.0, seed=4), gen_scene("random_edges", 100.0, 2.0, seed=4)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, gen_scene("random_edges", 100.0, 2.0, seed=5).points)
    with pytest.raises(ValueError):
        gen_scene("grid", 0.0, 1.0)


def test_splitmix_is_reproducible():
    # first outputs of SplitMix64 seeded with 0 (reference constants of the algorithm)
    assert SplitMix64(0).next_u64(2).tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4]
    x = SplitMix64(9).normal(100_000)
    assert abs(x.mean()) < 0.01 and abs(x.std() - 1) < 0.01


def test_circle_analytic():
    motion = MotionProfile("circle", amplitude=1.0, rate=1.0, duration=4.0)
    s = eval_trajectory(motion, np.pi / 2)
    np.testing.assert_allclose(s.pose.translation, [0, 1, 0], atol=1e-12)
    assert abs(np.linalg.norm(s.velocity) - 1.0) < 1e-12
    s0 = eval_trajectory(motion, 0.0)
    np.testing.assert_allclose(s0.pose.translation, [1, 0, 0], atol=0)
    assert s0.pose.rotation.angle_to(Rotation()) == 0.0
    with pytest.raises(ValueError):
        eval_trajectory(motion, 4.5)


@pytest.mark.parametrize("motion", [
    MotionProfile("circle", 0.5, 0.5, 10.0, wobble_amplitude=(0.03, 0.03, 0.05), wobble_rate=(1.3, 1.7, 0.9)),
    MotionProfile("lissajous", 0.4, 0.25, 7.5, wobble_amplitude=(0.16, 0.16, 0.32), wobble_rate=(1.75, 2, 2.25),
                   speedup=4.0, speedup_time=3.0),
    MotionProfile("spline", 1.0, duration=3.0, orientation="look_at", seed=2),
])
def test_derivatives_match_finite_differences(motion):
    h = 1e-6
    for t in np.linspace(0.2, motion.duration - 0.2, 9):
        a, b, c = (eval_trajectory(motion, x) for x in (t - h, t, t + h))
        fd_v = (c.pose.translation - a.pose.translation) / (2 * h)
        assert np.linalg.norm(fd_v - b.velocity) < 1e-6
        fd_a = (c.velocity - a.velocity) / (2 * h)
        assert np.linalg.norm(fd_a - b.acceleration) < 1e-5
        # body rates: R^T dR/dt
        fd_w = (a.pose.rotation.inverse() * c.pose.rotation).axis_angle() / (2 * h)
        assert np.linalg.norm(fd_w - b.angular_velocity) < 1e-6


def test_imu_stationary_and_centripetal():
    still = MotionProfile("circle", amplitude=0.0, rate=0.0, duration=1.0)
    for s in gen_imu(still, SimConfig()):
        np.testing.assert_allclose(s.acc, [0, 0, 9.81], atol=1e-12)
        assert np.all(s.gyro == 0)
    r, w = 0.5, 0.8
    motion = MotionProfile("circle", amplitude=r, rate=w, duration=2.0)
    for s in gen_imu(motion, SimConfig())[::37]:
        horizontal = np.linalg.norm(s.acc[:2])
        assert abs(horizontal - r * w * w) < 1e-9


def test_imu_noise_variance():
    nm = ImuNoiseModel(accel_noise=0.02, gyro_noise=0.003, accel_walk=1e-12, gyro_walk=1e-12)
    motion = MotionProfile("circle", amplitude=0.0, rate=0.0, duration=500.0)
    sim = SimConfig(imu_noise=nm, imu_rate=200.0, seed=1)
    imu = gen_imu(motion, sim)
    acc = np.array([s.acc for s in imu]) - [0, 0, 9.81]
    gyro = np.array([s.gyro for s in imu])
    assert len(acc) >= 100_000
    np.testing.assert_allclose(acc.var(axis=0), nm.accel_noise ** 2 * sim.imu_rate, rtol=0.05)
    np.testing.assert_allclose(gyro.var(axis=0), nm.gyro_noise ** 2 * sim.imu_rate, rtol=0.05)
    again = gen_imu(motion, sim)
    assert all(np.array_equal(x.acc, y.acc) for x, y in zip(imu[:100], again[:100]))


def test_dense_integration_reproduces_trajectory():
    motion = MotionProfile("lissajous", 0.4, 0.5, 1.0, wobble_amplitude=(0.1, 0.1, 0.2), wobble_rate=(1.5, 2, 2.5))
    rate = 8000.0
    imu = gen_imu(motion, SimConfig(imu_rate=rate))
    s0 = eval_trajectory(motion, 0.0)
    q, p, v = s0.pose.rotation.q, s0.pose.translation.copy(), s0.velocity.copy()

    def f(x, sample):
        R = Rotation(x[6:10]).matrix
        w = np.array([0.0, *sample.gyro])
        from evtrack.geometry import quat_multiply
        return np.concatenate([x[3:6], R @ sample.acc + G, 0.5 * quat_multiply(x[6:10], w)])

    # RK4 with step 2/rate, taking the middle sample for the half-steps
    x = np.concatenate([p, v, q])
    h = 2.0 / rate
    for k in range(0, len(imu) - 2, 2):
        a, m, b = imu[k], imu[k + 1], imu[k + 2]
        k1 = f(x, a)
        k2 = f(x + h / 2 * k1, m)
        k3 = f(x + h / 2 * k2, m)
        k4 = f(x + h * k3, b)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    gt = eval_trajectory(motion, imu[-1].t)
    assert np.linalg.norm(x[0:3] - gt.pose.translation) < 1e-6
    assert Rotation(x[6:10]).angle_to(gt.pose.rotation) < 1e-6


def test_three_pixels_three_events():
    t = np.linspace(0.0, 1.0, 101)
    uv = np.zeros((101, 1, 2))
    uv[:, 0, 0] = 100.0 + 3.0 * t
    uv[:, 0, 1] = 50.0
    ev, pid, arc = events_from_tracks(t, uv, np.ones((101, 1), bool), 1.0)
    assert len(ev) == 3 and np.all(pid == 0) and abs(arc[0] - 3.0) < 1e-9
    np.testing.assert_allclose(np.sort(ev["t"]), [1 / 3, 2 / 3, 1.0], atol=1e-9)
    assert np.all(ev["p"] == 1)


def test_edge_points_fire_on_normal_crossings_only():
    t = np.linspace(0.0, 1.0, 201)
    uv = np.zeros((201, 1, 2))
    uv[:, 0, 0] = 100.0 + 5.0 * t          # sliding along a horizontal edge
    uv[:, 0, 1] = 50.2
    ev, _, _ = events_from_tracks(t, uv, np.ones((201, 1), bool), 1.0, normals=np.array([[0.0, 1.0]]))
    assert len(ev) == 0
    uv[:, 0, 1] = 50.2 + 2.0 * t           # now also crossing it
    ev, _, _ = events_from_tracks(t, uv, np.ones((201, 1), bool), 1.0, normals=np.array([[0.0, 1.0]]))
    assert len(ev) == 2


def test_edge_tangents():
    line = np.column_stack([np.linspace(0, 1, 30), np.zeros(30), np.full(30, 2.0)])
    blob = np.random.default_rng(0).normal(size=(30, 3)) + [5, 5, 5]
    tan = edge_tangents(np.vstack([line, blob]))
    np.testing.assert_allclose(np.abs(tan[:30, 0]), 1.0, atol=1e-9)
    assert np.all(tan[30:] == 0)


def test_stationary_scene_yields_no_events():
    s = preset("stationary")
    short = MotionProfile("circle", amplitude=0.0, rate=0.0, duration=0.2)
    assert len(gen_events(short, s.scene(), s.sim)) == 0


def test_event_rate_scales_with_speed():
    scene = gen_scene("grid", 10.0, 5.0)
    counts = []
    for rate in (0.5, 1.0):
        motion = MotionProfile("circle", amplitude=0.5, rate=rate, duration=1.0)
        ev = gen_events(motion, scene, SimConfig())
        assert np.all(np.diff(ev["t"]) >= 0) and ev["t"].min() >= 0 and ev["t"].max() <= 1.0
        counts.append(len(ev))
    np.testing.assert_allclose(counts[1] / counts[0], 2.0, rtol=0.1)


def test_presets():
    for name in ("circle", "fast", "two_phase", "parallel_lines", "stationary"):
        assert preset(name).name == name
    with pytest.raises(ValueError):
        preset("nope")
