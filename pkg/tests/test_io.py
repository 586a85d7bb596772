import numpy as np
import pytest

from evtrack.evaluation import Trajectory
from evtrack.event_surface import EVENT_DTYPE
from evtrack.geometry import Pose, Rotation
from evtrack.io import (ParseError, read_events, read_imu, read_trajectory, write_events, write_imu,
                        write_trajectory)
from evtrack.preintegration import ImuSample


def test_two_line_event_file(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text("t,u,v,p\n0.001,10,20,1\n0.0025,11,20,-1\n")
    ev = read_events(p)
    assert len(ev) == 2
    assert ev[0].tolist() == (0.001, 10, 20, 1) and ev[1].tolist() == (0.0025, 11, 20, -1)
    p.write_text("0.001,10,20,1\n")      # header is optional
    assert len(read_events(p)) == 1


def test_polarity_zero_names_line(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text("t,u,v,p\n0.001,10,20,1\n0.002,10,20,0\n")
    with pytest.raises(ParseError, match=r"ev\.csv:3:.*polarity"):
        read_events(p)
    p.write_text("0.001,10,20\n")
    with pytest.raises(ParseError, match=":1:"):
        read_events(p)


def test_event_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    n = 100_000
    ev = np.empty(n, EVENT_DTYPE)
    ev["t"] = np.sort(rng.uniform(0, 10, n))
    ev["u"] = rng.integers(0, 640, n)
    ev["v"] = rng.integers(0, 480, n)
    ev["p"] = rng.choice([-1, 1], n)
    write_events(ev, tmp_path / "e.csv")
    back = read_events(tmp_path / "e.csv")
    assert back.tobytes() == ev.tobytes()


def test_imu_round_trip_and_checks(tmp_path):
    rng = np.random.default_rng(1)
    imu = [ImuSample(k / 200, rng.normal(size=3) + [0, 0, 9.81], rng.normal(size=3)) for k in range(50)]
    write_imu(imu, tmp_path / "i.csv")
    back = read_imu(tmp_path / "i.csv")
    assert all(a.t == b.t and np.array_equal(a.acc, b.acc) and np.array_equal(a.gyro, b.gyro)
               for a, b in zip(imu, back))
    p = tmp_path / "bad.csv"
    p.write_text("0,0,0,9.8,0,0,0\n0,0,0,9.8,0,0,0\n")
    with pytest.raises(ParseError, match=":2:"):
        read_imu(p)
    p.write_text("0,0,0,980,0,0,0\n0.01,0,0,980,0,0,0\n")   # cm/s^2 by mistake
    with pytest.warns(RuntimeWarning):
        read_imu(p)


def test_identity_line_and_empty(tmp_path):
    p = tmp_path / "t.txt"
    write_trajectory(Trajectory.from_poses([0.0], [Pose()]), p)
    assert p.read_text() == "0.000000000 0 0 0 0 0 0 1\n"
    write_trajectory(Trajectory.empty(), p)
    assert p.read_text() == "" and len(read_trajectory(p)) == 0


def test_trajectory_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    t = np.cumsum(rng.uniform(0.01, 0.1, 40))
    poses = [Pose(Rotation(rng.normal(size=4)), rng.normal(size=3)) for _ in t]
    tr = Trajectory.from_poses(t, poses)
    write_trajectory(tr, tmp_path / "t.txt")
    back = read_trajectory(tmp_path / "t.txt")
    np.testing.assert_allclose(back.t, tr.t, atol=1e-9)
    np.testing.assert_allclose(back.positions, tr.positions, rtol=1e-8, atol=1e-9)
    np.testing.assert_allclose(back.quats, tr.quats, atol=1e-8)
