import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares

from evtrack.geometry import Rotation
from evtrack.solver import (ParameterBlock, Problem, RobustLoss, SolverError, SolverOptions,
                            check_jacobians, marginal_information, robust_weight, solve)


def test_linear_one_step():
    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock([0.0]))
    prob.add_residual_block(lambda v: (v - 3.0, [np.eye(1)]), [x])
    rep = solve(prob, SolverOptions(initial_damping=0.0))
    assert abs(x.value[0] - 3.0) < 1e-10
    assert rep.accepted == 1 and rep.converged


def test_linear_least_squares_matches_normal_equations():
    rng = np.random.default_rng(0)
    A, b = rng.normal(size=(20, 4)), rng.normal(size=20)
    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock(np.zeros(4)))
    prob.add_residual_block(lambda v: (A @ v - b, [A]), [x])
    solve(prob, SolverOptions(initial_damping=0.0, max_iters=1))
    np.testing.assert_allclose(x.value, np.linalg.solve(A.T @ A, A.T @ b), atol=1e-10)


def rosenbrock(v):
    x, y = v
    return np.array([10 * (y - x * x), 1 - x]), [np.array([[-20 * x, 10.0], [-1.0, 0.0]])]


def test_rosenbrock():
    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock([-1.2, 1.0]))
    prob.add_residual_block(rosenbrock, [x])
    rep = solve(prob, SolverOptions(max_iters=200))
    np.testing.assert_allclose(x.value, [1, 1], atol=1e-6)
    # independent oracle
    ref = least_squares(lambda v: rosenbrock(v)[0], [-1.2, 1.0], xtol=1e-14, ftol=1e-14).x
    np.testing.assert_allclose(x.value, ref, atol=1e-6)
    hist = np.array(rep.cost_history)
    assert np.all(np.diff(hist) <= 0)


def test_all_fixed():
    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock([0.0], fixed=True))
    prob.add_residual_block(lambda v: (v - 3.0, [np.eye(1)]), [x])
    rep = solve(prob)
    assert rep.iterations == 0 and rep.initial_cost == rep.final_cost and x.value[0] == 0.0


def test_fixed_block_untouched():
    prob = Problem()
    a = prob.add_parameter_block(ParameterBlock([1.0], fixed=True))
    b = prob.add_parameter_block(ParameterBlock([0.0]))
    prob.add_residual_block(lambda u, v: (v - 2 * u, [np.eye(1) * -2, np.eye(1)]), [a, b])
    solve(prob)
    assert a.value[0] == 1.0 and abs(b.value[0] - 2.0) < 1e-10


def test_nonfinite_residual_names_block():
    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock([1.0]))
    prob.add_residual_block(lambda v: (np.array([v[0] - 3.0]), [np.eye(1)]), [x], name="ok")
    prob.add_residual_block(lambda v: (np.array([math.log(v[0]) if v[0] > 0 else np.nan]),
                                       [np.array([[1 / v[0]]])]), [x], name="logterm")
    with pytest.raises(SolverError, match="logterm"):
        # a large first step drives x negative
        prob.residual_blocks[0].func = lambda v: (np.array([100 * (v[0] + 3.0)]), [np.eye(1) * 100])
        solve(prob, SolverOptions(initial_damping=0.0))


def test_unregistered_block():
    prob = Problem()
    with pytest.raises(ValueError):
        prob.add_residual_block(lambda v: (v, [np.eye(1)]), [ParameterBlock([0.0])])


def test_rotation_block_with_local_parametrization():
    target = Rotation.from_axis_angle([0.3, -0.4, 0.5])

    def plus(q, d):
        return Rotation(q).plus(d).q

    def res(q):
        R = Rotation(q)
        return (target.inverse() * R).axis_angle(), [np.eye(3)]

    prob = Problem()
    q = prob.add_parameter_block(ParameterBlock(Rotation().q, 3, plus))
    prob.add_residual_block(res, [q])
    solve(prob, SolverOptions(max_iters=50))
    assert Rotation(q.value).angle_to(target) < 1e-8
    assert abs(np.linalg.norm(q.value) - 1) < 1e-12


def test_huber_examples():
    assert robust_weight(RobustLoss("huber", 1.0), 0.0) == (0.0, 1.0)
    assert robust_weight(RobustLoss("huber", 1.0), 4.0)[0] == 3.0
    c = 2.5
    loss = RobustLoss("huber", c)
    left = robust_weight(loss, c * c)
    right = robust_weight(loss, np.nextafter(c * c, np.inf))
    assert abs(left[0] - right[0]) < 1e-12 and abs(left[1] - right[1]) < 1e-12
    with pytest.raises(ValueError):
        RobustLoss("huber", 0.0)
    with pytest.raises(ValueError):
        RobustLoss("cauchy", 1.0)


@given(st.floats(0.1, 10.0), st.floats(0.0, 400.0))
def test_huber_is_continuous_and_bounded_by_square(c, s):
    rho, d = robust_weight(RobustLoss("huber", c), s)
    assert rho <= s + 1e-9 and 0 < d <= 1.0
    h = 1e-6 * max(s, 1.0)
    if abs(s - c * c) > 2 * h and s > h:
        fd = (robust_weight(RobustLoss("huber", c), s + h)[0] - robust_weight(RobustLoss("huber", c), s - h)[0]) / (2 * h)
        assert abs(fd - d) < 1e-5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_accepted_steps_never_increase_cost(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(30, 2))
    obs = np.hypot(*(pts - [0.5, -0.2]).T) + rng.normal(0, 0.05, 30)
    obs[:3] += 5.0  # outliers

    def f(v):
        d = pts - v
        r = np.hypot(*d.T)
        return r - obs, [-d / r[:, None]]

    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock(rng.normal(size=2)))
    prob.add_residual_block(f, [x], RobustLoss("huber", 0.1), per_row_loss=True)
    rep = solve(prob, SolverOptions(max_iters=40))
    assert np.all(np.diff(rep.cost_history) <= 0)


def test_check_jacobians_flags_wrong_derivative():
    prob = Problem()
    x = prob.add_parameter_block(ParameterBlock([0.3, 0.7], name="x"))
    prob.add_residual_block(lambda v: (np.sin(v), [np.diag(np.cos(v))]), [x], name="good")
    prob.add_residual_block(lambda v: (v ** 3, [np.diag(2 * v ** 2)]), [x], name="bad")
    errs = {name: e for name, _, e in check_jacobians(prob)}
    assert errs["good"] < 1e-6 and errs["bad"] > 0.1


def test_marginal_information_matches_inverse_covariance():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 5))
    prob = Problem()
    a = prob.add_parameter_block(ParameterBlock(np.zeros(2)))
    b = prob.add_parameter_block(ParameterBlock(np.zeros(3)))
    prob.add_residual_block(lambda u, v: (A @ np.concatenate([u, v]), [A[:, :2], A[:, 2:]]), [a, b])
    cov = np.linalg.inv(A.T @ A)
    np.testing.assert_allclose(marginal_information(prob, a), np.linalg.inv(cov[:2, :2]), rtol=1e-9)
