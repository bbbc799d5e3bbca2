import numpy as np
import pytest

from ensvar import (
    AssimilationProblem,
    DimensionMismatchError,
    GaussianEstimate,
    NotSPDError,
    Operator,
    Trajectory,
    ValidationError,
    validate_problem,
)


def _w1_with(**overrides) -> AssimilationProblem:
    identity = Operator.from_matrix(np.eye(1))
    fields = dict(
        state_dim=1,
        horizon=1,
        background_mean=np.zeros(1),
        background_cov=np.eye(1),
        model_ops=(identity,),
        forcings=(np.zeros(1),),
        model_noise_covs=(np.eye(1),),
        obs_ops=(identity,),
        obs_noise_covs=(np.eye(1),),
        observations=(np.array([3.0]),),
    )
    fields.update(overrides)
    return AssimilationProblem(**fields)


def test_w1_accepted(w1):
    assert validate_problem(w1) is w1


def test_zero_obs_cov_rejected():
    with pytest.raises(NotSPDError, match="obs_noise_covs"):
        validate_problem(_w1_with(obs_noise_covs=(np.zeros((1, 1)),)))


def test_wrong_obs_length_rejected():
    with pytest.raises(DimensionMismatchError, match="obs"):
        validate_problem(_w1_with(observations=(np.array([3.0, 1.0]),)))


def test_wrong_background_length_rejected():
    with pytest.raises(DimensionMismatchError, match="background_mean"):
        validate_problem(_w1_with(background_mean=np.zeros(2)))


def test_asymmetric_cov_rejected():
    bad = np.array([[1.0, 0.5], [0.0, 1.0]])
    identity2 = Operator.from_matrix(np.eye(2))
    problem = AssimilationProblem(
        state_dim=2,
        horizon=1,
        background_mean=np.zeros(2),
        background_cov=bad,
        model_ops=(identity2,),
        forcings=(np.zeros(2),),
        model_noise_covs=(np.eye(2),),
        obs_ops=(identity2,),
        obs_noise_covs=(np.eye(2),),
        observations=(np.zeros(2),),
    )
    with pytest.raises(NotSPDError, match="background_cov"):
        validate_problem(problem)


def test_false_linear_flag_rejected():
    bogus = Operator(apply=lambda x: x**2, linear=True)
    with pytest.raises(ValidationError, match="linear"):
        validate_problem(_w1_with(model_ops=(bogus,)))


def test_operator_from_matrix_carries_jacobian():
    op = Operator.from_matrix([[2.0, 0.0], [0.0, 3.0]])
    assert op.linear
    np.testing.assert_array_equal(op(np.array([1.0, 1.0])), [2.0, 3.0])
    np.testing.assert_array_equal(op.jacobian_at(np.zeros(2)), [[2.0, 0.0], [0.0, 3.0]])


def test_linear_operator_matrix_materialized_from_basis():
    op = Operator(apply=lambda x: np.array([x[0] + x[1]]), linear=True)
    np.testing.assert_allclose(op.as_matrix(2), [[1.0, 1.0]])


def test_trajectory_rejects_nonfinite():
    with pytest.raises(ValidationError):
        Trajectory(np.array([[np.nan], [0.0]]))


def test_trajectory_composite_round_trip():
    traj = Trajectory(np.array([[1.0, 2.0], [3.0, 4.0]]))
    back = Trajectory.from_composite(traj.composite, 2)
    np.testing.assert_array_equal(back.states, traj.states)
    assert traj.horizon == 1 and traj.state_dim == 2


def test_gaussian_estimate_invariants():
    GaussianEstimate(np.zeros(2), np.eye(2))
    with pytest.raises(ValidationError):
        GaussianEstimate(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        GaussianEstimate(np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatchError):
        GaussianEstimate(np.zeros(3), np.eye(2))


def test_prior_chain(w2):
    chain = w2.prior_chain()
    np.testing.assert_array_equal(chain.states, [[0.0], [0.0]])


def test_per_step_obs_dims_allowed():
    # Observation dimension may vary across steps.
    identity2 = Operator.from_matrix(np.eye(2))
    narrow = Operator.from_matrix(np.array([[1.0, 0.0]]))
    problem = AssimilationProblem(
        state_dim=2,
        horizon=2,
        background_mean=np.zeros(2),
        background_cov=np.eye(2),
        model_ops=(identity2, identity2),
        forcings=(np.zeros(2), np.zeros(2)),
        model_noise_covs=(np.eye(2), np.eye(2)),
        obs_ops=(identity2, narrow),
        obs_noise_covs=(np.eye(2), np.eye(1)),
        observations=(np.zeros(2), np.zeros(1)),
    )
    validate_problem(problem)
    assert problem.obs_dim(1) == 2 and problem.obs_dim(2) == 1
