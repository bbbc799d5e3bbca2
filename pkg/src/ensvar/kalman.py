"""Exact recursions for the linear-Gaussian case.

The filter is the textbook forecast/analysis recursion.  The smoother is
deliberately implemented as the *same filter applied to the growing
composite state* x_0:i, rather than as a backward pass: the ensemble
algorithms in this package mirror exactly that structure, and the coupled
convergence tests rely on the structural parity.

An independent block least-squares oracle solves the smoothing problem by
assembling and solving its normal equations directly; it shares no code
path with the recursion beyond the low-level SPD solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonlinearOperatorError
from .numerics import spd_solve
from .problem import AssimilationProblem, GaussianEstimate, validate_problem

__all__ = [
    "KalmanStepDiag",
    "KalmanFilterResult",
    "KalmanSmootherResult",
    "kf_run",
    "ks_run",
    "ks_least_squares_oracle",
]


@dataclass(frozen=True, eq=False)
class KalmanStepDiag:
    """Per-step diagnostics: forecast moments, gain, and innovation."""

    forecast_mean: np.ndarray
    forecast_cov: np.ndarray
    gain: np.ndarray
    innovation: np.ndarray


@dataclass(frozen=True, eq=False)
class KalmanFilterResult:
    """Filtering estimates at i = 0..k plus per-step diagnostics."""

    estimates: tuple[GaussianEstimate, ...]
    steps: tuple[KalmanStepDiag, ...]


@dataclass(frozen=True, eq=False)
class KalmanSmootherResult:
    """Composite-state smoothing estimates at i = 0..k.

    ``estimates[i]`` covers the stacked state x_0:i given observations up
    to time i; ``forecast_covariances[i-1]`` is the exact composite
    forecast covariance used in the step-i update, which the
    exact-covariance reference ensemble reuses verbatim.
    """

    estimates: tuple[GaussianEstimate, ...]
    forecast_covariances: tuple[np.ndarray, ...]
    steps: tuple[KalmanStepDiag, ...]

    @property
    def estimate(self) -> GaussianEstimate:
        return self.estimates[-1]


def _linear_matrices(problem: AssimilationProblem):
    if not problem.all_linear:
        raise NonlinearOperatorError(
            "Kalman recursions require every operator to be flagged linear"
        )
    m = problem.state_dim
    models = [op.as_matrix(m) for op in problem.model_ops]
    obs = [op.as_matrix(m) for op in problem.obs_ops]
    return models, obs


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def kf_run(problem: AssimilationProblem) -> KalmanFilterResult:
    """Kalman filter for a fully linear problem.

    Implements the forecast/gain/update recursion literally, with a
    symmetrization of the covariance after each update to control
    round-off drift.
    """
    validate_problem(problem)
    models, obs_mats = _linear_matrices(problem)

    mean = problem.background_mean.copy()
    cov = problem.background_cov.copy()
    estimates = [GaussianEstimate(mean, cov)]
    steps = []
    for i in range(1, problem.horizon + 1):
        m_i = models[i - 1]
        h_i = obs_mats[i - 1]
        r_i = problem.obs_noise_covs[i - 1]
        y_i = problem.observations[i - 1]

        mean_f = m_i @ mean + problem.forcings[i - 1]
        cov_f = _symmetrize(m_i @ cov @ m_i.T + problem.model_noise_covs[i - 1])

        pht = cov_f @ h_i.T
        innovation_cov = h_i @ pht + r_i
        gain = spd_solve(innovation_cov, pht.T, name="innovation covariance").T
        innovation = y_i - h_i @ mean_f

        mean = mean_f + gain @ innovation
        cov = _symmetrize(cov_f - gain @ h_i @ cov_f)

        estimates.append(GaussianEstimate(mean, cov))
        steps.append(KalmanStepDiag(mean_f, cov_f, gain, innovation))
    return KalmanFilterResult(tuple(estimates), tuple(steps))


def ks_run(problem: AssimilationProblem) -> KalmanSmootherResult:
    """Kalman smoother as the filter on the growing composite state.

    At step i the composite state x_0:i-1 is extended by the forecast of
    x_i, the composite covariance gains one block row/column, and the
    observation y_i (which only sees the trailing block) updates the whole
    composite estimate.  The trailing block of the final mean therefore
    reproduces the filter's final estimate.
    """
    validate_problem(problem)
    models, obs_mats = _linear_matrices(problem)
    m = problem.state_dim

    mean = problem.background_mean.copy()
    cov = problem.background_cov.copy()
    estimates = [GaussianEstimate(mean, cov)]
    forecast_covs = []
    steps = []
    for i in range(1, problem.horizon + 1):
        m_i = models[i - 1]
        h_i = obs_mats[i - 1]
        r_i = problem.obs_noise_covs[i - 1]
        y_i = problem.observations[i - 1]
        size = mean.size

        # Composite forecast: append the propagated trailing block.
        mean_f = np.concatenate([mean, m_i @ mean[-m:] + problem.forcings[i - 1]])
        cross = cov[:, -m:] @ m_i.T
        corner = m_i @ cov[-m:, -m:] @ m_i.T + problem.model_noise_covs[i - 1]
        cov_f = np.zeros((size + m, size + m))
        cov_f[:size, :size] = cov
        cov_f[:size, size:] = cross
        cov_f[size:, :size] = cross.T
        cov_f[size:, size:] = _symmetrize(corner)

        # The stacked observation operator is [0, ..., 0, H_i]: only the
        # trailing block of the composite covariance enters the gain.
        pht = cov_f[:, -m:] @ h_i.T
        innovation_cov = h_i @ cov_f[-m:, -m:] @ h_i.T + r_i
        gain = spd_solve(innovation_cov, pht.T, name="innovation covariance").T
        innovation = y_i - h_i @ mean_f[-m:]

        mean = mean_f + gain @ innovation
        cov = _symmetrize(cov_f - gain @ (h_i @ cov_f[-m:, :]))

        estimates.append(GaussianEstimate(mean, cov))
        forecast_covs.append(cov_f)
        steps.append(KalmanStepDiag(mean_f, cov_f, gain, innovation))
    return KalmanSmootherResult(tuple(estimates), tuple(forecast_covs), tuple(steps))


def ks_least_squares_oracle(problem: AssimilationProblem) -> np.ndarray:
    """Smoothing mean by direct solution of the block normal equations.

    Assembles the full m*(k+1) system for

        |x_0 - x_b|^2_{B^-1} + sum_i |x_i - M_i x_{i-1} - f_i|^2_{Q_i^-1}
                             + sum_i |y_i - H_i x_i|^2_{R_i^-1}

    and solves it with one SPD solve.  Independent of the recursion in
    :func:`ks_run`; used to cross-check it.
    """
    validate_problem(problem)
    models, obs_mats = _linear_matrices(problem)
    m, k = problem.state_dim, problem.horizon
    size = m * (k + 1)
    eye = np.eye(m)

    gram = np.zeros((size, size))
    rhs = np.zeros(size)

    b_inv = spd_solve(problem.background_cov, eye, name="background_cov")
    gram[:m, :m] += b_inv
    rhs[:m] += b_inv @ problem.background_mean

    for i in range(1, k + 1):
        q_inv = spd_solve(problem.model_noise_covs[i - 1], eye, name=f"model_noise_covs[{i}]")
        m_i = models[i - 1]
        lo, hi = m * (i - 1), m * i
        # Residual x_i - M_i x_{i-1} - f_i as the block map [-M_i, I].
        gram[lo:hi, lo:hi] += m_i.T @ q_inv @ m_i
        gram[lo:hi, hi : hi + m] += -m_i.T @ q_inv
        gram[hi : hi + m, lo:hi] += -q_inv @ m_i
        gram[hi : hi + m, hi : hi + m] += q_inv
        rhs[lo:hi] += -m_i.T @ q_inv @ problem.forcings[i - 1]
        rhs[hi : hi + m] += q_inv @ problem.forcings[i - 1]

        d = problem.obs_dim(i)
        r_inv = spd_solve(problem.obs_noise_covs[i - 1], np.eye(d), name=f"obs_noise_covs[{i}]")
        h_i = obs_mats[i - 1]
        gram[hi : hi + m, hi : hi + m] += h_i.T @ r_inv @ h_i
        rhs[hi : hi + m] += h_i.T @ r_inv @ problem.observations[i - 1]

    return spd_solve(_symmetrize(gram), rhs, name="normal equations")
