import numpy as np
import pytest

from ensvar import (
    NoiseKind,
    NonlinearOperatorError,
    PerturbationStream,
    ValidationError,
    coupled_enks_error,
    coupled_member_diffs,
    enkf_run,
    enks_run,
    kf_run,
    ks_run,
    make_toy_problem,
    reference_enks_run,
    sample_covariance,
)
from ensvar.ensemble import _sample_products


class DegenerateStream(PerturbationStream):
    """Zero init and model draws: the exact-mean limit of a shrinking
    background spread, used to force a degenerate (zero-spread) ensemble."""

    def draw_members(self, phase, iteration, time_index, kind, members, dim):
        out = super().draw_members(phase, iteration, time_index, kind, members, dim)
        if kind in (NoiseKind.INIT, NoiseKind.MODEL):
            return np.zeros_like(out)
        return out


class TestEnKF:
    def test_degenerate_ensemble_zero_gain(self, w1):
        result = enkf_run(w1, 2, DegenerateStream(0))
        # Sample covariance 0 -> gain 0 -> analysis equals forecast exactly.
        np.testing.assert_array_equal(
            result.analysis_ensembles[-1], result.forecast_ensembles[-1]
        )

    def test_large_ensemble_matches_filter(self, w1):
        n = 10_000
        result = enkf_run(w1, n, PerturbationStream(42))
        kf_mean = kf_run(w1).estimates[-1].mean
        tol = 4.0 * np.sqrt(2.0 / 3.0) / np.sqrt(n)
        assert abs(result.sample_means[-1][0] - kf_mean[0]) < tol

    def test_bit_identical_reruns(self, w1):
        a = enkf_run(w1, 3, PerturbationStream(123))
        b = enkf_run(w1, 3, PerturbationStream(123))
        for ea, eb in zip(a.analysis_ensembles, b.analysis_ensembles):
            np.testing.assert_array_equal(ea, eb)

    def test_rejects_single_member(self, w1):
        with pytest.raises(ValidationError):
            enkf_run(w1, 1, PerturbationStream(0))

    def test_rejects_nonlinear(self, w2):
        with pytest.raises(NonlinearOperatorError):
            enkf_run(w2, 4, PerturbationStream(0))


class TestEnKS:
    def test_large_ensemble_matches_smoother(self, w1):
        n = 10_000
        result = enks_run(w1, n, PerturbationStream(42))
        target = ks_run(w1).estimate.mean
        final = result.analysis_ensembles[-1]
        sigma = final.std(axis=0, ddof=1)
        np.testing.assert_array_less(
            np.abs(result.sample_means[-1] - target), 4.0 * sigma / np.sqrt(n)
        )

    def test_degenerate_ensemble_zero_gain(self, w1):
        result = enks_run(w1, 2, DegenerateStream(0))
        np.testing.assert_array_equal(
            result.analysis_ensembles[-1], result.forecast_ensembles[-1]
        )

    def test_permutation_equivariance_bitwise(self, w1):
        perm = np.random.default_rng(1).permutation(8)
        base = enks_run(w1, 8, PerturbationStream(5))
        permuted = enks_run(w1, 8, PerturbationStream(5), member_indices=perm)
        for pe, be in zip(permuted.analysis_ensembles, base.analysis_ensembles):
            np.testing.assert_array_equal(pe, be[perm])
        for ma, mb in zip(permuted.sample_means, base.sample_means):
            np.testing.assert_array_equal(ma, mb)

    @pytest.mark.parametrize("problem_args", [("w1-linear", {}), ("linear-chain", {"m": 2, "k": 3, "seed": 4})])
    def test_marginals_match_enkf_members(self, problem_args):
        # The trailing (time-i) block of the EnKS analysis at time i equals
        # the EnKF analysis member for member when both consume the same
        # keys: the smoother's last-block update is the filter update.
        name, params = problem_args
        problem = make_toy_problem(name, **params)
        m = problem.state_dim
        enks = enks_run(problem, 50, PerturbationStream(8))
        enkf = enkf_run(problem, 50, PerturbationStream(8))
        for i in range(problem.horizon + 1):
            block = enks.analysis_ensembles[i][:, -m:]
            target = enkf.analysis_ensembles[i]
            scale = max(np.abs(target).max(), 1.0)
            assert np.abs(block - target).max() <= 1e-10 * scale

    def test_member_count_constant_and_composite_growth(self, w1):
        result = enks_run(w1, 6, PerturbationStream(2))
        for i, ens in enumerate(result.analysis_ensembles):
            assert ens.shape == (6, w1.state_dim * (i + 1))

    def test_matrix_free_products_match_dense_path(self):
        # The deviation-product route never forms the sample covariance;
        # on a small composite problem both routes must agree.
        problem = make_toy_problem("linear-chain", m=3, k=4, seed=6)
        m = problem.state_dim
        run = enks_run(problem, 30, PerturbationStream(14))
        for i, forecast in enumerate(run.forecast_ensembles, start=1):
            h_i = problem.obs_ops[i - 1].matrix
            dev = forecast - forecast.mean(axis=0)
            pht, hpht = _sample_products(dev, dev[:, -m:] @ h_i.T)
            dense = sample_covariance(forecast)
            dense_pht = dense[:, -m:] @ h_i.T
            dense_hpht = h_i @ dense[-m:, -m:] @ h_i.T
            assert np.abs(pht - dense_pht).max() <= 1e-10 * max(np.abs(dense_pht).max(), 1.0)
            assert np.abs(hpht - dense_hpht).max() <= 1e-10 * max(np.abs(dense_hpht).max(), 1.0)


class TestReferenceRun:
    def test_single_member_valid(self, w1):
        result = reference_enks_run(w1, 1, PerturbationStream(3))
        assert result.analysis_ensembles[-1].shape == (1, 2)

    def test_distribution_matches_smoother(self, w1):
        n = 10_000
        result = reference_enks_run(w1, n, PerturbationStream(31))
        final = result.analysis_ensembles[-1]
        smoother = ks_run(w1).estimate
        sigma = np.sqrt(np.diag(smoother.covariance))
        np.testing.assert_array_less(
            np.abs(final.mean(axis=0) - smoother.mean), 4.0 * sigma / np.sqrt(n)
        )
        assert np.abs(sample_covariance(final) - smoother.covariance).max() < 0.1

    def test_forecast_covariances_recorded(self, w1):
        result = reference_enks_run(w1, 4, PerturbationStream(3))
        smoother = ks_run(w1)
        for got, want in zip(result.forecast_covariances, smoother.forecast_covariances):
            np.testing.assert_array_equal(got, want)

    def test_injected_sample_covariances_reproduce_enks(self, w1):
        # Forcing the reference gain to use the EnKS's own sample
        # covariances makes the two updates identical.
        n = 40
        enks = enks_run(w1, n, PerturbationStream(12))
        injected = tuple(sample_covariance(f) for f in enks.forecast_ensembles)
        ref = reference_enks_run(
            w1, n, PerturbationStream(12), forecast_covariances=injected
        )
        diff = np.abs(ref.analysis_ensembles[-1] - enks.analysis_ensembles[-1]).max()
        assert diff <= 1e-12


class TestCoupledError:
    def test_rate_is_roughly_root_n(self, w1):
        errors = [
            coupled_enks_error(w1, n, PerturbationStream(7), 2.0, 20)
            for n in (100, 1000)
        ]
        assert errors[1] < errors[0]
        ratio = np.log(errors[1] / errors[0]) / np.log(10.0)
        assert -0.8 < ratio < -0.2

    def test_replication_stability(self, w1):
        # Doubling the replicate count moves the estimate by < 30%.
        short = coupled_enks_error(w1, 200, PerturbationStream(13), 2.0, 25)
        long = coupled_enks_error(w1, 200, PerturbationStream(13), 2.0, 50)
        assert abs(long - short) / short < 0.3

    def test_diffs_have_replicate_count(self, w1):
        diffs = coupled_member_diffs(w1, 30, PerturbationStream(1), 7)
        assert len(diffs) == 7
        assert all(d.shape == (2,) for d in diffs)

    def test_rejects_zero_replicates(self, w1):
        with pytest.raises(ValidationError):
            coupled_member_diffs(w1, 10, PerturbationStream(1), 0)
