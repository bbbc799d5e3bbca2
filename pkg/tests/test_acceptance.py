"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdicts
inline; every criterion pins its tolerance and (where stated) a runtime
budget.
"""

import csv
import io
import time
from contextlib import contextmanager

import numpy as np

from ensvar import (
    LMConfig,
    PerturbationStream,
    StudySpec,
    Trajectory,
    coupled_member_diffs,
    empirical_lp_norm,
    enks_4dvar_run,
    enks_run,
    fit_loglog_slope,
    kf_run,
    ks_least_squares_oracle,
    ks_run,
    lm_enks_tangent_run,
    lm_exact_run,
    lm_exact_step,
    lm_tangent_ls_oracle,
    make_toy_problem,
    reference_enks_run,
    run_study,
)
from ensvar.cli import main
from conftest import random_nonlinear_problem


@contextmanager
def criterion(number: int, name: str, budget_s: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {number:2d} {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    if budget_s is not None and elapsed > budget_s:
        print(f"ACCEPTANCE {number:2d} {name}: FAIL (runtime {elapsed:.1f}s > {budget_s}s)")
        raise AssertionError(f"criterion {number} exceeded runtime budget")
    print(f"ACCEPTANCE {number:2d} {name}: PASS ({elapsed:.2f}s)")


def test_c01_smoother_least_squares_equivalence():
    with criterion(1, "smoother equals block least squares on 20 random problems", 5.0):
        rng = np.random.default_rng(0)
        for trial in range(20):
            m = int(rng.integers(1, 4))
            k = int(rng.integers(1, 5))
            problem = make_toy_problem("linear-chain", m=m, k=k, seed=1000 + trial)
            mean = ks_run(problem).estimate.mean
            oracle = ks_least_squares_oracle(problem)
            assert np.linalg.norm(mean - oracle) <= 1e-8 * np.linalg.norm(oracle)


def test_c02_w1_ground_truth():
    with criterion(2, "W1 filter and smoother ground truth", 1.0):
        w1 = make_toy_problem("w1-linear")
        flt = kf_run(w1).estimates[-1]
        assert abs(flt.mean[0] - 2.0) <= 1e-10
        assert abs(flt.covariance[0, 0] - 2.0 / 3.0) <= 1e-10
        smo = ks_run(w1).estimate
        assert np.abs(smo.mean - [1.0, 2.0]).max() <= 1e-10
        target = np.array([[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]])
        assert np.abs(smo.covariance - target).max() <= 1e-10


def test_c03_enks_to_reference_rate():
    with criterion(3, "EnKS-vs-reference L2 rate near -1/2", 120.0):
        sweep = (100, 1000, 10_000)
        for problem in (
            make_toy_problem("w1-linear"),
            make_toy_problem("linear-chain", m=2, k=3, seed=11),
        ):
            errors = [
                empirical_lp_norm(
                    coupled_member_diffs(problem, n, PerturbationStream(20), 50), 2.0
                )
                for n in sweep
            ]
            slope, _ = fit_loglog_slope(sweep, errors)
            assert -0.7 <= slope <= -0.3, f"slope {slope} outside [-0.7, -0.3]"


def test_c04_reference_ensemble_distribution():
    with criterion(4, "reference ensemble sampled from smoothing law", 30.0):
        w1 = make_toy_problem("w1-linear")
        n = 10_000
        final = reference_enks_run(w1, n, PerturbationStream(31)).analysis_ensembles[-1]
        smoother = ks_run(w1).estimate
        sigma = np.sqrt(np.diag(smoother.covariance))
        assert np.all(np.abs(final.mean(axis=0) - smoother.mean) <= 4.0 * sigma / np.sqrt(n))
        dev = final - final.mean(axis=0)
        cov = dev.T @ dev / (n - 1)
        assert np.abs(cov - smoother.covariance).max() <= 0.1


def test_c05_lm_step_oracle_equivalence():
    with criterion(5, "exact LM step equals tangent normal equations"):
        fixtures = [(make_toy_problem("w2-quadratic"), Trajectory([[0.3], [0.7]]))]
        for seed in range(3):
            problem = random_nonlinear_problem(m=3, k=4, seed=seed)
            rng = np.random.default_rng(200 + seed)
            fixtures.append((problem, Trajectory(0.3 * rng.standard_normal((5, 3)))))
        for gamma in (0.1, 1.0, 10.0):
            for problem, x_prev in fixtures:
                step = lm_exact_step(problem, x_prev, gamma).composite
                oracle = lm_tangent_ls_oracle(problem, x_prev, gamma)
                assert np.linalg.norm(step - oracle) <= 1e-8 * np.linalg.norm(oracle)


def test_c06_linear_one_shot():
    with criterion(6, "gamma=0 exact LM solves linear problems in one step"):
        for problem, start in [
            (make_toy_problem("w1-linear"), Trajectory([[5.0], [-3.0]])),
            (make_toy_problem("linear-chain", m=2, k=3, seed=2), None),
            (make_toy_problem("linear-chain", m=3, k=2, seed=8), None),
        ]:
            cfg = LMConfig(gamma=0.0, max_iterations=1, mode="exact", initial_trajectory=start)
            run = lm_exact_run(problem, cfg)
            target = ks_run(problem).estimate.mean
            gap = np.linalg.norm(run.iterates[1].composite - target)
            assert gap <= 1e-8 * np.linalg.norm(target)


def test_c07_fd_exact_on_linear_maps():
    with criterion(7, "finite-difference run equals tangent run on linear maps"):
        w1 = make_toy_problem("w1-linear")
        cfg_tan = LMConfig(gamma=1.0, max_iterations=2, mode="tangent", ensemble_sizes=(64,))
        tangent = lm_enks_tangent_run(w1, cfg_tan, PerturbationStream(9))
        for tau in (1.0, 1e-3):
            cfg_fd = LMConfig(
                gamma=1.0, max_iterations=2, mode="finite-difference",
                ensemble_sizes=(64,), tau=tau,
            )
            fd = enks_4dvar_run(w1, cfg_fd, PerturbationStream(9))
            for a, b in zip(fd.iterates, tangent.iterates):
                scale = max(np.linalg.norm(b.composite), 1.0)
                assert np.linalg.norm(a.composite - b.composite) <= 1e-9 * scale


def test_c08_tau_rate():
    with criterion(8, "finite-difference error is first order in tau", 60.0):
        w2 = make_toy_problem("w2-quadratic")
        lm = LMConfig(gamma=1.0, max_iterations=2, mode="finite-difference", ensemble_sizes=(200,))
        spec = StudySpec(
            kind="tau-sweep", sweep=(1e-1, 1e-2, 1e-3, 1e-4), replicates=5,
            problem=w2, p_order=2.0, seed=22, lm=lm,
        )
        result = run_study(spec)
        assert 0.7 <= result.slope <= 1.3, f"slope {result.slope} outside [0.7, 1.3]"


def test_c09_n_rate_for_lm_enks():
    with criterion(9, "tangent-ensemble LM converges to exact LM at rate -1/2", 180.0):
        w2 = make_toy_problem("w2-quadratic")
        lm = LMConfig(gamma=1.0, max_iterations=2, mode="tangent", ensemble_sizes=(100,))
        spec = StudySpec(
            kind="lm-enks-vs-lm", sweep=(100, 1000, 10_000), replicates=30,
            problem=w2, p_order=2.0, seed=21, lm=lm,
        )
        result = run_study(spec)
        assert -0.7 <= result.slope <= -0.3, f"slope {result.slope} outside [-0.7, -0.3]"


def test_c10_permutation_equivariance():
    with criterion(10, "permuted member keys permute outputs bit-identically"):
        w1 = make_toy_problem("w1-linear")
        perm = np.random.default_rng(1).permutation(8)

        base = enks_run(w1, 8, PerturbationStream(5))
        permuted = enks_run(w1, 8, PerturbationStream(5), member_indices=perm)
        for pe, be in zip(permuted.analysis_ensembles, base.analysis_ensembles):
            assert np.array_equal(pe, be[perm])

        cfg = LMConfig(gamma=1.0, max_iterations=2, mode="tangent", ensemble_sizes=(8,))
        base_lm = lm_enks_tangent_run(w1, cfg, PerturbationStream(5))
        perm_lm = lm_enks_tangent_run(w1, cfg, PerturbationStream(5), member_indices=perm)
        for pe, be in zip(perm_lm.ensembles, base_lm.ensembles):
            assert np.array_equal(pe, be[perm])


def test_c11_end_to_end_csv_determinism(tmp_path):
    with criterion(11, "study CLI output byte-identical modulo wall_ms"):
        config = tmp_path / "study.yaml"
        config.write_text(
            "problem:\n"
            "  name: linear-chain\n"
            "  m: 2\n"
            "  k: 3\n"
            "  seed: 7\n"
            "study:\n"
            "  kind: enks-vs-ks\n"
            "  sweep: [50, 200]\n"
            "  replicates: 8\n"
            "  p_order: 2\n"
            "  seed: 33\n"
        )
        outs = []
        for name in ("a.csv", "b.csv"):
            out = tmp_path / name
            assert main(["study", "--config", str(config), "--out", str(out)]) == 0
            rows = list(csv.reader(io.StringIO(out.read_text())))
            drop = rows[0].index("wall_ms")
            stripped = "\n".join(",".join(r[:drop] + r[drop + 1 :]) for r in rows)
            outs.append(stripped.encode())
        assert outs[0] == outs[1]
