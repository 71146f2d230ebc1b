"""Cross-fitted efficient estimator: fold plans, reductions, robust family."""

import numpy as np
import pytest

from cgce import (
    ConstantLearner,
    CrossFitPlan,
    EstimandSpec,
    ObservedSample,
    OracleLearner,
    ZeroLearner,
    efficient_estimate,
    eif_values,
    simple_estimate,
    solve_robust,
    solve_tau0_efficient,
    solve_tau0_simple,
    solve_tau1_efficient,
    solve_tau1_simple,
    wald_no_covariate,
)
from cgce.learners import NuisancePredictors
from cgce.simulation import ScenarioSpec, generate_dataset, true_nuisances

MEAN = EstimandSpec.mean()


def scenario_sample(n=4000, seed=0):
    sample, _ = generate_dataset(ScenarioSpec(scenario=1, d=1, n=n), seed)
    return sample


def no_covariate_sample(n=300, seed=0, p=0.5):
    rng = np.random.default_rng(seed)
    x = np.zeros((n, 1))
    z = (rng.random(n) < p).astype(float)
    w = (rng.random(n) < 0.7).astype(float)
    t = z * w
    y = 1.0 + 2.0 * t + rng.standard_normal(n)
    return ObservedSample.validate(x, z, t, y, p)


class TestCrossFitPlan:
    def test_partition(self):
        plan = CrossFitPlan(n=103, k=2, mode="random", seed=4)
        folds = plan.folds()
        joined = np.sort(np.concatenate(folds))
        np.testing.assert_array_equal(joined, np.arange(103))
        assert abs(len(folds[0]) - len(folds[1])) <= 1

    def test_sequential_blocks(self):
        folds = CrossFitPlan(n=10, k=2, mode="sequential").folds()
        np.testing.assert_array_equal(folds[0], np.arange(5))
        np.testing.assert_array_equal(folds[1], np.arange(5, 10))

    def test_remainder_goes_to_later_folds(self):
        folds = CrossFitPlan(n=11, k=3, mode="sequential").folds()
        assert [len(f) for f in folds] == [3, 4, 4]

    def test_seed_determinism(self):
        a = CrossFitPlan(n=50, k=2, mode="random", seed=9).folds()
        b = CrossFitPlan(n=50, k=2, mode="random", seed=9).folds()
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)
        c = CrossFitPlan(n=50, k=2, mode="random", seed=10).folds()
        assert any(not np.array_equal(fa, fc) for fa, fc in zip(a, c))

    def test_single_fold_disables_splitting(self):
        folds = CrossFitPlan(n=20, k=1).folds()
        assert len(folds) == 1
        np.testing.assert_array_equal(folds[0], np.arange(20))

    def test_invalid_plans(self):
        with pytest.raises(ValueError):
            CrossFitPlan(n=3, k=4)
        with pytest.raises(ValueError):
            CrossFitPlan(n=10, k=0)
        with pytest.raises(ValueError):
            CrossFitPlan(n=10, k=2, mode="stratified")


class TestReductionIdentity:
    """All-zero nuisances remove the augmentation: the efficient solver must
    reproduce the simple one exactly, per fold."""

    @pytest.mark.parametrize("spec", [MEAN, EstimandSpec.quantile(0.5)])
    def test_zero_nuisance_reduces_per_fold(self, spec):
        s = scenario_sample(n=600, seed=1)
        pred = ZeroLearner().fit(None, spec, 0.0, 0.0)
        plan = CrossFitPlan(n=s.n, k=2, mode="random", seed=3)
        for idx in plan.folds():
            fold = s.subset(idx)
            use_cf = spec.is_mean
            t1 = solve_tau1_efficient(pred, fold, spec, use_closed_form=use_cf)
            t0 = solve_tau0_efficient(pred, fold, spec, use_closed_form=use_cf)
            tol = 1e-12 if spec.is_mean else 2e-10  # bisection tolerance
            assert abs(t1 - solve_tau1_simple(fold, spec)) < tol
            assert abs(t0 - solve_tau0_simple(fold, spec)) < tol


class TestClosedFormAgainstBisection:
    def test_tau1_and_tau0_agree(self):
        s = scenario_sample(n=1500, seed=2)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        pred = OracleLearner(*true_nuisances(spec_s)).fit(None, MEAN, 0.0, 0.0)
        t1_cf = solve_tau1_efficient(pred, s, MEAN, use_closed_form=True)
        t1_bi = solve_tau1_efficient(pred, s, MEAN, use_closed_form=False)
        assert t1_cf == pytest.approx(t1_bi, abs=1e-8)
        t0_cf = solve_tau0_efficient(pred, s, MEAN, use_closed_form=True)
        t0_bi = solve_tau0_efficient(pred, s, MEAN, use_closed_form=False)
        assert t0_cf == pytest.approx(t0_bi, abs=1e-8)


class TestWaldDegeneration:
    def test_constant_nuisances_without_covariates_give_wald(self):
        # constant-fit nuisances plus no sample splitting collapse the
        # augmented equations to the classical ratio estimator
        for seed in range(10):
            s = no_covariate_sample(n=200 + 7 * seed, seed=seed)
            plan = CrossFitPlan(n=s.n, k=1)
            est = efficient_estimate(s, MEAN, ConstantLearner(), plan=plan, seed=seed)
            assert abs(est.tau - wald_no_covariate(s)) < 1e-10


class TestEfficientEstimate:
    def test_oracle_close_to_truth(self):
        s = scenario_sample(n=4000, seed=3)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        est = efficient_estimate(
            s, MEAN, OracleLearner(*true_nuisances(spec_s)), seed=3
        )
        assert est.tau == pytest.approx(6.0, abs=0.35)
        assert est.se_tau > 0
        assert est.ci_lower < est.tau < est.ci_upper

    def test_oracle_variance_reduction(self):
        # the augmentation with true nuisances must cut the standard error
        # well below the simple estimator's
        s = scenario_sample(n=10000, seed=4)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        eff = efficient_estimate(s, MEAN, OracleLearner(*true_nuisances(spec_s)), seed=4)
        simple = simple_estimate(s, MEAN)
        assert eff.se_tau < 0.75 * simple.se_tau

    def test_determinism(self):
        s = scenario_sample(n=800, seed=5)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        learner = OracleLearner(*true_nuisances(spec_s))
        a = efficient_estimate(s, MEAN, learner, seed=11)
        b = efficient_estimate(s, MEAN, learner, seed=11)
        assert a.tau == b.tau and a.se_tau == b.se_tau

    def test_fold_diagnostics_average(self):
        s = scenario_sample(n=900, seed=6)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        est = efficient_estimate(s, MEAN, OracleLearner(*true_nuisances(spec_s)), seed=6)
        diag = est.diagnostics["efficient"]
        assert est.tau1 == pytest.approx(np.mean(diag.fold_tau1))
        assert est.tau0 == pytest.approx(np.mean(diag.fold_tau0))
        assert len(diag.fold_a1) == 2
        assert diag.learner == "oracle"

    def test_residuals_vanish_at_solution(self):
        s = scenario_sample(n=1200, seed=7)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        est = efficient_estimate(s, MEAN, OracleLearner(*true_nuisances(spec_s)), seed=7)
        diag = est.diagnostics["efficient"]
        assert abs(diag.residual_tau1) < 1e-10
        assert abs(diag.residual_tau0) < 1e-10

    def test_eif_mean_near_zero(self):
        s = scenario_sample(n=2000, seed=8)
        spec_s = ScenarioSpec(scenario=1, d=1, n=s.n)
        est = efficient_estimate(s, MEAN, OracleLearner(*true_nuisances(spec_s)), seed=8)
        diag = est.diagnostics["efficient"]
        # fold averaging leaves a small O(1/n) remainder, not exact zero
        assert abs(diag.eif_mean) < 0.05

    def test_plan_size_mismatch(self):
        s = scenario_sample(n=100, seed=9)
        with pytest.raises(ValueError):
            efficient_estimate(s, MEAN, ZeroLearner(), plan=CrossFitPlan(n=50, k=2))

    def test_quantile_estimand_runs(self):
        s = scenario_sample(n=2500, seed=10)
        spec = EstimandSpec.quantile(0.5)
        est = efficient_estimate(s, spec, ZeroLearner(), seed=10)
        simple = simple_estimate(s, spec)
        # zero nuisances: fold average of simple fold solutions stays close
        assert est.tau == pytest.approx(simple.tau, abs=0.5)


class TestCrossFittingHygiene:
    def test_learner_never_sees_evaluation_rows(self):
        s = scenario_sample(n=400, seed=11)
        seen = []

        class Spy:
            label = "spy"

            def fit(self, fold, spec, t1, t0, seed=None):
                seen.append(np.asarray(fold.y).copy())
                return ZeroLearner().fit(fold, spec, t1, t0)

        plan = CrossFitPlan(n=s.n, k=2, mode="random", seed=12)
        efficient_estimate(s, MEAN, Spy(), plan=plan, seed=12)
        folds = plan.folds()
        assert len(seen) == 2
        # the sample the learner saw for fold k is the complement of fold k
        for k, idx in enumerate(folds):
            comp = np.sort(np.setdiff1d(np.arange(s.n), idx))
            np.testing.assert_array_equal(seen[k], s.y[comp])


class TestRobustFamily:
    def test_zero_phi_recovers_simple(self):
        s = scenario_sample(n=700, seed=13)
        est = solve_robust(s, MEAN, lambda X: np.zeros((s.n, 2)))
        simple = simple_estimate(s, MEAN)
        assert est.tau1 == pytest.approx(simple.tau1, abs=1e-10)
        assert est.tau0 == pytest.approx(simple.tau0, abs=1e-10)
        assert est.se_tau == pytest.approx(simple.se_tau, rel=1e-9)

    def test_any_phi_keeps_consistency(self):
        # the augmentation has mean zero whatever phi is, so even an
        # arbitrary bounded phi leaves the estimate near the target
        taus = []
        for seed in range(8):
            s = scenario_sample(n=8000, seed=100 + seed)
            phi = lambda X: np.column_stack([np.sin(X[:, 0]), np.cos(X[:, 0])])
            taus.append(solve_robust(s, MEAN, phi).tau)
        assert np.mean(taus) == pytest.approx(6.0, abs=0.1)

    def test_bad_phi_shape_rejected(self):
        s = scenario_sample(n=50, seed=14)
        with pytest.raises(ValueError):
            solve_robust(s, MEAN, lambda X: np.zeros(s.n))

    def test_quantile_path(self):
        s = scenario_sample(n=3000, seed=15)
        spec = EstimandSpec.quantile(0.5)
        est = solve_robust(s, spec, lambda X: np.zeros((s.n, 2)))
        simple = simple_estimate(s, spec)
        assert est.tau == pytest.approx(simple.tau, abs=0.2)


class TestEifValues:
    def test_matches_hand_formula(self):
        s = scenario_sample(n=60, seed=16)
        rng = np.random.default_rng(0)
        q = rng.uniform(0.2, 0.8, s.n)
        m1 = rng.standard_normal(s.n)
        m2 = rng.standard_normal(s.n)
        m3 = rng.standard_normal(s.n)
        a1, a0 = -1.7, -2.1
        tau1, tau0 = 10.0, 4.0
        phi = eif_values(s, MEAN, tau1, tau0, q, m1, m2, m3, a1, a0)
        w0 = (1 - s.z) / (1 - s.p) - (s.z - s.t) / s.p
        phi1 = a1 * m1 * q / s.p + a0 * (m3 / (1 - s.p) + m2 * (1 - q) / s.p)
        expected = phi1 * (s.z - s.p) + (
            -a1 * (s.y - tau1) * s.t / s.p + a0 * (s.y - tau0) * w0
        )
        np.testing.assert_allclose(phi, expected, atol=1e-12)
