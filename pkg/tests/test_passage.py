"""
Test cases for passage times, survival curves and exponent fits
"""
import math
import os
import unittest

import numpy as np
from passage_lab.errors import (
    DataValidationError,
    DomainError,
    FitError,
    RegimeMismatchError,
    SlndUnknownError,
)
from passage_lab.kernels import LampertiKernel, ProcessSpec, make_kernel
from passage_lab.passage import (
    BridgeCorrection,
    MonteCarloPlan,
    PassageConfig,
    Regime,
    SurvivalCurve,
    classify_regime,
    coupled_survival,
    envelope_coefficient,
    exponent_fit,
    exponent_monotonicity,
    fekete_upper_bounds,
    first_exits,
    first_passage,
    horizon_indices,
    lambda_star_estimate,
    run_exits,
    schedule_boundary,
    step_halving_diagnostic,
    subcritical_tail_check,
    supercritical_plateau,
    survival_estimate,
    survival_indicators,
    wilson_interval,
)
from passage_lab.sampler import Frame, PathSample, StationarySampler

RUN_SLOW_TESTS = os.getenv("RUN_SLOW_TESTS", "0") == "1"


def synthetic_curve(rate=0.5, trials=100000, horizons=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)):
    """Survivor counts that decay exactly like exp(-rate*u)"""
    survivors = tuple(int(round(trials * math.exp(-rate * u))) for u in horizons)
    return SurvivalCurve(tuple(horizons), survivors, trials)


######################################################################
#  R E G I M E S   A N D   P A S S A G E   T I M E S
######################################################################
class TestRegimes(unittest.TestCase):
    """Test Cases for regime classification"""

    def test_classify(self):
        """It should classify boundaries by beta against alpha"""
        self.assertEqual(classify_regime(0.5, 0.5), Regime.CRITICAL)
        self.assertEqual(classify_regime(0.5, 0.5 + 1e-14), Regime.CRITICAL)
        self.assertEqual(classify_regime(0.5, 0.4), Regime.SUBCRITICAL)
        self.assertEqual(classify_regime(0.5, 0.6), Regime.SUPERCRITICAL)

    def test_require(self):
        """It should raise RegimeMismatchError on the wrong regime"""
        passage = PassageConfig(1.0, 0.3, 0.5)
        self.assertIs(passage.require(Regime.SUBCRITICAL), passage)
        with self.assertRaises(RegimeMismatchError) as context:
            passage.require(Regime.CRITICAL)
        self.assertEqual(context.exception.code, "regime-mismatch")

    def test_bad_boundary(self):
        """It should reject nonpositive c and beta"""
        self.assertRaises(DomainError, PassageConfig, 0.0, 0.5, 0.5)
        self.assertRaises(DomainError, PassageConfig, 1.0, -0.5, 0.5)

    def test_first_passage(self):
        """It should find the first grid time after 1 above the boundary"""
        path = PathSample(
            np.array([0.5, 1.0, 2.0, 4.0]), np.array([5.0, 0.5, 1.0, 3.0]), Frame.X_FRAME
        )
        self.assertEqual(first_passage(path, 1.0, 0.5), (4.0, False))
        self.assertEqual(first_passage(path, 2.0, 0.5), (4.0, True))

    def test_survival_indicators(self):
        """It should mark the horizons each path survives"""
        paths = np.array([[0.1, 0.5, 2.0, 0.1], [0.1, 0.2, 0.3, 0.4]])
        alive = survival_indicators(paths, 1.0, [1, 2, 3])
        np.testing.assert_array_equal(alive, [[True, False, False], [True, True, True]])

    def test_bridge_crossings(self):
        """It should count crossings between grid points when the uniform says so"""
        paths = np.array([[0.0, 0.99, 0.0]])
        bridge = BridgeCorrection(0.01)
        probabilities = bridge.crossing_probabilities(paths, np.full(3, 1.0))
        np.testing.assert_allclose(probabilities, [[math.exp(-2.0), math.exp(-2.0)]], rtol=1e-6)
        boundary = np.full(3, 1.0)
        self.assertEqual(first_exits(paths, boundary)[0], 3)
        self.assertEqual(first_exits(paths, boundary, np.array([[0.1, 0.5]]), bridge)[0], 1)
        self.assertEqual(first_exits(paths, boundary, np.array([[0.5, 0.1]]), bridge)[0], 2)
        self.assertEqual(first_exits(paths, boundary, np.array([[0.5, 0.5]]), bridge)[0], 3)
        unwatched = bridge.crossing_probabilities(paths, np.array([np.inf, 1.0, np.inf]))
        np.testing.assert_array_equal(unwatched, [[0.0, 0.0]])

    def test_bridge_needs_markov_kernel(self):
        """It should only correct exponentially correlated kernels"""
        kernel = make_kernel(ProcessSpec.brownian_motion())
        brownian = StationarySampler(LampertiKernel(kernel), 0.01, 5)
        bridge = BridgeCorrection.for_sampler(brownian)
        self.assertAlmostEqual(bridge.scale, 2.0 * math.sinh(0.005), places=12)
        rough = StationarySampler(LampertiKernel(make_kernel(ProcessSpec.fbm(0.3))), 0.01, 5)
        self.assertIsNone(BridgeCorrection.for_sampler(rough))

    def test_first_passage_needs_x_frame(self):
        """It should refuse Y-frame paths and paths ending before t = 1"""
        path = PathSample(np.array([0.0, 0.5]), np.zeros(2), Frame.Y_FRAME)
        self.assertRaises(DataValidationError, first_passage, path, 1.0, 0.5)
        path = PathSample(np.array([0.0, 0.5]), np.zeros(2), Frame.X_FRAME)
        self.assertRaises(DomainError, first_passage, path, 1.0, 0.5)

    def test_horizon_indices(self):
        """It should map horizons onto the last grid index not past them"""
        self.assertEqual(horizon_indices([0.0, 0.3, 1.0], 0.1), [0, 3, 10])
        self.assertRaises(DomainError, horizon_indices, [1.0], 0.0)


######################################################################
#  S U R V I V A L   C U R V E S
######################################################################
class TestSurvivalCurve(unittest.TestCase):
    """Test Cases for SurvivalCurve"""

    def test_wilson_endpoints(self):
        """It should pin the interval at 0 and 1 for extreme counts"""
        lower, upper = wilson_interval([0, 50, 100], 100)
        self.assertEqual(lower[0], 0.0)
        self.assertEqual(upper[2], 1.0)
        self.assertAlmostEqual(lower[1] + upper[1], 1.0, places=12)
        self.assertLess(lower[1], 0.5)

    def test_validation(self):
        """It should reject inconsistent counts and horizons"""
        self.assertRaises(DataValidationError, SurvivalCurve, (1.0, 2.0), (5, 6), 10)
        self.assertRaises(DataValidationError, SurvivalCurve, (1.0, 2.0), (5, 11), 10)
        self.assertRaises(DataValidationError, SurvivalCurve, (2.0, 1.0), (5, 4), 10)
        self.assertRaises(DataValidationError, SurvivalCurve, (1.0,), (5, 4), 10)
        self.assertRaises(DataValidationError, SurvivalCurve, (1.0,), (0,), 0)

    def test_pool(self):
        """It should pool curves by adding counts"""
        first = SurvivalCurve((1.0, 2.0), (80, 60), 100)
        second = SurvivalCurve((1.0, 2.0), (70, 40), 100)
        pooled = SurvivalCurve.pool([first, second])
        self.assertEqual(pooled.survivors, (150, 100))
        self.assertEqual(pooled.trials, 200)
        self.assertRaises(DataValidationError, SurvivalCurve.pool, [])
        other = SurvivalCurve((1.0, 3.0), (70, 40), 100)
        self.assertRaises(DataValidationError, SurvivalCurve.pool, [first, other])

    def test_rows(self):
        """It should list one row per horizon"""
        rows = SurvivalCurve((1.0, 2.0), (80, 60), 100).rows()
        self.assertEqual(rows[0][:4], (1.0, 80, 100, 0.8))
        self.assertLess(rows[1][4], 0.6)
        self.assertGreater(rows[1][5], 0.6)

    def test_from_exits(self):
        """It should count paths exiting after each horizon"""
        exits = np.array([0, 5, 10, 11, 30])
        curve = SurvivalCurve.from_exits(exits, [0.5, 1.0, 2.0], 0.1)
        self.assertEqual(curve.survivors, (3, 2, 1))
        self.assertEqual(curve.trials, 5)


######################################################################
#  E X P O N E N T   F I T
######################################################################
class TestExponentFit(unittest.TestCase):
    """Test Cases for the weighted exponent fit"""

    def test_exact_exponential(self):
        """It should recover lambda = 2 with no spread from f(u) = exp(-2u)"""
        estimate = exponent_fit(synthetic_curve(2.0, trials=10**12))
        self.assertAlmostEqual(estimate.lambda_hat, 2.0, places=6)
        self.assertLess(estimate.std_err, 1e-3)
        self.assertLess(estimate.diagnostics["chi2_reduced"], 1e-6)
        self.assertEqual(estimate.fit_window, (1.0, 6.0))
        self.assertTrue(estimate.fekete_consistent)
        self.assertAlmostEqual(estimate.diagnostics["intercept"], 0.0, places=6)
        self.assertIsNotNone(estimate.diagnostics["curvature"])

    def test_window(self):
        """It should only use horizons inside the window"""
        estimate = exponent_fit(synthetic_curve(0.5), window=(2.0, 5.0))
        self.assertEqual(estimate.diagnostics["horizons_used"], [2.0, 3.0, 4.0, 5.0])

    def test_window_too_small(self):
        """It should need three horizons in the window"""
        with self.assertRaises(FitError) as context:
            exponent_fit(synthetic_curve(0.5), window=(1.0, 2.0))
        self.assertEqual(context.exception.code, "window-too-small")

    def test_insufficient_survivors(self):
        """It should refuse horizons with fewer than 10 survivors"""
        curve = SurvivalCurve((1.0, 2.0, 3.0), (1000, 100, 5), 10000)
        with self.assertRaises(FitError) as context:
            exponent_fit(curve)
        self.assertEqual(context.exception.code, "insufficient-survivors")

    def test_excluded_horizons(self):
        """It should drop horizons where nobody has exited"""
        curve = SurvivalCurve((0.0, 1.0, 2.0, 3.0), (10000, 6065, 3679, 2231), 10000)
        estimate = exponent_fit(curve)
        self.assertEqual(estimate.diagnostics["excluded_horizons"], [0.0])
        self.assertAlmostEqual(estimate.lambda_hat, 0.5, places=3)

    def test_fekete_upper_bounds(self):
        """It should give -log f(u)/u per positive horizon"""
        curve = synthetic_curve(0.5)
        bounds = fekete_upper_bounds(curve, wilson_upper=False)
        self.assertEqual(len(bounds), 6)
        for u, value in bounds:
            self.assertAlmostEqual(value, 0.5, places=4, msg=u)
        for (_, wilson), (_, plain) in zip(fekete_upper_bounds(curve), bounds):
            self.assertLess(wilson, plain)

    def test_envelope_coefficient(self):
        """It should give (alpha - beta)/(4 beta^2)"""
        self.assertAlmostEqual(envelope_coefficient(0.5, 0.25), 1.0, places=15)

    def test_monte_carlo_plan(self):
        """It should split paths into fixed chunks"""
        plan = MonteCarloPlan(2500, chunk_size=1000)
        self.assertEqual([len(chunk) for chunk in plan.chunks()], [1000, 1000, 500])
        self.assertRaises(DomainError, MonteCarloPlan, 0)


######################################################################
#  M O N T E   C A R L O
######################################################################
class TestMonteCarlo(unittest.TestCase):
    """Test Cases for simulated survival"""

    def setUp(self):
        self.kernel = make_kernel(ProcessSpec.brownian_motion())

    def test_worker_count_does_not_matter(self):
        """It should give identical counts for any number of workers"""
        horizons = [0.5, 1.0, 1.5]
        one = survival_estimate(self.kernel, 1.0, horizons, 3000, 0.05, seed=7, workers=1)
        four = survival_estimate(self.kernel, 1.0, horizons, 3000, 0.05, seed=7, workers=4)
        self.assertEqual(one, four)
        other = survival_estimate(self.kernel, 1.0, horizons, 3000, 0.05, seed=8, workers=1)
        self.assertNotEqual(one.survivors, other.survivors)

    def test_needs_horizons(self):
        """It should need at least one horizon"""
        self.assertRaises(DataValidationError, survival_estimate, self.kernel, 1.0, [], 10)

    def test_pathwise_coupling(self):
        """It should keep survival monotone path by path on 1000 coupled paths"""
        horizons = [10, 20, 30]
        for spec in (ProcessSpec.brownian_motion(), ProcessSpec.fbm(0.3)):
            sampler = StationarySampler(LampertiKernel(make_kernel(spec)), 0.1, 31)
            paths = sampler.sample_batch(5, range(1000))
            uniforms = sampler.crossing_uniforms(5, range(1000))
            bridge = BridgeCorrection.for_sampler(sampler)
            alive = [
                survival_indicators(paths, c, horizons, uniforms, bridge)
                for c in (0.6, 1.0, 1.5)
            ]
            for lower, higher in zip(alive, alive[1:]):
                self.assertFalse(np.any(lower & ~higher), spec.label)
            for rows in alive:
                self.assertFalse(np.any(rows[:, 1:] & ~rows[:, :-1]), spec.label)
            coarse = survival_indicators(paths, schedule_boundary(1.0, 31, 10), horizons)
            self.assertFalse(np.any(alive[1] & ~coarse), spec.label)

            fine_exits, coarse_exits = run_exits(
                sampler,
                [np.full(31, 1.0), schedule_boundary(1.0, 31, 10)],
                MonteCarloPlan(1000, 5, workers=2, chunk_size=300),
                continuous=[True, False],
            )
            self.assertTrue(np.all(fine_exits <= coarse_exits), spec.label)
            np.testing.assert_array_equal(fine_exits > 20, alive[1][:, 1])

    def test_coupled_survival(self):
        """It should never see more survivors on the fine grid"""
        fine, coarse = coupled_survival(self.kernel, 1.0, [1.0, 2.0, 3.0], 3, 2000, step=0.1)
        self.assertEqual(coarse.horizons, (1.0, 2.0, 3.0))
        for fine_count, coarse_count in zip(fine.survivors, coarse.survivors):
            self.assertLessEqual(fine_count, coarse_count)

    def test_coupled_survival_needs_integer_stride(self):
        """It should need 1/step to be an integer"""
        self.assertRaises(DomainError, coupled_survival, self.kernel, 1.0, [1.0], 2, 10, 0.3)

    def test_lambda_star_window(self):
        """It should refuse n_max < 2"""
        with self.assertRaises(FitError) as context:
            lambda_star_estimate(self.kernel, 1.0, 1, 100)
        self.assertEqual(context.exception.code, "window-too-small")

    def test_monotone_in_level(self):
        """It should find lambda decreasing in c on coupled paths"""
        report = exponent_monotonicity(
            self.kernel, [1.2, 0.8], [0.5, 1.0, 1.5, 2.0], 4000, step=0.01
        )
        self.assertEqual(report.levels, (0.8, 1.2))
        self.assertEqual(report.violations, ())
        self.assertGreater(report.estimates[0].lambda_hat, report.estimates[1].lambda_hat)

    def test_supercritical_plateau(self):
        """It should center the last-two difference interval on the difference"""
        report = supercritical_plateau(
            self.kernel, 1.0, 0.7, [math.exp(2.0), math.exp(4.0)], 2000, step=0.05
        )
        earlier, final = report.curve.f_hat
        self.assertAlmostEqual(report.difference, earlier - final, places=12)
        spread = math.sqrt((earlier * (1 - earlier) + final * (1 - final)) / 2000)
        low, high = report.difference_ci
        self.assertAlmostEqual(high - low, 2 * 1.959963984540054 * spread, places=9)
        self.assertAlmostEqual((low + high) / 2, report.difference, places=12)
        self.assertLessEqual(report.final_ci[0], report.final_estimate)
        self.assertIn("difference_contains_zero", report.serialize())
        self.assertRaises(
            RegimeMismatchError, supercritical_plateau, self.kernel, 1.0, 0.5, [1.0, 2.0], 10
        )

    @unittest.skipUnless(RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 to run")
    def test_supercritical_plateau_settles(self):
        """It should see fBm(1/2) survival settle strictly inside (0, 1)"""
        kernel = make_kernel(ProcessSpec.fbm(0.5))
        horizons = [math.exp(2.0), math.exp(6.0), math.exp(8.0)]
        report = supercritical_plateau(kernel, 1.0, 0.8, horizons, 100_000)
        self.assertTrue(report.difference_contains_zero, report.difference_ci)
        self.assertTrue(report.final_inside_unit_interval, report.final_ci)

    def test_subcritical_tail_report(self):
        """It should fit the quadratic envelope in log t"""
        horizons = [math.exp(0.5), math.exp(1.0), math.exp(1.5)]
        report = subcritical_tail_check(self.kernel, 1.0, 0.3, horizons, 4000, step=0.05)
        self.assertEqual(len(report.envelope()), 3)
        self.assertLess(report.curvature_ci[0], report.curvature_ci[1])
        self.assertAlmostEqual(report.envelope_coefficient, 0.2 / 0.36, places=12)

    @unittest.skipUnless(RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 to run")
    def test_subcritical_tail(self):
        """It should find log-survival concave in log t for beta = 1/4"""
        # e^4 is out of reach: no path survives that long at 10^5 paths
        horizons = [math.exp(1.0), math.exp(2.0), math.exp(3.0)]
        report = subcritical_tail_check(self.kernel, 1.0, 0.25, horizons, 100_000)
        self.assertTrue(report.negative_curvature, report.curvature_ci)
        self.assertAlmostEqual(report.envelope_coefficient, 1.0, places=12)

    def test_subcritical_needs_slnd(self):
        """It should refuse the tail check without an SLND constant"""
        kernel = make_kernel(ProcessSpec.spde_trace(1, 2.0, 1.0, 0.0))
        self.assertRaises(
            SlndUnknownError, subcritical_tail_check, kernel, 1.0, 0.5, [1.0, 2.0, 3.0], 10
        )

    @unittest.skipUnless(RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 to run")
    def test_step_halving(self):
        """It should move lambda by less than the CI width when halving the step"""
        report = step_halving_diagnostic(
            self.kernel, 1.0, [1.0, 2.0, 3.0, 4.0, 5.0], 100000, step=0.01
        )
        self.assertTrue(report.within_ci)

    @unittest.skipUnless(RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 to run")
    def test_lambda_star_below_lambda(self):
        """It should find lambda* no larger than lambda"""
        star = lambda_star_estimate(self.kernel, 1.0, 6, 100000)
        fine = exponent_fit(
            survival_estimate(self.kernel, 1.0, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 100000)
        )
        self.assertLessEqual(star.lambda_hat, fine.lambda_hat + 2.0 * fine.std_err)
