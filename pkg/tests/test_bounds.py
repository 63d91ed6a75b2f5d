"""
Test cases for Kummer's function, z(mu) and the bound family
"""
import math
import os
import unittest

from passage_lab.bounds import (
    BoundsReport,
    LabeledBound,
    analytic_lower_bound,
    build_bounds_report,
    comparison_bound,
    discretization_budget,
    kummer_m,
    lower_bound_large_c,
    refined_lower_bound_small_c,
    small_c_lower_rate,
    small_c_upper_rate,
    upper_bound_large_c,
    z_inverse,
    z_of_mu,
)
from passage_lab.errors import (
    DomainError,
    InvariantViolation,
    KummerError,
    OutOfRangeError,
    SlndUnknownError,
)
from passage_lab.kernels import ProcessSpec, make_kernel
from passage_lab.passage import SurvivalCurve
from passage_lab.sampler import make_schedule

RUN_SLOW_TESTS = os.getenv("RUN_SLOW_TESTS", "0") == "1"
BM = ProcessSpec.brownian_motion()


######################################################################
#  K U M M E R   F U N C T I O N
######################################################################
class TestKummer(unittest.TestCase):
    """Test Cases for the Kummer series"""

    def test_at_zero(self):
        """It should give M(a, b, 0) = 1"""
        result = kummer_m(0.7, 1.3, 0.0)
        self.assertEqual(result.value, 1.0)
        self.assertEqual(result.terms_used, 1)

    def test_exponential(self):
        """It should give M(1, 1, z) = e^z"""
        for z in (-3.0, 0.5, 2.5, 20.0):
            result = kummer_m(1.0, 1.0, z)
            self.assertAlmostEqual(result.value / math.exp(z), 1.0, places=12, msg=z)

    def test_terminating_series(self):
        """It should stop exactly for a negative integer a"""
        result = kummer_m(-1.0, 0.5, 0.8)
        self.assertAlmostEqual(result.value, 1.0 - 2.0 * 0.8, places=15)
        self.assertEqual(result.terms_used, 2)
        self.assertEqual(result.truncation_bound, 0.0)

    def test_poles(self):
        """It should refuse b at a non-positive integer"""
        for b in (0.0, -2.0):
            with self.assertRaises(KummerError) as context:
                kummer_m(0.5, b, 1.0)
            self.assertEqual(context.exception.code, "divergent-parameter")

    def test_out_of_range(self):
        """It should refuse |z| > 50"""
        self.assertRaises(OutOfRangeError, kummer_m, 0.5, 0.5, 51.0)
        self.assertRaises(OutOfRangeError, kummer_m, 0.5, 0.5, -51.0)

    def test_precision_loss(self):
        """It should flag cancellation for large negative z"""
        self.assertTrue(kummer_m(1.0, 1.0, -30.0).precision_loss)
        self.assertFalse(kummer_m(1.0, 1.0, 3.0).precision_loss)


######################################################################
#  z ( m u )
######################################################################
class TestBreimanShepp(unittest.TestCase):
    """Test Cases for z(mu) and its inverse"""

    def test_closed_forms(self):
        """It should match the roots of the low-degree polynomials"""
        self.assertAlmostEqual(z_of_mu(1.0), 1.0, places=12)
        self.assertAlmostEqual(z_of_mu(2.0), math.sqrt(3.0 - math.sqrt(6.0)), places=12)

    def test_decreasing(self):
        """It should decrease in mu"""
        values = [z_of_mu(mu) for mu in (0.1, 0.5, 1.0, 2.0, 10.0)]
        self.assertEqual(values, sorted(values, reverse=True))

    def test_inverse(self):
        """It should invert z"""
        self.assertAlmostEqual(z_inverse(1.0), 1.0, places=8)
        self.assertAlmostEqual(z_inverse(z_of_mu(2.0)), 2.0, places=8)
        self.assertAlmostEqual(z_inverse(z_of_mu(0.3)), 0.3, places=8)

    def test_asymptotics(self):
        """It should approach its large and small mu envelopes"""
        self.assertTrue(0.9 <= math.sqrt(100.0) * z_of_mu(100.0) <= 1.2)
        ratio = z_of_mu(1e-6) / math.sqrt(2.0 * math.log(1e6))
        self.assertTrue(0.8 <= ratio <= 1.3, ratio)

    def test_bad_arguments(self):
        """It should refuse nonpositive arguments and unreachable levels"""
        self.assertRaises(DomainError, z_of_mu, 0.0)
        self.assertRaises(DomainError, z_inverse, -1.0)
        self.assertRaises(OutOfRangeError, z_inverse, 100.0)


######################################################################
#  B O U N D   F A M I L Y
######################################################################
class TestBounds(unittest.TestCase):
    """Test Cases for the lower and upper bounds"""

    def test_analytic_lower_bound(self):
        """It should give -log P{|Z| <= c/sqrt(1 - 1/e)} for Brownian motion"""
        expected = -math.log(math.erf(1.0 / math.sqrt(2.0 * (1.0 - math.exp(-1.0)))))
        self.assertAlmostEqual(analytic_lower_bound(BM, 1.0), expected, places=12)
        self.assertAlmostEqual(analytic_lower_bound(BM, 1.0), 0.2338, places=4)

    def test_small_c_limit(self):
        """It should approach -log P{|Z| <= 1} after rescaling by c^(1/alpha)"""
        c = 1e-3
        scaled = c**2 * refined_lower_bound_small_c(BM, c)
        self.assertAlmostEqual(scaled, -math.log(math.erf(1.0 / math.sqrt(2.0))), places=5)
        self.assertAlmostEqual(scaled, 0.3817, places=4)
        self.assertRaises(DomainError, refined_lower_bound_small_c, BM, 1.5)

    def test_large_c_envelopes(self):
        """It should give the Gaussian envelopes in c"""
        self.assertAlmostEqual(upper_bound_large_c(BM, 2.0), math.exp(-2.0), places=15)
        self.assertAlmostEqual(lower_bound_large_c(BM, 2.0), math.exp(-2.0), places=15)

    def test_small_c_rates(self):
        """It should grow like c^(-1/alpha) as c shrinks"""
        self.assertAlmostEqual(small_c_lower_rate(BM, 0.1), 100.0, places=9)
        self.assertAlmostEqual(small_c_upper_rate(make_kernel(BM), 0.1), 100.0, places=9)
        fbm = ProcessSpec.fbm(0.25)
        self.assertAlmostEqual(small_c_lower_rate(fbm, 0.5), 16.0, places=9)
        spec = ProcessSpec.spde_trace(1, 2.0, 1.0, 0.0)
        self.assertRaises(SlndUnknownError, small_c_lower_rate, spec, 0.5)

    def test_slnd_unknown(self):
        """It should refuse SLND bounds without a constant"""
        spec = ProcessSpec.spde_trace(1, 2.0, 1.0, 0.0)
        self.assertRaises(SlndUnknownError, analytic_lower_bound, spec, 1.0)
        self.assertRaises(SlndUnknownError, lower_bound_large_c, spec, 1.0)

    def test_budget(self):
        """It should sum the arithmetic correction in closed form"""
        schedule = make_schedule("arithmetic", alpha=0.5, n_max=10000)
        report = discretization_budget(schedule, 0.5, 1.0, 0.1, 100, K=10.0)
        expected = 10.0 * (math.exp(-0.1) - math.exp(-10.001)) / (1.0 - math.exp(-0.001))
        self.assertAlmostEqual(report.correction / expected, 1.0, places=9)
        self.assertAlmostEqual(report.continuous_level, 1.1, places=15)
        self.assertAlmostEqual(report.horizon_ratio, 100.0, places=9)
        self.assertEqual(report.n_index, 10000)

    def test_budget_arguments(self):
        """It should validate the budget indices and constant"""
        schedule = make_schedule("arithmetic", alpha=0.5, n_max=10)
        self.assertRaises(DomainError, discretization_budget, schedule, 0.5, 1.0, 0.1, 1)
        self.assertRaises(DomainError, discretization_budget, schedule, 0.5, 1.0, 0.1, 10)
        self.assertRaises(DomainError, discretization_budget, schedule, 0.5, 1.0, 0.1, 5, 1.0)

    def test_geometric_budget_flag(self):
        """It should carry the schedule flags into the budget"""
        schedule = make_schedule("geometric", alpha=0.5, n_max=20)
        report = discretization_budget(schedule, 0.5, 1.0, 0.1, 5)
        self.assertIn("ratio-not-vanishing", report.flags)


######################################################################
#  B O U N D S   R E P O R T
######################################################################
class TestBoundsReport(unittest.TestCase):
    """Test Cases for BoundsReport"""

    def test_brownian_report(self):
        """It should carry the exact Brownian exponent"""
        report = build_bounds_report(make_kernel(BM), 1.0)
        self.assertAlmostEqual(report.exact, 1.0, places=8)
        labels = [bound.label for bound in report.lower_bounds]
        self.assertIn("slnd-onestep", labels)
        self.assertIn("slnd-small-c", labels)
        self.assertEqual(report.flags, [])
        self.assertEqual(report.serialize()["c"], 1.0)

    def test_fekete_bounds_from_curve(self):
        """It should add one Fekete upper bound per horizon with usable counts"""
        curve = SurvivalCurve((1.0, 2.0, 3.0, 4.0), (30000, 10000, 5, 0), 100000)
        report = build_bounds_report(make_kernel(BM), 1.0, curve)
        labels = [bound.label for bound in report.upper_bounds]
        self.assertIn("fekete(u=1)", labels)
        self.assertIn("fekete(u=2)", labels)
        self.assertNotIn("fekete(u=3)", labels)
        self.assertNotIn("fekete(u=4)", labels)

    def test_exact_below_fekete(self):
        """It should keep the exact exponent below every Fekete value"""
        fekete = [LabeledBound("fekete(u=6)", 0.95, False)]
        self.assertRaises(InvariantViolation, BoundsReport(1.0, [], fekete, 1.0).check)
        report = BoundsReport(1.0, [], fekete, 0.9)
        self.assertIs(report.check(), report)
        curve = SurvivalCurve((1.0, 2.0, 3.0), (40000, 15000, 5000), 100000)
        self.assertRaises(InvariantViolation, build_bounds_report, make_kernel(BM), 1.0, curve)

    def test_white_space_spde(self):
        """It should flag slnd-unknown and give no lower bounds"""
        report = build_bounds_report(make_kernel(ProcessSpec.spde_trace(1, 2.0, 1.0, 0.0)), 1.0)
        self.assertIn("slnd-unknown", report.flags)
        self.assertEqual(report.lower_bounds, [])
        self.assertIsNone(report.exact)

    def test_crossing_bounds(self):
        """It should raise InvariantViolation when bounds cross"""
        report = BoundsReport(
            1.0, [LabeledBound("low", 2.0, False)], [LabeledBound("high", 1.0, False)]
        )
        self.assertRaises(InvariantViolation, report.check)
        asymptotic = BoundsReport(
            1.0, [LabeledBound("low", 2.0, True)], [LabeledBound("high", 1.0, False)]
        )
        self.assertIs(asymptotic.check(), asymptotic)

    def test_estimate_sandwich(self):
        """It should keep the estimate between the bounds up to two standard errors"""
        report = BoundsReport(
            1.0, [LabeledBound("low", 0.5, False)], [LabeledBound("high", 1.5, False)]
        )
        self.assertIs(report.check_estimate(0.45, 0.1), report)
        self.assertRaises(InvariantViolation, report.check_estimate, 0.2, 0.1)
        self.assertRaises(InvariantViolation, report.check_estimate, 1.8, 0.1)

    def test_comparison_needs_white_time(self):
        """It should refuse the comparison bound unless nu = 1"""
        with self.assertRaises(DomainError) as context:
            comparison_bound(ProcessSpec.spde_trace(1, 3.0, 1.0, 0.5), 1.0)
        self.assertEqual(context.exception.code, "nu-not-one")
        self.assertRaises(DomainError, comparison_bound, BM, 1.0)

    @unittest.skipUnless(RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 to run")
    def test_comparison_bound(self):
        """It should estimate lambda_B(c/K0) for fBm of the same index"""
        spec = ProcessSpec.spde_trace(1, 2.0, 1.0, 1.0)
        bound = comparison_bound(spec, 2.0, n_paths=20000, horizons=(1.0, 2.0, 3.0))
        self.assertLess(bound.alpha, 0.5)
        self.assertAlmostEqual(bound.argument * bound.k0, 2.0, places=12)
        self.assertGreater(bound.value, 0.0)
