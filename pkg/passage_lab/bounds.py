"""
Closed-form bounds on the boundary-crossing exponent

Kummer's function and the Breiman-Shepp root z(μ) give the exact
Brownian exponent λ_BM(c) = z⁻¹(c). The remaining functions return the
general lower and upper bounds on λ(c), the discretization budget of a
sampling schedule and the SPDE-to-fBm comparison bound.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize, special

from passage_lab import config, passage, quadrature
from passage_lab.errors import (
    DomainError,
    InvariantViolation,
    KummerError,
    OutOfRangeError,
    RootNotBracketedError,
    SlndUnknownError,
)
from passage_lab.kernels import (
    CovarianceKernel,
    ProcessKind,
    ProcessSpec,
    make_kernel,
    slnd_bound_constant,
)
from passage_lab.sampler import Schedule

logger = logging.getLogger("passage_lab")

KUMMER_Z_LIMIT = 50.0
KUMMER_MAX_TERMS = 5000
KUMMER_TAIL_RTOL = 1e-16
PRECISION_LOSS_RATIO = 1e6
ROOT_XTOL = 1e-13
ROOT_X_LIMIT = 10.0
MU_BRACKET = (1e-6, 1e3)
MONOTONE_SLACK = 1e-11
SANDWICH_SLACK = 2.0


######################################################################
#  K U M M E R   F U N C T I O N
######################################################################


class KummerEval(NamedTuple):
    """A Kummer series evaluation with its truncation diagnostics"""

    a: float
    b: float
    z: float
    value: float
    terms_used: int
    truncation_bound: float
    precision_loss: bool


def kummer_m(a: float, b: float, z: float) -> KummerEval:
    """
    M(a, b, z) = Σ (a)_n/(b)_n · zⁿ/n! by direct series

    Terms are built from running Pochhammer ratios and summed with
    math.fsum. The series stops exactly when a is a non-positive integer;
    otherwise it stops once the geometric tail bound falls below 1e-16 of
    the partial sum.
    """
    if b <= 0 and b == int(b):
        raise KummerError(f"b={b} is a pole of M", code="divergent-parameter")
    if abs(z) > KUMMER_Z_LIMIT:
        raise OutOfRangeError(f"|z|={abs(z):g} is beyond the series regime {KUMMER_Z_LIMIT:g}")
    terms = [1.0]
    term = 1.0
    partial = 1.0
    bound = 0.0
    index = 0
    while index < KUMMER_MAX_TERMS:
        term *= (a + index) / (b + index) * z / (index + 1)
        index += 1
        if term == 0.0:
            bound = 0.0
            break
        terms.append(term)
        partial += term
        if index + 1 > 2.0 * abs(z) and a + index > 0 and b + index > 0:
            ratio = abs(z) / (index + 1) * max(1.0, abs((a + index) / (b + index)))
            bound = abs(term) * ratio / (1.0 - ratio)
            if bound <= KUMMER_TAIL_RTOL * abs(partial):
                break
    else:
        logger.warning("Kummer series hit the %d-term cap at z=%g", KUMMER_MAX_TERMS, z)
    value = math.fsum(terms)
    largest = max(abs(t) for t in terms)
    precision_loss = value == 0.0 or largest / abs(value) > PRECISION_LOSS_RATIO
    return KummerEval(a, b, z, value, len(terms), bound, precision_loss)


######################################################################
#  B R E I M A N - S H E P P   R O O T
######################################################################


def _breiman_shepp(mu: float, x: float) -> float:
    return kummer_m(-mu, 0.5, 0.5 * x * x).value


def z_of_mu(mu: float) -> float:
    """Smallest x > 0 with M(−μ, ½, x²/2) = 0"""
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    step = 0.05 * min(1.0, 1.0 / math.sqrt(mu))
    limit = min(ROOT_X_LIMIT, 10.0 * max(1.0, math.sqrt(2.0 * abs(math.log(mu)))))
    low, low_value = 0.0, 1.0
    high = step
    while high <= limit:
        high_value = _breiman_shepp(mu, high)
        if high_value == 0.0:
            return high
        if (high_value < 0) != (low_value < 0):
            return optimize.bisect(
                lambda x: _breiman_shepp(mu, x), low, high, xtol=ROOT_XTOL, maxiter=200
            )
        low, low_value = high, high_value
        high += step
    raise RootNotBracketedError(f"no sign change of M(-{mu:g}, 1/2, x^2/2) on (0, {limit:g}]")


def z_inverse(c: float) -> float:
    """
    The μ with z(μ) = c: the exact Brownian exponent λ_BM(c)

    Root finding runs in log μ over [1e-6, 1e3]; every z visited must be
    ordered consistently with μ.
    """
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    lowest, highest = MU_BRACKET
    z_low, z_high = z_of_mu(lowest), z_of_mu(highest)
    if not z_high <= c <= z_low:
        raise OutOfRangeError(
            f"c={c:g} lies outside [{z_high:.6g}, {z_low:.6g}], the range of z on {MU_BRACKET}"
        )
    visited = {math.log(lowest): z_low, math.log(highest): z_high}

    def gap(log_mu: float) -> float:
        value = z_of_mu(math.exp(log_mu))
        visited[log_mu] = value
        return value - c

    log_mu = optimize.brentq(gap, math.log(lowest), math.log(highest), xtol=1e-14, rtol=1e-14)
    ordered = [visited[key] for key in sorted(visited)]
    # z is only resolved to the root tolerance
    if any(later > earlier + MONOTONE_SLACK for earlier, later in zip(ordered, ordered[1:])):
        raise KummerError("z(mu) is not decreasing along the root-finding path")
    return math.exp(log_mu)


######################################################################
#  B O U N D   F A M I L Y
######################################################################


def _neg_log_abs_normal(x: float) -> float:
    """−log P{|Z| ≤ x}, accurate when the probability is near 1"""
    if x <= 0:
        return math.inf
    return float(-np.log1p(-special.erfc(x / math.sqrt(2.0))))


def analytic_lower_bound(spec: ProcessSpec, c: float) -> float:
    """−log P{|Z| ≤ c/(√ℓ·(1 − e^(−1))^α)}"""
    floor = slnd_bound_constant(spec)
    if c < 0:
        raise DomainError(f"c must be nonnegative, got {c}")
    if floor == 0:
        return 0.0
    return _neg_log_abs_normal(c / math.sqrt(floor))


def refined_lower_bound_small_c(spec: ProcessSpec, c: float) -> float:
    """−c^(−1/α)·log P{|Z| ≤ c/(√ℓ·(1 − exp(−c^(1/α)))^α)}, for 0 < c ≤ 1"""
    if spec.slnd_constant is None:
        raise SlndUnknownError(f"{spec.label} carries no SLND constant")
    if not 0 < c <= 1:
        raise DomainError(f"the small-c bound needs 0 < c <= 1, got {c}")
    if spec.slnd_constant == 0:
        return 0.0
    spacing = c ** (1.0 / spec.alpha)
    level = c / (
        math.sqrt(spec.slnd_constant) * (-math.expm1(-spacing)) ** spec.alpha
    )
    return _neg_log_abs_normal(level) / spacing


def upper_bound_large_c(spec: ProcessSpec, c: float, var_x1: float = None) -> float:
    """Asymptotic envelope exp(−c²/(2·Var X(1)))"""
    if var_x1 is None:
        var_x1 = make_kernel(spec).variance_at_one()
    if not var_x1 > 0:
        raise DomainError(f"Var X(1) must be positive, got {var_x1}")
    return math.exp(-c * c / (2.0 * var_x1))


def lower_bound_large_c(spec: ProcessSpec, c: float) -> float:
    """Asymptotic envelope exp(−c²/(2ℓ))"""
    if spec.slnd_constant is None:
        raise SlndUnknownError(f"{spec.label} carries no SLND constant")
    if spec.slnd_constant == 0:
        return 0.0
    return math.exp(-c * c / (2.0 * spec.slnd_constant))


def small_c_lower_rate(spec: ProcessSpec, c: float) -> float:
    """c^(−1/α), the small-c growth rate of λ under SLND"""
    if spec.slnd_constant is None:
        raise SlndUnknownError(f"{spec.label} carries no SLND constant")
    return c ** (-1.0 / spec.alpha)


def increment_exponent(kernel: CovarianceKernel) -> float:
    """δ with E|X(t) − X(s)|² ≤ K|t − s|^(2δ)"""
    return kernel.alpha


def small_c_upper_rate(kernel: CovarianceKernel, c: float) -> float:
    """c^(−1/δ), the small-c growth rate allowed by the increment bound"""
    return c ** (-1.0 / increment_exponent(kernel))


######################################################################
#  D I S C R E T I Z A T I O N   B U D G E T
######################################################################


@dataclass(frozen=True)
class BudgetReport:
    """Right-hand side of the schedule-versus-continuous survival bound"""

    continuous_level: float
    log_horizon: float
    horizon_ratio: float
    correction: float
    m_index: int
    n_index: int
    flags: tuple = field(default_factory=tuple)

    def serialize(self) -> dict:
        """Serializes a BudgetReport into a dictionary"""
        return {
            "continuous_level": self.continuous_level,
            "log_horizon": self.log_horizon,
            "horizon_ratio": self.horizon_ratio,
            "correction": self.correction,
            "m_index": self.m_index,
            "n_index": self.n_index,
            "flags": list(self.flags),
        }


def discretization_budget(
    schedule: Schedule,
    alpha: float,
    c: float,
    epsilon: float,
    m_index: int,
    K: float = config.DEFAULT_BUDGET_K,
    n_index: int = None,
) -> BudgetReport:
    """
    P{T̂_c > t_n} ≤ P{T_(c+ε) > t_n/t_m} + K·Σ_(j=m..n) exp(−(ε²/K)·(t_j/(t_(j+1)−t_j))^(2α))

    Returns the continuous term's level and horizon with the correction
    sum. K is existential in theory, so the report compares schedules
    rather than certifying a bound.
    """
    n_index = schedule.n_max if n_index is None else int(n_index)
    if not 1 < m_index < n_index:
        raise DomainError(f"need 1 < m_index < n, got m={m_index}, n={n_index}")
    if not K > 1:
        raise DomainError(f"K must exceed 1, got {K}")
    if not (epsilon > 0 and c > 0 and alpha > 0):
        raise DomainError("c, epsilon and alpha must be positive")
    flags = list(schedule.flags)
    indices = np.arange(m_index, n_index + 2)
    log_times = schedule.log_times_at(indices)
    with np.errstate(over="ignore"):
        ratios = 1.0 / np.expm1(np.diff(log_times))
    if not np.all(np.isfinite(ratios)):
        raise DomainError("schedule spacing underflows; ratio overflow")
    if "ratio-not-vanishing" in flags:
        logger.warning("Schedule %s: the correction does not vanish", schedule.family.value)
    terms = np.exp(-(epsilon**2 / K) * ratios ** (2.0 * alpha))
    correction = K * math.fsum(terms)
    log_horizon = float(log_times[n_index - m_index] - log_times[0])
    return BudgetReport(
        c + epsilon,
        log_horizon,
        math.exp(log_horizon) if log_horizon < 709.0 else math.inf,
        correction,
        int(m_index),
        n_index,
        tuple(flags),
    )


######################################################################
#  C O M P A R I S O N   B O U N D
######################################################################


@dataclass(frozen=True)
class ComparisonBound:
    """λ_X(c) ≤ λ_B(c/K₀) with B an fBm of the same index"""

    c: float
    k0: float
    k0_error: float
    argument: float
    alpha: float
    value: float
    std_err: float
    label: str = "upper-bound-on-lambda_X"

    def serialize(self) -> dict:
        """Serializes a ComparisonBound into a dictionary"""
        return {
            "c": self.c,
            "k0": self.k0,
            "k0_error": self.k0_error,
            "argument": self.argument,
            "alpha": self.alpha,
            "value": self.value,
            "std_err": self.std_err,
            "label": self.label,
        }


def comparison_bound(
    spec: ProcessSpec,
    c: float,
    n_paths: int = 100_000,
    step: float = config.DEFAULT_STEP,
    horizons: Sequence[float] = (2.0, 3.0, 4.0, 5.0),
    seed: int = config.DEFAULT_SEED,
    workers: int = None,
    cfg: quadrature.QuadratureConfig = None,
) -> ComparisonBound:
    """
    λ_B(c/K₀) for a white-in-time SPDE trace

    With ν = 1 the index α = ½ − β/(2γ) stays below ½, so λ_B has no
    closed form and is a Monte Carlo estimate for fBm of index α.
    """
    if spec.kind is not ProcessKind.SPDE_TRACE:
        raise DomainError("the comparison bound applies to SPDE traces")
    if spec.nu != 1.0:
        raise DomainError(f"the comparison bound needs nu = 1, got {spec.nu}", code="nu-not-one")
    k0 = quadrature.k0_constant(spec.d, spec.gamma, spec.beta, cfg)
    argument = c / k0.value
    curve = passage.survival_estimate(
        make_kernel(ProcessSpec.fbm(spec.alpha)), argument, horizons, n_paths, step, seed, workers
    )
    estimate = passage.exponent_fit(curve)
    logger.info(
        "Comparison bound at c=%g: K0=%.10g, lambda_B=%.6g", c, k0.value, estimate.lambda_hat
    )
    return ComparisonBound(
        c, k0.value, k0.error, argument, spec.alpha, estimate.lambda_hat, estimate.std_err
    )


######################################################################
#  B O U N D S   R E P O R T
######################################################################


class LabeledBound(NamedTuple):
    """One member of the bound family"""

    label: str
    value: float
    asymptotic: bool

    def serialize(self) -> dict:
        """Serializes a LabeledBound into a dictionary"""
        return {"label": self.label, "value": self.value, "asymptotic": self.asymptotic}


@dataclass(frozen=True)
class BoundsReport:
    """Every bound on λ(c) the theory supplies at one level"""

    c: float
    lower_bounds: List[LabeledBound]
    upper_bounds: List[LabeledBound]
    exact: Optional[float] = None
    flags: List[str] = field(default_factory=list)

    def serialize(self) -> dict:
        """Serializes a BoundsReport into a dictionary"""
        return {
            "c": self.c,
            "lower_bounds": [bound.serialize() for bound in self.lower_bounds],
            "upper_bounds": [bound.serialize() for bound in self.upper_bounds],
            "exact": self.exact,
            "flags": list(self.flags),
        }

    def check(self) -> "BoundsReport":
        """
        Raises InvariantViolation when non-asymptotic bounds cross

        The exact exponent, when known, must sit above every lower bound
        and below every upper bound, Fekete values included.
        """
        lowers = [bound for bound in self.lower_bounds if not bound.asymptotic]
        uppers = [bound for bound in self.upper_bounds if not bound.asymptotic]
        if self.exact is not None:
            exact = LabeledBound("exact", self.exact, False)
            lowers, uppers = lowers + [exact], uppers + [exact]
        for lower in lowers:
            for upper in uppers:
                if lower is not upper and lower.value > upper.value:
                    raise InvariantViolation(
                        f"lower bound {lower.label}={lower.value:.6g} exceeds "
                        f"{upper.label}={upper.value:.6g} at c={self.c:g}"
                    )
        return self

    def check_estimate(self, lambda_hat: float, std_err: float, slack: float = SANDWICH_SLACK):
        """Raises InvariantViolation when λ̂ leaves the non-asymptotic sandwich"""
        lowers = [bound for bound in self.lower_bounds if not bound.asymptotic]
        uppers = [bound for bound in self.upper_bounds if not bound.asymptotic]
        margin = slack * std_err
        for lower in lowers:
            if lambda_hat + margin < lower.value:
                raise InvariantViolation(
                    f"lambda_hat={lambda_hat:.6g} lies below {lower.label}={lower.value:.6g}"
                )
        for upper in uppers:
            if lambda_hat - margin > upper.value:
                raise InvariantViolation(
                    f"lambda_hat={lambda_hat:.6g} lies above {upper.label}={upper.value:.6g}"
                )
        return self


def build_bounds_report(
    kernel: CovarianceKernel, c: float, curve: passage.SurvivalCurve = None
) -> BoundsReport:
    """Assembles and checks the bound family; Fekete values come from a curve"""
    if not c > 0:
        raise DomainError(f"c must be positive, got {c}")
    spec = kernel.spec
    lowers, uppers, flags = [], [], []
    if spec.slnd_constant is None:
        flags.append("slnd-unknown")
    else:
        lowers.append(LabeledBound("slnd-onestep", analytic_lower_bound(spec, c), False))
        if c <= 1:
            lowers.append(
                LabeledBound("slnd-small-c", refined_lower_bound_small_c(spec, c), False)
            )
        lowers.append(LabeledBound("small-c-rate", small_c_lower_rate(spec, c), True))
        lowers.append(LabeledBound("large-c", lower_bound_large_c(spec, c), True))
    if curve is not None:
        for u, value in passage.fekete_upper_bounds(curve, wilson_upper=True):
            uppers.append(LabeledBound(f"fekete(u={u:g})", value, False))
    uppers.append(
        LabeledBound("large-c", upper_bound_large_c(spec, c, kernel.variance_at_one()), True)
    )
    uppers.append(LabeledBound("small-c-rate", small_c_upper_rate(kernel, c), True))
    exact = None
    if spec.kind is ProcessKind.BROWNIAN_MOTION:
        try:
            exact = z_inverse(c)
        except OutOfRangeError:
            flags.append("exact-out-of-range")
    return BoundsReport(c, lowers, uppers, exact, flags).check()
