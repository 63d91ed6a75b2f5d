"""
Spectral quadrature for the SPDE-trace process

All quantities here are integrals of nonnegative isotropic integrands in
frequency space, reduced to one-dimensional radial integrals. Each public
operation returns a ``QuadratureResult`` (value, error estimate). The
adaptive scheme wraps QUADPACK through scipy and raises ``QuadratureError``
when the requested tolerance is not met. The fixed "gauss" scheme applies
Gauss-Jacobi and composite Gauss-Legendre rules to the same reductions and
serves as an independent cross-check.
"""
import logging
import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy.integrate import IntegrationWarning, quad

from passage_lab import config
from passage_lab.errors import DataValidationError, DomainError, QuadratureError

logger = logging.getLogger("passage_lab")

SCHEMES = ("adaptive", "gauss")
GAUSS_ORDER = 64
GAUSSIAN_CUTOFF = 12.0
MAX_TAIL_DOUBLINGS = 60


class TailPolicy(Enum):
    """How the part of a radial integral beyond the cutoff is handled"""

    ANALYTIC = "analytic-tail"
    HARD_CUTOFF = "hard-cutoff"


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and policies shared by every quadrature operation"""

    rel_tol: float = config.DEFAULT_REL_TOL
    abs_tol: float = config.DEFAULT_ABS_TOL
    max_subdivisions: int = config.DEFAULT_MAX_SUBDIVISIONS
    tail_policy: TailPolicy = TailPolicy.ANALYTIC
    cutoff: Optional[float] = None
    scheme: str = "adaptive"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("rel_tol and abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")
        if self.tail_policy is TailPolicy.HARD_CUTOFF and not (self.cutoff or 0) > 0:
            raise DomainError("hard-cutoff policy needs a positive cutoff radius")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown quadrature scheme '{self.scheme}'")

    def tightened(self, factor: float = 100.0) -> "QuadratureConfig":
        """Tolerances for integrals nested inside another integral"""
        return replace(
            self,
            rel_tol=max(self.rel_tol / factor, 1e-13),
            abs_tol=max(self.abs_tol / factor, 1e-300),
        )

    def with_scheme(self, scheme: str) -> "QuadratureConfig":
        """Same tolerances under another scheme"""
        return replace(self, scheme=scheme)

    def serialize(self) -> dict:
        """Serializes the configuration into a dictionary"""
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_subdivisions": self.max_subdivisions,
            "tail_policy": self.tail_policy.value,
            "cutoff": self.cutoff,
            "scheme": self.scheme,
        }

    @classmethod
    def deserialize(cls, data: dict) -> "QuadratureConfig":
        """Builds a QuadratureConfig from a dictionary, defaults for missing keys"""
        try:
            return cls(
                rel_tol=float(data.get("rel_tol", config.DEFAULT_REL_TOL)),
                abs_tol=float(data.get("abs_tol", config.DEFAULT_ABS_TOL)),
                max_subdivisions=int(data.get("max_subdivisions", config.DEFAULT_MAX_SUBDIVISIONS)),
                tail_policy=TailPolicy(data.get("tail_policy", TailPolicy.ANALYTIC.value)),
                cutoff=None if data.get("cutoff") is None else float(data["cutoff"]),
                scheme=str(data.get("scheme", "adaptive")),
            )
        except (TypeError, ValueError) as error:
            raise DataValidationError("Invalid quadrature config: " + str(error)) from error


class QuadratureResult(NamedTuple):
    """A quadrature value with its error estimate"""

    value: float
    error: float

    def scaled(self, factor: float) -> "QuadratureResult":
        """Multiplies value and error by a constant"""
        return QuadratureResult(factor * self.value, abs(factor) * self.error)


def _combine(*results: QuadratureResult) -> QuadratureResult:
    return QuadratureResult(
        sum(result.value for result in results), sum(result.error for result in results)
    )


######################################################################
#  O N E - D I M E N S I O N A L   R U L E S
######################################################################


def integrate(
    func: Callable, lower: float, upper: float, cfg: QuadratureConfig, power: float = None
) -> QuadratureResult:
    """
    Integrates func(x)·(x − lower)^power over [lower, upper]

    ``power`` carries an integrable algebraic singularity at the lower end
    (power > −1). ``func`` must accept numpy arrays when the gauss scheme
    is used.
    """
    if upper <= lower:
        return QuadratureResult(0.0, 0.0)
    if power is not None and power <= -1.0:
        raise DomainError(f"endpoint power {power} is not integrable")
    if cfg.scheme == "gauss":
        return _fixed_gauss(func, lower, upper, power)
    return _adaptive(func, lower, upper, cfg, power)


def _adaptive(func, lower, upper, cfg, power):
    options = {"epsabs": cfg.abs_tol, "epsrel": cfg.rel_tol, "limit": cfg.max_subdivisions}
    if power:
        options.update(weight="alg", wvar=(power, 0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, error = quad(func, lower, upper, **options)
        except IntegrationWarning as warning:
            raise QuadratureError(
                f"quadrature on [{lower:.6g}, {upper:.6g}] did not converge: {warning}"
            ) from warning
    if not math.isfinite(value):
        raise QuadratureError(f"quadrature on [{lower:.6g}, {upper:.6g}] is not finite")
    return QuadratureResult(float(value), float(error))


@lru_cache(maxsize=None)
def _jacobi_rule(order: int, power: float) -> Tuple[np.ndarray, np.ndarray]:
    return special.roots_jacobi(order, 0.0, power)


@lru_cache(maxsize=None)
def _legendre_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _panel_edges(lower: float, upper: float) -> np.ndarray:
    if lower > 0 and upper / lower > 4.0:
        count = int(math.ceil(math.log(upper / lower) / math.log(1.5)))
        return np.geomspace(lower, upper, count + 1)
    return np.linspace(lower, upper, 9)


def _fixed_rule(func, lower, upper, power, order):
    if power:
        nodes, weights = _jacobi_rule(order, float(power))
        half = 0.5 * (upper - lower)
        points = lower + half * (1.0 + nodes)
        return float(half ** (power + 1.0) * np.sum(weights * func(points)))
    nodes, weights = _legendre_rule(order)
    edges = _panel_edges(lower, upper)
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        half = 0.5 * (right - left)
        middle = 0.5 * (right + left)
        total += half * float(np.sum(weights * func(middle + half * nodes)))
    return total


def _fixed_gauss(func, lower, upper, power):
    fine = _fixed_rule(func, lower, upper, power, GAUSS_ORDER)
    coarse = _fixed_rule(func, lower, upper, power, GAUSS_ORDER // 2)
    return QuadratureResult(fine, abs(fine - coarse))


######################################################################
#  R A D I A L   R E D U C T I O N
######################################################################


def surface_area(d: int) -> float:
    """Area of the unit sphere in R^d"""
    _check_dimension(d)
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class RadialReduction:
    """
    An isotropic integral over R^d reduced to a radial one

    The d-dimensional integrand is ``integrand(|ξ|^substitution)·|ξ|^power``
    where ``integrand`` is smooth on [0, ∞). After the change of variables
    x = r^substitution the head [0, scale] carries the algebraic weight
    x^((power + d)/substitution − 1) exactly and the body [scale, cutoff]
    is integrated directly. The caller supplies the tail beyond the
    cutoff.
    """

    d: int
    integrand: Callable
    power: float = 0.0
    substitution: float = 1.0
    scale: float = 1.0

    @property
    def surface_area(self) -> float:
        """Area of the unit sphere in R^d"""
        return surface_area(self.d)

    @property
    def exponent(self) -> float:
        """Algebraic exponent in the substituted variable"""
        return (self.power + self.d) / self.substitution - 1.0

    def integrate(
        self, cfg: QuadratureConfig, cutoff: float, tail: float = 0.0, tail_bound: float = 0.0
    ) -> QuadratureResult:
        """surface_area·∫₀^∞ integrand·r^(d−1) dr, with the tail supplied by the caller"""
        exponent = self.exponent
        head = integrate(self.integrand, 0.0, self.scale, cfg, power=exponent)
        body = integrate(
            lambda x: self.integrand(x) * np.power(x, exponent),
            self.scale,
            max(cutoff, self.scale),
            cfg,
        )
        radial = _combine(head, body, QuadratureResult(tail, tail_bound))
        return radial.scaled(self.surface_area / self.substitution)


def _tail_radius(bound: Callable, start: float, target: float) -> float:
    radius = start
    for _ in range(MAX_TAIL_DOUBLINGS):
        if bound(radius) < target:
            return radius
        radius *= 2.0
    raise QuadratureError("could not find a radius where the tail is negligible")


def _cutoff(cfg: QuadratureConfig, natural: float, substitution: float = 1.0) -> float:
    if cfg.tail_policy is TailPolicy.HARD_CUTOFF:
        return cfg.cutoff**substitution
    return natural


def _ratio_expm1(x, rate):
    """(1 − e^(−rate·x))/x, continuous at x = 0"""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0.0, x, 1.0)
    return np.where(x > 0.0, -np.expm1(-rate * safe) / safe, rate)


######################################################################
#  C O N S T A N T S
######################################################################


def _check_dimension(d):
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d}")


def riesz_constant(d: int, beta: float) -> float:
    """
    Fourier multiplier of the Riesz kernel |x|^(−β) in R^d

    With ĝ(ξ) = ∫ g(x)e^(−ix·ξ)dx the transform of |x|^(−β) is
    c(d,β)·|ξ|^(β−d). planch_check validates this convention.
    """
    _check_dimension(d)
    if not 0.0 < beta < d:
        raise DomainError(f"riesz constant needs 0 < beta < d, got beta={beta}, d={d}")
    return (
        2.0 ** (d - beta)
        * math.pi ** (d / 2.0)
        * math.gamma((d - beta) / 2.0)
        / math.gamma(beta / 2.0)
    )


def spatial_constant(d: int, beta: float) -> float:
    """Riesz constant, or 1 for the delta kernel when beta = d = 1"""
    if beta == d == 1:
        return 1.0
    return riesz_constant(d, beta)


def spde_alpha(d: int, gamma: float, beta: float, nu: float) -> float:
    """Self-similarity index of the SPDE trace; rejects ill-posed parameters"""
    _check_dimension(d)
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    if not 0.0 < beta <= d:
        raise DomainError(f"beta must lie in (0, d], got {beta}")
    if beta == d and d != 1:
        raise DomainError("beta = d is only allowed when d = 1")
    if not 0.0 <= nu <= 1.0:
        raise DomainError(f"nu must lie in [0, 1], got {nu}")
    if not gamma > beta / (2.0 - nu):
        raise DomainError(
            f"ill-posed: gamma={gamma} must exceed beta/(2-nu)={beta / (2.0 - nu):.6g}",
            code="ill-posed",
        )
    return 1.0 - (nu + beta / gamma) / 2.0


def is_well_posed(d: int, gamma: float, beta: float, nu: float) -> bool:
    """True when the SPDE has a random-field solution"""
    try:
        spde_alpha(d, gamma, beta, nu)
    except DomainError:
        return False
    return True


def spde_time_constant(d: int, gamma: float, beta: float) -> float:
    """
    Constant in front of the time integrals of the covariance

    ∫ e^(−u|ξ|^γ)|ξ|^(β−d)dξ = surface_area·Γ(β/γ)/(γ·u^(β/γ)), times the
    spatial constant and the (2π)^(−d) inversion factor.
    """
    return (
        spatial_constant(d, beta)
        * (2.0 * math.pi) ** (-d)
        * surface_area(d)
        * math.gamma(beta / gamma)
        / gamma
    )


######################################################################
#  P A R S E V A L   C H E C K
######################################################################


@dataclass(frozen=True)
class GaussianBump:
    """Centered isotropic Gaussian density N(0, σ²I)"""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")

    def fourier(self, xi):
        """Fourier transform e^(−σ²|ξ|²/2)"""
        return np.exp(-0.5 * self.sigma**2 * np.square(xi))


class ParsevalCheck(NamedTuple):
    """Both sides of the Riesz-Parseval identity"""

    lhs: QuadratureResult
    rhs: QuadratureResult
    discrepancy: float


def _gaussian_moment_tail(exponent: float, variance: float, radius: float) -> float:
    """∫_R^∞ r^exponent·e^(−r²/(2v)) dr"""
    shape = (exponent + 1.0) / 2.0
    return (
        0.5
        * (2.0 * variance) ** shape
        * special.gammaincc(shape, radius**2 / (2.0 * variance))
        * special.gamma(shape)
    )


def planch_check(
    psi: GaussianBump, phi: GaussianBump, d: int, beta: float, cfg: QuadratureConfig = None
) -> ParsevalCheck:
    """
    Checks ∫∫ψ(x)φ(y)|x−y|^(−β) = c(d,β)(2π)^(−d)∫ψ̂(ξ)φ̂(ξ)|ξ|^(β−d)

    The left side is E|X−Y|^(−β) with X−Y ~ N(0,(σψ²+σφ²)I), a single
    radial integral.
    """
    cfg = cfg or QuadratureConfig()
    constant = riesz_constant(d, beta)
    variance = psi.sigma**2 + phi.sigma**2
    width = math.sqrt(variance)
    density = (2.0 * math.pi * variance) ** (-d / 2.0)

    lhs_reduction = RadialReduction(
        d, lambda r: density * np.exp(-np.square(r) / (2.0 * variance)), power=-beta, scale=width
    )
    lhs_cutoff = _cutoff(cfg, GAUSSIAN_CUTOFF * width)
    lhs_tail = density * _gaussian_moment_tail(d - 1.0 - beta, variance, lhs_cutoff)
    lhs = lhs_reduction.integrate(cfg, lhs_cutoff, *_tail_terms(cfg, lhs_tail))

    prefactor = constant * (2.0 * math.pi) ** (-d)
    rhs_reduction = RadialReduction(
        d,
        lambda r: prefactor * psi.fourier(r) * phi.fourier(r),
        power=beta - d,
        scale=1.0 / width,
    )
    rhs_cutoff = _cutoff(cfg, GAUSSIAN_CUTOFF / width)
    rhs_tail = prefactor * _gaussian_moment_tail(beta - 1.0, 1.0 / variance, rhs_cutoff)
    rhs = rhs_reduction.integrate(cfg, rhs_cutoff, *_tail_terms(cfg, rhs_tail))

    discrepancy = abs(lhs.value - rhs.value) / abs(lhs.value)
    logger.debug("planch d=%d beta=%g: lhs=%.15g rhs=%.15g", d, beta, lhs.value, rhs.value)
    return ParsevalCheck(lhs, rhs, discrepancy)


def _tail_terms(cfg: QuadratureConfig, analytic: float) -> Tuple[float, float]:
    """(value added, error reported) for a tail under the configured policy"""
    if cfg.tail_policy is TailPolicy.ANALYTIC:
        return analytic, 0.0
    return 0.0, abs(analytic)


######################################################################
#  S P D E   T R A C E   C O V A R I A N C E
######################################################################


def spde_trace_cov(
    d: int,
    gamma: float,
    beta: float,
    nu: float,
    t: float,
    h: float,
    cfg: QuadratureConfig = None,
) -> QuadratureResult:
    """
    Cov[X(t+h), X(t)] for the SPDE trace X(t) = U(t, 0)

    For nu < 1 the time integral is
    ∫₀^(t+h)ds ∫₀^t dr |s−r−h|^(−ν)(s+r)^(−β/γ), split on the diagonal
    s = r + h. For nu = 1 (white in time) it is ∫₀^t (2s+h)^(−β/γ) ds.
    """
    spde_alpha(d, gamma, beta, nu)
    if t < 0 or h < 0:
        raise DomainError(f"need t >= 0 and h >= 0, got t={t}, h={h}")
    if t == 0:
        return QuadratureResult(0.0, 0.0)
    cfg = cfg or QuadratureConfig()
    exponent = beta / gamma
    if nu == 1.0:
        time_integral = _white_time_integral(exponent, t, h, cfg)
    elif h == 0.0:
        time_integral = _coloured_variance_integral(nu, exponent, t, cfg)
    else:
        time_integral = _coloured_time_integral(nu, exponent, t, h, cfg)
    return time_integral.scaled(spde_time_constant(d, gamma, beta))


def _white_time_integral(exponent, t, h, cfg):
    if h == 0.0:
        return integrate(
            lambda s: np.full_like(np.asarray(s, dtype=float), 2.0**-exponent),
            0.0,
            t,
            cfg,
            power=-exponent,
        )
    return integrate(lambda s: np.power(2.0 * s + h, -exponent), 0.0, t, cfg)


def _coloured_variance_integral(nu, exponent, t, cfg):
    # ∫∫_[0,t]² |s−r|^(−ν)(s+r)^(−b) = 2t^(2−ν−b)/(2−ν−b)·∫₀¹ w^(−ν)(2−w)^(−b)dw
    shape = integrate(lambda w: np.power(2.0 - w, -exponent), 0.0, 1.0, cfg, power=-nu)
    return shape.scaled(2.0 * t ** (2.0 - nu - exponent) / (2.0 - nu - exponent))


def _coloured_time_integral(nu, exponent, t, h, cfg):
    inner = cfg.tightened()

    def profile(r):
        # u = s − r − h > 0: smooth factor, algebraic weight at u = 0
        offset = 2.0 * r + h
        ahead = integrate(
            lambda u: np.power(u + offset, -exponent), 0.0, t - r, inner, power=-nu
        ).value
        # u < 0: Euler integral of the Gauss hypergeometric function
        reach = r + h
        behind = (
            reach ** (1.0 - nu)
            * (reach + r) ** (-exponent)
            * special.hyp2f1(exponent, 1.0 - nu, 2.0 - nu, reach / (reach + r))
            / (1.0 - nu)
        )
        return ahead + behind

    return integrate(np.vectorize(profile, otypes=[float]), 0.0, t, cfg)


def spde_variance(d, gamma, beta, nu, t, cfg=None) -> QuadratureResult:
    """Var[X(t)]"""
    return spde_trace_cov(d, gamma, beta, nu, t, 0.0, cfg)


def increment_variance(d, gamma, beta, nu, t, h, cfg=None) -> QuadratureResult:
    """E|X(t+h) − X(t)|² from the covariance"""
    later = spde_variance(d, gamma, beta, nu, t + h, cfg)
    earlier = spde_variance(d, gamma, beta, nu, t, cfg)
    cross = spde_trace_cov(d, gamma, beta, nu, t, h, cfg)
    return QuadratureResult(
        later.value + earlier.value - 2.0 * cross.value,
        later.error + earlier.error + 2.0 * cross.error,
    )


class IncrementBound(NamedTuple):
    """Estimated constant K of E|X(t+h)−X(t)|² ≤ K·h^(2α)"""

    constant: float
    attained_at: Tuple[float, float]
    alpha: float


def increment_bound_constant(
    d, gamma, beta, nu, grid: Sequence[Tuple[float, float]], cfg=None
) -> IncrementBound:
    """Largest ratio E|X(t+h)−X(t)|²/h^(2α) over a (t, h) grid"""
    alpha = spde_alpha(d, gamma, beta, nu)
    best, where = 0.0, None
    for t, h in grid:
        if h <= 0:
            raise DomainError("increment grid needs h > 0")
        ratio = increment_variance(d, gamma, beta, nu, t, h, cfg).value / h ** (2.0 * alpha)
        if where is None or ratio > best:
            best, where = ratio, (t, h)
    if where is None:
        raise DomainError("increment grid is empty")
    return IncrementBound(best, where, alpha)


######################################################################
#  K 0   A N D   T H E   S   P R O C E S S
######################################################################


def _check_smooth_part(d, gamma, beta):
    _check_dimension(d)
    if beta <= 0:
        raise DomainError("integral diverges at 0 for beta <= 0", code="k0-divergent")
    if beta >= gamma:
        raise DomainError("integral diverges at infinity for beta >= gamma", code="k0-divergent")
    if beta > d or (beta == d and d != 1):
        raise DomainError(f"beta must lie in (0, d) or equal d = 1, got {beta}")


def _smooth_prefactor(d, beta):
    return spatial_constant(d, beta) / (2.0 * (2.0 * math.pi) ** d)


def k0_constant(d: int, gamma: float, beta: float, cfg: QuadratureConfig = None) -> QuadratureResult:
    """
    K₀ making (X + S)/K₀ a fractional Brownian motion (white-in-time case)

    K₀² = c/(2(2π)^d)·∫[(1−e^(−|ξ|^γ))² + (1−e^(−2|ξ|^γ))]|ξ|^(β−γ−d)dξ.
    Beyond the cutoff the bracket is replaced by its limit 2 and the
    power tail is integrated in closed form.
    """
    _check_smooth_part(d, gamma, beta)
    cfg = cfg or QuadratureConfig()
    exponent = beta / gamma

    def bracket_over_x(x):
        first = _ratio_expm1(x, 1.0)
        return np.asarray(x, dtype=float) * np.square(first) + _ratio_expm1(x, 2.0)

    reduction = RadialReduction(
        d, bracket_over_x, power=beta - d, substitution=gamma, scale=1.0
    )
    cutoff = _cutoff(cfg, max(2.0, math.log(20.0 / cfg.abs_tol)), substitution=gamma)
    tail = 2.0 * cutoff ** (exponent - 1.0) / (1.0 - exponent)
    neglected = 2.0 * math.exp(-cutoff) * cutoff ** (exponent - 2.0)
    value, bound = _tail_terms(cfg, tail)
    squared = reduction.integrate(cfg, cutoff, value, bound + neglected).scaled(
        _smooth_prefactor(d, beta)
    )
    k0 = math.sqrt(squared.value)
    return QuadratureResult(k0, squared.error / (2.0 * k0))


def s_process_var(
    d: int, gamma: float, beta: float, t: float, h: float, cfg: QuadratureConfig = None
) -> QuadratureResult:
    """
    E|S(t+h) − S(t)|² for the smooth spectral process S

    c/(2(2π)^d)·∫e^(−2t|ξ|^γ)(1−e^(−h|ξ|^γ))²|ξ|^(β−γ−d)dξ; at t = 0 this
    is Var S(h).
    """
    _check_smooth_part(d, gamma, beta)
    if t < 0 or h < 0:
        raise DomainError(f"need t >= 0 and h >= 0, got t={t}, h={h}")
    if h == 0:
        return QuadratureResult(0.0, 0.0)
    cfg = cfg or QuadratureConfig()
    exponent = beta / gamma
    target = cfg.abs_tol / 10.0

    def smooth(x):
        return np.exp(-2.0 * t * np.asarray(x, dtype=float)) * np.square(_ratio_expm1(x, h))

    scale = 1.0 / (h + 2.0 * t)
    reduction = RadialReduction(
        d, smooth, power=beta - d + gamma, substitution=gamma, scale=scale
    )
    if t > 0:
        cutoff = _tail_radius(
            lambda x: math.exp(-2.0 * t * x) * x ** (exponent - 2.0) / (2.0 * t),
            2.0 * scale,
            target,
        )
        cutoff = _cutoff(cfg, cutoff, substitution=gamma)
        tail, bound = 0.0, math.exp(-2.0 * t * cutoff) * cutoff ** (exponent - 2.0) / (2.0 * t)
    else:
        cutoff = _tail_radius(
            lambda x: 2.0 * math.exp(-h * x) * x ** (exponent - 2.0) / h, 2.0 * scale, target
        )
        cutoff = _cutoff(cfg, cutoff, substitution=gamma)
        tail, bound = _tail_terms(cfg, cutoff ** (exponent - 1.0) / (1.0 - exponent))
        bound += 2.0 * math.exp(-h * cutoff) * cutoff ** (exponent - 2.0) / h
    return reduction.integrate(cfg, cutoff, tail, bound).scaled(_smooth_prefactor(d, beta))


def decomposition_residual(d, gamma, beta, t, h, cfg=None) -> float:
    """
    Relative residual of E|X(t+h)−X(t)|² + E|S(t+h)−S(t)|² = K₀²h^(2α)

    White-in-time case only.
    """
    alpha = spde_alpha(d, gamma, beta, 1.0)
    k0 = k0_constant(d, gamma, beta, cfg).value
    target = k0**2 * h ** (2.0 * alpha)
    total = (
        increment_variance(d, gamma, beta, 1.0, t, h, cfg).value
        + s_process_var(d, gamma, beta, t, h, cfg).value
    )
    return abs(total - target) / target
