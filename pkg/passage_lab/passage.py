"""
Passage times, survival curves and boundary-crossing exponents

Survival is simulated in the Lamperti frame: X stays below c·t^β up to
t = e^u exactly when Y stays below c·e^((β−α)u) up to u. In the
critical regime β = α the boundary is the constant c and
f(u) = P{|Y(r)| ≤ c for r ≤ u} decays like e^(−λ(c)u).

Monte Carlo work is split into fixed chunks of path indices. Each chunk
only reports first-exit grid indices, and survivor counts are sums over
chunks, so results never depend on the worker count.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from passage_lab import config
from passage_lab.errors import (
    DataValidationError,
    DomainError,
    FitError,
    RegimeMismatchError,
    SlndUnknownError,
)
from passage_lab.kernels import CovarianceKernel, LampertiKernel
from passage_lab.sampler import Frame, PathSample, StationarySampler

logger = logging.getLogger("passage_lab")

REGIME_RTOL = 1e-12
GRID_EPS = 1e-9


######################################################################
#  R E G I M E S
######################################################################


class Regime(Enum):
    """Boundary exponent relative to the self-similarity index"""

    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def classify_regime(alpha: float, beta: float) -> Regime:
    """Critical when beta equals alpha up to a 1e-12 relative tolerance"""
    if abs(beta - alpha) <= REGIME_RTOL * abs(alpha):
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if beta < alpha else Regime.SUPERCRITICAL


@dataclass(frozen=True)
class PassageConfig:
    """Boundary c·t^β for a process of index alpha"""

    c: float
    beta: float
    alpha: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"boundary level c must be positive, got {self.c}")
        if not self.beta > 0:
            raise DomainError(f"boundary exponent beta must be positive, got {self.beta}")

    @property
    def regime(self) -> Regime:
        """Derived regime"""
        return classify_regime(self.alpha, self.beta)

    def require(self, regime: Regime) -> "PassageConfig":
        """Raises RegimeMismatchError unless the regime matches"""
        if self.regime is not regime:
            raise RegimeMismatchError(
                f"beta={self.beta:g} with alpha={self.alpha:g} is {self.regime.value}, "
                f"expected {regime.value}"
            )
        return self


######################################################################
#  P A T H W I S E   P A S S A G E
######################################################################


class PassageTime(NamedTuple):
    """First grid time above the boundary, or the horizon when survived"""

    time: float
    survived: bool


def first_passage(path: PathSample, c: float, beta: float) -> PassageTime:
    """Smallest grid time t ≥ 1 with |X(t)| > c·t^β"""
    if path.frame is not Frame.X_FRAME:
        raise DataValidationError("first_passage needs an X-frame path")
    late = path.grid >= 1.0
    if not np.any(late):
        raise DomainError("path has no grid point at or after t = 1")
    times = path.grid[late]
    crossed = np.abs(path.values[late]) > c * times**beta
    if np.any(crossed):
        return PassageTime(float(times[np.argmax(crossed)]), False)
    return PassageTime(float(times[-1]), True)


@dataclass(frozen=True)
class BridgeCorrection:
    """
    Crossing probability of an Ornstein-Uhlenbeck path between grid points

    For ρ(h) = σ²·e^(−θh) the path conditioned on its two endpoints leaves
    a level held along the chord with probability
    exp(−2(c₀ − y₀)(c₁ − y₁)/(2σ²·sinh θΔ)); the lower side is symmetric.
    """

    scale: float

    @classmethod
    def for_sampler(cls, sampler: StationarySampler) -> Optional["BridgeCorrection"]:
        """None unless the sampled kernel is exponentially correlated"""
        rate = sampler.rho.markov_rate
        if rate is None:
            return None
        return cls(2.0 * sampler.rho.variance * math.sinh(rate * sampler.step))

    def crossing_probabilities(self, paths: np.ndarray, boundary: np.ndarray) -> np.ndarray:
        """Probability of leaving [−b, b] inside each grid interval"""
        with np.errstate(invalid="ignore", over="ignore"):
            upper = (boundary[:-1] - paths[:, :-1]) * (boundary[1:] - paths[:, 1:])
            lower = (boundary[:-1] + paths[:, :-1]) * (boundary[1:] + paths[:, 1:])
            probability = np.exp(-2.0 * upper / self.scale) + np.exp(-2.0 * lower / self.scale)
        return np.clip(np.nan_to_num(probability, nan=0.0), 0.0, 1.0)


def first_exits(
    paths: np.ndarray,
    boundary: np.ndarray,
    uniforms: np.ndarray = None,
    bridge: BridgeCorrection = None,
) -> np.ndarray:
    """
    First grid index with |path| > boundary, or the grid length

    With a bridge correction and one uniform per grid interval, a crossing
    inside (k − 1, k] also counts as an exit at index k.
    """
    exceed = np.abs(paths) > boundary
    if bridge is not None and paths.shape[1] > 1:
        exceed[:, 1:] |= uniforms < bridge.crossing_probabilities(paths, boundary)
    first = np.argmax(exceed, axis=1)
    first[~np.any(exceed, axis=1)] = paths.shape[1]
    return first


def survival_indicators(
    paths: np.ndarray,
    boundary,
    horizon_indices: Sequence[int],
    uniforms: np.ndarray = None,
    bridge: BridgeCorrection = None,
) -> np.ndarray:
    """Boolean matrix: path survived through each horizon grid index"""
    boundary = np.broadcast_to(np.asarray(boundary, dtype=float), paths.shape[1:])
    exits = first_exits(paths, boundary, uniforms, bridge)
    return exits[:, None] > np.asarray(horizon_indices)[None, :]


######################################################################
#  S U R V I V A L   C U R V E S
######################################################################


def wilson_interval(successes, trials: int, confidence: float = config.DEFAULT_CONFIDENCE):
    """Wilson score interval, exact endpoints at 0 and trials"""
    successes = np.asarray(successes, dtype=float)
    z = norm.ppf(0.5 + confidence / 2.0)
    ratio = successes / trials
    spread = z * z / trials
    denominator = 1.0 + spread
    center = (ratio + spread / 2.0) / denominator
    half = z * np.sqrt(ratio * (1.0 - ratio) / trials + spread / (4.0 * trials)) / denominator
    lower = np.where(successes == 0, 0.0, np.clip(center - half, 0.0, 1.0))
    upper = np.where(successes == trials, 1.0, np.clip(center + half, 0.0, 1.0))
    return lower, upper


@dataclass(frozen=True)
class SurvivalCurve:
    """Survivor counts at increasing log-time horizons"""

    horizons: Tuple[float, ...]
    survivors: Tuple[int, ...]
    trials: int
    confidence: float = config.DEFAULT_CONFIDENCE

    def __post_init__(self):
        if self.trials <= 0:
            raise DataValidationError("trials must be positive")
        if len(self.horizons) != len(self.survivors):
            raise DataValidationError("horizons and survivors differ in length")
        if any(later <= earlier for earlier, later in zip(self.horizons, self.horizons[1:])):
            raise DataValidationError("horizons must be strictly increasing")
        if any(count < 0 or count > self.trials for count in self.survivors):
            raise DataValidationError("survivor counts must lie in [0, trials]")
        if any(later > earlier for earlier, later in zip(self.survivors, self.survivors[1:])):
            raise DataValidationError("survivor counts must be non-increasing")

    @classmethod
    def from_exits(
        cls, exits: np.ndarray, horizons: Sequence[float], step: float, confidence: float = None
    ) -> "SurvivalCurve":
        """Counts paths whose first exit lies beyond each horizon"""
        indices = horizon_indices(horizons, step)
        survivors = tuple(int(np.count_nonzero(exits > index)) for index in indices)
        return cls(
            tuple(float(u) for u in horizons),
            survivors,
            int(len(exits)),
            config.DEFAULT_CONFIDENCE if confidence is None else confidence,
        )

    @property
    def f_hat(self) -> np.ndarray:
        """Survival fractions"""
        return np.asarray(self.survivors, dtype=float) / self.trials

    @property
    def ci(self) -> Tuple[np.ndarray, np.ndarray]:
        """Wilson interval per horizon"""
        return wilson_interval(self.survivors, self.trials, self.confidence)

    def rows(self) -> List[tuple]:
        """(u, survivors, trials, f_hat, ci_lo, ci_hi) per horizon"""
        lower, upper = self.ci
        return [
            (u, count, self.trials, float(fraction), float(lo), float(hi))
            for u, count, fraction, lo, hi in zip(
                self.horizons, self.survivors, self.f_hat, lower, upper
            )
        ]

    @classmethod
    def pool(cls, curves: Sequence["SurvivalCurve"]) -> "SurvivalCurve":
        """Exact pooling of independent runs by adding counts"""
        if not curves:
            raise DataValidationError("nothing to pool")
        horizons = curves[0].horizons
        if any(curve.horizons != horizons for curve in curves):
            raise DataValidationError("cannot pool curves with different horizons")
        return cls(
            horizons,
            tuple(int(sum(column)) for column in zip(*(curve.survivors for curve in curves))),
            int(sum(curve.trials for curve in curves)),
            curves[0].confidence,
        )

    def serialize(self) -> dict:
        """Serializes a SurvivalCurve into a dictionary"""
        return {
            "horizons": list(self.horizons),
            "survivors": list(self.survivors),
            "trials": self.trials,
            "confidence": self.confidence,
        }


def horizon_indices(horizons: Sequence[float], step: float) -> List[int]:
    """Last grid index k with kΔ ≤ u, for each horizon u"""
    if not step > 0:
        raise DomainError(f"step must be positive, got {step}")
    if any(u < 0 for u in horizons):
        raise DomainError("horizons must be nonnegative")
    return [int(math.floor(u / step + GRID_EPS)) for u in horizons]


######################################################################
#  M O N T E   C A R L O   E N G I N E
######################################################################


@dataclass(frozen=True)
class MonteCarloPlan:
    """Path count, seed and work split of a run"""

    n_paths: int
    seed: int = config.DEFAULT_SEED
    workers: Optional[int] = None
    chunk_size: int = config.DEFAULT_CHUNK_SIZE

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be at least 1, got {self.n_paths}")
        if self.chunk_size < 1:
            raise DomainError("chunk_size must be at least 1")

    def chunks(self) -> List[range]:
        """Path-index ranges in a fixed order"""
        return [
            range(start, min(start + self.chunk_size, self.n_paths))
            for start in range(0, self.n_paths, self.chunk_size)
        ]


def run_exits(
    sampler: StationarySampler,
    boundaries: Sequence[np.ndarray],
    plan: MonteCarloPlan,
    continuous: Sequence[bool] = None,
) -> List[np.ndarray]:
    """
    First-exit indices of every path, one array per boundary

    Boundaries flagged continuous are also watched between grid points
    when the kernel admits a bridge correction. The crossing uniforms come
    from a stream of their own, so the sampled paths never change.
    """
    boundaries = [np.asarray(boundary, dtype=float) for boundary in boundaries]
    continuous = [False] * len(boundaries) if continuous is None else list(continuous)
    if len(continuous) != len(boundaries):
        raise DataValidationError("one continuous flag is needed per boundary")
    bridge = BridgeCorrection.for_sampler(sampler) if any(continuous) else None
    if bridge is not None:
        logger.debug("Bridge correction between grid points, scale %.6g", bridge.scale)

    def work(indices: range) -> List[np.ndarray]:
        paths = sampler.sample_batch(plan.seed, indices)
        uniforms = None if bridge is None else sampler.crossing_uniforms(plan.seed, indices)
        return [
            first_exits(paths, boundary, uniforms, bridge if watched else None)
            for boundary, watched in zip(boundaries, continuous)
        ]

    workers = plan.workers or config.DEFAULT_WORKERS
    logger.info(
        "Simulating %d paths in %d chunks on %d workers",
        plan.n_paths,
        len(plan.chunks()),
        workers,
    )
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(work, plan.chunks()))
    return [np.concatenate([chunk[k] for chunk in results]) for k in range(len(boundaries))]


def _stationary_sampler(kernel: CovarianceKernel, step: float, last_u: float) -> StationarySampler:
    n_steps = int(math.floor(last_u / step + GRID_EPS)) + 1
    return StationarySampler(LampertiKernel(kernel), step, n_steps)


def survival_estimate(
    kernel: CovarianceKernel,
    c: float,
    horizons: Sequence[float],
    n_paths: int,
    step: float = config.DEFAULT_STEP,
    seed: int = config.DEFAULT_SEED,
    workers: int = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> SurvivalCurve:
    """Survival f̂(u) of the Lamperti process inside [−c, c]"""
    PassageConfig(c, kernel.alpha, kernel.alpha)
    if not horizons:
        raise DataValidationError("at least one horizon is required")
    sampler = _stationary_sampler(kernel, step, max(horizons))
    boundary = np.full(sampler.n_steps, float(c))
    (exits,) = run_exits(
        sampler, [boundary], MonteCarloPlan(n_paths, seed, workers), continuous=[True]
    )
    curve = SurvivalCurve.from_exits(exits, horizons, step, confidence)
    logger.info("Survival for %s at c=%g: %s", kernel.spec.label, c, curve.survivors)
    return curve


######################################################################
#  E X P O N E N T   F I T
######################################################################


@dataclass(frozen=True)
class ExponentEstimate:
    """Fitted λ̂(c) with its finite-horizon upper-bound family"""

    lambda_hat: float
    std_err: float
    fit_window: Tuple[float, float]
    upper_bound_family: Tuple[Tuple[float, float], ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def fekete_consistent(self) -> bool:
        """λ̂ ≤ min finite-horizon value + 2·std_err"""
        used = [value for u, value in self.upper_bound_family if self._in_window(u)]
        return not used or self.lambda_hat <= min(used) + 2.0 * self.std_err

    def _in_window(self, u: float) -> bool:
        return self.fit_window[0] <= u <= self.fit_window[1]

    def serialize(self) -> dict:
        """Serializes an ExponentEstimate into a dictionary"""
        return {
            "lambda_hat": self.lambda_hat,
            "std_err": self.std_err,
            "fit_window": list(self.fit_window),
            "upper_bound_family": [list(pair) for pair in self.upper_bound_family],
            "diagnostics": self.diagnostics,
        }


def fekete_upper_bounds(
    curve: SurvivalCurve, wilson_upper: bool = True
) -> List[Tuple[float, float]]:
    """
    (u, −log f̂(u)/u) for every positive horizon with exits and enough survivors

    Horizons below the survivor floor are left out, as in the exponent fit.
    """
    fractions = curve.ci[1] if wilson_upper else curve.f_hat
    return [
        (u, -math.log(fraction) / u)
        for u, count, fraction in zip(curve.horizons, curve.survivors, fractions)
        if u > 0 and config.SURVIVOR_FLOOR <= count < curve.trials
    ]


def _weighted_fit(design: np.ndarray, response: np.ndarray, weights: np.ndarray):
    information = design.T @ (weights[:, None] * design)
    covariance = np.linalg.inv(information)
    coefficients = covariance @ (design.T @ (weights * response))
    residuals = response - design @ coefficients
    dof = len(response) - design.shape[1]
    chi2 = float(np.sum(weights * residuals**2) / dof) if dof > 0 else 0.0
    return coefficients, covariance, chi2


def exponent_fit(curve: SurvivalCurve, window: Tuple[float, float] = None) -> ExponentEstimate:
    """
    Weighted least squares of −log f̂(u) on u over the window

    Weights come from the delta-method variance (1 − f)/(n·f). The
    standard error is inflated by √χ²_red when the curve is
    over-dispersed. Horizons with no survivors or no exits carry no
    usable variance and are excluded and flagged.
    """
    if window is None:
        window = (min(curve.horizons), max(curve.horizons))
    low, high = window
    selected = [k for k, u in enumerate(curve.horizons) if low <= u <= high]
    if len(selected) < 3:
        raise FitError(
            f"window [{low:g}, {high:g}] holds {len(selected)} horizons, need 3",
            code="window-too-small",
        )
    excluded = []
    used = []
    for k in selected:
        count = curve.survivors[k]
        if count == 0 or count == curve.trials:
            excluded.append(curve.horizons[k])
        elif count < config.SURVIVOR_FLOOR:
            raise FitError(
                f"horizon u={curve.horizons[k]:g} has {count} survivors, "
                f"need {config.SURVIVOR_FLOOR}",
                code="insufficient-survivors",
            )
        else:
            used.append(k)
    if excluded:
        logger.warning("Excluded horizons without usable variance: %s", excluded)
    if len(used) < 3:
        raise FitError(
            f"only {len(used)} usable horizons in the window, need 3", code="window-too-small"
        )
    horizons = np.asarray([curve.horizons[k] for k in used])
    fractions = curve.f_hat[used]
    response = -np.log(fractions)
    weights = curve.trials * fractions / (1.0 - fractions)
    design = np.column_stack([np.ones_like(horizons), horizons])
    coefficients, covariance, chi2 = _weighted_fit(design, response, weights)
    std_err = math.sqrt(covariance[1, 1] * max(1.0, chi2))

    diagnostics = {
        "intercept": float(coefficients[0]),
        "chi2_reduced": chi2,
        "horizons_used": [float(u) for u in horizons],
        "excluded_horizons": [float(u) for u in excluded],
        "curvature": None,
        "curvature_z": None,
    }
    if len(used) >= 4:
        quadratic, quadratic_cov, _ = _weighted_fit(
            np.column_stack([design, horizons**2]), response, weights
        )
        spread = math.sqrt(quadratic_cov[2, 2])
        diagnostics["curvature"] = float(quadratic[2])
        diagnostics["curvature_z"] = float(quadratic[2] / spread) if spread > 0 else None

    estimate = ExponentEstimate(
        float(coefficients[1]),
        std_err,
        (float(low), float(high)),
        tuple(fekete_upper_bounds(curve, wilson_upper=False)),
        diagnostics,
    )
    logger.info("Fitted lambda=%.6f +/- %.6f", estimate.lambda_hat, estimate.std_err)
    return estimate


def pooled_std_err(*estimates: ExponentEstimate) -> float:
    """Root sum of squares of standard errors"""
    return math.sqrt(sum(estimate.std_err**2 for estimate in estimates))


######################################################################
#  N O N - C R I T I C A L   R E G I M E S
######################################################################


def _moving_boundary_curve(kernel, c, beta, horizons, n_paths, step, seed, workers, confidence):
    times = np.asarray(horizons, dtype=float)
    if np.any(times < 1.0):
        raise DomainError("horizons are times t >= 1")
    log_times = np.log(times)
    sampler = _stationary_sampler(kernel, step, float(log_times[-1]))
    boundary = c * np.exp((beta - kernel.alpha) * sampler.grid)
    (exits,) = run_exits(
        sampler, [boundary], MonteCarloPlan(n_paths, seed, workers), continuous=[True]
    )
    return SurvivalCurve.from_exits(exits, log_times, step, confidence)


@dataclass(frozen=True)
class PlateauReport:
    """Survival toward P{T = ∞} for a supercritical boundary"""

    curve: SurvivalCurve
    difference: float
    difference_ci: Tuple[float, float]
    final_estimate: float
    final_ci: Tuple[float, float]

    @property
    def final_inside_unit_interval(self) -> bool:
        """Final CI excludes both 0 and 1"""
        return self.final_ci[0] > 0.0 and self.final_ci[1] < 1.0

    @property
    def difference_contains_zero(self) -> bool:
        """The last two survival estimates agree within their interval"""
        return self.difference_ci[0] <= 0.0 <= self.difference_ci[1]

    def serialize(self) -> dict:
        """Serializes a PlateauReport into a dictionary"""
        return {
            "curve": self.curve.serialize(),
            "difference": self.difference,
            "difference_ci": list(self.difference_ci),
            "final_estimate": self.final_estimate,
            "final_ci": list(self.final_ci),
            "final_inside_unit_interval": self.final_inside_unit_interval,
            "difference_contains_zero": self.difference_contains_zero,
        }


def supercritical_plateau(
    kernel: CovarianceKernel,
    c: float,
    beta: float,
    horizons: Sequence[float],
    n_paths: int,
    seed: int = config.DEFAULT_SEED,
    step: float = config.DEFAULT_STEP,
    workers: int = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> PlateauReport:
    """
    Survival at X-time horizons for β > α, with the last-two difference

    The difference f̂(t₋₂) − f̂(t₋₁) carries the normal interval with
    variance f̂₋₂(1 − f̂₋₂)/n + f̂₋₁(1 − f̂₋₁)/n.
    """
    PassageConfig(c, beta, kernel.alpha).require(Regime.SUPERCRITICAL)
    if len(horizons) < 2:
        raise DataValidationError("the plateau check needs at least two horizons")
    curve = _moving_boundary_curve(
        kernel, c, beta, horizons, n_paths, step, seed, workers, confidence
    )
    earlier, final = curve.f_hat[-2], curve.f_hat[-1]
    difference = float(earlier - final)
    spread = math.sqrt((earlier * (1.0 - earlier) + final * (1.0 - final)) / curve.trials)
    z = norm.ppf(0.5 + confidence / 2.0)
    final_low, final_high = curve.ci
    return PlateauReport(
        curve,
        difference,
        (difference - z * spread, difference + z * spread),
        float(final),
        (float(final_low[-1]), float(final_high[-1])),
    )


@dataclass(frozen=True)
class TailReport:
    """Log-survival against the quadratic-in-log-t envelope for β < α"""

    log_times: Tuple[float, ...]
    log_survival: Tuple[float, ...]
    envelope_coefficient: float
    fitted_c: float
    curvature: float
    curvature_ci: Tuple[float, float]

    @property
    def negative_curvature(self) -> bool:
        """Quadratic coefficient CI lies below 0"""
        return self.curvature_ci[1] < 0.0

    def envelope(self) -> List[float]:
        """−A(log t)² + C·log t at each horizon"""
        return [
            -self.envelope_coefficient * x * x + self.fitted_c * x for x in self.log_times
        ]

    def serialize(self) -> dict:
        """Serializes a TailReport into a dictionary"""
        return {
            "log_times": list(self.log_times),
            "log_survival": list(self.log_survival),
            "envelope_coefficient": self.envelope_coefficient,
            "fitted_c": self.fitted_c,
            "envelope": self.envelope(),
            "curvature": self.curvature,
            "curvature_ci": list(self.curvature_ci),
            "negative_curvature": self.negative_curvature,
        }


def envelope_coefficient(alpha: float, beta: float) -> float:
    """(α − β)/(4β²)"""
    return (alpha - beta) / (4.0 * beta * beta)


def subcritical_tail_check(
    kernel: CovarianceKernel,
    c: float,
    beta: float,
    horizons: Sequence[float],
    n_paths: int,
    seed: int = config.DEFAULT_SEED,
    step: float = config.DEFAULT_STEP,
    workers: int = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> TailReport:
    """
    Empirical log P{T > t} for β < α and its curvature in log t

    The curvature is the quadratic coefficient through the last three
    horizons. Its variance uses Cov(log f̂_i, log f̂_j) = Var(log f̂_min(i,j))
    for nested survivor sets.
    """
    PassageConfig(c, beta, kernel.alpha).require(Regime.SUBCRITICAL)
    if kernel.spec.slnd_constant is None:
        raise SlndUnknownError(f"{kernel.spec.label} carries no SLND constant")
    if len(horizons) < 3:
        raise DataValidationError("the tail check needs at least three horizons")
    curve = _moving_boundary_curve(
        kernel, c, beta, horizons, n_paths, step, seed, workers, confidence
    )
    if min(curve.survivors) < config.SURVIVOR_FLOOR:
        raise FitError(
            f"tail check needs {config.SURVIVOR_FLOOR} survivors at every horizon, "
            f"got {curve.survivors}",
            code="insufficient-survivors",
        )
    log_times = np.asarray(curve.horizons)
    log_survival = np.log(curve.f_hat)
    coefficient = envelope_coefficient(kernel.alpha, beta)
    fitted_c = float(
        np.sum((log_survival + coefficient * log_times**2) * log_times) / np.sum(log_times**2)
    )

    x1, x2, x3 = log_times[-3:]
    outer = 1.0 / ((x2 - x1) * (x3 - x1))
    inner = 1.0 / ((x3 - x2) * (x3 - x1))
    weights = np.array([outer, -(outer + inner), inner])
    curvature = float(weights @ log_survival[-3:])
    fractions = curve.f_hat[-3:]
    variances = (1.0 - fractions) / (curve.trials * fractions)
    nested = np.array([[variances[min(i, j)] for j in range(3)] for i in range(3)])
    spread = math.sqrt(float(weights @ nested @ weights))
    z = norm.ppf(0.5 + confidence / 2.0)
    return TailReport(
        tuple(float(x) for x in log_times),
        tuple(float(y) for y in log_survival),
        coefficient,
        fitted_c,
        curvature,
        (curvature - z * spread, curvature + z * spread),
    )


######################################################################
#  S C H E D U L E   S U R V I V A L
######################################################################


def _stride(step: float) -> int:
    stride = int(round(1.0 / step))
    if stride < 1 or abs(stride * step - 1.0) > GRID_EPS:
        raise DomainError(f"1/step must be an integer to subsample integer log-times, got {step}")
    return stride


def schedule_boundary(c: float, n_steps: int, stride: int) -> np.ndarray:
    """Boundary watching only the grid points u = 1, 2, …"""
    boundary = np.full(n_steps, np.inf)
    boundary[stride::stride] = c
    return boundary


def coupled_survival(
    kernel: CovarianceKernel,
    c: float,
    horizons: Sequence[float],
    n_max: int,
    n_paths: int,
    step: float = config.DEFAULT_STEP,
    seed: int = config.DEFAULT_SEED,
    workers: int = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> Tuple[SurvivalCurve, SurvivalCurve]:
    """Fine-grid and integer log-time survival from the same paths"""
    PassageConfig(c, kernel.alpha, kernel.alpha)
    stride = _stride(step)
    sampler = _stationary_sampler(kernel, step, max(max(horizons), float(n_max)))
    fine = np.full(sampler.n_steps, float(c))
    coarse = schedule_boundary(c, sampler.n_steps, stride)
    fine_exits, coarse_exits = run_exits(
        sampler, [fine, coarse], MonteCarloPlan(n_paths, seed, workers), continuous=[True, False]
    )
    return (
        SurvivalCurve.from_exits(fine_exits, horizons, step, confidence),
        SurvivalCurve.from_exits(
            coarse_exits, [float(n) for n in range(1, n_max + 1)], step, confidence
        ),
    )


def lambda_star_estimate(
    kernel: CovarianceKernel,
    c: float,
    n_max: int,
    n_paths: int,
    seed: int = config.DEFAULT_SEED,
    step: float = None,
    workers: int = None,
    window: Tuple[float, float] = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> ExponentEstimate:
    """
    Exponent of P{T*_c > e^n}, monitoring only at t = e^n

    Without a step the Lamperti process is sampled at integer log-times
    directly. With a step the fine paths are subsampled, so they are the
    same paths a survival_estimate on that grid would see.
    """
    if n_max < 2:
        raise FitError(f"n_max={n_max} leaves no fit window", code="window-too-small")
    PassageConfig(c, kernel.alpha, kernel.alpha)
    step = 1.0 if step is None else step
    stride = _stride(step)
    sampler = StationarySampler(LampertiKernel(kernel), step, n_max * stride + 1)
    boundary = schedule_boundary(c, sampler.n_steps, stride)
    (exits,) = run_exits(sampler, [boundary], MonteCarloPlan(n_paths, seed, workers))
    curve = SurvivalCurve.from_exits(exits, [float(n) for n in range(1, n_max + 1)], step, confidence)
    return exponent_fit(curve, window)


######################################################################
#  D I A G N O S T I C S
######################################################################


class HalvingReport(NamedTuple):
    """Shift of λ̂ when the grid step is halved"""

    coarse: ExponentEstimate
    fine: ExponentEstimate
    shift: float
    ci_width: float

    @property
    def within_ci(self) -> bool:
        """Shift smaller than the CI width"""
        return self.shift < self.ci_width


def step_halving_diagnostic(
    kernel: CovarianceKernel,
    c: float,
    horizons: Sequence[float],
    n_paths: int,
    step: float = config.DEFAULT_STEP,
    seed: int = config.DEFAULT_SEED,
    window: Tuple[float, float] = None,
    workers: int = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> HalvingReport:
    """Refits λ̂ at Δ/2 and compares with Δ"""
    estimates = [
        exponent_fit(
            survival_estimate(kernel, c, horizons, n_paths, grid_step, seed, workers, confidence),
            window,
        )
        for grid_step in (step, step / 2.0)
    ]
    z = norm.ppf(0.5 + confidence / 2.0)
    width = 2.0 * z * max(estimate.std_err for estimate in estimates)
    shift = abs(estimates[1].lambda_hat - estimates[0].lambda_hat)
    logger.info("Step halving shifts lambda by %.4g (CI width %.4g)", shift, width)
    return HalvingReport(estimates[0], estimates[1], shift, width)


class MonotonicityReport(NamedTuple):
    """λ̂ over increasing levels and the pairs that break the ordering"""

    levels: Tuple[float, ...]
    estimates: Tuple[ExponentEstimate, ...]
    violations: Tuple[Tuple[float, float], ...]


def exponent_monotonicity(
    kernel: CovarianceKernel,
    levels: Sequence[float],
    horizons: Sequence[float],
    n_paths: int,
    step: float = config.DEFAULT_STEP,
    seed: int = config.DEFAULT_SEED,
    workers: int = None,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> MonotonicityReport:
    """λ̂ on coupled paths for each level; adjacent CIs must overlap or decrease"""
    levels = sorted(float(level) for level in levels)
    sampler = _stationary_sampler(kernel, step, max(horizons))
    boundaries = [np.full(sampler.n_steps, level) for level in levels]
    all_exits = run_exits(
        sampler,
        boundaries,
        MonteCarloPlan(n_paths, seed, workers),
        continuous=[True] * len(boundaries),
    )
    estimates = tuple(
        exponent_fit(SurvivalCurve.from_exits(exits, horizons, step, confidence))
        for exits in all_exits
    )
    z = norm.ppf(0.5 + confidence / 2.0)
    violations = tuple(
        (levels[k], levels[k + 1])
        for k in range(len(levels) - 1)
        if estimates[k + 1].lambda_hat
        > estimates[k].lambda_hat + z * pooled_std_err(estimates[k], estimates[k + 1])
    )
    return MonotonicityReport(tuple(levels), estimates, violations)
