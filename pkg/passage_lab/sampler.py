"""
Exact Gaussian path samplers and sampling schedules

Every path draws its normals from its own counter-based Philox stream
keyed by the master seed, with the path index in the top counter word.
A path is therefore a function of (master seed, path index) alone, no
matter how paths are batched or which thread draws them.
"""
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from passage_lab import config
from passage_lab.errors import DataValidationError, DomainError, NonPsdError
from passage_lab.kernels import CovarianceKernel, LampertiKernel, ProcessSpec, make_kernel

logger = logging.getLogger("passage_lab")

COUNTER_SHIFT = 192
CROSSING_STREAM = 1
JITTER_START = 1e-12
JITTER_LIMIT = 1e-8
MAX_FFT_LENGTH = 2**27
MAX_LOG_TIME = math.log(1e300)


class Frame(Enum):
    """Time frame a path lives in"""

    X_FRAME = "x"
    Y_FRAME = "y"


class SeedLineage(NamedTuple):
    """Identifies the random stream of one path"""

    master_seed: int
    path_index: int

    def generator(self) -> np.random.Generator:
        """Philox generator private to this path"""
        key = np.random.SeedSequence(self.master_seed).generate_state(2, np.uint64)
        return np.random.Generator(
            np.random.Philox(key=key, counter=self.path_index << COUNTER_SHIFT)
        )

    def crossing_generator(self) -> np.random.Generator:
        """Separate stream for between-grid crossing draws of this path"""
        sequence = np.random.SeedSequence(self.master_seed, spawn_key=(CROSSING_STREAM,))
        key = sequence.generate_state(2, np.uint64)
        return np.random.Generator(
            np.random.Philox(key=key, counter=self.path_index << COUNTER_SHIFT)
        )


@dataclass(frozen=True)
class PathSample:
    """One sampled path on a grid"""

    grid: np.ndarray
    values: np.ndarray
    frame: Frame
    lineage: Optional[SeedLineage] = None

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise DataValidationError("grid and values differ in length")
        if not np.all(np.isfinite(self.values)):
            raise DataValidationError("path contains non-finite values")


class EmbeddingMethod(Enum):
    """How a stationary covariance was factored"""

    CIRCULANT = "circulant"
    TOEPLITZ_CHOLESKY = "toeplitz-cholesky"


class EmbeddingReport(NamedTuple):
    """Diagnostics of a stationary factorization"""

    method: EmbeddingMethod
    min_eigenvalue: float
    clipped_mass: float

    def serialize(self) -> dict:
        """Serializes the report into a dictionary"""
        return {
            "method": self.method.value,
            "min_eigenvalue": self.min_eigenvalue,
            "clipped_mass": self.clipped_mass,
        }


######################################################################
#  F A C T O R I Z A T I O N S
######################################################################


def cholesky_with_jitter(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor, adding diagonal jitter when needed

    Jitter starts at 1e-12 of the largest diagonal entry and grows by
    factors of 10 up to 1e-8, after which NonPsdError is raised.
    """
    matrix = np.asarray(matrix, dtype=float)
    try:
        return np.linalg.cholesky(matrix), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.max(np.diag(matrix)))
    steps = int(round(math.log10(JITTER_LIMIT / JITTER_START)))
    for power in range(steps + 1):
        jitter = JITTER_START * 10.0**power * scale
        try:
            factor = np.linalg.cholesky(matrix + jitter * np.eye(len(matrix)))
        except np.linalg.LinAlgError:
            continue
        logger.debug("Cholesky needed jitter %.3g", jitter)
        return factor, jitter
    raise NonPsdError(
        "covariance matrix is not positive semidefinite after jitter; "
        "tighten the quadrature rel_tol"
    )


def _normals(master_seed: int, indices: Sequence[int], shape: tuple) -> np.ndarray:
    block = np.empty((len(indices),) + shape)
    for row, index in enumerate(indices):
        block[row] = SeedLineage(master_seed, int(index)).generator().standard_normal(shape)
    return block


class ToeplitzSampler:
    """
    Stationary Gaussian vectors with autocovariance a[0..m]

    Uses circulant embedding when the clipped negative eigenvalue mass is
    at most the threshold, otherwise a Toeplitz Cholesky factor.
    """

    def __init__(self, autocovariance: Sequence[float], clip_threshold: float = None):
        self.autocovariance = np.asarray(autocovariance, dtype=float)
        if self.autocovariance.ndim != 1 or len(self.autocovariance) == 0:
            raise DataValidationError("autocovariance must be a non-empty sequence")
        if not self.autocovariance[0] > 0:
            raise NonPsdError(f"variance must be positive, got {self.autocovariance[0]}")
        self.size = len(self.autocovariance)
        threshold = config.CLIP_THRESHOLD if clip_threshold is None else clip_threshold
        self._factor = None
        self._sqrt_eigenvalues = None
        if self.size == 1:
            self._factor = np.sqrt(self.autocovariance[:1]).reshape(1, 1)
            self.report = EmbeddingReport(
                EmbeddingMethod.TOEPLITZ_CHOLESKY, float(self.autocovariance[0]), 0.0
            )
            return
        length = 2 * (self.size - 1)
        if length > MAX_FFT_LENGTH:
            raise DomainError(f"circulant length {length} exceeds {MAX_FFT_LENGTH}")
        row = np.concatenate([self.autocovariance, self.autocovariance[-2:0:-1]])
        eigenvalues = np.real(np.fft.fft(row))
        negative = eigenvalues[eigenvalues < 0]
        clipped_mass = float(np.sum(-negative) / np.sum(np.abs(eigenvalues)))
        minimum = float(np.min(eigenvalues))
        if clipped_mass <= threshold:
            if clipped_mass > 0:
                logger.warning("Clipping negative circulant mass %.3g", clipped_mass)
            self._sqrt_eigenvalues = np.sqrt(np.clip(eigenvalues, 0.0, None) / length)
            self.report = EmbeddingReport(EmbeddingMethod.CIRCULANT, minimum, clipped_mass)
        else:
            logger.info(
                "Circulant embedding clips %.3g of the trace; using Toeplitz Cholesky",
                clipped_mass,
            )
            self._factor, _ = cholesky_with_jitter(linalg.toeplitz(self.autocovariance))
            self.report = EmbeddingReport(EmbeddingMethod.TOEPLITZ_CHOLESKY, minimum, clipped_mass)
        logger.debug("Embedding for %d points: %s", self.size, self.report)

    def draw_batch(self, master_seed: int, indices: Sequence[int]) -> np.ndarray:
        """One row per path index"""
        if self._sqrt_eigenvalues is None:
            normals = _normals(master_seed, indices, (self.size,))
            return normals @ self._factor.T
        length = len(self._sqrt_eigenvalues)
        normals = _normals(master_seed, indices, (2, length))
        spectrum = self._sqrt_eigenvalues * (normals[:, 0, :] + 1j * normals[:, 1, :])
        return np.real(np.fft.fft(spectrum, axis=1))[:, : self.size]

    def draw(self, lineage: SeedLineage) -> np.ndarray:
        """A single path"""
        return self.draw_batch(lineage.master_seed, [lineage.path_index])[0]


class GramSampler:
    """Gaussian vectors with an arbitrary covariance matrix, by Cholesky"""

    def __init__(self, matrix: np.ndarray):
        self.factor, self.jitter = cholesky_with_jitter(matrix)
        self.size = len(matrix)

    def draw_batch(self, master_seed: int, indices: Sequence[int]) -> np.ndarray:
        """One row per path index"""
        return _normals(master_seed, indices, (self.size,)) @ self.factor.T

    def draw(self, lineage: SeedLineage) -> np.ndarray:
        """A single path"""
        return self.draw_batch(lineage.master_seed, [lineage.path_index])[0]


######################################################################
#  S T A T I O N A R Y   ( Y - F R A M E )
######################################################################


class StationarySampler:
    """Lamperti process Y on the grid u_k = kΔ, k = 0 … n_steps − 1"""

    def __init__(
        self, rho: LampertiKernel, step: float, n_steps: int, clip_threshold: float = None
    ):
        if not step > 0:
            raise DomainError(f"step must be positive, got {step}")
        if n_steps < 1:
            raise DomainError(f"n_steps must be at least 1, got {n_steps}")
        self.rho = rho
        self.step = float(step)
        self.n_steps = int(n_steps)
        self.grid = self.step * np.arange(self.n_steps)
        self.engine = ToeplitzSampler(rho.rho_array(self.grid), clip_threshold)

    @property
    def report(self) -> EmbeddingReport:
        """Embedding diagnostics"""
        return self.engine.report

    def sample(self, lineage: SeedLineage) -> PathSample:
        """One Y-frame path"""
        return PathSample(self.grid, self.engine.draw(lineage), Frame.Y_FRAME, lineage)

    def sample_batch(self, master_seed: int, indices: Sequence[int]) -> np.ndarray:
        """Matrix of Y-frame paths, one row per path index"""
        return self.engine.draw_batch(master_seed, indices)

    def crossing_uniforms(self, master_seed: int, indices: Sequence[int]) -> np.ndarray:
        """Uniforms deciding crossings inside each grid interval, one row per path"""
        block = np.empty((len(indices), max(self.n_steps - 1, 0)))
        for row, index in enumerate(indices):
            block[row] = SeedLineage(master_seed, int(index)).crossing_generator().random(
                block.shape[1]
            )
        return block


def sample_stationary(
    rho: LampertiKernel, step: float, n_steps: int, lineage: SeedLineage
) -> Tuple[PathSample, EmbeddingReport]:
    """A Y-frame path with its embedding report"""
    sampler = StationarySampler(rho, step, n_steps)
    return sampler.sample(lineage), sampler.report


######################################################################
#  X - F R A M E
######################################################################


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise DataValidationError("grid must be a non-empty sequence")
    if grid[0] < 0:
        raise DomainError("grid must start at a nonnegative time")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    return grid


def fgn_autocovariance(hurst: float, step: float, count: int) -> np.ndarray:
    """Autocovariance of fractional Gaussian noise with increment step"""
    lags = np.arange(count, dtype=float)
    twice = 2.0 * hurst
    return 0.5 * step**twice * (
        np.abs(lags + 1.0) ** twice - 2.0 * lags**twice + np.abs(lags - 1.0) ** twice
    )


class KernelGridSampler:
    """Exact joint law of a kernel on fixed times; X(0) = 0 is kept exact"""

    def __init__(self, kernel: CovarianceKernel, times: Sequence[float]):
        self.times = _check_grid(times)
        self.kernel = kernel
        self.positive = self.times > 0
        self.engine = _gram_sampler(kernel, tuple(float(t) for t in self.times[self.positive]))

    def sample_batch(self, master_seed: int, indices: Sequence[int]) -> np.ndarray:
        """Matrix of X-frame paths, one row per path index"""
        paths = np.zeros((len(indices), len(self.times)))
        if self.engine is not None:
            paths[:, self.positive] = self.engine.draw_batch(master_seed, indices)
        return paths

    def sample(self, lineage: SeedLineage) -> PathSample:
        """One X-frame path"""
        values = self.sample_batch(lineage.master_seed, [lineage.path_index])[0]
        return PathSample(self.times, values, Frame.X_FRAME, lineage)


@lru_cache(maxsize=32)
def _gram_sampler(kernel: CovarianceKernel, times: tuple) -> Optional[GramSampler]:
    if not times:
        return None
    logger.debug("Factoring %d-point Gram matrix for %s", len(times), kernel.spec.label)
    return GramSampler(kernel.gram(times))


class FbmSampler:
    """
    Fractional Brownian motion on a grid

    Uniform grids starting at 0 use circulant embedding of fractional
    Gaussian noise and a cumulative sum; other grids use Cholesky.
    """

    def __init__(self, hurst: float, grid: Sequence[float], clip_threshold: float = None):
        self.grid = _check_grid(grid)
        self.hurst = float(hurst)
        self.spec = ProcessSpec.fbm(hurst)
        self.noise = None
        self.fallback = None
        steps = np.diff(self.grid)
        if self.grid[0] == 0 and (
            len(steps) == 0 or np.allclose(steps, steps[0], rtol=1e-12, atol=0.0)
        ):
            if len(steps):
                self.noise = ToeplitzSampler(
                    fgn_autocovariance(self.hurst, float(steps[0]), len(steps)), clip_threshold
                )
        else:
            self.fallback = KernelGridSampler(make_kernel(self.spec), self.grid)

    def sample_batch(self, master_seed: int, indices: Sequence[int]) -> np.ndarray:
        """Matrix of fBm paths, one row per path index"""
        if self.fallback is not None:
            return self.fallback.sample_batch(master_seed, indices)
        paths = np.zeros((len(indices), len(self.grid)))
        if self.noise is not None:
            paths[:, 1:] = np.cumsum(self.noise.draw_batch(master_seed, indices), axis=1)
        return paths

    def sample(self, lineage: SeedLineage) -> PathSample:
        """One fBm path"""
        values = self.sample_batch(lineage.master_seed, [lineage.path_index])[0]
        return PathSample(self.grid, values, Frame.X_FRAME, lineage)


def sample_fbm(hurst: float, grid: Sequence[float], lineage: SeedLineage) -> PathSample:
    """An fBm path with the exact law on the grid"""
    return FbmSampler(hurst, grid).sample(lineage)


def to_x_frame(path: PathSample, alpha: float) -> PathSample:
    """Pushes a Y-frame path forward: t = e^u, X(t) = t^α·Y(log t)"""
    if path.frame is not Frame.Y_FRAME:
        raise DataValidationError("path is not in the Y-frame")
    times = np.exp(path.grid)
    return PathSample(times, times**alpha * path.values, Frame.X_FRAME, path.lineage)


def to_y_frame(path: PathSample, alpha: float) -> PathSample:
    """Pulls an X-frame path back: u = log t, Y(u) = e^(−αu)·X(e^u)"""
    if path.frame is not Frame.X_FRAME:
        raise DataValidationError("path is not in the X-frame")
    if np.any(path.grid <= 0):
        raise DomainError("the Lamperti transform needs positive times")
    return PathSample(
        np.log(path.grid), path.grid ** (-alpha) * path.values, Frame.Y_FRAME, path.lineage
    )


######################################################################
#  S C H E D U L E S
######################################################################


class ScheduleFamily(Enum):
    """Sampling-time families t_n"""

    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"
    POWER_EXP = "power-exp"
    LOG_POWER = "log-power"


class Validity(Enum):
    """What survival on the schedule says about the continuous exponent"""

    PROVED_EQUIVALENT = "proved-equivalent"
    UPPER_BOUND_ONLY = "upper-bound-only"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Schedule:
    """Sampling times stored as log t_n, n = 1 … len"""

    family: ScheduleFamily
    n_max: int
    log_times: Tuple[float, ...]
    validity: Validity
    alpha: float
    q: Optional[float] = None
    truncated: bool = False
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def times(self) -> np.ndarray:
        """t_1 … t_n"""
        return np.exp(np.asarray(self.log_times))

    @property
    def ratios(self) -> np.ndarray:
        """t_j/(t_(j+1) − t_j) for consecutive times"""
        return 1.0 / np.expm1(np.diff(np.asarray(self.log_times)))

    def log_time_at(self, index: int) -> float:
        """log t_index from the family formula, past n_max if needed"""
        return float(_log_time(self.family, self.q, index))

    def log_times_at(self, indices: Sequence[int]) -> np.ndarray:
        """Vectorized log_time_at"""
        return _log_time(self.family, self.q, np.asarray(indices, dtype=float))

    def time_at(self, index: int) -> float:
        """t_index; inf beyond the float range"""
        log_time = self.log_time_at(index)
        return math.exp(log_time) if log_time < 709.0 else math.inf

    def ratio_at(self, index: int) -> float:
        """t_index/(t_(index+1) − t_index)"""
        return 1.0 / math.expm1(self.log_time_at(index + 1) - self.log_time_at(index))

    def serialize(self) -> dict:
        """Serializes a Schedule into a dictionary"""
        return {
            "family": self.family.value,
            "q": self.q,
            "alpha": self.alpha,
            "n_max": self.n_max,
            "times": [float(t) for t in self.times],
            "validity": self.validity.value,
            "truncated": self.truncated,
            "flags": list(self.flags),
        }


def _log_time(family: ScheduleFamily, q: Optional[float], index):
    index = np.asarray(index, dtype=float)
    if family is ScheduleFamily.ARITHMETIC:
        return np.log(index)
    if family is ScheduleFamily.GEOMETRIC:
        return index
    if family is ScheduleFamily.POWER_EXP:
        return np.power(index, q)
    return np.power(np.abs(np.log(index)), q)


def make_schedule(family, params: dict = None, alpha: float = 0.5, n_max: int = 2) -> Schedule:
    """
    Materializes a sampling schedule with its validity certificate

    Times above 1e300 are dropped and the schedule is marked truncated.
    """
    family = ScheduleFamily(family)
    params = params or {}
    if n_max < 2:
        raise DomainError(f"n_max must be at least 2, got {n_max}")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    q = params.get("q")
    flags = []
    if family is ScheduleFamily.ARITHMETIC:
        validity = Validity.PROVED_EQUIVALENT
    elif family is ScheduleFamily.GEOMETRIC:
        validity = Validity.UNKNOWN
        flags.append("ratio-not-vanishing")
    elif family is ScheduleFamily.POWER_EXP:
        if q is None or not q > 0:
            raise DomainError(f"power-exp schedules need q > 0, got {q}")
        threshold = 2.0 * alpha / (1.0 + 2.0 * alpha)
        validity = Validity.PROVED_EQUIVALENT if q < threshold else Validity.UPPER_BOUND_ONLY
        if q >= 1.0:
            flags.append("ratio-not-vanishing")
    else:
        if q is None or not q > 1:
            raise DomainError(f"log-power schedules need q > 1, got {q}")
        validity = Validity.PROVED_EQUIVALENT
    log_times = []
    truncated = False
    for index in range(1, n_max + 1):
        log_time = float(_log_time(family, q, index))
        if log_time > MAX_LOG_TIME:
            truncated = True
            break
        log_times.append(log_time)
    if len(log_times) < 2:
        raise DomainError("schedule overflows before its second time")
    if truncated:
        flags.append("truncated")
        logger.warning("Schedule %s truncated at %d times", family.value, len(log_times))
    return Schedule(
        family,
        n_max,
        tuple(log_times),
        validity,
        float(alpha),
        None if q is None else float(q),
        truncated,
        tuple(flags),
    )


class ScheduleSampler(KernelGridSampler):
    """Exact kernel samples at schedule times"""

    def __init__(self, kernel: CovarianceKernel, schedule: Schedule):
        super().__init__(kernel, schedule.times)
        self.schedule = schedule


def sample_on_schedule(
    kernel: CovarianceKernel, schedule: Schedule, lineage: SeedLineage
) -> PathSample:
    """A path at the schedule points; the Gram factor is cached per (kernel, times)"""
    return ScheduleSampler(kernel, schedule).sample(lineage)


######################################################################
#  P A T H   D U M P
######################################################################


def dump_paths(
    paths: np.ndarray,
    grid: Sequence[float],
    lineages: Sequence[SeedLineage],
    report: Optional[EmbeddingReport],
    directory: str,
    batch: int = 0,
) -> Tuple[str, str]:
    """Writes one CSV of (path_index, grid_point, value) plus a JSON sidecar"""
    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, f"paths-{batch:04d}")
    with open(stem + ".csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["path_index", "grid_point", "value"])
        for lineage, row in zip(lineages, paths):
            for point, value in zip(grid, row):
                writer.writerow([lineage.path_index, repr(float(point)), repr(float(value))])
    sidecar = {
        "batch": batch,
        "lineages": [list(lineage) for lineage in lineages],
        "embedding": None if report is None else report.serialize(),
    }
    with open(stem + ".json", "w", encoding="utf-8") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
    logger.info("Dumped %d paths to %s.csv", len(lineages), stem)
    return stem + ".csv", stem + ".json"
