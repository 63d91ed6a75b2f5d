"""
Covariance kernels of self-similar Gaussian processes

A ``ProcessSpec`` declares the process, a ``CovarianceKernel`` evaluates
its covariance R(s, t) and a ``LampertiKernel`` exposes the stationary
covariance ρ(h) of Y(u) = e^(−αu)·X(e^u). Every sampler consumes one of
these, never a formula of its own.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from passage_lab import quadrature
from passage_lab.errors import DataValidationError, DomainError, SlndUnknownError

logger = logging.getLogger("passage_lab")

SCALING_FACTORS = (0.5, 2.0, 10.0)
ONE_STEP_DECAY = 1.0 - math.exp(-1.0)
MARKOV_TEST_LAGS = np.array([0.0, 0.25, 1.0, 3.0])
MARKOV_RTOL = 1e-9


class ProcessKind(Enum):
    """Enumeration of supported processes"""

    FBM = "fbm"
    BROWNIAN_MOTION = "bm"
    SPDE_TRACE = "spde"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ProcessSpec:
    """
    Declarative description of a self-similar Gaussian process

    Build one with the ``fbm``, ``brownian_motion``, ``spde_trace`` or
    ``custom`` constructors, which enforce the parameter invariants.
    """

    kind: ProcessKind
    alpha: float
    hurst: Optional[float] = None
    d: Optional[int] = None
    gamma: Optional[float] = None
    beta: Optional[float] = None
    nu: Optional[float] = None
    slnd_constant: Optional[float] = None
    covariance: Optional[Callable] = field(default=None, repr=False)

    ##################################################
    # CONSTRUCTORS
    ##################################################

    @classmethod
    def fbm(cls, hurst: float, slnd_constant: float = 1.0) -> "ProcessSpec":
        """Fractional Brownian motion; the SLND constant defaults to 1"""
        _check_hurst(hurst)
        _check_slnd(slnd_constant)
        return cls(ProcessKind.FBM, float(hurst), hurst=float(hurst), slnd_constant=slnd_constant)

    @classmethod
    def brownian_motion(cls) -> "ProcessSpec":
        """Standard Brownian motion, exact SLND constant 1"""
        return cls(ProcessKind.BROWNIAN_MOTION, 0.5, hurst=0.5, slnd_constant=1.0)

    @classmethod
    def spde_trace(
        cls, d: int, gamma: float, beta: float, nu: float, slnd_constant: float = None
    ) -> "ProcessSpec":
        """Trace X(t) = U(t, 0) of the linear fractional heat equation"""
        alpha = quadrature.spde_alpha(d, gamma, beta, nu)
        if not alpha > 0:
            raise DomainError(f"self-similarity index must be positive, got {alpha}")
        if slnd_constant is not None:
            if nu == 0:
                raise SlndUnknownError("no SLND constant is known for nu = 0")
            _check_slnd(slnd_constant)
        return cls(
            ProcessKind.SPDE_TRACE,
            alpha,
            d=int(d),
            gamma=float(gamma),
            beta=float(beta),
            nu=float(nu),
            slnd_constant=slnd_constant,
        )

    @classmethod
    def custom(
        cls, covariance: Callable, alpha: float, slnd_constant: float = None
    ) -> "ProcessSpec":
        """A user kernel with a declared index; make_kernel verifies the scaling"""
        if not callable(covariance):
            raise DataValidationError("custom covariance must be callable")
        if not alpha > 0:
            raise DomainError(f"self-similarity index must be positive, got {alpha}")
        if slnd_constant is not None:
            _check_slnd(slnd_constant)
        return cls(ProcessKind.CUSTOM, float(alpha), slnd_constant=slnd_constant, covariance=covariance)

    ##################################################
    # SERIALIZATION
    ##################################################

    @property
    def label(self) -> str:
        """Short human readable name"""
        if self.kind is ProcessKind.BROWNIAN_MOTION:
            return "bm"
        if self.kind is ProcessKind.FBM:
            return f"fbm(H={self.hurst:g})"
        if self.kind is ProcessKind.SPDE_TRACE:
            return f"spde(d={self.d},gamma={self.gamma:g},beta={self.beta:g},nu={self.nu:g})"
        return f"custom(alpha={self.alpha:g})"

    def serialize(self) -> dict:
        """Serializes a ProcessSpec into a dictionary"""
        if self.kind is ProcessKind.CUSTOM:
            raise DataValidationError("custom kernels cannot be serialized")
        data = {"kind": self.kind.value, "alpha": self.alpha}
        if self.kind is ProcessKind.FBM:
            data["H"] = self.hurst
        if self.kind is ProcessKind.SPDE_TRACE:
            data.update(d=self.d, gamma=self.gamma, beta=self.beta, nu=self.nu)
        if self.slnd_constant is not None:
            data["slnd_constant"] = self.slnd_constant
        return data

    @classmethod
    def deserialize(cls, data: dict) -> "ProcessSpec":
        """
        Builds a ProcessSpec from a dictionary

        Args:
            data (dict): A dictionary containing the process parameters
        """
        try:
            kind = ProcessKind(data["kind"])
            slnd = data.get("slnd_constant")
            if kind is ProcessKind.BROWNIAN_MOTION:
                return cls.brownian_motion()
            if kind is ProcessKind.FBM:
                return cls.fbm(float(data["H"]), 1.0 if slnd is None else float(slnd))
            if kind is ProcessKind.SPDE_TRACE:
                return cls.spde_trace(
                    _integer(data["d"], "d"),
                    float(data["gamma"]),
                    float(data["beta"]),
                    float(data["nu"]),
                    None if slnd is None else float(slnd),
                )
        except ValueError as error:
            raise DataValidationError("Invalid process: " + str(error)) from error
        except KeyError as error:
            raise DataValidationError("Invalid process: missing " + error.args[0]) from error
        except TypeError as error:
            raise DataValidationError(
                "Invalid process: body of request contained bad or no data " + str(error)
            ) from error
        raise DataValidationError("Invalid process: custom kernels cannot be deserialized")


def _integer(value, name: str) -> int:
    number = float(value)
    if not number.is_integer():
        raise DataValidationError(f"Invalid process: {name} must be an integer, got {value}")
    return int(number)


def _check_hurst(hurst):
    if not 0.0 < hurst < 1.0:
        raise DomainError(f"Hurst index must lie in (0, 1), got {hurst}")


def _check_slnd(slnd_constant):
    if slnd_constant is None or not slnd_constant >= 0:
        raise DomainError(f"SLND constant must be nonnegative, got {slnd_constant}")


def derive_alpha(spec: ProcessSpec) -> float:
    """Self-similarity index recomputed from the spec's parameters"""
    if spec.kind is ProcessKind.BROWNIAN_MOTION:
        return 0.5
    if spec.kind is ProcessKind.FBM:
        _check_hurst(spec.hurst)
        return spec.hurst
    if spec.kind is ProcessKind.SPDE_TRACE:
        alpha = quadrature.spde_alpha(spec.d, spec.gamma, spec.beta, spec.nu)
        if not alpha > 0:
            raise DomainError(f"self-similarity index must be positive, got {alpha}")
        return alpha
    return spec.alpha


def slnd_bound_constant(spec: ProcessSpec) -> float:
    """Stationary conditional-variance floor ℓ·(1 − e^(−1))^(2α)"""
    if spec.slnd_constant is None:
        raise SlndUnknownError(f"{spec.label} carries no SLND constant")
    return spec.slnd_constant * ONE_STEP_DECAY ** (2.0 * spec.alpha)


######################################################################
#  C O V A R I A N C E S
######################################################################


def fbm_cov(hurst: float, s: float, t: float) -> float:
    """½[t^(2H) + s^(2H) − |t−s|^(2H)]"""
    _check_hurst(hurst)
    _check_times(s, t)
    twice = 2.0 * hurst
    return 0.5 * (t**twice + s**twice - abs(t - s) ** twice)


def _check_times(s, t):
    if s < 0 or t < 0:
        raise DomainError(f"times must be nonnegative, got s={s}, t={t}")


@dataclass(frozen=True)
class CovarianceKernel:
    """
    Evaluable covariance R(s, t) of a self-similar process

    ``tolerance`` is 0 for closed forms and an absolute quadrature error
    budget per unit of Var X(1) for SPDE traces.
    """

    spec: ProcessSpec
    cfg: quadrature.QuadratureConfig = field(default_factory=quadrature.QuadratureConfig)

    @property
    def alpha(self) -> float:
        """Self-similarity index"""
        return self.spec.alpha

    @property
    def closed_form(self) -> bool:
        """True when eval needs no quadrature"""
        return self.spec.kind in (ProcessKind.FBM, ProcessKind.BROWNIAN_MOTION)

    @cached_property
    def tolerance(self) -> float:
        """Absolute error budget of eval"""
        if self.spec.kind is ProcessKind.SPDE_TRACE:
            return 10.0 * self.cfg.rel_tol * max(1.0, self.variance_at_one())
        return 0.0

    def eval(self, s: float, t: float) -> float:
        """Cov[X(s), X(t)]; X(0) = 0"""
        _check_times(s, t)
        if s == 0 or t == 0:
            return 0.0
        kind = self.spec.kind
        if kind is ProcessKind.BROWNIAN_MOTION:
            return float(min(s, t))
        if kind is ProcessKind.FBM:
            return fbm_cov(self.spec.hurst, s, t)
        if kind is ProcessKind.SPDE_TRACE:
            earlier, later = min(s, t), max(s, t)
            return quadrature.spde_trace_cov(
                self.spec.d,
                self.spec.gamma,
                self.spec.beta,
                self.spec.nu,
                earlier,
                later - earlier,
                self.cfg,
            ).value
        return float(self.spec.covariance(s, t))

    def variance_at_one(self) -> float:
        """Var X(1)"""
        return self._variance

    @cached_property
    def _variance(self) -> float:
        return self.eval(1.0, 1.0)

    def gram(self, times: Sequence[float]) -> np.ndarray:
        """Gram matrix R(t_i, t_j), filled symmetrically"""
        times = [float(time) for time in times]
        size = len(times)
        matrix = np.empty((size, size))
        for i in range(size):
            for j in range(i, size):
                matrix[i, j] = matrix[j, i] = self.eval(times[i], times[j])
        return matrix


def make_kernel(spec: ProcessSpec, cfg: quadrature.QuadratureConfig = None) -> CovarianceKernel:
    """Builds the kernel for a spec, verifying the scaling law of custom kernels"""
    kernel = CovarianceKernel(spec, cfg or quadrature.QuadratureConfig())
    if spec.kind is ProcessKind.CUSTOM:
        verify_scaling(kernel)
    logger.debug("Kernel %s ready (alpha=%g)", spec.label, spec.alpha)
    return kernel


def default_scaling_grid() -> list:
    """Twenty (s, t) pairs spread over [0.1, 5]"""
    points = np.geomspace(0.1, 5.0, 5)
    return [(float(s), float(t)) for s in points for t in points[::-1][:4]]


def verify_scaling(
    kernel: CovarianceKernel,
    factors: Iterable[float] = SCALING_FACTORS,
    grid: Sequence = None,
) -> float:
    """
    Largest scaling-law defect |R(cs,ct) − c^(2α)R(s,t)| on a grid

    Raises DomainError when the defect exceeds the kernel tolerance
    (at least 1e-12 relative to the covariance scale).
    """
    grid = grid or default_scaling_grid()
    worst = 0.0
    for factor in factors:
        weight = factor ** (2.0 * kernel.alpha)
        for s, t in grid:
            base = kernel.eval(s, t)
            defect = abs(kernel.eval(factor * s, factor * t) - weight * base)
            allowed = max(kernel.tolerance, weight * kernel.tolerance) + 1e-12 * max(
                1.0, abs(weight * base)
            )
            if defect > allowed:
                raise DomainError(
                    f"kernel is not {kernel.alpha:g}-self-similar: defect {defect:.3g} "
                    f"at c={factor:g}, (s,t)=({s:g},{t:g})"
                )
            worst = max(worst, defect)
    return worst


######################################################################
#  L A M P E R T I   T R A N S F O R M
######################################################################


@dataclass(frozen=True)
class LampertiKernel:
    """Stationary covariance ρ(h) = e^(−αh)·R(e^h, 1) of the Lamperti process"""

    base: CovarianceKernel

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"{self.base.spec.label} is degenerate: Var X(1) = {self.variance}")

    @property
    def alpha(self) -> float:
        """Self-similarity index of the base process"""
        return self.base.alpha

    @property
    def variance(self) -> float:
        """ρ(0) = Var X(1)"""
        return self.base.variance_at_one()

    def rho(self, lag: float) -> float:
        """Stationary covariance at a log-time lag"""
        return lamperti_rho(self.base, lag)

    @cached_property
    def markov_rate(self) -> Optional[float]:
        """
        θ when ρ(h) = ρ(0)·e^(−θh), otherwise None

        Exponential correlation is exactly the Markov (Ornstein-Uhlenbeck)
        case, where crossings between grid points have a closed form.
        """
        if self.base.spec.kind is ProcessKind.SPDE_TRACE:
            return None
        values = self.rho_array(MARKOV_TEST_LAGS)
        if not np.all(values > 0):
            return None
        rates = -np.log(values[1:] / values[0]) / MARKOV_TEST_LAGS[1:]
        if np.ptp(rates) > MARKOV_RTOL * abs(rates[0]):
            return None
        return float(rates[0])

    def rho_array(self, lags: Sequence[float]) -> np.ndarray:
        """ρ on many lags; vectorized for closed-form kernels"""
        lags = np.asarray(lags, dtype=float)
        if np.any(lags < 0):
            raise DomainError("lags must be nonnegative")
        kind = self.base.spec.kind
        if kind is ProcessKind.BROWNIAN_MOTION:
            return np.exp(-0.5 * lags)
        if kind is ProcessKind.FBM:
            twice = 2.0 * self.alpha
            grown = np.exp(lags)
            return np.exp(-self.alpha * lags) * 0.5 * (
                grown**twice + 1.0 - np.power(grown - 1.0, twice)
            )
        return np.array([self.rho(lag) for lag in lags])


def lamperti_rho(base: CovarianceKernel, lag: float) -> float:
    """e^(−α·lag)·R(e^lag, 1)"""
    if lag < 0:
        raise DomainError(f"lag must be nonnegative, got {lag}")
    return math.exp(-base.alpha * lag) * base.eval(math.exp(lag), 1.0)
