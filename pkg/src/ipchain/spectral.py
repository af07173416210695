"""Bath spectral densities and their thermalized (two-sided) extension.

All frequencies and temperatures are measured in units of the spin tunnelling
element, so a Drude bath is fully described by ``eta`` and ``omega_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate

from .errors import AccuracyError, DomainError

# below |omega| < SINGULAR_FRACTION * omega_c the analytic omega -> 0 limit is used
SINGULAR_FRACTION = 1e-8


class DensityKind(str, Enum):
    DRUDE = "Drude"


@dataclass(frozen=True)
class SpectralDensityModel:
    """One-sided spectral density ``J(omega)`` for ``omega > 0``."""

    kind: DensityKind = DensityKind.DRUDE
    eta: float = 1.0
    omega_c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DensityKind(self.kind))
        if self.eta < 0:
            raise DomainError(f"coupling strength must be non-negative, got {self.eta}")
        if self.omega_c <= 0:
            raise DomainError(f"characteristic frequency must be positive, got {self.omega_c}")

    def __call__(self, omega):
        """Vectorised ``J(omega)``; no domain checking, odd in ``omega`` for Drude."""
        omega = np.asarray(omega, dtype=float)
        if self.kind is DensityKind.DRUDE:
            return self.eta * self.omega_c * omega / (self.omega_c**2 + omega**2)
        raise NotImplementedError(self.kind)  # pragma: no cover

    def small_omega_slope(self) -> float:
        """``lim J(omega)/omega`` as omega -> 0+."""
        if self.kind is DensityKind.DRUDE:
            return self.eta / self.omega_c
        raise NotImplementedError(self.kind)  # pragma: no cover


def default_omega_max(model: SpectralDensityModel, beta: float) -> float:
    temperature = 0.0 if math.isinf(beta) else 1.0 / beta
    return max(10.0 * model.omega_c, 10.0 * temperature + 5.0 * model.omega_c)


@dataclass(frozen=True)
class ThermalizedWeight:
    """Temperature-dependent coupling weight ``h^2(omega, beta) = J(omega, beta)``.

    At finite temperature the weight lives on ``[-omega_max, omega_max]``; at
    zero temperature (``beta = inf``) it is one-sided, ``[0, omega_max]``.
    """

    base: SpectralDensityModel
    beta: float = math.inf
    omega_max: float | None = field(default=None)

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"inverse temperature must be positive, got {self.beta}")
        if self.omega_max is None:
            object.__setattr__(self, "omega_max", default_omega_max(self.base, self.beta))
        elif self.omega_max <= 0:
            raise DomainError(f"omega_max must be positive, got {self.omega_max}")

    @classmethod
    def from_temperature(cls, base, temperature, omega_max=None):
        beta = math.inf if temperature == 0 else 1.0 / temperature
        return cls(base, beta, omega_max)

    @property
    def zero_temperature(self) -> bool:
        return math.isinf(self.beta)

    @property
    def domain(self) -> tuple[float, float]:
        lo = 0.0 if self.zero_temperature else -self.omega_max
        return lo, float(self.omega_max)

    def h2(self, omega):
        """Vectorised thermalized density, no domain checking."""
        omega = np.asarray(omega, dtype=float)
        j = np.sign(omega) * self.base(np.abs(omega))
        if self.zero_temperature:
            return np.where(omega > 0, j, 0.0)
        tiny = np.abs(omega) < SINGULAR_FRACTION * self.base.omega_c
        safe = np.where(tiny, 1.0, omega)
        with np.errstate(over="ignore"):
            # (1 + coth(x/2)) / 2 == 1 / (1 - exp(-x)) without the cancellation
            value = -np.where(tiny, 0.0, j) / np.expm1(-self.beta * safe)
        limit = self.base.small_omega_slope() / self.beta
        return np.where(tiny, limit, value)

    def h(self, omega):
        return np.sqrt(self.h2(omega))


def eval_density(model: SpectralDensityModel, omega: float) -> float:
    if not omega > 0:
        raise DomainError(f"spectral density is defined for omega > 0, got {omega}")
    if math.isinf(omega):
        return 0.0
    return float(model(omega))


def eval_thermalized(weight: ThermalizedWeight, omega: float) -> float:
    lo, hi = weight.domain
    if not lo <= omega <= hi:
        raise DomainError(f"omega={omega} outside the weight domain [{lo}, {hi}]")
    return float(weight.h2(omega))


def reorganization_energy(weight, tol: float = 1e-10) -> float:
    """``(4/pi) * integral_0^inf J(omega)/omega d omega``.

    Accepts a :class:`ThermalizedWeight` (its base density is used) or a bare
    :class:`SpectralDensityModel`.  The half line is mapped onto ``[0, 1)``
    with ``omega = omega_c x / (1 - x)``.
    """
    model = weight.base if isinstance(weight, ThermalizedWeight) else weight
    if model.eta == 0:
        return 0.0
    wc = model.omega_c

    def integrand(x):
        if x >= 1.0:
            return 0.0
        if x == 0.0:
            return model.small_omega_slope() * wc
        omega = wc * x / (1.0 - x)
        jacobian = wc / (1.0 - x) ** 2
        return float(model(omega)) / omega * jacobian

    value, abserr = integrate.quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
    if abserr > max(tol, tol * abs(value)) * 100:
        raise AccuracyError(f"reorganization-energy quadrature error {abserr:.2e} exceeds tolerance")
    return 4.0 / math.pi * value


@dataclass(frozen=True)
class FlatWeight:
    """Constant weight on a finite interval; the Legendre measure for ``[-1, 1]``."""

    lo: float = -1.0
    hi: float = 1.0
    level: float = 1.0

    @property
    def domain(self) -> tuple[float, float]:
        return self.lo, self.hi

    def h2(self, omega):
        return np.full_like(np.asarray(omega, dtype=float), self.level)
