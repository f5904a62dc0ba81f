"""Body force of the benchmark problem and the solution it manufactures.

With ``alpha = 0`` the forcing below is produced exactly by

    u*(t) = sin(t) * (pi sin(2 pi y) sin^2(pi x), -pi sin(2 pi x) sin^2(pi y))
    p*(t) = sin(t) * cos(pi x) sin(pi y)

for ``nu = 1`` (u* is divergence free, vanishes on the boundary and at t=0,
and p* has zero mean).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = np.pi

SpaceField = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class ForcingSpec:
    """Body force written as a sum of ``time_factor(t) * spatial_field(x, y)``."""

    terms: tuple[tuple[Callable[[float], float], SpaceField], ...]

    def __call__(self, t: float, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f1 = np.zeros(np.broadcast(x, y).shape)
        f2 = np.zeros_like(f1)
        for tf, g in self.terms:
            a = tf(t)
            g1, g2 = g(x, y)
            f1 = f1 + a * g1
            f2 = f2 + a * g2
        return f1, f2

    def f1(self, t, x, y):
        return self(t, x, y)[0]

    def f2(self, t, x, y):
        return self(t, x, y)[1]


def _cos_part(x, y):
    return (
        PI * np.sin(2 * PI * y) * np.sin(PI * x) * np.sin(PI * x),
        -PI * np.sin(2 * PI * x) * np.sin(PI * y) * np.sin(PI * y),
    )


def _sin_part(x, y):
    return (
        -2 * PI**3 * np.sin(2 * PI * y) * (2 * np.cos(2 * PI * x) - 1)
        - PI * np.sin(PI * x) * np.sin(PI * y),
        -2 * PI**3 * np.sin(2 * PI * x) * (1 - 2 * np.cos(2 * PI * y))
        + PI * np.cos(PI * x) * np.cos(PI * y),
    )


def benchmark_forcing() -> ForcingSpec:
    return ForcingSpec(terms=((np.cos, _cos_part), (np.sin, _sin_part)))


def zero_forcing() -> ForcingSpec:
    return ForcingSpec(terms=())


@dataclass(frozen=True)
class ManufacturedSolution:
    """Exact deterministic solution with a separable time factor ``sin(t)``."""

    def time_factor(self, t: float) -> float:
        return float(np.sin(t))

    def time_factor_integral(self, t: float) -> float:
        return float(1.0 - np.cos(t))

    @staticmethod
    def velocity_profile(x, y):
        return (
            PI * np.sin(2 * PI * y) * np.sin(PI * x) ** 2,
            -PI * np.sin(2 * PI * x) * np.sin(PI * y) ** 2,
        )

    @staticmethod
    def velocity_gradient_profile(x, y):
        """``(du1/dx, du1/dy, du2/dx, du2/dy)`` of the spatial profile."""
        return (
            PI**2 * np.sin(2 * PI * y) * np.sin(2 * PI * x),
            2 * PI**2 * np.cos(2 * PI * y) * np.sin(PI * x) ** 2,
            -2 * PI**2 * np.cos(2 * PI * x) * np.sin(PI * y) ** 2,
            -PI**2 * np.sin(2 * PI * x) * np.sin(2 * PI * y),
        )

    @staticmethod
    def pressure_profile(x, y):
        return np.cos(PI * x) * np.sin(PI * y)

    def velocity(self, t, x, y):
        a = self.time_factor(t)
        u1, u2 = self.velocity_profile(x, y)
        return a * u1, a * u2

    def pressure(self, t, x, y):
        return self.time_factor(t) * self.pressure_profile(x, y)

    def simulated_pressure(self, t, delta, x, y):
        """Difference quotient ``(P(t) - P(t - delta)) / delta`` of the time-integrated pressure."""
        a = (self.time_factor_integral(t) - self.time_factor_integral(t - delta)) / delta
        return a * self.pressure_profile(x, y)
