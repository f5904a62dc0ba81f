"""Fully discrete Milstein and Euler-Maruyama time stepping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import Operators, noise_rhs
from .linsolve import Factorization, build_system
from .stochastic import LinearNoise, NoiseModel

MILSTEIN = "milstein"
EULER_MARUYAMA = "euler-maruyama"
SCHEMES = (MILSTEIN, EULER_MARUYAMA)


@dataclass
class SchemeConfig:
    M: int
    nu: float = 1.0
    alpha: float = 0.5
    T: float = 1.0
    scheme: str = MILSTEIN
    u0: np.ndarray | None = None
    forcing: bool = True
    noise: NoiseModel | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"step count must be a positive integer, got {self.M}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        self.M = int(self.M)

    @property
    def k(self) -> float:
        return self.T / self.M

    def noise_model(self) -> NoiseModel:
        return self.noise if self.noise is not None else LinearNoise(self.alpha)


def make_factorization(ops: Operators, nu: float, k: float) -> Factorization:
    sys_ = build_system(ops.mass, ops.stiffness, ops.divergence, ops.spaces, nu, k, ops.pressure_mean)
    return Factorization(sys_)


@dataclass
class StepDiagnostics:
    """Running maxima of the structural checks over all steps seen."""

    max_div: float = 0.0
    max_mean_pressure: float = 0.0
    max_residual: float = 0.0

    def update(self, div: float, mean_p: float, res: float) -> None:
        self.max_div = max(self.max_div, div)
        self.max_mean_pressure = max(self.max_mean_pressure, mean_p)
        self.max_residual = max(self.max_residual, res)

    def merge(self, other: "StepDiagnostics") -> None:
        self.update(other.max_div, other.max_mean_pressure, other.max_residual)

    def as_dict(self) -> dict:
        return {
            "max_div_inf": self.max_div,
            "max_abs_pressure_integral": self.max_mean_pressure,
            "max_relative_residual": self.max_residual,
        }


def _step(u, dW, ops: Operators, fact: Factorization, t_next: float, model: NoiseModel,
          milstein: bool, forcing: bool, diagnostics: StepDiagnostics | None):
    k = fact.system.k
    rhs = ops.mass @ u + noise_rhs(ops.spaces, ops.mass, u, dW, k, model, milstein=milstein)
    if forcing and ops.forcing.terms:
        load = k * ops.load(t_next)
        rhs = rhs + (load[:, None] if rhs.ndim == 2 else load)
    b = fact.system.stack_rhs(rhs)
    x = fact.solve(b)
    u_next, p_next = fact.system.split(x)
    if diagnostics is not None:
        diagnostics.update(
            float(np.abs(ops.divergence @ u_next).max()),
            float(np.abs(ops.pressure_mean @ p_next).max()),
            float(np.max(fact.residual(x, b))),
        )
    return u_next, p_next


def milstein_step(u, dW, ops: Operators, fact: Factorization, t_next: float,
                  model: NoiseModel, forcing: bool = True, diagnostics: StepDiagnostics | None = None):
    """One step of the scheme: implicit Stokes drift, load at ``t_next``,
    explicit noise including the iterated-integral correction.

    Works on a single coefficient vector or an ``(n_vel, J)`` batch with
    ``dW`` of shape ``(J,)``.
    """
    return _step(u, dW, ops, fact, t_next, model, True, forcing, diagnostics)


def euler_maruyama_step(u, dW, ops: Operators, fact: Factorization, t_next: float,
                        model: NoiseModel, forcing: bool = True, diagnostics: StepDiagnostics | None = None):
    return _step(u, dW, ops, fact, t_next, model, False, forcing, diagnostics)


@dataclass
class Trajectory:
    times: np.ndarray
    velocity: np.ndarray  # (M+1, n_vel[, J])
    pressure: np.ndarray  # (M, n_press[, J]); pressure[n-1] is p^n
    k: float
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)

    @property
    def M(self) -> int:
        return self.pressure.shape[0]

    def time_averaged_pressure(self, m: int) -> np.ndarray:
        return time_averaged_pressure(self, m)


def run_trajectory(config: SchemeConfig, increments, ops: Operators, fact: Factorization | None = None,
                   check: bool = True) -> Trajectory:
    """Run ``config.M`` steps driven by ``increments`` (``(M,)`` or ``(M, J)``)."""
    increments = np.asarray(increments, dtype=float)
    if increments.shape[0] != config.M:
        raise ValueError(f"expected {config.M} increments, got {increments.shape[0]}")
    k = config.k
    if fact is None:
        fact = make_factorization(ops, config.nu, k)
    elif not (np.isclose(fact.system.k, k) and np.isclose(fact.system.nu, config.nu)):
        raise ValueError("factorization was built for a different step size or viscosity")
    model = config.noise_model()
    batch = increments.shape[1:]
    n_vel = ops.spaces.n_vel_dofs
    u = np.zeros((n_vel,) + batch)
    if config.u0 is not None:
        u = u + (config.u0 if config.u0.ndim == u.ndim else config.u0.reshape((n_vel,) + (1,) * len(batch)))
    vel = np.empty((config.M + 1, n_vel) + batch)
    press = np.empty((config.M, ops.spaces.n_press_dofs) + batch)
    vel[0] = u
    diag = StepDiagnostics() if check else None
    step = milstein_step if config.scheme == MILSTEIN else euler_maruyama_step
    for n in range(config.M):
        u, p = step(u, increments[n], ops, fact, (n + 1) * k, model, config.forcing, diag)
        vel[n + 1] = u
        press[n] = p
    return Trajectory(
        times=np.arange(config.M + 1) * k,
        velocity=vel,
        pressure=press,
        k=k,
        diagnostics=diag if diag is not None else StepDiagnostics(),
    )


def time_averaged_pressure(traj: Trajectory, m: int) -> np.ndarray:
    """``k * sum_{n<=m} p^n``: discrete counterpart of the time-integrated pressure."""
    if not 1 <= m <= traj.M:
        raise ValueError(f"m must lie in [1, {traj.M}], got {m}")
    return traj.k * traj.pressure[:m].sum(axis=0)


def simulated_pressure(traj: Trajectory, m: int) -> np.ndarray:
    """Difference quotient of consecutive time-averaged pressures."""
    prev = time_averaged_pressure(traj, m - 1) if m > 1 else 0.0
    return (time_averaged_pressure(traj, m) - prev) / traj.k
