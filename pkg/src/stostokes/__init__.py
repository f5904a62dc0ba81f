"""Milstein / MINI-element solver for the stochastic Stokes equations."""

__version__ = "0.1.0"

from .mesh import Mesh, build_uniform_mesh
from .femspace import MixedSpaces, QuadratureRule, build_mini_spaces, interpolate_velocity, quadrature
from .assembly import (
    Operators,
    assemble_divergence,
    assemble_load,
    assemble_mass,
    assemble_operators,
    assemble_stiffness,
    noise_rhs,
)
from .linsolve import Factorization, SaddleSystem, build_system, factorize, solve_step
from .stochastic import LinearNoise, NoiseModel, WienerPath, coarse_increments, generate_path, milstein_weight
from .stepper import (
    SchemeConfig,
    Trajectory,
    euler_maruyama_step,
    milstein_step,
    run_trajectory,
    time_averaged_pressure,
)
from .errors import ErrorReport, convergence_order, h1_norm, l2_norm, path_errors
