"""Discrete space-time error norms, Monte Carlo aggregation and orders.

Per sample ``j`` the three raw quantities are

* ``max_n |u_a^n - u_b^n|_{L2}^2``            (velocity, max in time)
* ``k sum_n |u_a^n - u_b^n|_{H1}^2``          (velocity, summed in time)
* ``k sum_n |p_a^n - p_b^n|_{L2}``            (pressure, summed in time)

and the reported errors are root-means over samples for the first two and
a plain mean for the pressure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .femspace import MixedSpaces, point_evaluator, quadrature
from .problem import ManufacturedSolution


def l2_norm(coeffs: np.ndarray, M) -> float | np.ndarray:
    return np.sqrt(np.maximum(np.einsum("i...,i...->...", coeffs, M @ coeffs), 0.0))


def h1_norm(coeffs: np.ndarray, M, A) -> float | np.ndarray:
    """Full H1 norm: L2 part plus gradient part."""
    q = np.einsum("i...,i...->...", coeffs, M @ coeffs) + np.einsum("i...,i...->...", coeffs, A @ coeffs)
    return np.sqrt(np.maximum(q, 0.0))


def _quad_form(v, Q):
    return np.maximum(np.einsum("i...,i...->...", v, Q @ v), 0.0)


class SameMeshNorms:
    """Norms of differences between two solutions on the same mesh."""

    def __init__(self, mass, stiffness, pressure_mass):
        self.mass, self.stiffness, self.pressure_mass = mass, stiffness, pressure_mass

    @classmethod
    def from_operators(cls, ops) -> "SameMeshNorms":
        return cls(ops.mass, ops.stiffness, ops.pressure_mass)

    def __call__(self, ua, pa, ub, pb):
        du = ua - ub
        l2sq = _quad_form(du, self.mass)
        h1sq = l2sq + _quad_form(du, self.stiffness)
        pl2 = np.sqrt(_quad_form(pa - pb, self.pressure_mass))
        return l2sq, h1sq, pl2


class _QuadratureNorms:
    def _velocity_terms(self, va, vb):
        d = [a - b for a, b in zip(va, vb)]
        w = self.weights[:, None] if d[0].ndim == 2 else self.weights
        l2sq = (w * (d[0] ** 2 + d[1] ** 2)).sum(axis=0)
        gsq = (w * (d[2] ** 2 + d[3] ** 2 + d[4] ** 2 + d[5] ** 2)).sum(axis=0)
        return l2sq, l2sq + gsq

    def _pressure_term(self, pa, pb):
        d = pa - pb
        w = self.weights[:, None] if d.ndim == 2 else self.weights
        return np.sqrt((w * d * d).sum(axis=0))


class CrossMeshNorms(_QuadratureNorms):
    """Norms of ``a - b`` with ``a`` on a coarse mesh and ``b`` on a nested
    refinement.  Integration runs over the fine triangles, on each of which
    the coarse field is a single polynomial, so degree-6 quadrature is exact.
    """

    def __init__(self, coarse: MixedSpaces, fine: MixedSpaces, degree: int = 6):
        if fine.mesh.n % coarse.mesh.n != 0:
            raise ValueError("fine mesh must be a uniform refinement of the coarse mesh")
        rule = quadrature(degree)
        q = rule.weights.shape[0]
        pts = fine.quadrature_points(rule).reshape(-1, 2)
        cent = fine.mesh.nodes[fine.mesh.triangles].mean(axis=1)
        parent, _ = coarse.mesh.locate(cent)
        ptri = np.repeat(parent, q)
        cbary = coarse.mesh.barycentric(ptri, pts)
        ftri = np.repeat(np.arange(fine.mesh.n_triangles), q)
        fbary = np.tile(rule.points, (fine.mesh.n_triangles, 1))
        self.coarse_eval = point_evaluator(coarse, ptri, cbary)
        self.fine_eval = point_evaluator(fine, ftri, fbary)
        self.weights = (fine.areas[:, None] * rule.weights[None, :]).ravel()

    def __call__(self, ua, pa, ub, pb):
        l2sq, h1sq = self._velocity_terms(self.coarse_eval.velocity(ua), self.fine_eval.velocity(ub))
        return l2sq, h1sq, self._pressure_term(self.coarse_eval.pressure(pa), self.fine_eval.pressure(pb))


class ExactNorms(_QuadratureNorms):
    """Norms of the error against the manufactured solution.

    Velocities are compared at ``t``; the discrete pressure at step ``n`` is
    compared with the exact difference quotient of the time-integrated
    pressure over ``[t - k, t]``.
    """

    def __init__(self, spaces: MixedSpaces, solution: ManufacturedSolution | None = None, degree: int = 10):
        self.solution = solution or ManufacturedSolution()
        rule = quadrature(degree)
        q = rule.weights.shape[0]
        T = spaces.mesh.n_triangles
        pts = spaces.quadrature_points(rule).reshape(-1, 2)
        self.evaluator = point_evaluator(spaces, np.repeat(np.arange(T), q), np.tile(rule.points, (T, 1)))
        self.weights = (spaces.areas[:, None] * rule.weights[None, :]).ravel()
        x, y = pts[:, 0], pts[:, 1]
        s = self.solution
        self._vel = s.velocity_profile(x, y) + s.velocity_gradient_profile(x, y)
        self._press = s.pressure_profile(x, y)

    def __call__(self, u, p, t: float, k: float):
        a = self.solution.time_factor(t)
        b = (self.solution.time_factor_integral(t) - self.solution.time_factor_integral(t - k)) / k
        ref = [a * v for v in self._vel]
        vals = self.evaluator.velocity(u)
        if vals[0].ndim == 2:
            ref = [r[:, None] for r in ref]
        l2sq, h1sq = self._velocity_terms(vals, ref)
        pref = b * self._press
        ph = self.evaluator.pressure(p)
        return l2sq, h1sq, self._pressure_term(ph, pref[:, None] if ph.ndim == 2 else pref)


class ErrorAccumulator:
    """Streams per-step differences into the three per-sample raw errors."""

    def __init__(self, k: float, shape=()):
        self.k = float(k)
        self.max_l2sq = np.zeros(shape)
        self.sum_h1sq = np.zeros(shape)
        self.sum_pl2 = np.zeros(shape)
        self.steps = 0

    def add(self, l2sq, h1sq, pl2) -> None:
        self.max_l2sq = np.maximum(self.max_l2sq, l2sq)
        self.sum_h1sq = self.sum_h1sq + h1sq
        self.sum_pl2 = self.sum_pl2 + pl2
        self.steps += 1

    def samples(self) -> "SampleErrors":
        return SampleErrors(
            linf_l2_sq=np.atleast_1d(self.max_l2sq),
            l2_h1_sq=np.atleast_1d(self.k * self.sum_h1sq),
            press_l1_l2=np.atleast_1d(self.k * self.sum_pl2),
        )


@dataclass
class SampleErrors:
    """Per-sample raw values (see module docstring)."""

    linf_l2_sq: np.ndarray
    l2_h1_sq: np.ndarray
    press_l1_l2: np.ndarray

    @staticmethod
    def concatenate(parts) -> "SampleErrors":
        parts = list(parts)
        return SampleErrors(
            np.concatenate([p.linf_l2_sq for p in parts]),
            np.concatenate([p.l2_h1_sq for p in parts]),
            np.concatenate([p.press_l1_l2 for p in parts]),
        )

    def report(self) -> "ErrorReport":
        return ErrorReport.from_samples(self)


def _rms_with_se(x: np.ndarray) -> tuple[float, float]:
    J = x.shape[0]
    m = float(np.mean(x))
    val = float(np.sqrt(m))
    if J < 2 or val == 0.0:
        return val, float("nan") if J < 2 else 0.0
    se_mean = float(np.std(x, ddof=1)) / float(np.sqrt(J))
    return val, se_mean / (2.0 * val)


def _mean_with_se(x: np.ndarray) -> tuple[float, float]:
    J = x.shape[0]
    m = float(np.mean(x))
    if J < 2:
        return m, float("nan")
    return m, float(np.std(x, ddof=1)) / float(np.sqrt(J))


@dataclass
class ErrorReport:
    err_LinfL2: float
    err_L2H1: float
    err_pressL1L2: float
    se_LinfL2: float
    se_L2H1: float
    se_pressL1L2: float
    samples: SampleErrors

    @classmethod
    def from_samples(cls, s: SampleErrors) -> "ErrorReport":
        a, sa = _rms_with_se(s.linf_l2_sq)
        b, sb = _rms_with_se(s.l2_h1_sq)
        c, sc = _mean_with_se(s.press_l1_l2)
        return cls(a, b, c, sa, sb, sc, s)

    def triple(self) -> tuple[float, float, float]:
        return self.err_L2H1, self.err_LinfL2, self.err_pressL1L2


def path_errors(traj_a, traj_b, stride: int, norms, pressure_alignment: str = "pointwise") -> SampleErrors:
    """Errors of ``traj_a`` against ``traj_b`` which takes ``stride`` steps per
    step of ``traj_a``.

    Velocities are compared at the coarse time points.  The reference
    pressure for coarse step ``n`` is the one at the same time point
    (``"pointwise"``) or the mean of the ``stride`` reference pressures inside
    the step (``"average"``).  ``norms`` is a :class:`SameMeshNorms` or
    :class:`CrossMeshNorms`.
    """
    if pressure_alignment not in ("pointwise", "average"):
        raise ValueError(f"unknown pressure alignment {pressure_alignment!r}")
    if stride < 1 or traj_b.M != stride * traj_a.M:
        raise ValueError(f"reference has {traj_b.M} steps, expected {stride} x {traj_a.M}")
    if not np.isclose(traj_a.k, stride * traj_b.k):
        raise ValueError("time grids are not nested")
    acc = ErrorAccumulator(traj_a.k, traj_a.velocity.shape[2:])
    for n in range(1, traj_a.M + 1):
        ub = traj_b.velocity[stride * n]
        if pressure_alignment == "pointwise":
            pb = traj_b.pressure[stride * n - 1]
        else:
            pb = traj_b.pressure[stride * (n - 1) : stride * n].mean(axis=0)
        acc.add(*norms(traj_a.velocity[n], traj_a.pressure[n - 1], ub, pb))
    return acc.samples()


def convergence_order(e_coarse: float, e_fine: float) -> float:
    """Observed order for a halving of the resolution."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError(f"errors must be positive, got {e_coarse}, {e_fine}")
    return float(np.log2(e_coarse / e_fine))
