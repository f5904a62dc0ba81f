"""MINI velocity/pressure spaces: DOF maps, basis functions and quadrature.

Velocity coefficients are laid out component-blocked: for component ``c``
the scalar MINI DOFs are ``[vertices..., bubbles...]`` so that global index
is ``c * (N + T) + s``.  Pressure DOFs are the mesh nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh

MAX_QUADRATURE_DEGREE = 20


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points and weights normalised to sum to one."""

    degree: int
    points: np.ndarray  # (q, 3)
    weights: np.ndarray  # (q,)

    def xy(self) -> np.ndarray:
        """Points on the reference triangle (0,0), (1,0), (0,1)."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def quadrature(degree: int) -> QuadratureRule:
    """Collapsed (Stroud conical product) Gauss rule exact to ``degree``.

    Gauss-Jacobi(1, 0) in the collapsed direction absorbs the Duffy
    Jacobian, so ``m`` points per direction integrate total degree
    ``2m - 1`` exactly.  All weights are positive.
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"quadrature degree must be an integer in [1, {MAX_QUADRATURE_DEGREE}], got {degree!r}"
        )
    m = (int(degree) + 2) // 2
    a, wa = roots_jacobi(m, 1.0, 0.0)
    b, wb = roots_legendre(m)
    y = 0.5 * (1.0 + a)
    s = 0.5 * (1.0 + b)
    Y, S = np.meshgrid(y, s, indexing="ij")
    X = (1.0 - Y) * S
    W = np.outer(wa / 4.0, wb / 2.0) * 2.0  # reference area 1/2 -> normalised
    X, Y, W = X.ravel(), Y.ravel(), W.ravel()
    points = np.column_stack([1.0 - X - Y, X, Y])
    points.setflags(write=False)
    W.setflags(write=False)
    return QuadratureRule(degree=int(degree), points=points, weights=W)


def basis_values(bary: np.ndarray) -> np.ndarray:
    """Scalar MINI basis at barycentric points: three hats then the bubble."""
    bary = np.asarray(bary, dtype=float)
    bubble = 27.0 * bary[..., 0] * bary[..., 1] * bary[..., 2]
    return np.concatenate([bary, bubble[..., None]], axis=-1)


def basis_gradients(bary: np.ndarray, grad_lambda: np.ndarray) -> np.ndarray:
    """Gradients of the scalar MINI basis.

    ``bary`` is ``(q, 3)`` shared by all triangles, or ``(T, q, 3)``;
    ``grad_lambda`` is ``(T, 3, 2)``.  Returns ``(T, q, 4, 2)``.
    """
    bary = np.asarray(bary, dtype=float)
    if bary.ndim == 2:
        bary = np.broadcast_to(bary, (grad_lambda.shape[0],) + bary.shape)
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    g = grad_lambda[:, None, :, :]  # (T, 1, 3, 2)
    gb = 27.0 * (
        (l1 * l2)[..., None] * g[:, :, 0]
        + (l0 * l2)[..., None] * g[:, :, 1]
        + (l0 * l1)[..., None] * g[:, :, 2]
    )
    gv = np.broadcast_to(g, bary.shape[:2] + (3, 2))
    return np.concatenate([gv, gb[:, :, None, :]], axis=2)


def triangle_geometry(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Areas ``(T,)`` and barycentric gradients ``(T, 3, 2)`` for ``(T, 3, 2)`` vertices."""
    v = np.asarray(vertices, dtype=float)
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    g0 = -(g1 + g2)
    return 0.5 * det, np.stack([g0, g1, g2], axis=1)


@dataclass(frozen=True, eq=False)
class MixedSpaces:
    mesh: Mesh
    vel_dof_map: np.ndarray  # (T, 4, 2)
    press_dof_map: np.ndarray  # (T, 3)
    dirichlet_dofs: np.ndarray
    free_dofs: np.ndarray
    areas: np.ndarray
    grad_lambda: np.ndarray

    @property
    def n_scalar(self) -> int:
        return self.mesh.n_nodes + self.mesh.n_triangles

    @property
    def n_vel_dofs(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_press_dofs(self) -> int:
        return self.mesh.n_nodes

    def scalar_dof_map(self) -> np.ndarray:
        """(T, 4) scalar DOFs: vertex nodes then the triangle's bubble."""
        return self.vel_dof_map[:, :, 0]

    def quadrature_points(self, rule: QuadratureRule) -> np.ndarray:
        """Physical quadrature points, shape ``(T, q, 2)``."""
        v = self.mesh.nodes[self.mesh.triangles]
        return np.einsum("qi,tid->tqd", rule.points, v)


def build_mini_spaces(mesh: Mesh) -> MixedSpaces:
    N, T = mesh.n_nodes, mesh.n_triangles
    scalar = np.concatenate(
        [mesh.triangles, (N + np.arange(T))[:, None]], axis=1
    )
    vel = np.stack([scalar, scalar + (N + T)], axis=2)
    bnodes = np.flatnonzero(mesh.boundary)
    dirichlet = np.concatenate([bnodes, bnodes + (N + T)])
    free = np.setdiff1d(np.arange(2 * (N + T)), dirichlet)
    areas, grads = triangle_geometry(mesh.nodes[mesh.triangles])
    for arr in (vel, dirichlet, free, areas, grads):
        arr.setflags(write=False)
    return MixedSpaces(
        mesh=mesh,
        vel_dof_map=vel,
        press_dof_map=mesh.triangles,
        dirichlet_dofs=dirichlet,
        free_dofs=free,
        areas=areas,
        grad_lambda=grads,
    )


def interpolate_velocity(
    f: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    spaces: MixedSpaces,
) -> np.ndarray:
    """Nodal interpolant plus the bubble that matches ``f`` at each centroid."""
    mesh = spaces.mesh
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    fv = np.asarray(np.broadcast_arrays(*f(x, y)), dtype=float)  # (2, N)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    fc = np.asarray(np.broadcast_arrays(*f(cent[:, 0], cent[:, 1])), dtype=float)
    p1_at_centroid = fv[:, mesh.triangles].mean(axis=2)
    coeffs = np.concatenate([fv, fc - p1_at_centroid], axis=1)  # (2, N+T)
    return coeffs.ravel()


def interpolate_pressure(f: Callable[[np.ndarray, np.ndarray], np.ndarray], spaces: MixedSpaces) -> np.ndarray:
    x, y = spaces.mesh.nodes[:, 0], spaces.mesh.nodes[:, 1]
    return np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy()


@dataclass(frozen=True, eq=False)
class PointEvaluator:
    """Sparse maps from scalar coefficients to values/gradients at fixed points.

    ``values`` acts on scalar MINI coefficients (length N+T); ``p1_values``
    on nodal P1 coefficients (pressure).
    """

    values: sp.csr_matrix
    grad_x: sp.csr_matrix
    grad_y: sp.csr_matrix
    p1_values: sp.csr_matrix
    n_scalar: int

    def velocity(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Components and gradients ``(ux, uy, ux_x, ux_y, uy_x, uy_y)`` at the points."""
        ns = self.n_scalar
        ux, uy = u[:ns], u[ns : 2 * ns]
        return (
            self.values @ ux,
            self.values @ uy,
            self.grad_x @ ux,
            self.grad_y @ ux,
            self.grad_x @ uy,
            self.grad_y @ uy,
        )

    def pressure(self, p: np.ndarray) -> np.ndarray:
        return self.p1_values @ p


def point_evaluator(spaces: MixedSpaces, tri: np.ndarray, bary: np.ndarray) -> PointEvaluator:
    """Evaluation operator for points given by containing triangle and barycentrics."""
    tri = np.asarray(tri, dtype=np.int64)
    bary = np.asarray(bary, dtype=float)
    P = tri.shape[0]
    vals = basis_values(bary)  # (P, 4)
    grads = basis_gradients(bary[:, None, :], spaces.grad_lambda[tri])[:, 0]  # (P, 4, 2)
    cols = spaces.scalar_dof_map()[tri]  # (P, 4)
    rows = np.repeat(np.arange(P), 4)
    shape = (P, spaces.n_scalar)

    def mat(data):
        return sp.csr_matrix((data.ravel(), (rows, cols.ravel())), shape=shape)

    p1 = sp.csr_matrix(
        (bary.ravel(), (np.repeat(np.arange(P), 3), spaces.press_dof_map[tri].ravel())),
        shape=(P, spaces.n_press_dofs),
    )
    return PointEvaluator(
        values=mat(vals),
        grad_x=mat(grads[..., 0]),
        grad_y=mat(grads[..., 1]),
        p1_values=p1,
        n_scalar=spaces.n_scalar,
    )
