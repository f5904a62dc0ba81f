"""Sparse operators and right-hand sides for the MINI discretisation.

Operators are returned as ``scipy.sparse.csr_matrix`` on the full DOF sets;
boundary conditions are applied later by the saddle-point builder.  Sign
convention for the divergence: ``B[q, j] = -(psi_q, div phi_j)`` so that the
momentum equation carries ``+k B^T p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .femspace import (
    MixedSpaces,
    basis_gradients,
    basis_values,
    quadrature,
    triangle_geometry,
)
from .problem import ForcingSpec, benchmark_forcing
from .stochastic import NoiseModel, milstein_weight

ASSEMBLY_DEGREE = 6


def _element_blocks(areas: np.ndarray, grad_lambda: np.ndarray, degree: int = ASSEMBLY_DEGREE):
    rule = quadrature(degree)
    w = rule.weights
    phi = basis_values(rule.points)  # (q, 4)
    dphi = basis_gradients(rule.points, grad_lambda)  # (T, q, 4, 2)
    mass = areas[:, None, None] * np.einsum("q,qa,qb->ab", w, phi, phi)[None]
    stiff = areas[:, None, None] * np.einsum("q,tqad,tqbd->tab", w, dphi, dphi)
    div = -areas[:, None, None, None] * np.einsum("q,qi,tqad->tiad", w, rule.points, dphi)
    # exact symmetry of the element blocks makes the assembled matrices
    # bitwise symmetric (duplicates are summed in the same element order)
    mass = 0.5 * (mass + mass.transpose(0, 2, 1))
    stiff = 0.5 * (stiff + stiff.transpose(0, 2, 1))
    return mass, stiff, div


def element_matrices(vertices: np.ndarray, degree: int = ASSEMBLY_DEGREE):
    """Scalar mass ``(4,4)``, scalar stiffness ``(4,4)`` and divergence ``(3,4,2)``
    blocks of a single triangle.  Local order: three vertices, then bubble."""
    areas, grads = triangle_geometry(np.asarray(vertices, dtype=float)[None])
    mass, stiff, div = _element_blocks(areas, grads, degree)
    return mass[0], stiff[0], div[0]


def _vector_operator(spaces: MixedSpaces, blocks: np.ndarray) -> sp.csr_matrix:
    dofs = spaces.scalar_dof_map()
    ns = spaces.n_scalar
    rows = np.broadcast_to(dofs[:, :, None], blocks.shape)
    cols = np.broadcast_to(dofs[:, None, :], blocks.shape)
    r = np.concatenate([rows.ravel(), rows.ravel() + ns])
    c = np.concatenate([cols.ravel(), cols.ravel() + ns])
    v = np.concatenate([blocks.ravel(), blocks.ravel()])
    n = 2 * ns
    return sp.csr_matrix((v, (r, c)), shape=(n, n))


def assemble_mass(spaces: MixedSpaces) -> sp.csr_matrix:
    mass, _, _ = _element_blocks(spaces.areas, spaces.grad_lambda)
    return _vector_operator(spaces, mass)


def assemble_stiffness(spaces: MixedSpaces) -> sp.csr_matrix:
    _, stiff, _ = _element_blocks(spaces.areas, spaces.grad_lambda)
    return _vector_operator(spaces, stiff)


def assemble_divergence(spaces: MixedSpaces) -> sp.csr_matrix:
    """``(n_press, n_vel)`` matrix with ``(B u)_q = -(psi_q, div u)``."""
    _, _, div = _element_blocks(spaces.areas, spaces.grad_lambda)
    T = div.shape[0]
    prow = spaces.press_dof_map[:, :, None, None]
    vcol = spaces.vel_dof_map[:, None, :, :]  # (T, 1, 4, 2)
    rows = np.broadcast_to(prow, (T, 3, 4, 2))
    cols = np.broadcast_to(vcol, (T, 3, 4, 2))
    return sp.csr_matrix(
        (div.ravel(), (rows.ravel(), cols.ravel())),
        shape=(spaces.n_press_dofs, spaces.n_vel_dofs),
    )


def assemble_pressure_mass(spaces: MixedSpaces) -> sp.csr_matrix:
    """P1 mass matrix on the pressure space (for L2 norms of pressures)."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    blocks = spaces.areas[:, None, None] * local[None]
    dofs = spaces.press_dof_map
    rows = np.broadcast_to(dofs[:, :, None], blocks.shape)
    cols = np.broadcast_to(dofs[:, None, :], blocks.shape)
    n = spaces.n_press_dofs
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))


def pressure_mean_vector(spaces: MixedSpaces) -> np.ndarray:
    """``c_i = integral of psi_i`` so that ``c @ p`` is the integral of p_h."""
    c = np.zeros(spaces.n_press_dofs)
    np.add.at(c, spaces.press_dof_map.ravel(), np.repeat(spaces.areas / 3.0, 3))
    return c


def _load_from_field(spaces: MixedSpaces, field_fn, degree: int) -> np.ndarray:
    rule = quadrature(degree)
    pts = spaces.quadrature_points(rule)  # (T, q, 2)
    f1, f2 = field_fn(pts[..., 0], pts[..., 1])
    phi = basis_values(rule.points)  # (q, 4)
    scale = spaces.areas[:, None] * rule.weights[None, :]
    b = np.zeros(spaces.n_vel_dofs)
    dofs = spaces.scalar_dof_map()
    ns = spaces.n_scalar
    for comp, fc in enumerate((f1, f2)):
        local = np.einsum("tq,qa->ta", np.broadcast_to(fc, scale.shape) * scale, phi)
        np.add.at(b, dofs.ravel() + comp * ns, local.ravel())
    return b


def assemble_load(spaces: MixedSpaces, t: float, forcing: ForcingSpec | None = None, degree: int = ASSEMBLY_DEGREE) -> np.ndarray:
    """Load vector ``(f(t), phi_i)`` by quadrature of the given degree."""
    forcing = benchmark_forcing() if forcing is None else forcing
    return _load_from_field(spaces, lambda x, y: forcing(t, x, y), degree)


def noise_rhs(
    spaces: MixedSpaces,
    M: sp.spmatrix,
    u: np.ndarray,
    dW,
    k: float,
    model: NoiseModel,
    milstein: bool = True,
) -> np.ndarray:
    """``M (G(u) dW + DG(u)G(u) ((dW)^2 - k)/2)``; the second term is dropped
    when ``milstein`` is false (Euler-Maruyama).

    ``u`` may be a batch ``(n_vel, J)`` with ``dW`` of shape ``(J,)``.
    """
    if u.shape[0] != spaces.n_vel_dofs:
        raise ValueError("velocity vector does not match the space")
    dW = np.asarray(dW, dtype=float)
    field = model.G(u) * dW
    if milstein:
        field = field + model.DGG(u) * milstein_weight(dW, k)
    return M @ field


@dataclass(eq=False)
class Operators:
    """Everything that stays fixed across steps and samples for one mesh."""

    spaces: MixedSpaces
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    divergence: sp.csr_matrix
    pressure_mass: sp.csr_matrix
    pressure_mean: np.ndarray
    forcing: ForcingSpec
    load_terms: list = field(default_factory=list)

    def load(self, t: float) -> np.ndarray:
        out = np.zeros(self.spaces.n_vel_dofs)
        for (tf, _), vec in zip(self.forcing.terms, self.load_terms):
            out = out + tf(t) * vec
        return out


def assemble_operators(spaces: MixedSpaces, forcing: ForcingSpec | None = None) -> Operators:
    forcing = benchmark_forcing() if forcing is None else forcing
    terms = [_load_from_field(spaces, g, ASSEMBLY_DEGREE) for _, g in forcing.terms]
    return Operators(
        spaces=spaces,
        mass=assemble_mass(spaces),
        stiffness=assemble_stiffness(spaces),
        divergence=assemble_divergence(spaces),
        pressure_mass=assemble_pressure_mass(spaces),
        pressure_mean=pressure_mean_vector(spaces),
        forcing=forcing,
        load_terms=terms,
    )
