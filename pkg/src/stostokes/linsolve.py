"""Per-step saddle-point system, factorised once and reused.

Unknown ordering: free velocity DOFs, pressure DOFs, one Lagrange
multiplier enforcing a zero-mean pressure::

    [ M + nu k A   k B^T   0 ] [u]   [r]
    [ B            0       c ] [p] = [0]
    [ 0            c^T     0 ] [l]   [0]

Homogeneous Dirichlet DOFs are removed from the system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .femspace import MixedSpaces

RESIDUAL_TOL = 1e-10


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    matrix: sp.csc_matrix
    free_dofs: np.ndarray
    n_vel_dofs: int
    n_press_dofs: int
    nu: float
    k: float

    @property
    def n_free(self) -> int:
        return self.free_dofs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def stack_rhs(self, momentum: np.ndarray) -> np.ndarray:
        """Embed a full-length momentum right-hand side (``(n_vel,)`` or
        ``(n_vel, J)``) into the system's unknown layout."""
        r = momentum[self.free_dofs]
        tail = np.zeros((self.n_press_dofs + 1,) + r.shape[1:])
        return np.concatenate([r, tail], axis=0)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full-length velocity (zeros on the boundary) and pressure."""
        nf = self.n_free
        u = np.zeros((self.n_vel_dofs,) + x.shape[1:])
        u[self.free_dofs] = x[:nf]
        return u, x[nf : nf + self.n_press_dofs]

    def pack(self, u: np.ndarray, p: np.ndarray, lam=0.0) -> np.ndarray:
        lam = np.zeros((1,) + np.shape(p)[1:]) + lam
        return np.concatenate([u[self.free_dofs], p, lam], axis=0)


def build_system(M, A, B, spaces: MixedSpaces, nu: float, k: float, c: np.ndarray | None = None) -> SaddleSystem:
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    if not k > 0:
        raise ValueError(f"time step must be positive, got {k}")
    if c is None:
        from .assembly import pressure_mean_vector

        c = pressure_mean_vector(spaces)
    free = spaces.free_dofs
    K = (M + nu * k * A).tocsr()[free][:, free]
    Bf = B.tocsc()[:, free]
    cc = sp.csr_matrix(np.asarray(c, dtype=float).reshape(-1, 1))
    mat = sp.bmat(
        [
            [K, k * Bf.T, None],
            [Bf, None, cc],
            [None, cc.T, None],
        ],
        format="csc",
    )
    return SaddleSystem(
        matrix=mat,
        free_dofs=free,
        n_vel_dofs=spaces.n_vel_dofs,
        n_press_dofs=spaces.n_press_dofs,
        nu=float(nu),
        k=float(k),
    )


class Factorization:
    """Sparse LU of a :class:`SaddleSystem`.  Read-only after construction."""

    def __init__(self, system: SaddleSystem):
        self.system = system
        # Symmetric-pattern ordering with relaxed diagonal pivoting keeps fill
        # low for the zero pressure block; plain partial pivoting is the fallback.
        try:
            self._lu = splu(system.matrix, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01)
        except RuntimeError:
            try:
                self._lu = splu(system.matrix, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularSystemError(_describe_singularity(system.matrix, exc)) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.system.shape[0]:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, system has {self.system.shape[0]}")
        return self._lu.solve(rhs)

    def residual(self, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Relative residual ``|Kx - b|_inf / (1 + |b|_inf)`` per column."""
        r = self.system.matrix @ x - rhs
        return np.abs(r).max(axis=0) / (1.0 + np.abs(rhs).max(axis=0))


def _describe_singularity(mat: sp.spmatrix, exc: Exception) -> str:
    csc = mat.tocsc()
    empty_cols = np.flatnonzero(np.diff(csc.indptr) == 0)
    csr = mat.tocsr()
    empty_rows = np.flatnonzero(np.diff(csr.indptr) == 0)
    where = []
    if empty_rows.size:
        where.append(f"empty rows {empty_rows[:5].tolist()}")
    if empty_cols.size:
        where.append(f"empty columns {empty_cols[:5].tolist()}")
    detail = "; ".join(where) if where else f"pivot failure reported by SuperLU: {exc}"
    return f"saddle-point system of size {mat.shape[0]} is singular ({detail})"


def factorize(system: SaddleSystem) -> Factorization:
    return Factorization(system)


def solve_step(fact: Factorization, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve one stacked system and return full velocity and pressure."""
    return fact.system.split(fact.solve(rhs))
