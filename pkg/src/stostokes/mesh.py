"""Structured triangulations of the unit square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform triangulation of (0,1)^2 with ``n`` cells per side.

    Nodes are numbered lexicographically by (row, column), i.e. node
    ``j*(n+1) + i`` sits at ``(i/n, j/n)``.  Cell ``(i, j)`` contributes
    triangles ``2*(j*n+i)`` (below the diagonal) and ``2*(j*n+i)+1``.
    """

    n: int
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counter-clockwise
    boundary: np.ndarray  # (N,) bool

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def boundary_node(self, i: int) -> bool:
        return bool(self.boundary[i])

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return containing triangle and barycentric coordinates for ``points``.

        Points on shared edges are assigned to either neighbour; the
        barycentric coordinates are consistent with whichever is chosen.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        n = self.n
        s = pts * n
        cell = np.clip(np.floor(s).astype(np.int64), 0, n - 1)
        local = s - cell
        upper = local[:, 1] > local[:, 0]
        tri = 2 * (cell[:, 1] * n + cell[:, 0]) + upper.astype(np.int64)
        return tri, self.barycentric(tri, pts)

    def barycentric(self, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
        p = self.nodes[self.triangles[tri]]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        r = points - p[:, 0]
        l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
        return np.column_stack([1.0 - l1 - l2, l1, l2])


def build_uniform_mesh(n: int) -> Mesh:
    """Split each of the ``n*n`` cells along its lower-left/upper-right diagonal."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"mesh subdivision count must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)  # row index = y
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = (j * (n + 1) + i).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([a, c, d])

    idx = np.arange((n + 1) ** 2)
    row, col = np.divmod(idx, n + 1)
    boundary = (row == 0) | (row == n) | (col == 0) | (col == n)
    for arr in (nodes, triangles, boundary):
        arr.setflags(write=False)
    return Mesh(n=n, nodes=nodes, triangles=triangles, boundary=boundary)
