"""Seven-point stencil operators on the node lattice.

Both the true elliptic operator (per-tet weighted stiffness) and the
constant-coefficient multigrid level operators share one structure: on this
tetrahedralization the elemental stiffness couples a tet's vertices only
along its three axis-parallel edges, so every assembled operator is a
7-point stencil with per-edge coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._core import stencil_apply
from .grid import TetMesh


@dataclass
class StencilCoeffs:
    """Symmetric 7-point operator: diagonal plus axis-edge couplings."""

    diag: np.ndarray  # (n, n, n)
    cx: np.ndarray  # (n-1, n, n)
    cy: np.ndarray  # (n, n-1, n)
    cz: np.ndarray  # (n, n, n-1)

    def apply(self, u: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        return stencil_apply(self.diag, self.cx, self.cy, self.cz, u, out)

    def to_dense(self) -> np.ndarray:
        """Dense matrix in flat node order; for small-grid oracles only."""
        n = self.diag.shape[0]
        big = n**3
        mat = np.zeros((big, big))
        flat = np.arange(big).reshape(n, n, n)
        mat[flat.ravel(), flat.ravel()] = self.diag.ravel()
        for c, sl_lo, sl_hi in (
            (self.cx, flat[:-1], flat[1:]),
            (self.cy, flat[:, :-1], flat[:, 1:]),
            (self.cz, flat[:, :, :-1], flat[:, :, 1:]),
        ):
            mat[sl_lo.ravel(), sl_hi.ravel()] += c.ravel()
            mat[sl_hi.ravel(), sl_lo.ravel()] += c.ravel()
        return mat


class TetStiffness:
    """Precomputed scatter pattern assembling per-tet weighted stiffness.

    For weights w the assembled operator is sum_T w_T * G_T^T G_T with G_T
    the per-tet gradient map; its only off-diagonal entries sit on lattice
    edges.  Assembly is three bincounts over edges plus one over nodes.
    """

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        grid = mesh.grid
        n = grid.nodes_per_axis
        self.n = n
        grads = mesh.gradients  # (6, 3, 4)
        elem = np.einsum("tdi,tdj->tij", grads, grads)  # (6, 4, 4)

        # Per type: the vertex pair forming the axis-d edge and its entry.
        first_cell = mesh.tets[mesh.cell == 0]
        coords = grid.lattice_coords(first_cell)  # (6, 4, 3)
        pair_for_axis = np.full((6, 3, 2), -1, dtype=np.int64)
        edge_val = np.zeros((6, 3))
        for t in range(6):
            for i in range(4):
                for j in range(i + 1, 4):
                    d = coords[t, j] - coords[t, i]
                    if np.abs(d).sum() == 1:
                        axis = int(np.nonzero(d)[0][0])
                        pair_for_axis[t, axis] = (i, j) if d[axis] > 0 else (j, i)
                        edge_val[t, axis] = elem[t, i, j]
        if (pair_for_axis < 0).any():
            raise AssertionError("each tet must own one edge per axis")

        self.diag_vals = np.array([np.diag(elem[t]) for t in range(6)])  # (6, 4)
        self.edge_vals = edge_val  # (6, 3)

        types = mesh.tet_type.astype(np.int64)
        lower = np.empty((mesh.num_tets, 3), dtype=np.int64)
        for axis in range(3):
            vi = mesh.tets[np.arange(mesh.num_tets), pair_for_axis[types, axis, 0]]
            lower[:, axis] = vi
        ijk = grid.lattice_coords(lower.reshape(-1)).reshape(-1, 3, 3)
        i, j, k = ijk[..., 0], ijk[..., 1], ijk[..., 2]
        self.edge_ids = np.stack(
            [
                (i[:, 0] * n + j[:, 0]) * n + k[:, 0],
                (i[:, 1] * (n - 1) + j[:, 1]) * n + k[:, 1],
                (i[:, 2] * n + j[:, 2]) * (n - 1) + k[:, 2],
            ],
            axis=1,
        )
        self.node_ids = mesh.tets.astype(np.int64)
        self._types = types

    def assemble(self, weights: np.ndarray) -> StencilCoeffs:
        n = self.n
        w = np.asarray(weights, dtype=float)
        diag = np.bincount(
            self.node_ids.ravel(),
            weights=(w[:, None] * self.diag_vals[self._types]).ravel(),
            minlength=n**3,
        ).reshape(n, n, n)
        ev = w[:, None] * self.edge_vals[self._types]
        cx = np.bincount(
            self.edge_ids[:, 0], weights=ev[:, 0], minlength=(n - 1) * n * n
        ).reshape(n - 1, n, n)
        cy = np.bincount(
            self.edge_ids[:, 1], weights=ev[:, 1], minlength=n * (n - 1) * n
        ).reshape(n, n - 1, n)
        cz = np.bincount(
            self.edge_ids[:, 2], weights=ev[:, 2], minlength=n * n * (n - 1)
        ).reshape(n, n, n - 1)
        return StencilCoeffs(diag=diag, cx=cx, cy=cy, cz=cz)


def laplacian_rows(u: np.ndarray, rows: np.ndarray, h: float) -> np.ndarray:
    """Masked 7-point Laplacian (6u - sum of neighbors)/h^2 with mirror
    ghosts beyond every face; entries outside ``rows`` are zero."""
    out = 6.0 * u
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] -= u[tuple(hi)]
        out[tuple(hi)] -= u[tuple(lo)]
        # mirror: the missing neighbor beyond each face equals the inner one
        first = [slice(None)] * 3
        second = [slice(None)] * 3
        first[axis] = 0
        second[axis] = 1
        out[tuple(first)] -= u[tuple(second)]
        first[axis] = -1
        second[axis] = -2
        out[tuple(first)] -= u[tuple(second)]
    out *= 1.0 / (h * h)
    out[~rows] = 0.0
    return out


def laplacian_rows_adjoint(v: np.ndarray, rows: np.ndarray, h: float) -> np.ndarray:
    """Adjoint of :func:`laplacian_rows`: scatter form of the same stencil."""
    w = np.where(rows, v, 0.0)
    out = 6.0 * w
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] -= w[tuple(hi)]
        out[tuple(hi)] -= w[tuple(lo)]
        first = [slice(None)] * 3
        second = [slice(None)] * 3
        first[axis] = 0
        second[axis] = 1
        out[tuple(second)] -= w[tuple(first)]
        first[axis] = -1
        second[axis] = -2
        out[tuple(second)] -= w[tuple(first)]
    out *= 1.0 / (h * h)
    return out
