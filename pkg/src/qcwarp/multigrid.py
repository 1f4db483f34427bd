"""Geometric multigrid V-cycle used as the PCG preconditioner.

The hierarchy discretizes the constant-coefficient approximation of the
elliptic operator on nested dyadic lattices down to 3 nodes per axis, where
the system is solved directly.  Smoothing is red-black Gauss-Seidel; the
post-smoothing color order is reversed so the induced linear map is
symmetric positive definite on the free nodes.

Landmark constraints propagate to coarser levels by marking every coarse
node of the cell containing a finer-level landmark node, so trilinear
prolongation of a coarse correction vanishes at landmark nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._core import prolong_add, rbgs_sweep, restrict_full_weighting
from .grid import BoundaryConditions, Grid, tetrahedralize
from .stencils import StencilCoeffs, TetStiffness


@dataclass
class _Level:
    grid: Grid
    stencil: StencilCoeffs
    landmark_mask: np.ndarray  # (n, n, n) bool
    free: np.ndarray  # (3, n, n, n) uint8


class MultigridHierarchy:
    """Nested lattices with per-level operators and constraint masks.

    The level operators are the unit-weight stiffness of each level's mesh
    (a 7-point Laplacian-like stencil); the true operator's leading constant
    only rescales the preconditioner, which conjugate gradients is invariant
    to, so one hierarchy serves every penalty value.
    """

    def __init__(self, grid: Grid, landmark_mask: np.ndarray):
        if landmark_mask.shape != grid.shape:
            raise ValueError("landmark mask shape does not match grid")
        self.levels: list[_Level] = []
        mask = landmark_mask.copy()
        for j in range(grid.levels, 0, -1):
            g = Grid(j)
            stiff = TetStiffness(tetrahedralize(g))
            stencil = stiff.assemble(np.ones(stiff.mesh.num_tets))
            dirichlet = BoundaryConditions.for_cube(g).dirichlet_mask
            free = (~dirichlet & ~mask[None]).astype(np.uint8)
            self.levels.append(
                _Level(grid=g, stencil=stencil, landmark_mask=mask, free=free)
            )
            if j > 1:
                mask = _coarsen_landmarks(mask)
        self._coarse = [self._factor_coarse(c) for c in range(3)]

    def _factor_coarse(self, component: int):
        lv = self.levels[-1]
        free_idx = np.nonzero(lv.free[component].reshape(-1))[0]
        if free_idx.size == 0:
            return None
        dense = lv.stencil.to_dense()[np.ix_(free_idx, free_idx)]
        return free_idx, cho_factor(dense)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def solve_coarsest(self, component: int, rhs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rhs)
        entry = self._coarse[component]
        if entry is None:
            return out
        free_idx, factor = entry
        out.reshape(-1)[free_idx] = cho_solve(factor, rhs.reshape(-1)[free_idx])
        return out

    def vcycle(
        self, level: int, component: int, u: np.ndarray, rhs: np.ndarray
    ) -> np.ndarray:
        """One V-cycle at the given level; updates and returns ``u``."""
        lv = self.levels[level]
        if level == self.num_levels - 1:
            u += self.solve_coarsest(component, rhs)
            return u
        st, free = lv.stencil, lv.free[component]
        rbgs_smooth(st, u, rhs, free, sweeps=4, ordering="red-first")
        residual = rhs - st.apply(u)
        residual[free == 0] = 0.0
        coarse_rhs = restrict_full_weighting(residual)
        coarse_free = self.levels[level + 1].free[component]
        coarse_rhs[coarse_free == 0] = 0.0
        correction = self.vcycle(
            level + 1, component, np.zeros_like(coarse_rhs), coarse_rhs
        )
        prolong_add(correction, u, free)
        rbgs_smooth(st, u, rhs, free, sweeps=4, ordering="black-first")
        return u

    def preconditioner(self, component: int, mu: float):
        """Linear map g -> Vcycle(0, g) / (6 mu), an SPD approximation of the
        inverse of the constant-coefficient operator."""
        scale = 1.0 / (6.0 * mu)

        def apply(g: np.ndarray) -> np.ndarray:
            z = self.vcycle(0, component, np.zeros_like(g), g)
            z *= scale
            return z

        return apply


def build_hierarchy(grid: Grid, landmark_mask: np.ndarray) -> MultigridHierarchy:
    return MultigridHierarchy(grid, landmark_mask)


def rbgs_smooth(
    stencil: StencilCoeffs,
    u: np.ndarray,
    rhs: np.ndarray,
    free: np.ndarray,
    sweeps: int,
    ordering: str,
) -> np.ndarray:
    """Red-black Gauss-Seidel iterations (one iteration = both colors).

    ``ordering`` is "red-first" or "black-first"; red nodes have even
    lattice-coordinate parity.  Constrained nodes are never written.
    """
    if ordering == "red-first":
        colors = (0, 1)
    elif ordering == "black-first":
        colors = (1, 0)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    for _ in range(sweeps):
        for color in colors:
            rbgs_sweep(
                stencil.diag, stencil.cx, stencil.cy, stencil.cz, u, rhs, free, color
            )
    return u


def _coarsen_landmarks(mask: np.ndarray) -> np.ndarray:
    """Mark all coarse nodes of the coarse cell containing each fine landmark.

    A landmark on an even fine index coincides with a coarse node and maps
    to it alone; odd indices map to both flanking coarse nodes per axis.
    """
    nf = mask.shape[0]
    nc = (nf + 1) // 2
    out = np.zeros((nc, nc, nc), dtype=bool)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return out
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                cand = (idx + np.array([dx, dy, dz])) // 2
                # even indices land on the same coarse node for both offsets
                np.minimum(cand, nc - 1, out=cand)
                out[cand[:, 0], cand[:, 1], cand[:, 2]] = True
    return out


def restrict(fine: np.ndarray) -> np.ndarray:
    """Full-weighting restriction of a fine-lattice field."""
    nf = fine.shape[0]
    if fine.shape != (nf, nf, nf) or nf % 2 == 0 or nf < 3:
        raise ValueError(f"expected an odd cubic lattice, got shape {fine.shape}")
    return restrict_full_weighting(np.ascontiguousarray(fine, dtype=float))


def prolong(coarse: np.ndarray, free: np.ndarray | None = None) -> np.ndarray:
    """Trilinear prolongation; zero at constrained fine nodes when a free
    mask is given."""
    nc = coarse.shape[0]
    if coarse.shape != (nc, nc, nc) or nc < 2:
        raise ValueError(f"expected a cubic lattice, got shape {coarse.shape}")
    nf = 2 * nc - 1
    fine = np.zeros((nf, nf, nf))
    if free is None:
        free = np.ones((nf, nf, nf), dtype=np.uint8)
    elif free.shape != (nf, nf, nf):
        raise ValueError(f"free mask shape {free.shape} does not match {nf}")
    prolong_add(
        np.ascontiguousarray(coarse, dtype=float), fine, free.astype(np.uint8)
    )
    return fine
