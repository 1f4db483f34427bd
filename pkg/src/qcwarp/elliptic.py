"""Landmark-constrained elliptic solve for the map-update subproblem.

At fixed per-tet matrices R and multipliers, each map component minimizes a
quadratic whose exact Hessian is D^T W D + sigma * L^T L, where D is the
per-tet gradient operator, W carries the weights 2 / det(R)^(2/3) + mu, and
L is the masked 7-point Laplacian.  Dirichlet faces and landmark nodes are
eliminated: pinned values move to the right-hand side and the reduced system
stays symmetric positive definite, so landmark matching is exact by
construction.  The system is solved by preconditioned conjugate gradients
with a multigrid V-cycle preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conformality import det3_batch
from .errors import ConvergenceError, InvalidWeightFieldError
from .grid import BoundaryConditions, LandmarkSet, TetMesh, landmark_node_mask
from .multigrid import MultigridHierarchy
from .stencils import StencilCoeffs, TetStiffness, laplacian_rows, laplacian_rows_adjoint


@dataclass
class ConstraintTables:
    """Per-component pinned/free masks and pinned values."""

    free: np.ndarray  # (3, n, n, n) bool
    pinned_values: np.ndarray  # (3, n, n, n), zero at free nodes
    boundary_conflicts: int


def constraint_tables(
    boundary: BoundaryConditions, landmarks: LandmarkSet
) -> ConstraintTables:
    """Merge Dirichlet faces with landmark pins.

    Where a landmark sits on a Dirichlet face of some component, the face
    value wins and the disagreement is counted as a conflict.
    """
    grid = boundary.grid
    lm_mask = landmark_node_mask(grid, landmarks)
    free = ~boundary.dirichlet_mask & ~lm_mask[None]
    pinned = boundary.dirichlet_values.copy()
    conflicts = 0
    flat_pin = pinned.reshape(3, -1)
    flat_dir = boundary.dirichlet_mask.reshape(3, -1)
    for c in range(3):
        ids = landmarks.node_ids
        target = landmarks.target[:, c]
        on_face = flat_dir[c, ids]
        conflicts += int(
            np.sum(on_face & (np.abs(flat_pin[c, ids] - target) > 1e-12))
        )
        keep = ~on_face
        flat_pin[c, ids[keep]] = target[keep]
    return ConstraintTables(
        free=free, pinned_values=pinned, boundary_conflicts=conflicts
    )


@dataclass
class EllipticOperator:
    """Reduced Hessian action of the quadratic map-update energy."""

    mesh: TetMesh
    boundary: BoundaryConditions
    constraints: ConstraintTables
    weights: np.ndarray  # (Nt,)
    mu: float
    sigma: float
    stencil: StencilCoeffs = field(repr=False)
    assembler: TetStiffness = field(repr=False)

    def _smooth_rows(self, component: int) -> np.ndarray:
        return ~self.boundary.dirichlet_mask[component]

    def full_apply(self, u: np.ndarray, component: int) -> np.ndarray:
        """Unreduced symmetric action on a full lattice field."""
        out = self.stencil.apply(u)
        if self.sigma > 0.0:
            rows = self._smooth_rows(component)
            h = self.boundary.grid.spacing
            out += self.sigma * laplacian_rows_adjoint(
                laplacian_rows(u, rows, h), rows, h
            )
        return out

    def apply(self, u: np.ndarray, component: int) -> np.ndarray:
        """Action on the free nodes: constrained entries are masked on both
        sides, keeping the operator SPD on the free subspace."""
        free = self.constraints.free[component]
        v = np.where(free, u, 0.0)
        out = self.full_apply(v, component)
        out[~free] = 0.0
        return out


def assemble_operator(
    mesh: TetMesh,
    r_field: np.ndarray,
    mu: float,
    sigma: float,
    landmarks: LandmarkSet,
    boundary: BoundaryConditions,
    assembler: TetStiffness | None = None,
    constraints: ConstraintTables | None = None,
) -> EllipticOperator:
    """Build the weighted-stiffness operator for given split matrices R."""
    if mu <= 0:
        raise ValueError(f"penalty mu must be > 0, got {mu}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    det = det3_batch(r_field)
    if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
        bad = int(np.argmin(det))
        raise InvalidWeightFieldError(
            f"det(R) must be positive on every tet; tet {bad} has det {det[bad]}"
        )
    weights = 2.0 / np.cbrt(det * det) + mu
    if assembler is None:
        assembler = TetStiffness(mesh)
    if constraints is None:
        constraints = constraint_tables(boundary, landmarks)
    stencil = assembler.assemble(weights)
    return EllipticOperator(
        mesh=mesh,
        boundary=boundary,
        constraints=constraints,
        weights=weights,
        mu=mu,
        sigma=sigma,
        stencil=stencil,
        assembler=assembler,
    )


def divergence_rhs(mesh: TetMesh, field: np.ndarray, component: int) -> np.ndarray:
    """D^T applied to one row of a per-tet matrix field.

    Realizes the discrete divergence as the exact transpose of the per-tet
    gradient operator, preserving system symmetry.
    """
    n = mesh.grid.nodes_per_axis
    grads = mesh.gradients
    out = np.zeros(n**3)
    for t, sl in enumerate(mesh.type_slices):
        rows = field[sl, component, :]  # (nt, 3)
        contrib = np.einsum("dj,td->tj", grads[t], rows)
        out += np.bincount(
            mesh.tets[sl].ravel(), weights=contrib.ravel(), minlength=n**3
        )
    return out.reshape(n, n, n)


def assemble_rhs(
    op: EllipticOperator,
    r_field: np.ndarray,
    multiplier: np.ndarray,
    component: int,
) -> np.ndarray:
    """Reduced right-hand side mu * D^T (R + lambda) for one component,
    including the elimination contribution of the pinned values."""
    rhs = op.mu * divergence_rhs(op.mesh, r_field + multiplier, component)
    pinned = np.where(
        op.constraints.free[component], 0.0, op.constraints.pinned_values[component]
    )
    rhs -= op.full_apply(pinned, component)
    rhs[~op.constraints.free[component]] = 0.0
    return rhs


def pcg_solve(
    apply_a,
    rhs: np.ndarray,
    precondition,
    tol: float,
    max_iter: int,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Preconditioned conjugate gradients on lattice fields.

    Stops when the preconditioned residual norm sqrt(r^T M r) falls below
    ``tol`` times its initial value; raises ConvergenceError past
    ``max_iter``.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - apply_a(x)
    z = precondition(r.copy())
    rho = float(np.vdot(r, z).real)
    if rho < 0:
        raise ValueError("preconditioner is not positive definite")
    norm0 = np.sqrt(rho)
    if norm0 == 0.0:
        return x, 0
    p = z.copy()
    for k in range(1, max_iter + 1):
        ap = apply_a(p)
        alpha = rho / float(np.vdot(p, ap).real)
        x += alpha * p
        r -= alpha * ap
        z = precondition(r.copy())
        rho_new = float(np.vdot(r, z).real)
        if np.sqrt(max(rho_new, 0.0)) <= tol * norm0:
            return x, k
        p = z + (rho_new / rho) * p
        rho = rho_new
    raise ConvergenceError(
        f"PCG did not reach tol={tol} in {max_iter} iterations",
        residual=float(np.sqrt(max(rho, 0.0)) / norm0),
        iterations=max_iter,
    )


def solve_f_subproblem(
    mesh: TetMesh,
    r_field: np.ndarray,
    multiplier: np.ndarray,
    mu: float,
    sigma: float,
    landmarks: LandmarkSet,
    boundary: BoundaryConditions,
    f_init: np.ndarray,
    hierarchy: MultigridHierarchy,
    pcg_tol: float = 1e-8,
    pcg_max_iter: int = 500,
    assembler: TetStiffness | None = None,
    constraints: ConstraintTables | None = None,
) -> np.ndarray:
    """Minimize the quadratic map-update energy component by component.

    The three scalar systems share one operator; landmark and boundary
    values are pinned bitwise in the output.
    """
    op = assemble_operator(
        mesh, r_field, mu, sigma, landmarks, boundary, assembler, constraints
    )
    out = np.empty_like(f_init)
    for c in range(3):
        free = op.constraints.free[c]
        pinned = np.where(free, 0.0, op.constraints.pinned_values[c])
        rhs = assemble_rhs(op, r_field, multiplier, c)
        y0 = np.where(free, f_init[c] - pinned, 0.0)
        precond = hierarchy.preconditioner(c, mu)
        y, _ = pcg_solve(
            lambda v, c=c: op.apply(v, c), rhs, precond, pcg_tol, pcg_max_iter, y0
        )
        y[~free] = 0.0
        out[c] = pinned + y
    return out
