"""Conformality distortion, per-tet Jacobians, and model energies.

The pointwise distortion of an n-dimensional map follows the normalized
definition (1/n) ||M||_F^2 / det(M)^(2/n), which is >= 1 and equals 1 exactly
for similarity transforms; orientation-reversing Jacobians score +inf.  The
per-tet energy summand drops the 1/n factor (the discrete model's
convention); reported metrics use the normalized value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotOrientationPreservingError
from .grid import BoundaryConditions, TetMesh
from .stencils import laplacian_rows


def det3_batch(m: np.ndarray) -> np.ndarray:
    """Determinants of an (N, 3, 3) stack, without LAPACK round trips."""
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def jacobian_per_tet(mesh: TetMesh, f: np.ndarray) -> np.ndarray:
    """Per-tet 3x3 Jacobians of the piecewise-linear map defined by ``f``.

    ``f`` has shape (3, n, n, n).  Row c of each Jacobian is the gradient of
    component c, exact for piecewise-linear fields.
    """
    grads = mesh.gradients  # raises DegenerateElementError on corrupt input
    fvals = f.reshape(3, -1)
    out = np.empty((mesh.num_tets, 3, 3))
    for t, sl in enumerate(mesh.type_slices):
        vv = fvals[:, mesh.tets[sl]]  # (3, nt, 4)
        out[sl] = np.einsum("dj,ctj->tcd", grads[t], vv)
    return out


def distortion(m: np.ndarray) -> float:
    """Normalized conformality distortion of one n x n Jacobian (n >= 2)."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or n < 2:
        raise ValueError(f"expected a square matrix of size >= 2, got {m.shape}")
    det = np.linalg.det(m)
    if det <= 0.0:
        return np.inf
    return float(np.sum(m * m) / (n * det ** (2.0 / n)))


def distortion_field(jacobians: np.ndarray) -> np.ndarray:
    """Normalized distortion per tet; +inf where the determinant is <= 0."""
    det = det3_batch(jacobians)
    fro2 = np.einsum("tij,tij->t", jacobians, jacobians)
    out = np.full(len(jacobians), np.inf)
    ok = det > 0.0
    out[ok] = fro2[ok] / (3.0 * np.cbrt(det[ok] * det[ok]))
    return out


def beltrami_2d(m: np.ndarray) -> complex:
    """Beltrami coefficient of a 2x2 Jacobian with positive determinant."""
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got {m.shape}")
    a, b = m[0]
    c, d = m[1]
    det = a * d - b * c
    if det <= 0.0:
        raise NotOrientationPreservingError(f"determinant {det} is not positive")
    fz = complex(a + d, c - b) / 2.0
    fzbar = complex(a - d, c + b) / 2.0
    return fzbar / fz


def split_energy_term(df_t: np.ndarray, r_t: np.ndarray) -> float:
    """||Df(T)||_F^2 / det(R(T))^(2/3), or +inf when det(R(T)) <= 0."""
    det = float(np.linalg.det(r_t))
    if det <= 0.0:
        return np.inf
    return float(np.sum(df_t * df_t)) / det ** (2.0 / 3.0)


@dataclass
class EnergyBreakdown:
    """Components of the model energy at a given map."""

    conformality_term: float
    smoothness_term: float
    augmented_term: float
    total: float


def smoothness_energy(f: np.ndarray, boundary: BoundaryConditions) -> float:
    """Sum over components and non-Dirichlet nodes of the squared 7-point
    Laplacian, with mirror ghosts on natural boundary faces."""
    h = boundary.grid.spacing
    total = 0.0
    for c in range(3):
        rows = ~boundary.dirichlet_mask[c]
        lf = laplacian_rows(f[c], rows, h)
        total += float(np.sum(lf * lf))
    return total


def total_energy(
    mesh: TetMesh,
    f: np.ndarray,
    sigma: float,
    boundary: BoundaryConditions | None = None,
) -> EnergyBreakdown:
    """Discrete model energy: per-tet distortion sum plus smoothness term."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    jac = jacobian_per_tet(mesh, f)
    det = det3_batch(jac)
    if np.any(det <= 0.0):
        conf = np.inf
    else:
        fro2 = np.einsum("tij,tij->t", jac, jac)
        conf = float(np.sum(fro2 / np.cbrt(det * det)))
    smooth = 0.0
    if sigma > 0.0:
        if boundary is None:
            boundary = BoundaryConditions.for_cube(mesh.grid)
        smooth = smoothness_energy(f, boundary)
    total = conf + 0.5 * sigma * smooth
    return EnergyBreakdown(
        conformality_term=conf,
        smoothness_term=smooth,
        augmented_term=0.0,
        total=total,
    )


def augmented_lagrangian(
    mesh: TetMesh,
    f: np.ndarray,
    r_field: np.ndarray,
    multiplier: np.ndarray,
    mu: float,
    sigma: float,
    boundary: BoundaryConditions | None = None,
) -> float:
    """Split-form objective: sum_T K(f,R,T) + (mu/2) sum_T ||R - Df + lam||_F^2
    plus the smoothness term."""
    if mu <= 0:
        raise ValueError(f"penalty mu must be > 0, got {mu}")
    jac = jacobian_per_tet(mesh, f)
    det_r = det3_batch(r_field)
    if np.any(det_r <= 0.0):
        return np.inf
    fro2 = np.einsum("tij,tij->t", jac, jac)
    split = float(np.sum(fro2 / np.cbrt(det_r * det_r)))
    gap = r_field - jac + multiplier
    quad = 0.5 * mu * float(np.einsum("tij,tij->", gap, gap))
    smooth = 0.0
    if sigma > 0.0:
        if boundary is None:
            boundary = BoundaryConditions.for_cube(mesh.grid)
        smooth = 0.5 * sigma * smoothness_energy(f, boundary)
    return split + quad + smooth
