"""Synthetic landmark configurations and registration quality metrics.

The five benchmark deformations: a single point pushed across the cube, two
points crossing, a ball of nodes rotated a quarter turn about the vertical
axis through the cube center, a full plane bent into a sine wave, and a
cloud of random nodes under a mild volumetric twist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conformality import det3_batch, distortion_field, jacobian_per_tet
from .grid import Grid, LandmarkSet, TetMesh, snap_landmarks

CASE_NAMES = ("one-point", "two-point", "rotate-ball", "wave-plane", "twist")


@dataclass
class SyntheticCase:
    """Benchmark deformation id plus its parameters."""

    name: str
    ball_center: tuple[float, float, float] = (0.5, 0.5, 0.5)
    ball_radius: float = 0.3
    wave_amplitude: float = 0.2
    wave_frequency: float = 4.0 * math.pi
    twist_count: int = 50
    twist_amplitude: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.name not in CASE_NAMES:
            raise ValueError(f"unknown case {self.name!r}; pick one of {CASE_NAMES}")


def _twist_bump(x, y, amplitude):
    return amplitude * (
        (np.cos(np.pi * x) + 1.0) * (np.cos(np.pi * y) + 1.0) / 4.0
        + np.cos(np.pi * x / 2.0) * np.cos(np.pi * y / 2.0)
    )


def twist_map(p: np.ndarray, amplitude: float = 0.01) -> np.ndarray:
    """Volumetric twist: successive in-plane shears driven by a smooth bump."""
    px, py, pz = p[..., 0], p[..., 1], p[..., 2]
    a1 = _twist_bump(px, py, amplitude)
    qx = px - px * a1
    rho = py + qx * a1
    a2 = _twist_bump(rho, pz, amplitude)
    qy = rho - pz * a2
    qz = pz + qy * a2
    return np.stack([qx, qy, qz], axis=-1)


def landmark_pairs(case: SyntheticCase, grid: Grid) -> np.ndarray:
    """Source/target pairs (m, 2, 3) for a case, sources on grid nodes."""
    if case.name == "one-point":
        p = np.array([[0.6, 0.6, 0.6]])
        q = np.array([[0.3, 0.3, 0.3]])
    elif case.name == "two-point":
        p = np.array([[0.6, 0.7, 0.7], [0.4, 0.6, 0.3]])
        q = np.array([[0.3, 0.2, 0.9], [0.2, 0.9, 0.2]])
    elif case.name == "rotate-ball":
        pos = grid.node_positions
        c = np.asarray(case.ball_center)
        inside = np.linalg.norm(pos - c, axis=1) <= case.ball_radius
        p = pos[inside]
        # quarter turn about the vertical axis through the center
        q = np.empty_like(p)
        q[:, 0] = c[0] - (p[:, 1] - c[1])
        q[:, 1] = c[1] + (p[:, 0] - c[0])
        q[:, 2] = p[:, 2]
    elif case.name == "wave-plane":
        n = grid.nodes_per_axis
        mid = n // 2
        if mid * grid.spacing != 0.5:
            raise ValueError("wave-plane requires x = 0.5 to be a grid plane")
        axis = np.arange(n) * grid.spacing
        yy, zz = np.meshgrid(axis, axis, indexing="ij")
        p = np.stack([np.full(yy.size, 0.5), yy.ravel(), zz.ravel()], axis=1)
        q = p.copy()
        q[:, 0] = 0.5 + case.wave_amplitude * np.sin(
            case.wave_frequency * (p[:, 1] + p[:, 2])
        )
    elif case.name == "twist":
        n = grid.nodes_per_axis
        interior = n - 2
        if case.twist_count > interior**3:
            raise ValueError(
                f"cannot place {case.twist_count} distinct landmarks on "
                f"{interior}^3 interior nodes"
            )
        rng = np.random.default_rng(case.seed)
        flat = rng.choice(interior**3, size=case.twist_count, replace=False)
        ijk = np.stack(np.unravel_index(flat, (interior, interior, interior)), axis=1)
        p = (ijk + 1) * grid.spacing
        q = twist_map(p, case.twist_amplitude)
    else:  # pragma: no cover
        raise AssertionError(case.name)
    return np.stack([p, q], axis=1)


def gen_case(case: SyntheticCase, grid: Grid) -> LandmarkSet:
    """Generate and snap the landmark set of a synthetic case."""
    return snap_landmarks(grid, landmark_pairs(case, grid))


@dataclass
class MetricsReport:
    """Registration quality summary (one row of the benchmark table)."""

    max_K: float
    min_det: float
    fold_count: int
    lm_max: float
    lm_mean: float
    e_max: float
    e_mean: float
    wall_time: float
    landmark_count: int
    snap_max_shift: float
    boundary_conflicts: int


def compute_metrics(
    mesh: TetMesh,
    f: np.ndarray,
    landmarks: LandmarkSet,
    input_pairs: np.ndarray | None = None,
    wall_time: float = 0.0,
    boundary_conflicts: int = 0,
) -> MetricsReport:
    """Distortion, orientation and landmark-mismatch metrics of a map.

    ``input_pairs`` defaults to the raw pairs stored on the landmark set;
    the lm statistics always describe the input displacement while the e
    statistics measure the residual mismatch of the computed map at the
    snapped landmarks.
    """
    jac = jacobian_per_tet(mesh, f)
    det = det3_batch(jac)
    fold_count = int(np.sum(det <= 0.0))
    max_k = float(distortion_field(jac).max()) if len(det) else 1.0

    if input_pairs is None:
        input_pairs = np.stack([landmarks.source_raw, landmarks.target], axis=1)
    lm = np.linalg.norm(input_pairs[:, 1] - input_pairs[:, 0], axis=1)

    fvals = f.reshape(3, -1)[:, landmarks.node_ids].T
    e = np.linalg.norm(fvals - landmarks.target, axis=1)

    return MetricsReport(
        max_K=max_k,
        min_det=float(det.min()),
        fold_count=fold_count,
        lm_max=float(lm.max()) if lm.size else 0.0,
        lm_mean=float(lm.mean()) if lm.size else 0.0,
        e_max=float(e.max()) if e.size else 0.0,
        e_mean=float(e.mean()) if e.size else 0.0,
        wall_time=wall_time,
        landmark_count=len(landmarks),
        snap_max_shift=landmarks.snap_max_shift,
        boundary_conflicts=boundary_conflicts,
    )
