"""Folding-free 3D landmark-matching deformation on the unit cube.

Given paired landmark sets, the engine computes a map that matches them
exactly while minimizing the n-dimensional conformality distortion, which
bars orientation-reversing (folded) elements.  The optimization splits into
a landmark-constrained elliptic solve (multigrid-preconditioned conjugate
gradients) and a per-tetrahedron SVD projection, alternated with multiplier
and penalty updates.
"""

from ._core import backend_name
from .admm import AdmmConfig, AdmmState, EnergyTrace, IterationRecord, initialize, run
from .admm import update_multiplier, update_penalty
from .cases import CASE_NAMES, MetricsReport, SyntheticCase, compute_metrics, gen_case
from .conformality import (
    EnergyBreakdown,
    augmented_lagrangian,
    beltrami_2d,
    distortion,
    distortion_field,
    jacobian_per_tet,
    split_energy_term,
    total_energy,
)
from .elliptic import (
    EllipticOperator,
    assemble_operator,
    assemble_rhs,
    pcg_solve,
    solve_f_subproblem,
)
from .grid import (
    BoundaryConditions,
    Grid,
    LandmarkSet,
    TetMesh,
    build_grid,
    snap_landmarks,
    tetrahedralize,
)
from .multigrid import MultigridHierarchy, build_hierarchy, prolong, rbgs_smooth, restrict
from .projection import (
    Svd3,
    barrier_coefficient,
    project_field,
    project_matrix,
    svd3,
)
from .tps import TpsModel, tps_eval, tps_field, tps_fit

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "BoundaryConditions",
    "CASE_NAMES",
    "EllipticOperator",
    "EnergyBreakdown",
    "EnergyTrace",
    "Grid",
    "IterationRecord",
    "LandmarkSet",
    "MetricsReport",
    "MultigridHierarchy",
    "Svd3",
    "SyntheticCase",
    "TetMesh",
    "TpsModel",
    "augmented_lagrangian",
    "backend_name",
    "barrier_coefficient",
    "beltrami_2d",
    "build_grid",
    "build_hierarchy",
    "compute_metrics",
    "distortion",
    "distortion_field",
    "gen_case",
    "initialize",
    "jacobian_per_tet",
    "pcg_solve",
    "project_field",
    "project_matrix",
    "prolong",
    "rbgs_smooth",
    "restrict",
    "run",
    "snap_landmarks",
    "solve_f_subproblem",
    "split_energy_term",
    "svd3",
    "tetrahedralize",
    "total_energy",
    "tps_eval",
    "tps_field",
    "tps_fit",
    "update_multiplier",
    "update_penalty",
    "assemble_operator",
    "assemble_rhs",
]
