"""Alternating-direction driver for the landmark-matching model.

Each outer iteration solves the map-update subproblem (an elliptic solve at
fixed split matrices), then the per-tet projection subproblem, then applies
the multiplier update lambda += R - Df and the penalty rule
mu = max(mu, max_T 30 / det(R(T))^(2/3)).  Iteration stops once the map
stops moving in the max norm.

For landmark displacements spanning multiple cells the plain alternation
inverts elements on its first step and never recovers: the projection's
restoring pull saturates once a fold deepens (its magnitude scales like
a / (D x3) with a capped by the penalty rule), so the iteration orbits a
folded state.  Two measures keep every iterate orientation-preserving:

* ``run`` accepts the longest fraction of each map update whose
  determinants all stay positive, and exits early when even the smallest
  fraction fails (so the multiplier cannot wind up against the guard);
* ``run_continuation`` drives landmarks toward their targets through a
  margin-gated schedule of short runs (fresh multipliers each restart) and
  dyadic coarse-to-fine refinement, with each level warm-started through
  the fold-preserving piecewise-linear interpolant.

Both measures are inactive on mild inputs, where ``run`` is exactly the
plain alternation from the identity.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

_DEBUG = os.environ.get("QCWARP_DEBUG", "").strip() not in ("", "0")

import numpy as np

from .conformality import det3_batch, jacobian_per_tet, smoothness_energy
from .elliptic import constraint_tables, solve_f_subproblem
from .grid import (
    BoundaryConditions,
    Grid,
    LandmarkSet,
    TetMesh,
    build_grid,
    landmark_node_mask,
    refine_field,
    snap_landmarks,
    snap_landmarks_merged,
    tetrahedralize,
)
from .multigrid import MultigridHierarchy
from .projection import project_field
from .stencils import TetStiffness

_PENALTY_SCALE = 30.0


@dataclass
class AdmmConfig:
    """Driver parameters; defaults suit the synthetic benchmark suite."""

    sigma: float = 0.0
    outer_tol: float = 1e-4
    mu_init: float = 1.0
    max_outer_iters: int = 500
    pcg_tol: float = 1e-8
    pcg_max_iter: int = 500
    rsub_tol: float = 1e-12
    step_cap_cells: float = 0.5
    ramp_margin: float = 0.005
    stage_iters: int = 10
    coarse_start_level: int = 1
    coarse_tol: float = 1e-3

    def __post_init__(self):
        if min(self.outer_tol, self.mu_init, self.pcg_tol, self.rsub_tol) <= 0:
            raise ValueError("tolerances and mu_init must be positive")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.step_cap_cells <= 0 or self.stage_iters < 1:
            raise ValueError("step_cap_cells and stage_iters must be positive")


@dataclass
class AdmmState:
    f: np.ndarray  # (3, n, n, n)
    r_field: np.ndarray  # (Nt, 3, 3)
    multiplier: np.ndarray  # (Nt, 3, 3)
    mu: float
    k: int = 0


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    energy_normalized: float
    aug_lagrangian: float
    primal_residual: float
    mu: float
    f_change: float


@dataclass
class EnergyTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    def extend(self, other: "EnergyTrace") -> None:
        """Append another trace's records, renumbering iterations."""
        for r in other.records:
            self.records.append(replace(r, iteration=len(self.records) + 1))
        self.stalled = other.stalled


def initialize(
    mesh: TetMesh,
    landmarks: LandmarkSet,
    config: AdmmConfig,
    f_init: np.ndarray | None = None,
) -> AdmmState:
    """Identity start: R = Df(identity) = I, lambda = 0, mu from the penalty
    rule at det(R) = 1.  A warm start sets R = Df(f_init) when that field is
    orientation-preserving (otherwise it falls back to the identity)."""
    nt = mesh.num_tets
    multiplier = np.zeros((nt, 3, 3))
    mu = max(config.mu_init, _PENALTY_SCALE)
    if f_init is None:
        f = mesh.grid.identity_field()
        r_field = np.broadcast_to(np.eye(3), (nt, 3, 3)).copy()
    else:
        f = f_init.copy()
        jac = jacobian_per_tet(mesh, f)
        if np.all(det3_batch(jac) > 0.0):
            r_field = jac
        else:
            r_field = np.broadcast_to(np.eye(3), (nt, 3, 3)).copy()
    return AdmmState(f=f, r_field=r_field, multiplier=multiplier, mu=mu)


def update_multiplier(state: AdmmState, jacobians: np.ndarray) -> np.ndarray:
    """lambda + (R - Df), evaluated entrywise per tet."""
    return state.multiplier + (state.r_field - jacobians)


def update_penalty(state: AdmmState) -> float:
    """Non-decreasing penalty: max(mu, max_T 30 / det(R(T))^(2/3))."""
    det = det3_batch(state.r_field)
    if np.any(det <= 0.0):
        raise ValueError("penalty rule requires det(R) > 0 on every tet")
    return max(state.mu, float((_PENALTY_SCALE / np.cbrt(det * det)).max()))


def run(
    mesh: TetMesh,
    landmarks: LandmarkSet,
    config: AdmmConfig | None = None,
    boundary: BoundaryConditions | None = None,
    on_iteration=None,
    f_init: np.ndarray | None = None,
    hierarchy: MultigridHierarchy | None = None,
    assembler: TetStiffness | None = None,
    max_iters: int | None = None,
    tol: float | None = None,
    floor_ratio: float = 0.25,
    strict: bool = False,
) -> tuple[np.ndarray, EnergyTrace]:
    """Run the splitting loop to convergence or the iteration cap.

    Returns the final map and the per-iteration trace.  Every accepted
    iterate is fold-free; on convergence the map matches every landmark
    bitwise.  A run whose map update is fully rejected by the orientation
    guard stops early with ``trace.stalled`` set (restart it with fresh
    multipliers, or stage the landmarks; see ``run_continuation``).
    """
    if config is None:
        config = AdmmConfig()
    if boundary is None:
        boundary = BoundaryConditions.for_cube(mesh.grid)
    if max_iters is None:
        max_iters = config.max_outer_iters
    if tol is None:
        tol = config.outer_tol

    t0 = time.perf_counter()
    grid = mesh.grid
    if hierarchy is None:
        hierarchy = MultigridHierarchy(grid, landmark_node_mask(grid, landmarks))
    if assembler is None:
        assembler = TetStiffness(mesh)
    constraints = constraint_tables(boundary, landmarks)
    state = initialize(mesh, landmarks, config, f_init)
    trace = EnergyTrace()

    # one run may compress the tightest element by at most this factor; the
    # guard in _fold_free_step rejects steps below the floor so a single
    # segment can never crush elements to near-zero volume
    floor = floor_ratio * float(det3_batch(jacobian_per_tet(mesh, state.f)).min())
    for k in range(1, max_iters + 1):
        f_min = solve_f_subproblem(
            mesh,
            state.r_field,
            state.multiplier,
            state.mu,
            config.sigma,
            landmarks,
            boundary,
            state.f,
            hierarchy,
            pcg_tol=config.pcg_tol,
            pcg_max_iter=config.pcg_max_iter,
            assembler=assembler,
            constraints=constraints,
        )
        f_new, jac, full_step = _fold_free_step(mesh, state.f, f_min, floor)
        if f_new is None or (strict and not full_step):
            # fully rejected, or damped in strict mode: stop before the
            # multipliers start integrating against the guard
            trace.stalled = True
            break

        r_new = project_field(
            jac, state.multiplier, state.mu, state.r_field, eps=config.rsub_tol
        )
        f_change = float(np.abs(f_new - state.f).max())
        state.f = f_new
        state.r_field = r_new
        state.multiplier = update_multiplier(state, jac)
        state.mu = update_penalty(state)
        state.k = k

        trace.records.append(
            _record(mesh, boundary, state, jac, f_change, config.sigma)
        )
        if on_iteration is not None:
            on_iteration(trace.records[-1])
        if full_step and f_change <= tol:
            trace.converged = True
            break

    trace.wall_time = time.perf_counter() - t0
    return state.f, trace


def _fold_free_step(
    mesh: TetMesh, f_old: np.ndarray, f_min: np.ndarray, floor: float
):
    """Longest step from f_old toward the subproblem minimizer f_min whose
    smallest Jacobian determinant stays above the given floor.

    Returns (f, jacobians, full_step); (None, None, False) when every tried
    fraction violates the floor.
    """
    jac = jacobian_per_tet(mesh, f_min)
    if float(det3_batch(jac).min()) > floor:
        return f_min, jac, True
    theta = 0.5
    delta = f_min - f_old
    for _ in range(6):
        f_try = f_old + theta * delta
        jac = jacobian_per_tet(mesh, f_try)
        if float(det3_batch(jac).min()) > floor:
            return f_try, jac, False
        theta *= 0.5
    return None, None, False


def _pin_values(f: np.ndarray, landmarks: LandmarkSet) -> np.ndarray:
    return f.reshape(3, -1)[:, landmarks.node_ids].T.copy()


def _with_targets(landmarks: LandmarkSet, target: np.ndarray) -> LandmarkSet:
    return LandmarkSet(
        grid=landmarks.grid,
        source_raw=landmarks.source_raw,
        source=landmarks.source,
        target=target,
        node_ids=landmarks.node_ids,
    )


def _carry_residuals(
    grid: Grid, f: np.ndarray, landmarks: LandmarkSet, goal: np.ndarray
) -> np.ndarray:
    """Add a smooth compactly-supported displacement moving each landmark's
    image onto its target.

    A Shepard blend of per-landmark residual bumps (Wendland-type profile
    around each source node) carries the warm map's landmark images the
    rest of the way, so a refined level starts with its pins already at the
    goal instead of dragging them through the compressed neighborhood.
    """
    pins = _pin_values(f, landmarks)
    resid = goal - pins
    scale = np.linalg.norm(resid, axis=1)
    active = scale > 1e-13
    if not active.any():
        return f
    centers = landmarks.source[active]
    resid = resid[active]
    scale = scale[active]
    radius = np.maximum(6.0 * grid.spacing, 4.0 * scale)

    pos = grid.node_positions
    num = np.zeros((len(pos), 3))
    den = np.zeros(len(pos))
    chunk = 512
    for start in range(0, len(centers), chunk):
        c = centers[start : start + chunk]
        rr = resid[start : start + chunk]
        rad = radius[start : start + chunk]
        dist = np.linalg.norm(pos[:, None, :] - c[None, :, :], axis=2) / rad[None, :]
        w = np.clip(1.0 - dist * dist, 0.0, None) ** 3
        num += w @ rr
        den += w.sum(axis=1)
    blend = num / np.maximum(den, 1.0)[:, None]
    n = grid.nodes_per_axis
    return f + np.ascontiguousarray(blend.T.reshape(3, n, n, n))


def _effective_goal(
    landmarks: LandmarkSet, boundary: BoundaryConditions
) -> np.ndarray:
    """Landmark targets with Dirichlet-face components overridden, matching
    the precedence used by the solver's constraint tables."""
    goal = landmarks.target.copy()
    flat_dir = boundary.dirichlet_mask.reshape(3, -1)
    flat_val = boundary.dirichlet_values.reshape(3, -1)
    for c in range(3):
        on_face = flat_dir[c, landmarks.node_ids]
        goal[on_face, c] = flat_val[c, landmarks.node_ids[on_face]]
    return goal


def _solve_level(
    mesh: TetMesh,
    landmarks: LandmarkSet,
    config: AdmmConfig,
    boundary: BoundaryConditions,
    f_start: np.ndarray | None,
    tol: float,
    on_iteration=None,
) -> tuple[np.ndarray, EnergyTrace]:
    """Drive one grid level to its landmark targets via staged short runs.

    Landmark pins advance toward the goal by a trust-region step (capped in
    cells, gated on the orientation margin); each stage is a fresh run with
    zero multipliers from the previous fold-free map, so a guarded stall
    never winds the duals up.  Ends with full runs at the exact targets.
    """
    grid = mesh.grid
    hierarchy = MultigridHierarchy(grid, landmark_node_mask(grid, landmarks))
    assembler = TetStiffness(mesh)
    goal = _effective_goal(landmarks, boundary)

    f = grid.identity_field() if f_start is None else f_start
    margin = float(det3_batch(jacobian_per_tet(mesh, f)).min())
    if margin <= 0.0:
        raise ValueError("level warm start must be orientation-preserving")

    carried = _carry_residuals(grid, f, landmarks, goal)
    if carried is not f:
        carried_margin = float(
            det3_batch(jacobian_per_tet(mesh, carried)).min()
        )
        if _DEBUG:
            print(
                f"      [level {grid.levels}] residual carry margin "
                f"{margin:.4f}->{carried_margin:.4f}"
            )
        # adopt the carried start unless the blend cost too much margin
        if carried_margin > min(0.25 * margin, 0.05):
            f = carried
            margin = carried_margin

    trace = EnergyTrace()
    step_cells = config.step_cap_cells
    budget = config.max_outer_iters
    dead_segments = 0
    mu_carry = config.mu_init  # penalty persists across restarts of a level

    def _stage(staged, iters, floor_ratio, strict=False):
        nonlocal budget, mu_carry
        f_out, seg = run(
            mesh,
            staged,
            replace(config, mu_init=mu_carry),
            boundary,
            on_iteration=on_iteration,
            f_init=f,
            hierarchy=hierarchy,
            assembler=assembler,
            max_iters=min(iters, budget),
            tol=max(tol, config.coarse_tol),
            floor_ratio=floor_ratio,
            strict=strict,
        )
        trace.extend(seg)
        budget -= max(seg.iterations, 1)
        if seg.records:
            mu_carry = max(mu_carry, seg.records[-1].mu)
        return f_out, seg

    while budget > 0 and dead_segments < 3:
        pins = _pin_values(f, landmarks)
        resid = goal - pins
        resid_max = float(np.abs(resid).max()) if len(resid) else 0.0

        if resid_max <= 1e-14:
            f, seg = run(
                mesh,
                landmarks,
                replace(config, mu_init=mu_carry),
                boundary,
                on_iteration=on_iteration,
                f_init=f,
                hierarchy=hierarchy,
                assembler=assembler,
                max_iters=budget,
                tol=tol,
            )
            trace.extend(seg)
            budget -= max(seg.iterations, 1)
            if seg.records:
                mu_carry = max(mu_carry, seg.records[-1].mu)
            if _DEBUG:
                print(
                    f"      [level {grid.levels}] polish iters={seg.iterations} "
                    f"conv={seg.converged} stalled={seg.stalled}"
                )
            if seg.converged:
                trace.converged = True
                break
            dead_segments = dead_segments + 1 if seg.iterations == 0 else 0
            continue  # stalled or segment cap: restart with fresh multipliers

        # bounded pin step; the stage's own iterations both move the pins
        # and let the surrounding distortion redistribute.  Acceptance only
        # requires arriving at the staged targets above a hard orientation
        # floor: the homotopy path legitimately passes through low-margin
        # configurations between the rest state and the carried one.
        step = np.clip(
            resid, -step_cells * grid.spacing, step_cells * grid.spacing
        )
        target = pins + step
        hit = np.abs(goal - target) < 1e-14
        target[hit] = goal[hit]
        f_before = f
        f, seg = _stage(
            _with_targets(landmarks, target), config.stage_iters, 0.05,
            strict=True,
        )
        new_margin = float(det3_batch(jacobian_per_tet(mesh, f)).min())
        reached = float(np.abs(_pin_values(f, landmarks) - target).max())
        accepted = reached <= 1e-12 and new_margin > 0.0
        if _DEBUG:
            print(
                f"      [level {grid.levels}] advance step={step_cells:.3f}c "
                f"resid={resid_max / grid.spacing:.2f}c iters={seg.iterations} "
                f"margin {margin:.4f}->{new_margin:.4f} reached={reached:.1e} "
                f"{'ok' if accepted else 'rejected'}"
            )
        if accepted:
            loss = margin - new_margin
            if loss < 0.2 * margin:
                step_cells = min(step_cells * 1.4, config.step_cap_cells)
            elif loss > 0.5 * margin:
                step_cells = max(step_cells * 0.5, 0.02)
            margin = new_margin
            dead_segments = 0
        else:
            f = f_before
            if step_cells <= 0.02:
                dead_segments += 1
            step_cells = max(step_cells * 0.5, 0.02)

    trace.converged = trace.converged and budget >= 0
    return f, trace


def run_continuation(
    grid: Grid,
    pairs: np.ndarray,
    config: AdmmConfig | None = None,
    boundary: BoundaryConditions | None = None,
    on_iteration=None,
) -> tuple[np.ndarray, EnergyTrace, LandmarkSet]:
    """Dyadic continuation: solve coarse-to-fine, refining the map between
    levels with the fold-preserving piecewise-linear interpolant.

    ``pairs`` are raw (source, target) landmark pairs; coarse levels merge
    snap collisions, the final level snaps strictly.  Returns the final map,
    the final level's trace, and the final landmark set.
    """
    if config is None:
        config = AdmmConfig()
    start = min(max(config.coarse_start_level, 1), grid.levels)
    f_prev: np.ndarray | None = None
    grid_prev: Grid | None = None
    final_trace = EnergyTrace()
    final_landmarks: LandmarkSet | None = None
    t0 = time.perf_counter()
    for j in range(start, grid.levels + 1):
        level_grid = build_grid(j) if j != grid.levels else grid
        mesh = tetrahedralize(level_grid)
        is_final = j == grid.levels
        landmarks = (
            snap_landmarks(level_grid, pairs)
            if is_final
            else snap_landmarks_merged(level_grid, pairs)
        )
        level_boundary = (
            boundary
            if (is_final and boundary is not None)
            else BoundaryConditions.for_cube(level_grid)
        )
        f_init = (
            None if f_prev is None else refine_field(grid_prev, f_prev, level_grid)
        )
        f_prev, trace = _solve_level(
            mesh,
            landmarks,
            config,
            level_boundary,
            f_init,
            tol=config.outer_tol if is_final else max(config.outer_tol, config.coarse_tol),
            on_iteration=on_iteration if is_final else None,
        )
        grid_prev = level_grid
        if is_final:
            final_trace = trace
            final_landmarks = landmarks
    assert final_landmarks is not None
    final_trace.wall_time = time.perf_counter() - t0
    return f_prev, final_trace, final_landmarks


def _record(
    mesh: TetMesh,
    boundary: BoundaryConditions,
    state: AdmmState,
    jac: np.ndarray,
    f_change: float,
    sigma: float,
) -> IterationRecord:
    det = det3_batch(jac)
    fro2 = np.einsum("tij,tij->t", jac, jac)
    if np.any(det <= 0.0):
        conf = np.inf
    else:
        conf = float(np.sum(fro2 / np.cbrt(det * det)))
    smooth = smoothness_energy(state.f, boundary) if sigma > 0.0 else 0.0
    energy = conf + 0.5 * sigma * smooth
    energy_norm = conf / 3.0 + 0.5 * sigma * smooth

    det_r = det3_batch(state.r_field)
    split = float(np.sum(fro2 / np.cbrt(det_r * det_r)))
    gap = state.r_field - jac + state.multiplier
    gap2 = float(np.einsum("tij,tij->", gap, gap))
    aug = split + 0.5 * state.mu * gap2 + 0.5 * sigma * smooth

    primal = state.r_field - jac
    primal_norm = float(np.sqrt(np.einsum("tij,tij->", primal, primal)))

    return IterationRecord(
        iteration=state.k,
        energy=energy,
        energy_normalized=energy_norm,
        aug_lagrangian=aug,
        primal_residual=primal_norm,
        mu=state.mu,
        f_change=f_change,
    )
