"""Regular cubic lattice, its tetrahedralization and landmark snapping.

The computational domain is the unit cube discretized by a (2^J + 1)^3 node
lattice.  Each grid cell is split into six tetrahedra sharing the cell
diagonal from local corner (1,1,0) to (0,0,1); every tetrahedron has three
edges parallel to the coordinate axes.  The dyadic node count is required so
that coarsened grids remain valid lattices all the way down to 3^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DuplicateLandmarkError, OutOfDomainError

# Local corner offsets indexed like the unit-cube corner list: corner m has
# offset (m % 2, (m // 2) % 2, (m // 4) % 2), m = 0..7.
_CORNER_OFFSETS = np.array(
    [[(m % 2), (m // 2) % 2, (m // 4) % 2] for m in range(8)], dtype=np.int64
)

# The six tetrahedra of one cell, as corner labels (0-based), ordered so the
# signed volume is positive.  All six share the diagonal corner3 -- corner4.
_TET_CORNERS = np.array(
    [
        [2, 6, 4, 3],
        [2, 0, 3, 4],
        [3, 0, 1, 4],
        [6, 3, 7, 4],
        [3, 4, 5, 7],
        [3, 1, 5, 4],
    ],
    dtype=np.int64,
)


@dataclass(frozen=True)
class Grid:
    """Uniform (2^J + 1)^3 node lattice on the unit cube.

    Nodes are addressed either by lattice coordinates (i, j, k) with
    position (i*h, j*h, k*h), or by the flat index (i*n + j)*n + k.
    """

    levels: int

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"grid levels must be >= 1, got {self.levels}")

    @property
    def nodes_per_axis(self) -> int:
        return 2**self.levels + 1

    @property
    def spacing(self) -> float:
        return 2.0**-self.levels

    @property
    def shape(self) -> tuple[int, int, int]:
        n = self.nodes_per_axis
        return (n, n, n)

    @property
    def num_nodes(self) -> int:
        return self.nodes_per_axis**3

    def flat_index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=np.int64)
        n = self.nodes_per_axis
        return (ijk[..., 0] * n + ijk[..., 1]) * n + ijk[..., 2]

    def lattice_coords(self, flat) -> np.ndarray:
        n = self.nodes_per_axis
        flat = np.asarray(flat, dtype=np.int64)
        return np.stack([flat // (n * n), (flat // n) % n, flat % n], axis=-1)

    @cached_property
    def node_positions(self) -> np.ndarray:
        """(N, 3) array of node positions in lattice order."""
        n = self.nodes_per_axis
        axes = np.arange(n) * self.spacing
        xx, yy, zz = np.meshgrid(axes, axes, axes, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)

    def identity_field(self) -> np.ndarray:
        """Displacement field of the identity map, shape (3, n, n, n)."""
        n = self.nodes_per_axis
        axes = np.arange(n) * self.spacing
        out = np.empty((3, n, n, n))
        out[0] = axes[:, None, None]
        out[1] = axes[None, :, None]
        out[2] = axes[None, None, :]
        return out


def build_grid(levels: int) -> Grid:
    """Build the lattice for a given dyadic refinement level J >= 1."""
    return Grid(levels)


@dataclass(frozen=True)
class TetMesh:
    """Tetrahedralization of a :class:`Grid`, six tets per cell.

    Attributes
    ----------
    tets : (Nt, 4) int32 flat node indices, positively oriented.
    cell : (Nt,) int32 parent-cell index (C order over (nc, nc, nc)).
    tet_type : (Nt,) int8 local pattern index, 0..5.
    """

    grid: Grid
    tets: np.ndarray
    cell: np.ndarray
    tet_type: np.ndarray

    @property
    def num_tets(self) -> int:
        return len(self.tets)

    @cached_property
    def gradients(self) -> np.ndarray:
        """(6, 3, 4) per-type gradient coefficients.

        For a tet of type t with node values v (length 4), the gradient of
        the piecewise-linear interpolant is ``gradients[t] @ v``.  Exact for
        this mesh: entries are integer multiples of 1/h.
        """
        g = np.empty((6, 3, 4))
        h = self.grid.spacing
        for t in range(6):
            corners = _CORNER_OFFSETS[_TET_CORNERS[t]] * h
            edges = (corners[1:] - corners[0]).T
            if abs(np.linalg.det(edges)) < 1e-30:
                from .errors import DegenerateElementError

                raise DegenerateElementError(f"tet pattern {t} has zero volume")
            inv_t = np.linalg.inv(edges).T
            g[t, :, 1:] = inv_t
            g[t, :, 0] = -inv_t.sum(axis=1)
        return g

    @cached_property
    def type_slices(self) -> list:
        """Index expressions selecting the tets of each local type.

        Tets are generated cell-major with the six types cycling fastest, so
        each type occupies a stride-6 slice; fall back to explicit indices if
        a caller ever constructs a mesh with a different layout.
        """
        expected = np.tile(np.arange(6, dtype=np.int8), self.num_tets // 6)
        if self.num_tets % 6 == 0 and np.array_equal(self.tet_type, expected):
            return [slice(t, self.num_tets, 6) for t in range(6)]
        return [np.nonzero(self.tet_type == t)[0] for t in range(6)]

    @cached_property
    def reference_volume(self) -> float:
        """Volume of every tet in the identity configuration (h^3 / 6)."""
        return self.grid.spacing**3 / 6.0

    def signed_volumes(self, positions: np.ndarray) -> np.ndarray:
        """Signed volumes of all tets for given (N, 3) node positions."""
        p = positions[self.tets]
        e = p[:, 1:] - p[:, :1]
        det = (
            e[:, 0, 0] * (e[:, 1, 1] * e[:, 2, 2] - e[:, 1, 2] * e[:, 2, 1])
            - e[:, 0, 1] * (e[:, 1, 0] * e[:, 2, 2] - e[:, 1, 2] * e[:, 2, 0])
            + e[:, 0, 2] * (e[:, 1, 0] * e[:, 2, 1] - e[:, 1, 1] * e[:, 2, 0])
        )
        return det / 6.0


def tetrahedralize(grid: Grid) -> TetMesh:
    """Split every grid cell into the six-tet pattern."""
    n = grid.nodes_per_axis
    nc = n - 1
    c = np.arange(nc, dtype=np.int64)
    ci, cj, ck = np.meshgrid(c, c, c, indexing="ij")
    base = ((ci * n + cj) * n + ck).ravel()

    corner_flat = (_CORNER_OFFSETS[:, 0] * n + _CORNER_OFFSETS[:, 1]) * n + _CORNER_OFFSETS[:, 2]
    patterns = corner_flat[_TET_CORNERS]  # (6, 4)

    tets = (base[:, None, None] + patterns[None, :, :]).reshape(-1, 4)
    cell = np.repeat(np.arange(nc**3, dtype=np.int32), 6)
    tet_type = np.tile(np.arange(6, dtype=np.int8), nc**3)
    return TetMesh(grid=grid, tets=tets.astype(np.int32), cell=cell, tet_type=tet_type)


@dataclass(frozen=True)
class BoundaryConditions:
    """Per-component node classification on the cube boundary.

    Component c is pinned (Dirichlet) on the two faces orthogonal to axis c,
    with value 0 on the near face and 1 on the far face; every other boundary
    face is a natural (Neumann) boundary for that component.
    """

    grid: Grid
    dirichlet_mask: np.ndarray = field(repr=False)  # (3, n, n, n) bool
    dirichlet_values: np.ndarray = field(repr=False)  # (3, n, n, n) float

    @classmethod
    def for_cube(cls, grid: Grid) -> "BoundaryConditions":
        n = grid.nodes_per_axis
        mask = np.zeros((3, n, n, n), dtype=bool)
        vals = np.zeros((3, n, n, n))
        for c in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[c] = 0
            hi[c] = n - 1
            mask[(c, *lo)] = True
            mask[(c, *hi)] = True
            vals[(c, *hi)] = 1.0
        return cls(grid=grid, dirichlet_mask=mask, dirichlet_values=vals)

    def classify(self, component: int) -> np.ndarray:
        """(n, n, n) string array: 'dirichlet' / 'neumann' / 'interior'."""
        n = self.grid.nodes_per_axis
        idx = np.indices((n, n, n))
        on_boundary = ((idx == 0) | (idx == n - 1)).any(axis=0)
        out = np.where(on_boundary, "neumann", "interior").astype(object)
        out[self.dirichlet_mask[component]] = "dirichlet"
        return out


@dataclass(frozen=True)
class LandmarkSet:
    """Source/target landmark pairs with sources snapped to grid nodes.

    ``source`` holds the snapped positions; ``source_raw`` the positions as
    given.  Targets are never snapped.
    """

    grid: Grid
    source_raw: np.ndarray  # (m, 3)
    source: np.ndarray  # (m, 3) snapped
    target: np.ndarray  # (m, 3)
    node_ids: np.ndarray  # (m,) int64 flat indices

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def snap_max_shift(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.abs(self.source - self.source_raw).max())


def snap_landmarks(grid: Grid, pairs) -> LandmarkSet:
    """Snap source landmarks to their nearest grid nodes.

    ``pairs`` is an (m, 2, 3) array-like of (source, target) positions, all
    inside the closed unit cube.  Snapping ties go to the lexicographically
    smallest lattice coordinate.  Raises if two sources land on the same node.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.size == 0:
        pairs = pairs.reshape(0, 2, 3)
    if pairs.ndim != 3 or pairs.shape[1:] != (2, 3):
        raise ValueError(f"expected (m, 2, 3) landmark pairs, got shape {pairs.shape}")
    p, q = pairs[:, 0], pairs[:, 1]

    eps = 1e-12
    bad = np.nonzero((pairs < -eps).any(axis=(1, 2)) | (pairs > 1 + eps).any(axis=(1, 2)))[0]
    if bad.size:
        raise OutOfDomainError(
            f"landmark pair(s) {bad.tolist()} outside the unit cube"
        )

    h = grid.spacing
    # ceil(x/h - 1/2) rounds to nearest with ties toward the smaller index
    ijk = np.ceil(p / h - 0.5).astype(np.int64)
    ijk = np.clip(ijk, 0, grid.nodes_per_axis - 1)
    node_ids = grid.flat_index(ijk)

    uniq, counts = np.unique(node_ids, return_counts=True)
    if (counts > 1).any():
        dup = uniq[counts > 1]
        raise DuplicateLandmarkError(
            f"{int(counts[counts > 1].sum())} landmarks snap onto node(s) {dup.tolist()}"
        )

    return LandmarkSet(
        grid=grid,
        source_raw=p.copy(),
        source=ijk * h,
        target=q.copy(),
        node_ids=node_ids,
    )


def landmark_node_mask(grid: Grid, landmarks: LandmarkSet) -> np.ndarray:
    """(n, n, n) bool mask of snapped landmark nodes."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask.reshape(-1)[landmarks.node_ids] = True
    return mask


def snap_landmarks_merged(grid: Grid, pairs) -> LandmarkSet:
    """Snapping that merges collisions instead of rejecting them.

    Pairs whose sources land on one node are replaced by a single landmark
    whose target is their mean.  Used to carry landmark sets onto coarse
    grids, where collisions are expected.
    """
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2, 3)
    h = grid.spacing
    ijk = np.clip(
        np.ceil(pairs[:, 0] / h - 0.5).astype(np.int64), 0, grid.nodes_per_axis - 1
    )
    node_ids = grid.flat_index(ijk)
    uniq, inverse = np.unique(node_ids, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    target = np.stack(
        [np.bincount(inverse, weights=pairs[:, 1, c]) / counts for c in range(3)],
        axis=1,
    )
    source = grid.lattice_coords(uniq) * h
    return LandmarkSet(
        grid=grid,
        source_raw=source.copy(),
        source=source,
        target=target,
        node_ids=uniq,
    )


def refine_field(coarse: Grid, f_coarse: np.ndarray, fine: Grid) -> np.ndarray:
    """Evaluate a coarse lattice map at fine nodes, piecewise linearly.

    Interpolation uses the coarse tetrahedra (not trilinear cell blending),
    so on the nested meshes every fine-tet Jacobian of the result equals the
    Jacobian of the containing coarse tet; in particular fold-free maps stay
    fold-free under refinement.
    """
    if fine.levels < coarse.levels:
        raise ValueError("refine_field expects a finer destination grid")
    spacing = coarse.spacing
    nc = coarse.nodes_per_axis
    pos = fine.node_positions
    cell = np.minimum((pos / spacing).astype(np.int64), nc - 2)
    local = pos / spacing - cell
    # flip the z coordinate so the cell diagonal matches the sorted-coordinate
    # (Kuhn) form; the containing tet is then the descending order of coords
    coords = np.stack([local[:, 0], local[:, 1], 1.0 - local[:, 2]], axis=1)
    order = np.argsort(-coords, axis=1, kind="stable")
    sorted_coords = np.take_along_axis(coords, order, axis=1)
    weights = np.stack(
        [
            1.0 - sorted_coords[:, 0],
            sorted_coords[:, 0] - sorted_coords[:, 1],
            sorted_coords[:, 1] - sorted_coords[:, 2],
            sorted_coords[:, 2],
        ],
        axis=1,
    )
    values = f_coarse.reshape(3, -1)
    out = np.zeros((3, len(pos)))
    offsets = np.zeros((len(pos), 4, 3), dtype=np.int64)
    rows = np.arange(len(pos))
    for step in range(3):
        offsets[:, step + 1] = offsets[:, step]
        offsets[rows, step + 1, order[:, step]] += 1
    for vertex in range(4):
        ijk = cell + offsets[:, vertex]
        ijk[:, 2] = cell[:, 2] + (1 - offsets[:, vertex, 2])  # unflip z
        nid = (ijk[:, 0] * nc + ijk[:, 1]) * nc + ijk[:, 2]
        out += weights[:, vertex][None, :] * values[:, nid]
    n = fine.nodes_per_axis
    return np.ascontiguousarray(out.reshape(3, n, n, n))
