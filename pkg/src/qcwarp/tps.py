"""Thin-plate-spline landmark interpolant, the comparison baseline.

Classic radial-basis form per target coordinate: an affine part plus kernel
terms U(r) = r (the 3D biharmonic fundamental solution up to a constant),
with the side conditions sum w_i = 0 and sum w_i p_i^T = 0.  The dense
(m + 4) system is solved directly; rank-deficient systems (fewer than four
non-coplanar landmarks) fall back to the minimum-norm least-squares
solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllPosedError
from .grid import Grid


@dataclass
class TpsModel:
    """Fitted interpolant: f(x) = affine @ (1, x) + sum_i w_i ||x - p_i||."""

    points: np.ndarray  # (m, 3) landmark sources
    weights: np.ndarray  # (m, 3) kernel weights, one column per component
    affine: np.ndarray  # (3, 4) rows: constant + linear coefficients


def tps_fit(pairs: np.ndarray) -> TpsModel:
    """Fit the spline through (source, target) pairs of shape (m, 2, 3)."""
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1:] != (2, 3) or len(pairs) == 0:
        raise ValueError(f"expected nonempty (m, 2, 3) pairs, got {pairs.shape}")
    p, q = pairs[:, 0], pairs[:, 1]
    m = len(p)

    r = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)
    off = ~np.eye(m, dtype=bool)
    if m > 1 and np.any(r[off] < 1e-14):
        raise IllPosedError("coincident landmark sources make the system singular")

    basis = np.concatenate([np.ones((m, 1)), p], axis=1)  # (m, 4)
    size = m + 4
    system = np.zeros((size, size))
    system[:m, :m] = r
    system[:m, m:] = basis
    system[m:, :m] = basis.T
    rhs = np.zeros((size, 3))
    rhs[:m] = q

    well_posed = m >= 4 and np.linalg.matrix_rank(basis) == 4
    if well_posed:
        try:
            sol = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            raise IllPosedError(f"singular interpolation system: {exc}") from exc
    else:
        sol, *_ = np.linalg.lstsq(system, rhs, rcond=None)

    model = TpsModel(points=p.copy(), weights=sol[:m], affine=sol[m:].T)
    resid = np.abs(tps_eval(model, p) - q).max()
    if resid > 1e-8:
        raise IllPosedError(f"interpolation residual {resid:.2e} after solve")
    return model


def tps_eval(model: TpsModel, x: np.ndarray) -> np.ndarray:
    """Evaluate the spline at one point (3,) or a batch (..., 3)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    r = np.linalg.norm(pts[:, None, :] - model.points[None, :, :], axis=2)
    ones = np.ones((len(pts), 1))
    out = np.concatenate([ones, pts], axis=1) @ model.affine.T + r @ model.weights
    return out[0] if single else out.reshape(*x.shape[:-1], 3)


def tps_field(model: TpsModel, grid: Grid, chunk: int = 8192) -> np.ndarray:
    """Spline evaluated on every grid node, shape (3, n, n, n).

    Chunked so the (nodes x landmarks) distance matrix never materializes
    for dense landmark sets.
    """
    pos = grid.node_positions
    out = np.empty((len(pos), 3))
    for start in range(0, len(pos), chunk):
        out[start : start + chunk] = tps_eval(model, pos[start : start + chunk])
    n = grid.nodes_per_axis
    return np.ascontiguousarray(out.T.reshape(3, n, n, n))
