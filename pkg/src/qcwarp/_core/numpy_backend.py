"""Pure-numpy implementations of the hot kernels.

Same signatures as the compiled extension ``qcwarp._core._stencil``.  All
lattice arrays are C-contiguous float64 of shape (n, n, n); stencil operators
are stored as a diagonal array plus three axis-edge coupling arrays:

    diag : (n, n, n)      A[u, u]
    cx   : (n-1, n, n)    A[(i,j,k), (i+1,j,k)]  (symmetric)
    cy   : (n, n-1, n)    A[(i,j,k), (i,j+1,k)]
    cz   : (n, n, n-1)    A[(i,j,k), (i,j,k+1)]

Red-black Gauss-Seidel is exact with simultaneous same-color updates because
the stencil couples only opposite-parity neighbors.
"""

from __future__ import annotations

import numpy as np

name = "numpy"

_CHECKER_CACHE: dict[int, np.ndarray] = {}


def _checker(n: int) -> np.ndarray:
    if n not in _CHECKER_CACHE:
        idx = np.indices((n, n, n)).sum(axis=0)
        _CHECKER_CACHE[n] = (idx % 2).astype(np.uint8)
    return _CHECKER_CACHE[n]


def stencil_apply(diag, cx, cy, cz, u, out=None):
    """out = A @ u for the 7-point stencil operator."""
    if out is None:
        out = np.empty_like(u)
    np.multiply(diag, u, out=out)
    out[:-1] += cx * u[1:]
    out[1:] += cx * u[:-1]
    out[:, :-1] += cy * u[:, 1:]
    out[:, 1:] += cy * u[:, :-1]
    out[:, :, :-1] += cz * u[:, :, 1:]
    out[:, :, 1:] += cz * u[:, :, :-1]
    return out


def _offdiag_apply(cx, cy, cz, u):
    out = np.zeros_like(u)
    out[:-1] += cx * u[1:]
    out[1:] += cx * u[:-1]
    out[:, :-1] += cy * u[:, 1:]
    out[:, 1:] += cy * u[:, :-1]
    out[:, :, :-1] += cz * u[:, :, 1:]
    out[:, :, 1:] += cz * u[:, :, :-1]
    return out


def rbgs_sweep(diag, cx, cy, cz, u, rhs, free, color):
    """One Gauss-Seidel half-sweep over nodes of the given color (0 or 1).

    Updates ``u`` in place at free nodes of that parity; constrained nodes
    (free == 0) are left untouched.
    """
    n = u.shape[0]
    mask = (_checker(n) == color) & (free != 0)
    upd = rhs - _offdiag_apply(cx, cy, cz, u)
    u[mask] = upd[mask] / diag[mask]
    return u


def _restrict_axis(w: np.ndarray, axis: int) -> np.ndarray:
    nf = w.shape[axis]
    nc = (nf + 1) // 2
    even = [slice(None)] * 3
    even[axis] = slice(0, nf, 2)
    out = 0.5 * w[tuple(even)]
    odd = [slice(None)] * 3
    odd[axis] = slice(1, nf, 2)
    w_odd = w[tuple(odd)]
    dst = [slice(None)] * 3
    dst[axis] = slice(1, nc)
    out[tuple(dst)] += 0.25 * w_odd
    dst[axis] = slice(0, nc - 1)
    out[tuple(dst)] += 0.25 * w_odd
    return out


def restrict_full_weighting(fine):
    """Full-weighting fine-to-coarse transfer, the trilinear adjoint / 8.

    Separable per-axis weights [1/4, 1/2, 1/4]; out-of-range taps are
    dropped, making the operator exactly (1/8) P^T with P the trilinear
    prolongation.
    """
    w = fine
    for axis in range(3):
        w = _restrict_axis(w, axis)
    return np.ascontiguousarray(w)


def prolong_add(coarse, fine, free):
    """fine += trilinear interpolation of coarse, restricted to free nodes."""
    nf = fine.shape[0]
    full = np.zeros_like(fine)
    full[::2, ::2, ::2] = coarse
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        dst = [slice(None)] * 3
        lo[axis] = slice(0, nf - 2, 2)
        hi[axis] = slice(2, nf, 2)
        dst[axis] = slice(1, nf - 1, 2)
        full[tuple(dst)] = 0.5 * (full[tuple(lo)] + full[tuple(hi)])
    mask = free != 0
    fine[mask] += full[mask]
    return fine


def svd3_batch(b):
    """Batched SVD of (N, 3, 3) matrices: returns (U, s, Vt), s descending."""
    return np.linalg.svd(np.ascontiguousarray(b))


def fixed_point_batch(x, a, negative_branch, d_init, eps, max_iter):
    """Damped fixed-point iteration for the per-tet singular-value system.

    Solves y_i - (a / D) / y_i = x_i coupled through D = |y1 y2 y3|^(2/3),
    iterating D <- (D + |prod y(D)|^(2/3)) / 2.  Rows with
    ``negative_branch`` set take the negative quadratic root at the smallest
    x_i.  Returns (y, D, iterations) where y solves the decoupled quadratics
    at the final D.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    m = len(a)
    neg = np.asarray(negative_branch, dtype=bool)
    neg_idx = np.argmin(x, axis=1)
    d = np.asarray(d_init, dtype=float).copy()
    y = np.empty_like(x)
    iters = np.zeros(m, dtype=np.int64)
    active = np.arange(m)

    for _ in range(max_iter):
        xa = x[active]
        root = np.sqrt(xa * xa + (4.0 * a[active] / d[active])[:, None])
        ya = 0.5 * (xa + root)
        sel = np.nonzero(neg[active])[0]
        if sel.size:
            cols = neg_idx[active][sel]
            ya[sel, cols] = 0.5 * (xa[sel, cols] - root[sel, cols])
        prod = ya[:, 0] * ya[:, 1] * ya[:, 2]
        f = np.cbrt(prod * prod)
        d_new = 0.5 * (d[active] + f)
        delta = np.abs(d_new - d[active])
        d[active] = d_new
        y[active] = ya
        iters[active] += 1
        active = active[delta >= eps]
        if active.size == 0:
            break

    return y, d, iters
