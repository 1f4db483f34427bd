"""Per-tet projection onto orientation-preserving matrices.

Each tet independently minimizes

    c / det(R)^(2/3) + (mu / 2) ||R - B||_F^2     over det(R) > 0,

whose minimizer shares the singular vectors of B.  In singular-value space
the stationarity condition y_i - (a / det^(2/3)) / y_i = x_i decouples given
the determinant, and the damped update D <- (D + |y1 y2 y3|^(2/3)) / 2
contracts with factor 1/2, so a handful of iterations reach round-off.  When
det(U V^T) < 0 the smallest singular value takes the negative root, which
keeps det(R) positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._core import fixed_point_batch, svd3_batch
from .conformality import det3_batch
from .errors import ConvergenceError

_D_FLOOR = 1e-6  # lower clamp for the initial determinant estimate


@dataclass
class Svd3:
    """SVD of a single 3x3 matrix with the orientation sign of U V^T."""

    u: np.ndarray
    s: np.ndarray  # descending, >= 0
    vt: np.ndarray
    sign_det_uv: int


def svd3(b: np.ndarray) -> Svd3:
    b = np.asarray(b, dtype=float)
    if b.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {b.shape}")
    u, s, vt = svd3_batch(b[None])
    sign = np.linalg.det(u[0]) * np.linalg.det(vt[0])
    return Svd3(u=u[0], s=s[0], vt=vt[0], sign_det_uv=1 if sign > 0 else -1)


def barrier_coefficient(df_t: np.ndarray, mu: float) -> float:
    """Barrier strength a = 2 ||Df(T)||_F^2 / (3 mu)."""
    if mu <= 0:
        raise ValueError(f"penalty mu must be > 0, got {mu}")
    return 2.0 * float(np.sum(df_t * df_t)) / (3.0 * mu)


def fixed_point_path(
    x: np.ndarray,
    a: float,
    negative_branch: bool,
    d_init: float,
    eps: float = 1e-12,
    max_iter: int = 200,
) -> tuple[np.ndarray, list[float]]:
    """Scalar fixed-point iteration that records the determinant sequence.

    Returns the final singular values y and the list [D_1, D_2, ...]; used
    by diagnostics and tests, independent of the batched kernel.
    """
    d = float(d_init)
    history = [d]
    neg_i = int(np.argmin(x))
    y = np.empty(3)
    for _ in range(max_iter):
        root = np.sqrt(x * x + 4.0 * a / d)
        y[:] = 0.5 * (x + root)
        if negative_branch:
            y[neg_i] = 0.5 * (x[neg_i] - root[neg_i])
        prod = y[0] * y[1] * y[2]
        d_new = 0.5 * (d + np.cbrt(prod * prod))
        history.append(d_new)
        if abs(d_new - d) < eps:
            return y, history
        d = d_new
    raise ConvergenceError(
        f"fixed point did not reach eps={eps} in {max_iter} iterations",
        residual=abs(history[-1] - history[-2]),
        iterations=max_iter,
    )


def project_matrix(
    b: np.ndarray,
    a: float,
    d_init: float,
    eps: float = 1e-12,
    max_iter: int = 200,
) -> np.ndarray:
    """Projection of a single matrix; returns R with det(R) > 0."""
    if not (np.isfinite(b).all() and np.isfinite(a) and np.isfinite(d_init)):
        raise ValueError("inputs must be finite")
    if a <= 0 or d_init <= 0 or eps <= 0:
        raise ValueError("a, d_init and eps must be positive")
    dec = svd3(b)
    y, _ = fixed_point_path(
        dec.s, a, dec.sign_det_uv < 0, d_init, eps=eps, max_iter=max_iter
    )
    return (dec.u * y) @ dec.vt


def project_field(
    jacobians: np.ndarray,
    multiplier: np.ndarray,
    mu: float,
    r_prev: np.ndarray,
    eps: float = 1e-12,
    max_iter: int = 200,
) -> np.ndarray:
    """Projection applied tet-wise: B = Df - lambda, warm-started from the
    previous determinants.  Every returned matrix has positive determinant."""
    if mu <= 0:
        raise ValueError(f"penalty mu must be > 0, got {mu}")
    b = jacobians - multiplier
    fro2 = np.einsum("tij,tij->t", jacobians, jacobians)
    a = 2.0 * fro2 / (3.0 * mu)

    u, s, vt = svd3_batch(b)
    sign = det3_batch(u) * det3_batch(vt)
    neg = sign < 0.0

    det_prev = det3_batch(r_prev)
    d0 = np.maximum(np.cbrt(det_prev * det_prev), _D_FLOOR)

    y = np.empty_like(s)
    degenerate = a <= 0.0
    if degenerate.any():
        # Df = 0 on a tet: the barrier vanishes; fall back to the
        # sign-corrected reconstruction of B so the loop stays total.
        yd = np.maximum(s[degenerate], 1e-12)
        rows = np.nonzero(degenerate)[0]
        cols = np.argmin(s[degenerate], axis=1)
        yd[np.arange(len(rows)), cols] *= np.where(neg[degenerate], -1.0, 1.0)
        y[degenerate] = yd
    active = ~degenerate
    if active.any():
        ya, _, iters = fixed_point_batch(
            s[active], a[active], neg[active], d0[active], eps, max_iter
        )
        if int(iters.max()) >= max_iter:
            raise ConvergenceError(
                f"fixed point hit the {max_iter}-iteration cap",
                residual=np.nan,
                iterations=max_iter,
            )
        y[active] = ya

    r_new = np.einsum("tij,tj,tjk->tik", u, y, vt)
    det_new = det3_batch(r_new)
    if np.any(det_new <= 0.0):
        bad = int(np.argmin(det_new))
        raise ConvergenceError(
            f"projected matrix on tet {bad} has det {det_new[bad]} <= 0",
            residual=float(det_new[bad]),
            iterations=0,
        )
    return r_new
