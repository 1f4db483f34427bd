# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: 7-point stencil ops, grid transfers, batched 3x3 SVD
and the per-tet fixed-point loop.  Semantics match
``qcwarp._core.numpy_backend`` exactly."""

import numpy as np

cimport cython
from libc.math cimport cbrt, fabs, sqrt

name = "compiled"


def stencil_apply(double[:, :, ::1] diag, double[:, :, ::1] cx,
                  double[:, :, ::1] cy, double[:, :, ::1] cz,
                  double[:, :, ::1] u, out=None):
    cdef Py_ssize_t n = u.shape[0]
    if out is None:
        out = np.empty((n, n, n))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            for k in range(n):
                acc = diag[i, j, k] * u[i, j, k]
                if i + 1 < n:
                    acc += cx[i, j, k] * u[i + 1, j, k]
                if i > 0:
                    acc += cx[i - 1, j, k] * u[i - 1, j, k]
                if j + 1 < n:
                    acc += cy[i, j, k] * u[i, j + 1, k]
                if j > 0:
                    acc += cy[i, j - 1, k] * u[i, j - 1, k]
                if k + 1 < n:
                    acc += cz[i, j, k] * u[i, j, k + 1]
                if k > 0:
                    acc += cz[i, j, k - 1] * u[i, j, k - 1]
                o[i, j, k] = acc
    return out


def rbgs_sweep(double[:, :, ::1] diag, double[:, :, ::1] cx,
               double[:, :, ::1] cy, double[:, :, ::1] cz,
               double[:, :, ::1] u, double[:, :, ::1] rhs,
               unsigned char[:, :, ::1] free, int color):
    """In-place Gauss-Seidel half-sweep over one checkerboard color."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, j, k, k0
    cdef double acc
    for i in range(n):
        for j in range(n):
            k0 = (color + i + j) % 2
            for k in range(k0, n, 2):
                if free[i, j, k] == 0:
                    continue
                acc = rhs[i, j, k]
                if i + 1 < n:
                    acc -= cx[i, j, k] * u[i + 1, j, k]
                if i > 0:
                    acc -= cx[i - 1, j, k] * u[i - 1, j, k]
                if j + 1 < n:
                    acc -= cy[i, j, k] * u[i, j + 1, k]
                if j > 0:
                    acc -= cy[i, j - 1, k] * u[i, j - 1, k]
                if k + 1 < n:
                    acc -= cz[i, j, k] * u[i, j, k + 1]
                if k > 0:
                    acc -= cz[i, j, k - 1] * u[i, j, k - 1]
                u[i, j, k] = acc / diag[i, j, k]
    return np.asarray(u)


cdef inline double _axis_weight(Py_ssize_t f, Py_ssize_t c) nogil:
    # weight of fine index f in the full-weighting stencil of coarse index c
    if f == 2 * c:
        return 0.5
    return 0.25


def restrict_full_weighting(double[:, :, ::1] fine):
    cdef Py_ssize_t nf = fine.shape[0]
    cdef Py_ssize_t nc = (nf + 1) // 2
    out = np.zeros((nc, nc, nc))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t ci, cj, ck, fi, fj, fk
    cdef double wi, wj, wk, acc
    for ci in range(nc):
        for cj in range(nc):
            for ck in range(nc):
                acc = 0.0
                for fi in range(max(2 * ci - 1, 0), min(2 * ci + 2, nf)):
                    wi = _axis_weight(fi, ci)
                    for fj in range(max(2 * cj - 1, 0), min(2 * cj + 2, nf)):
                        wj = wi * _axis_weight(fj, cj)
                        for fk in range(max(2 * ck - 1, 0), min(2 * ck + 2, nf)):
                            wk = wj * _axis_weight(fk, ck)
                            acc += wk * fine[fi, fj, fk]
                o[ci, cj, ck] = acc
    return out


def prolong_add(double[:, :, ::1] coarse, double[:, :, ::1] fine,
                unsigned char[:, :, ::1] free):
    cdef Py_ssize_t nf = fine.shape[0]
    cdef Py_ssize_t i, j, k, ic, jc, kc
    cdef bint oi, oj, ok
    cdef double v
    for i in range(nf):
        ic = i // 2
        oi = i % 2
        for j in range(nf):
            jc = j // 2
            oj = j % 2
            for k in range(nf):
                if free[i, j, k] == 0:
                    continue
                kc = k // 2
                ok = k % 2
                v = coarse[ic, jc, kc]
                if oi:
                    v += coarse[ic + 1, jc, kc]
                if oj:
                    v += coarse[ic, jc + 1, kc]
                    if oi:
                        v += coarse[ic + 1, jc + 1, kc]
                if ok:
                    v += coarse[ic, jc, kc + 1]
                    if oi:
                        v += coarse[ic + 1, jc, kc + 1]
                    if oj:
                        v += coarse[ic, jc + 1, kc + 1]
                        if oi:
                            v += coarse[ic + 1, jc + 1, kc + 1]
                fine[i, j, k] += v / ((1 + oi) * (1 + oj) * (1 + ok))
    return np.asarray(fine)


cdef inline void _rotate_cols(double a[3][3], Py_ssize_t p, Py_ssize_t q,
                              double c, double s) nogil:
    cdef Py_ssize_t r
    cdef double ap, aq
    for r in range(3):
        ap = a[r][p]
        aq = a[r][q]
        a[r][p] = c * ap - s * aq
        a[r][q] = s * ap + c * aq


cdef inline void _svd3_one(const double* b, double* u_out, double* s_out,
                           double* vt_out) nogil:
    """One-sided Jacobi SVD of a 3x3 matrix (row-major buffers)."""
    cdef double w[3][3]
    cdef double v[3][3]
    cdef double s[3]
    cdef Py_ssize_t r, c, p, q, sweep, mi
    cdef double app, aqq, apq, tau, t, cs, sn, tmp, norm, scale

    for r in range(3):
        for c in range(3):
            w[r][c] = b[3 * r + c]
            v[r][c] = 1.0 if r == c else 0.0

    scale = 0.0
    for r in range(3):
        for c in range(3):
            if fabs(w[r][c]) > scale:
                scale = fabs(w[r][c])
    if scale == 0.0:
        for r in range(3):
            s_out[r] = 0.0
            for c in range(3):
                u_out[3 * r + c] = 1.0 if r == c else 0.0
                vt_out[3 * r + c] = 1.0 if r == c else 0.0
        return

    for sweep in range(40):
        tmp = 0.0  # largest relative off-diagonal seen this sweep
        for p in range(2):
            for q in range(p + 1, 3):
                app = w[0][p] * w[0][p] + w[1][p] * w[1][p] + w[2][p] * w[2][p]
                aqq = w[0][q] * w[0][q] + w[1][q] * w[1][q] + w[2][q] * w[2][q]
                apq = w[0][p] * w[0][q] + w[1][p] * w[1][q] + w[2][p] * w[2][q]
                if app * aqq <= 0.0:
                    continue
                norm = fabs(apq) / sqrt(app * aqq)
                if norm > tmp:
                    tmp = norm
                if norm < 1e-17:
                    continue
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = cs * t
                _rotate_cols(w, p, q, cs, sn)
                _rotate_cols(v, p, q, cs, sn)
        if tmp < 1e-15:
            break

    for c in range(3):
        s[c] = sqrt(w[0][c] * w[0][c] + w[1][c] * w[1][c] + w[2][c] * w[2][c])

    # order singular values descending (3-element sort by swaps)
    for p in range(2):
        mi = p
        for q in range(p + 1, 3):
            if s[q] > s[mi]:
                mi = q
        if mi != p:
            tmp = s[p]; s[p] = s[mi]; s[mi] = tmp
            for r in range(3):
                tmp = w[r][p]; w[r][p] = w[r][mi]; w[r][mi] = tmp
                tmp = v[r][p]; v[r][p] = v[r][mi]; v[r][mi] = tmp

    # left vectors: normalized columns, completed by cross products when
    # trailing singular values underflow
    cdef double u[3][3]
    cdef double tol = 1e-30 + 1e-14 * s[0]
    for c in range(3):
        if s[c] > tol:
            for r in range(3):
                u[r][c] = w[r][c] / s[c]
        elif c == 1:
            # second column degenerate: any unit vector orthogonal to u0
            mi = 0
            if fabs(u[1][0]) < fabs(u[mi][0]):
                mi = 1
            if fabs(u[2][0]) < fabs(u[mi][0]):
                mi = 2
            for r in range(3):
                u[r][1] = -u[r][0] * u[mi][0]
            u[mi][1] += 1.0
            norm = sqrt(u[0][1] * u[0][1] + u[1][1] * u[1][1] + u[2][1] * u[2][1])
            for r in range(3):
                u[r][1] /= norm
        else:
            # third column: cross product of the first two
            u[0][2] = u[1][0] * u[2][1] - u[2][0] * u[1][1]
            u[1][2] = u[2][0] * u[0][1] - u[0][0] * u[2][1]
            u[2][2] = u[0][0] * u[1][1] - u[1][0] * u[0][1]
            norm = sqrt(u[0][2] * u[0][2] + u[1][2] * u[1][2] + u[2][2] * u[2][2])
            for r in range(3):
                u[r][2] /= norm

    for r in range(3):
        s_out[r] = s[r]
        for c in range(3):
            u_out[3 * r + c] = u[r][c]
            vt_out[3 * r + c] = v[c][r]


def svd3_batch(b):
    cdef double[:, :, ::1] bm = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = bm.shape[0]
    u = np.empty((m, 3, 3))
    s = np.empty((m, 3))
    vt = np.empty((m, 3, 3))
    cdef double[:, :, ::1] um = u
    cdef double[:, ::1] sm = s
    cdef double[:, :, ::1] vm = vt
    cdef Py_ssize_t t
    for t in range(m):
        _svd3_one(&bm[t, 0, 0], &um[t, 0, 0], &sm[t, 0], &vm[t, 0, 0])
    return u, s, vt


def fixed_point_batch(x, a, negative_branch, d_init, double eps, int max_iter):
    cdef double[:, ::1] xm = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] am = np.ascontiguousarray(a, dtype=np.float64)
    cdef unsigned char[::1] negm = np.ascontiguousarray(
        negative_branch, dtype=np.uint8
    )
    cdef double[::1] d0 = np.ascontiguousarray(d_init, dtype=np.float64)
    cdef Py_ssize_t m = xm.shape[0]
    y = np.empty((m, 3))
    d = np.empty(m)
    iters = np.zeros(m, dtype=np.int64)
    cdef double[:, ::1] ym = y
    cdef double[::1] dm = d
    cdef long long[::1] im = iters
    cdef Py_ssize_t t, i, mi, it
    cdef double dv, root, prod, f, dn
    cdef double yv[3]
    cdef double xv[3]
    for t in range(m):
        for i in range(3):
            xv[i] = xm[t, i]
        mi = 0
        if xv[1] < xv[mi]:
            mi = 1
        if xv[2] < xv[mi]:
            mi = 2
        dv = d0[t]
        for it in range(max_iter):
            prod = 1.0
            for i in range(3):
                root = sqrt(xv[i] * xv[i] + 4.0 * am[t] / dv)
                if negm[t] and i == mi:
                    yv[i] = 0.5 * (xv[i] - root)
                else:
                    yv[i] = 0.5 * (xv[i] + root)
                prod *= yv[i]
            f = cbrt(prod * prod)
            dn = 0.5 * (dv + f)
            im[t] = it + 1
            if fabs(dn - dv) < eps:
                dv = dn
                break
            dv = dn
        dm[t] = dv
        for i in range(3):
            ym[t, i] = yv[i]
    return y, d, iters
