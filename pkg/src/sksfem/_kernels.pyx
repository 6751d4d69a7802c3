# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; conventions as in ``_pykernels``."""
import numpy as np
from libc.math cimport fabs, sqrt

NAME = "cython"


def quad_values(const double[::1] c, const double[:, ::1] phi):
    cdef Py_ssize_t n = c.shape[0], r = phi.shape[0], nq = phi.shape[1]
    cdef Py_ssize_t e, j, q, i
    cdef double ci
    out = np.zeros((n, nq))
    cdef double[:, ::1] o = out
    for e in range(n):
        for j in range(r):
            i = e - j
            if i < 0:
                i += n
            ci = c[i]
            for q in range(nq):
                o[e, q] += ci * phi[j, q]
    return out


def load_vector(const double[:, ::1] g, const double[:, ::1] phi, const double[::1] w):
    cdef Py_ssize_t n = g.shape[0], r = phi.shape[0], nq = phi.shape[1]
    cdef Py_ssize_t e, j, q, i
    cdef double acc
    out = np.zeros(n)
    cdef double[::1] o = out
    for e in range(n):
        for j in range(r):
            i = e - j
            if i < 0:
                i += n
            acc = 0.0
            for q in range(nq):
                acc += w[q] * g[e, q] * phi[j, q]
            o[i] += acc
    return out


cdef void _convection(const double[::1] c, const double[:, ::1] phi0, const double[:, ::1] phi1,
                      const double[::1] w, double[::1] f, double[:, ::1] jb, bint jacobian,
                      double[::1] vq, double[::1] vpq) noexcept:
    cdef Py_ssize_t n = c.shape[0], r = phi0.shape[0], nq = phi0.shape[1]
    cdef Py_ssize_t b = r - 1, e, j, l, q, i, il
    cdef double v, vp, ci, acc
    f[:] = 0.0
    if jacobian:
        jb[:, :] = 0.0
    for e in range(n):
        for q in range(nq):
            v = 0.0
            vp = 0.0
            for j in range(r):
                i = e - j
                if i < 0:
                    i += n
                ci = c[i]
                v += ci * phi0[j, q]
                vp += ci * phi1[j, q]
            vq[q] = v
            vpq[q] = vp
        for j in range(r):
            i = e - j
            if i < 0:
                i += n
            acc = 0.0
            for q in range(nq):
                acc += w[q] * vq[q] * vpq[q] * phi0[j, q]
            f[i] += acc
            if jacobian:
                for l in range(r):
                    acc = 0.0
                    for q in range(nq):
                        acc += w[q] * (vpq[q] * phi0[l, q] + vq[q] * phi1[l, q]) * phi0[j, q]
                    jb[i, j - l + b] += acc


def convection(const double[::1] c, const double[:, ::1] phi0, const double[:, ::1] phi1,
               const double[::1] w, bint jacobian=True):
    cdef Py_ssize_t n = c.shape[0], r = phi0.shape[0], nq = phi0.shape[1]
    vec = np.zeros(n)
    band = np.zeros((n, 2 * r - 1)) if jacobian else np.zeros((1, 1))
    _convection(c, phi0, phi1, w, vec, band, jacobian, np.empty(nq), np.empty(nq))
    return vec, (band if jacobian else None)


cdef void _matvec(const double[:, ::1] band, const double[::1] x, double[::1] y) noexcept:
    cdef Py_ssize_t n = band.shape[0], b = (band.shape[1] - 1) // 2
    cdef Py_ssize_t i, d, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for d in range(-b, b + 1):
            j = (i + d) % n
            if j < 0:
                j += n
            acc += band[i, d + b] * x[j]
        y[i] = acc


def band_matvec(const double[:, ::1] band, const double[::1] x):
    out = np.empty(band.shape[0])
    _matvec(band, x, out)
    return out


cdef void _band_lu_solve(double[:, ::1] lu, Py_ssize_t ni, Py_ssize_t b, double[::1] y) noexcept:
    cdef Py_ssize_t i, k, lo, hi
    cdef double acc
    for i in range(ni):
        lo = i - b if i >= b else 0
        acc = y[i]
        for k in range(lo, i):
            acc -= lu[i, k - i + b] * y[k]
        y[i] = acc
    for i in range(ni - 1, -1, -1):
        hi = i + b if i + b < ni - 1 else ni - 1
        acc = y[i]
        for k in range(i + 1, hi + 1):
            acc -= lu[i, k - i + b] * y[k]
        y[i] = acc / lu[i, b]


cdef class _SolveWork:
    cdef double[:, ::1] lu
    cdef double[:, ::1] z
    cdef double[:, ::1] lower
    cdef double[:, ::1] s

    def __init__(self, Py_ssize_t n, Py_ssize_t b):
        self.lu = np.zeros((n - b, 2 * b + 1))
        self.z = np.zeros((b + 1, n - b))
        self.lower = np.zeros((b, n - b))
        self.s = np.zeros((b, b + 1))


cdef int _cyclic_solve(const double[:, ::1] band, const double[::1] rhs, double[::1] x,
                       _SolveWork work) except -1:
    cdef Py_ssize_t n = band.shape[0], b = (band.shape[1] - 1) // 2
    cdef Py_ssize_t ni = n - b
    cdef Py_ssize_t i, d, j, k, m, hi, p
    cdef double piv, fac, val, tmp
    cdef double[:, ::1] lu = work.lu
    cdef double[:, ::1] z = work.z
    cdef double[:, ::1] lower = work.lower
    cdef double[:, ::1] s = work.s
    lu[:, :] = 0.0
    z[:, :] = 0.0
    lower[:, :] = 0.0
    s[:, :] = 0.0
    for i in range(ni):
        for d in range(-b, b + 1):
            j = i + d
            val = band[i, d + b]
            if 0 <= j < ni:
                lu[i, d + b] = val
            else:
                j = (j + n) % n
                z[j - ni, i] += val
        z[b, i] = rhs[i]
    for i in range(ni, n):
        for d in range(-b, b + 1):
            j = (i + d) % n
            val = band[i, d + b]
            if j >= ni:
                s[i - ni, j - ni] += val
            else:
                lower[i - ni, j] += val
        s[i - ni, b] = rhs[i]
    for k in range(ni):
        piv = lu[k, b]
        if fabs(piv) < 1e-300:
            raise ZeroDivisionError(f"zero pivot at row {k} (value {piv!r})")
        hi = k + b if k + b < ni - 1 else ni - 1
        for i in range(k + 1, hi + 1):
            fac = lu[i, k - i + b] / piv
            lu[i, k - i + b] = fac
            for j in range(k + 1, hi + 1):
                lu[i, j - i + b] -= fac * lu[k, j - k + b]
    for m in range(b + 1):
        _band_lu_solve(lu, ni, b, z[m])
    for i in range(b):
        for m in range(b + 1):
            tmp = 0.0
            for j in range(ni):
                tmp += lower[i, j] * z[m, j]
            s[i, m] -= tmp
    for k in range(b):
        p = k
        for i in range(k + 1, b):
            if fabs(s[i, k]) > fabs(s[p, k]):
                p = i
        if p != k:
            for m in range(b + 1):
                tmp = s[k, m]
                s[k, m] = s[p, m]
                s[p, m] = tmp
        piv = s[k, k]
        if fabs(piv) < 1e-300:
            raise ZeroDivisionError(f"zero pivot at row {ni + k} (value {piv!r})")
        for i in range(k + 1, b):
            fac = s[i, k] / piv
            for m in range(k, b + 1):
                s[i, m] -= fac * s[k, m]
    for k in range(b - 1, -1, -1):
        tmp = s[k, b]
        for m in range(k + 1, b):
            tmp -= s[k, m] * x[ni + m]
        x[ni + k] = tmp / s[k, k]
    for i in range(ni):
        tmp = z[b, i]
        for m in range(b):
            tmp -= z[m, i] * x[ni + m]
        x[i] = tmp
    return 0


def cyclic_band_solve(const double[:, ::1] band, const double[::1] rhs):
    """Banded LU (no pivoting) on the leading block, pivoted dense solve on the Schur complement."""
    n = band.shape[0]
    b = (band.shape[1] - 1) // 2
    out = np.empty(n)
    _cyclic_solve(band, rhs, out, _SolveWork(n, b))
    return out


cdef double _norm(const double[::1] f, double h) noexcept:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(f.shape[0]):
        acc += f[i] * f[i]
    return sqrt(acc / h)


cdef double _residual(const double[:, ::1] system, const double[::1] rhs, const double[::1] c,
                      const double[:, ::1] phi0, const double[:, ::1] phi1, const double[::1] w,
                      double k, double h, bint linearized, double[::1] F, double[::1] nv,
                      double[:, ::1] jb, bint jacobian, double[::1] vq, double[::1] vpq) noexcept:
    cdef Py_ssize_t i
    _matvec(system, c, F)
    if linearized:
        for i in range(F.shape[0]):
            F[i] -= rhs[i]
    else:
        _convection(c, phi0, phi1, w, nv, jb, jacobian, vq, vpq)
        for i in range(F.shape[0]):
            F[i] += k * nv[i] - rhs[i]
    return _norm(F, h)


def newton_solve(const double[:, ::1] system, const double[::1] rhs, const double[::1] guess,
                 const double[:, ::1] phi0, const double[:, ::1] phi1, const double[::1] w,
                 double k, double h, double tol, int max_iter, double damping, bint linearized):
    """Damped Newton iteration for one implicit step; returns ``(c, residual_history)``."""
    cdef Py_ssize_t n = system.shape[0], nb = system.shape[1], nq = phi0.shape[1]
    cdef Py_ssize_t i, d, it
    cdef double res, res_t, lam
    cdef double[::1] c = np.array(guess, dtype=float)
    cdef double[::1] trial = np.empty(n)
    cdef double[::1] F = np.empty(n)
    cdef double[::1] F_t = np.empty(n)
    cdef double[::1] nv = np.empty(n)
    cdef double[::1] delta = np.empty(n)
    cdef double[::1] neg = np.empty(n)
    cdef double[:, ::1] jb = np.zeros((n, nb))
    cdef double[:, ::1] jb_t = np.zeros((n, nb))
    cdef double[:, ::1] K = np.empty((n, nb))
    cdef double[::1] vq = np.empty(nq)
    cdef double[::1] vpq = np.empty(nq)
    cdef double[::1] swap
    cdef double[:, ::1] swap2
    cdef _SolveWork work = _SolveWork(n, (nb - 1) // 2)
    res = _residual(system, rhs, c, phi0, phi1, w, k, h, linearized, F, nv, jb, True, vq, vpq)
    history = [res]
    for it in range(max_iter):
        if res <= tol:
            break
        for i in range(n):
            neg[i] = -F[i]
            for d in range(nb):
                K[i, d] = system[i, d] if linearized else system[i, d] + k * jb[i, d]
        _cyclic_solve(K, neg, delta, work)
        lam = 1.0
        while True:
            for i in range(n):
                trial[i] = c[i] + lam * delta[i]
            res_t = _residual(system, rhs, trial, phi0, phi1, w, k, h, linearized, F_t, nv,
                              jb_t, True, vq, vpq)
            if res_t < res or lam < 1e-3:
                break
            lam *= damping
        if not res_t < res:
            break
        swap = c; c = trial; trial = swap
        swap = F; F = F_t; F_t = swap
        swap2 = jb; jb = jb_t; jb_t = swap2
        res = res_t
        history.append(res)
    return np.asarray(c), history
