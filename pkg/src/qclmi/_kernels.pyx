# cython: language_level=3
"""Compiled hot loops: fused grid quadrature of Husimi densities and batched RK4
for the polynomial Hamiltonian family shared by all models.

Signatures mirror :mod:`qclmi._fallback` exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, M_PI

cnp.import_array()


cdef inline double _factor(int kind, double q, double p, double cq, double cp,
                           double inv2h, double norm) noexcept nogil:
    cdef double dq = q - cq
    cdef double dp = p - cp
    cdef double r = (dq * dq + dp * dp) * inv2h
    if kind == 0:
        return norm * exp(-r)
    return norm * r * exp(-r)


def linear_grid_moments(double[:, ::1] A, double[::1] b,
                        double[::1] ax0, double[::1] ax1, double[::1] ax2, double[::1] ax3,
                        double[::1] w0, double[::1] w1, double[::1] w2, double[::1] w3,
                        int[::1] kinds, double[::1] centers, double hbar):
    """Marginals and moments of ``P0(A @ x + b)`` on a 4D tensor grid.

    Returns ``(m12, m34, int P**2, int P)`` with trapezoid weights ``w*``.
    """
    cdef Py_ssize_t n0 = ax0.shape[0], n1 = ax1.shape[0]
    cdef Py_ssize_t n2 = ax2.shape[0], n3 = ax3.shape[0]
    cdef Py_ssize_t i, j, k, l, c
    cdef double inv2h = 1.0 / (2.0 * hbar)
    cdef double norm = 1.0 / (2.0 * M_PI * hbar)
    cdef int k1 = kinds[0], k2 = kinds[1]
    cdef double c0 = centers[0], c1 = centers[1], c2 = centers[2], c3 = centers[3]

    U_arr = np.empty((n0, n1, 4))
    V_arr = np.empty((n2, n3, 4))
    cdef double[:, :, ::1] U = U_arr
    cdef double[:, :, ::1] V = V_arr
    for i in range(n0):
        for j in range(n1):
            for c in range(4):
                U[i, j, c] = A[c, 0] * ax0[i] + A[c, 1] * ax1[j] + b[c]
    for k in range(n2):
        for l in range(n3):
            for c in range(4):
                V[k, l, c] = A[c, 2] * ax2[k] + A[c, 3] * ax3[l]

    m12_arr = np.zeros((n0, n1))
    m34_arr = np.zeros((n2, n3))
    cdef double[:, ::1] m12 = m12_arr
    cdef double[:, ::1] m34 = m34_arr
    cdef double sp2 = 0.0, mass = 0.0
    cdef double wij, wkl, acc, accp2, accm, P, x0, x1, x2, x3
    with nogil:
        for i in range(n0):
            for j in range(n1):
                wij = w0[i] * w1[j]
                acc = 0.0
                accp2 = 0.0
                for k in range(n2):
                    for l in range(n3):
                        x0 = U[i, j, 0] + V[k, l, 0]
                        x1 = U[i, j, 1] + V[k, l, 1]
                        x2 = U[i, j, 2] + V[k, l, 2]
                        x3 = U[i, j, 3] + V[k, l, 3]
                        P = (_factor(k1, x0, x1, c0, c1, inv2h, norm)
                             * _factor(k2, x2, x3, c2, c3, inv2h, norm))
                        wkl = w2[k] * w3[l]
                        acc = acc + P * wkl
                        accp2 = accp2 + P * P * wkl
                        m34[k, l] += P * wij
                m12[i, j] = acc
                mass += acc * wij
                sp2 += accp2 * wij
    return m12_arr, m34_arr, sp2, mass


def points_grid_moments(double[:, ::1] X, Py_ssize_t n0, Py_ssize_t n1,
                        Py_ssize_t n2, Py_ssize_t n3,
                        double[::1] w0, double[::1] w1, double[::1] w2, double[::1] w3,
                        int[::1] kinds, double[::1] centers, double hbar):
    """As :func:`linear_grid_moments` for precomputed preimages ``X`` (C order, N x 4).

    Rows with non-finite entries carry zero density.
    """
    cdef Py_ssize_t i, j, k, l, idx = 0
    cdef double inv2h = 1.0 / (2.0 * hbar)
    cdef double norm = 1.0 / (2.0 * M_PI * hbar)
    cdef int k1 = kinds[0], k2 = kinds[1]
    cdef double c0 = centers[0], c1 = centers[1], c2 = centers[2], c3 = centers[3]
    if X.shape[0] != n0 * n1 * n2 * n3:
        raise ValueError("X does not match the grid shape")
    m12_arr = np.zeros((n0, n1))
    m34_arr = np.zeros((n2, n3))
    cdef double[:, ::1] m12 = m12_arr
    cdef double[:, ::1] m34 = m34_arr
    cdef double sp2 = 0.0, mass = 0.0
    cdef double wij, wkl, acc, accp2, P
    with nogil:
        for i in range(n0):
            for j in range(n1):
                wij = w0[i] * w1[j]
                acc = 0.0
                accp2 = 0.0
                for k in range(n2):
                    for l in range(n3):
                        if (isfinite(X[idx, 0]) and isfinite(X[idx, 1])
                                and isfinite(X[idx, 2]) and isfinite(X[idx, 3])):
                            P = (_factor(k1, X[idx, 0], X[idx, 1], c0, c1, inv2h, norm)
                                 * _factor(k2, X[idx, 2], X[idx, 3], c2, c3, inv2h, norm))
                        else:
                            P = 0.0
                        idx += 1
                        wkl = w2[k] * w3[l]
                        acc = acc + P * wkl
                        accp2 = accp2 + P * P * wkl
                        m34[k, l] += P * wij
                m12[i, j] = acc
                mass += acc * wij
                sp2 += accp2 * wij
    return m12_arr, m34_arr, sp2, mass


ctypedef struct Coeffs:
    double w1sq
    double w2sq
    double cq
    double cp
    double cn


cdef inline void _rhs(double q1, double p1, double q2, double p2,
                      const Coeffs* c, double* out) noexcept nogil:
    # H = (p1^2 + w1sq q1^2)/2 + (p2^2 + w2sq q2^2)/2 + cq q1 q2 + cp p1 p2
    #     + cn (-q1 p1 p2 + q1^2 q2^2 / 2)
    out[0] = p1 + c.cp * p2 - c.cn * q1 * p2
    out[1] = -(c.w1sq * q1 + c.cq * q2 + c.cn * (q1 * q2 * q2 - p1 * p2))
    out[2] = p2 + c.cp * p1 - c.cn * q1 * p1
    out[3] = -(c.w2sq * q2 + c.cq * q1 + c.cn * q1 * q1 * q2)


cdef Coeffs _unpack(double[::1] coeffs) except *:
    if coeffs.shape[0] != 5:
        raise ValueError("coeffs must hold (w1sq, w2sq, cq, cp, cn)")
    cdef Coeffs c
    c.w1sq = coeffs[0]
    c.w2sq = coeffs[1]
    c.cq = coeffs[2]
    c.cp = coeffs[3]
    c.cn = coeffs[4]
    return c


cdef inline void _rk4_step(double* x, double h, const Coeffs* cf) noexcept nogil:
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef int c
    _rhs(x[0], x[1], x[2], x[3], cf, k1)
    _rhs(x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1],
         x[2] + 0.5 * h * k1[2], x[3] + 0.5 * h * k1[3], cf, k2)
    _rhs(x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1],
         x[2] + 0.5 * h * k2[2], x[3] + 0.5 * h * k2[3], cf, k3)
    _rhs(x[0] + h * k3[0], x[1] + h * k3[1],
         x[2] + h * k3[2], x[3] + h * k3[3], cf, k4)
    for c in range(4):
        x[c] = x[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])


def rk4_advance(double[:, ::1] X, double h, long nsteps, double[::1] coeffs,
                double bound):
    """Advance every row of ``X`` in place by ``nsteps`` RK4 steps of size ``h``.

    Rows leaving the box ``max|x_i| < bound`` become NaN; returns how many did so
    during this call.
    """
    cdef Py_ssize_t n = X.shape[0], i
    cdef long s
    cdef double x[4]
    cdef long escaped = 0
    cdef int c
    cdef Coeffs cf = _unpack(coeffs)
    with nogil:
        for i in range(n):
            for c in range(4):
                x[c] = X[i, c]
            if not (isfinite(x[0]) and isfinite(x[1]) and isfinite(x[2]) and isfinite(x[3])):
                continue
            for s in range(nsteps):
                _rk4_step(x, h, &cf)
                if not (fabs(x[0]) < bound and fabs(x[1]) < bound
                        and fabs(x[2]) < bound and fabs(x[3]) < bound):
                    for c in range(4):
                        x[c] = 0.0 / 0.0
                    escaped += 1
                    break
            for c in range(4):
                X[i, c] = x[c]
    return escaped


def section_crossings(double[:, ::1] X0, double h, long max_steps, long max_crossings,
                      double[::1] coeffs, double bound):
    """Bracket upward crossings of ``q1 = 0`` (``q1`` from < 0 to >= 0) for each orbit.

    Returns ``(left, right, seed, status)``: ``left[k]``/``right[k]`` are RK4
    states one step apart around crossing ``k`` of orbit ``seed[k]``;
    ``status[i]`` is 0 when orbit ``i`` produced ``max_crossings`` crossings,
    1 when steps ran out and 2 when it left the box ``max|x_j| < bound``.
    """
    cdef Py_ssize_t m = X0.shape[0], i
    left_arr = np.empty((m * max_crossings, 4))
    right_arr = np.empty((m * max_crossings, 4))
    seed_arr = np.empty(m * max_crossings, dtype=np.intp)
    status_arr = np.ones(m, dtype=np.intp)
    cdef double[:, ::1] left = left_arr
    cdef double[:, ::1] right = right_arr
    cdef Py_ssize_t[::1] seed = seed_arr
    cdef Py_ssize_t[::1] status = status_arr
    cdef double x[4]
    cdef double prev[4]
    cdef long s, found
    cdef Py_ssize_t total = 0
    cdef int c
    cdef Coeffs cf = _unpack(coeffs)
    with nogil:
        for i in range(m):
            for c in range(4):
                x[c] = X0[i, c]
            found = 0
            for s in range(max_steps):
                for c in range(4):
                    prev[c] = x[c]
                _rk4_step(x, h, &cf)
                if not (fabs(x[0]) < bound and fabs(x[1]) < bound
                        and fabs(x[2]) < bound and fabs(x[3]) < bound):
                    status[i] = 2
                    break
                if prev[0] < 0.0 and x[0] >= 0.0:
                    for c in range(4):
                        left[total, c] = prev[c]
                        right[total, c] = x[c]
                    seed[total] = i
                    total += 1
                    found += 1
                    if found == max_crossings:
                        status[i] = 0
                        break
    return (left_arr[:total].copy(), right_arr[:total].copy(),
            seed_arr[:total].copy(), status_arr)
