# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-stepping kernels; same contract as ``_pykernels``."""

from libc.math cimport fabs, pow, copysign, sqrt, isfinite
from libc.stdlib cimport malloc, free

NAME = "cython"


cdef inline double _pw(double a, double g) nogil:
    # a >= 0; the exponents used in practice reduce to products and one sqrt
    if g == 2.0:
        return a * a
    if g == 3.0:
        return a * a * a
    if g == 2.5:
        return a * a * sqrt(a)
    if g == 1.5:
        return a * sqrt(a)
    if g == 1.0:
        return a
    if g == 0.5:
        return sqrt(a)
    return pow(a, g)


cdef inline double _fplus(double y, double g, int variant) nogil:
    if variant == 0:
        return copysign(_pw(fabs(y), g), y)
    if variant == 1:
        return _pw(y, g) if y > 0.0 else 0.0
    return 0.0


cdef inline double _fminus(double y, double g, int variant) nogil:
    if variant == 1 and y < 0.0:
        return _pw(-y, g)
    return 0.0


cdef inline double _speed(double y, double g, double eps) nogil:
    if eps > 0.0:
        return g * _pw(sqrt(y * y + eps * eps), g - 1.0)
    return g * _pw(fabs(y), g - 1.0)


cdef void _thomas(double* d, double* cp, Py_ssize_t m, double lam) nogil:
    # solves (1 + 2 lam) x_i - lam (x_{i-1} + x_{i+1}) = d_i in place
    cdef double a = -lam
    cdef double b = 1.0 + 2.0 * lam
    cdef double denom
    cdef Py_ssize_t i
    cp[0] = a / b
    d[0] = d[0] / b
    for i in range(1, m):
        denom = b - a * cp[i - 1]
        cp[i] = a / denom
        d[i] = (d[i] - a * d[i - 1]) / denom
    for i in range(m - 2, -1, -1):
        d[i] = d[i] - cp[i] * d[i + 1]


def imex_step(const double[::1] y, double[::1] out, double dt, double h, double gamma,
              int variant, double theta, double u, forcing, double v_new, double w_new):
    cdef Py_ssize_t n = y.shape[0] - 1
    cdef Py_ssize_t m = n - 1
    cdef Py_ssize_t i
    cdef double r = dt / h
    cdef double mu = dt / (h * h)
    cdef double c = (1.0 - theta) * mu
    cdef double fl, fr, fprev, amax = 0.0, a
    cdef const double[::1] frc
    cdef bint has_forcing = forcing is not None
    if has_forcing:
        frc = forcing
    cdef double* work = <double*> malloc(2 * m * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double* d = work
    cdef double* cp = work + m
    with nogil:
        fprev = _fplus(y[0], gamma, variant) + _fminus(y[1], gamma, variant)
        for i in range(1, n):
            fr = _fplus(y[i], gamma, variant) + _fminus(y[i + 1], gamma, variant)
            d[i - 1] = (y[i] - r * (fr - fprev)
                        + c * (y[i + 1] - 2.0 * y[i] + y[i - 1]) + dt * u)
            fprev = fr
    if has_forcing:
        for i in range(1, n):
            d[i - 1] += dt * frc[i]
    with nogil:
        d[0] += theta * mu * v_new
        d[m - 1] += theta * mu * w_new
        _thomas(d, cp, m, theta * mu)
        out[0] = v_new
        out[n] = w_new
        amax = fabs(v_new) if fabs(v_new) > fabs(w_new) else fabs(w_new)
        for i in range(1, n):
            out[i] = d[i - 1]
            a = fabs(d[i - 1])
            if a > amax or not isfinite(a):
                amax = a
    free(work)
    return amax


def imex_adjoint(const double[::1] y, const double[::1] lam_new, double[::1] lam_old,
                 double dt, double h, double gamma, int variant, double theta, double eps):
    cdef Py_ssize_t n = y.shape[0] - 1
    cdef Py_ssize_t m = n - 1
    cdef Py_ssize_t j
    cdef double r = dt / h
    cdef double mu = dt / (h * h)
    cdef double c = (1.0 - theta) * mu
    cdef double s, dp, dm, gv
    cdef double* work = <double*> malloc(2 * (m + 2) * sizeof(double))
    if work == NULL:
        raise MemoryError()
    cdef double* P = work
    cdef double* cp = work + m + 2
    with nogil:
        P[0] = 0.0
        P[n] = 0.0
        for j in range(1, n):
            P[j] = lam_new[j]
        _thomas(P + 1, cp, m, theta * mu)
        gv = lam_new[0] + theta * mu * P[1]
        for j in range(n + 1):
            dp = 0.0
            dm = 0.0
            if variant != 2:
                s = _speed(y[j], gamma, eps)
                if variant == 0:
                    dp = s
                elif y[j] > 0.0:
                    dp = s
                elif y[j] < 0.0:
                    dm = -s
            lam_old[j] = 0.0
            if 0 < j < n:
                lam_old[j] = P[j] * (1.0 - r * (dp - dm) - 2.0 * c)
            if j >= 1:
                lam_old[j] += P[j - 1] * (c - r * dm)
            if j <= n - 1:
                lam_old[j] += P[j + 1] * (c + r * dp)
    free(work)
    return gv
