# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: pair log-density terms and the storm simulator."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, erfc, sqrt, INFINITY

cnp.import_array()

cdef double LOG_SQRT_2PI = 0.91893853320467274178
cdef double INV_SQRT_2PI = 0.39894228040143267794
cdef double INV_SQRT2 = 0.70710678118654752440
cdef double A_INDEPENDENT = 38.0
cdef double TINY = 1e-290


cdef inline double _ndtr(double w) noexcept nogil:
    return 0.5 * erfc(-w * INV_SQRT2)


cdef inline double _log_ndtr(double w, double phi) noexcept nogil:
    # phi = _ndtr(w), passed in to avoid recomputation
    cdef double r, s
    if w > -30.0:
        if w > 3.0:
            return log(1.0 - 0.5 * erfc(w * INV_SQRT2))
        return log(phi)
    r = 1.0 / (w * w)
    s = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)))
    return -0.5 * w * w - log(-w) - LOG_SQRT_2PI + log(s)


cdef inline double _logaddexp(double x, double y) noexcept nogil:
    if x == -INFINITY:
        return y
    if y == -INFINITY:
        return x
    if x > y:
        return x + log(1.0 + exp(y - x))
    return y + log(1.0 + exp(x - y))


def frechet_terms(const double[::1] a_pair, const cnp.int32_t[::1] pair,
                  const double[::1] z1, const double[::1] z2,
                  const cnp.int8_t[::1] kind, lz1=None, lz2=None):
    """Per-term log G (kind 0), log dG/dz1 (1) or log d2G/dz1dz2 (2).

    ``lz1``/``lz2`` optionally carry precomputed ``log(z1)``/``log(z2)``.
    """
    cdef Py_ssize_t n = pair.shape[0], k
    if lz1 is None:
        lz1 = np.log(z1)
    if lz2 is None:
        lz2 = np.log(z2)
    cdef const double[::1] l1 = lz1
    cdef const double[::1] l2 = lz2
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double a, w1, w2, v, p1, p2, dens, mix, t1, t2
    with nogil:
        for k in range(n):
            a = a_pair[pair[k]]
            if a > A_INDEPENDENT:
                v = 1.0 / z1[k] + 1.0 / z2[k]
                if kind[k] == 0:
                    o[k] = -v
                elif kind[k] == 1:
                    o[k] = -v - 2.0 * l1[k]
                else:
                    o[k] = -v - 2.0 * l1[k] - 2.0 * l2[k]
                continue
            w1 = 0.5 * a + (l2[k] - l1[k]) / a
            w2 = a - w1
            p1 = _ndtr(w1)
            p2 = _ndtr(w2)
            v = p1 / z1[k] + p2 / z2[k]
            if kind[k] == 0:
                o[k] = -v
            elif kind[k] == 1:
                o[k] = -v + _log_ndtr(w1, p1) - 2.0 * l1[k]
            else:
                dens = INV_SQRT_2PI * exp(-0.5 * w1 * w1) / a
                mix = p1 * p2 / z2[k] + dens
                if mix > TINY:
                    o[k] = -v - 2.0 * l1[k] - l2[k] + log(mix)
                else:
                    t1 = _log_ndtr(w1, p1) + _log_ndtr(w2, p2) - l2[k]
                    t2 = -0.5 * w1 * w1 - LOG_SQRT_2PI - log(a)
                    o[k] = -v - 2.0 * l1[k] - l2[k] + _logaddexp(t1, t2)
    return out


def rt_terms(const double[::1] a_pair, const cnp.int32_t[::1] pair,
             const double[::1] x1, const double[::1] x2):
    """Per-term log of d2 log G / dx1 dx2 on Gumbel margins."""
    cdef Py_ssize_t n = pair.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double a, w1
    with nogil:
        for k in range(n):
            a = a_pair[pair[k]]
            w1 = 0.5 * a + (x2[k] - x1[k]) / a
            o[k] = -0.5 * w1 * w1 - LOG_SQRT_2PI - log(a) - x1[k]
    return out


def storm_batch(const double[::1] sx, const double[::1] sy,
                double q11, double q12, double q22, double scale,
                double gamma, const double[::1] expo,
                const double[::1] cx, const double[::1] cy,
                double[::1] z, double tol):
    """Feed one batch of storms into the running maxima ``z`` (updated in place).

    Storm k has intensity ``scale / Gamma_k`` times the normalised Gaussian
    shape.  Returns ``(gamma, used, done)``.
    """
    cdef Py_ssize_t p = sx.shape[0], nb = expo.shape[0], k = 0, i
    cdef double x, zmin, dx, dy, val
    cdef bint done = False
    with nogil:
        zmin = z[0]
        for i in range(1, p):
            if z[i] < zmin:
                zmin = z[i]
        for k in range(nb):
            gamma = gamma + expo[k]
            x = scale / gamma
            if x < zmin * (1.0 - tol):
                done = True
                break
            for i in range(p):
                dx = sx[i] - cx[k]
                dy = sy[i] - cy[k]
                val = x * exp(-0.5 * (q11 * dx * dx + 2.0 * q12 * dx * dy + q22 * dy * dy))
                if val > z[i]:
                    z[i] = val
            zmin = z[0]
            for i in range(1, p):
                if z[i] < zmin:
                    zmin = z[i]
    return gamma, (k if done else nb), done
