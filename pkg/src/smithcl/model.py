"""Bivariate distribution theory of the Smith Gaussian extreme value process.

All functions work on the exponent measure

    V(z1, z2) = Phi(w1) / z1 + Phi(w2) / z2,
    w1 = a/2 + log(z2/z1)/a,  w2 = a - w1,

so that G(z1, z2) = exp(-V) on unit Frechet margins.  Using the identity
phi(w1)/z1 = phi(w2)/z2 the derivatives simplify to

    V_1 = -Phi(w1) / z1**2
    V_12 = -phi(w1) / (a * z1**2 * z2)

which is what the closed forms below rely on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

#: below this the pair is perfectly dependent and has no density
A_SINGULAR = 1e-10
#: above this the pair is treated as independent
A_INDEPENDENT = 38.0


class ParameterDomainError(ValueError):
    """Raised when dependence or margin parameters leave their domain."""


class SingularModelError(ValueError):
    """Raised when a pair is perfectly dependent (a == 0)."""


@dataclass(frozen=True)
class SmithParams:
    """Covariance matrix of the Gaussian storm shape."""

    sigma11: float
    sigma22: float
    sigma12: float

    def __post_init__(self):
        if not (self.sigma11 > 0 and self.sigma22 > 0 and self.det > 0):
            raise ParameterDomainError(
                f"Sigma=({self.sigma11}, {self.sigma22}, {self.sigma12}) "
                "is not positive definite"
            )

    @property
    def det(self) -> float:
        return self.sigma11 * self.sigma22 - self.sigma12**2

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.sigma11, self.sigma12], [self.sigma12, self.sigma22]])

    @property
    def precision(self) -> np.ndarray:
        d = self.det
        return np.array([[self.sigma22, -self.sigma12], [-self.sigma12, self.sigma11]]) / d

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sigma11, self.sigma22, self.sigma12)

    @classmethod
    def is_valid(cls, sigma11, sigma22, sigma12) -> bool:
        return sigma11 > 0 and sigma22 > 0 and sigma11 * sigma22 - sigma12**2 > 0


def pair_coefficient(si, sj, params: SmithParams) -> float:
    """Mahalanobis distance between two sites under the inverse of Sigma."""
    h = np.asarray(si, dtype=float) - np.asarray(sj, dtype=float)
    return float(np.sqrt(max(h @ params.precision @ h, 0.0)))


def pair_coefficients(displacements, params: SmithParams) -> np.ndarray:
    """Vectorised :func:`pair_coefficient` over an (m, 2) array of lags."""
    h = np.atleast_2d(np.asarray(displacements, dtype=float))
    q = np.einsum("ij,jk,ik->i", h, params.precision, h)
    return np.sqrt(np.maximum(q, 0.0))


def extremal_coefficient(h, params: SmithParams):
    """Extremal coefficient 2*Phi(a/2) of the lag ``h`` (vector or (m, 2) array)."""
    h = np.asarray(h, dtype=float)
    a = pair_coefficients(h, params)
    v = 2.0 * ndtr(a / 2.0)
    return float(v[0]) if h.ndim == 1 else v


def _check_a(a):
    a = np.asarray(a, dtype=float)
    if np.any(a < A_SINGULAR):
        raise SingularModelError(
            "pair coefficient a=0: perfectly dependent pair has no density"
        )
    return a


def _check_z(*zs):
    for z in zs:
        if np.any(np.asarray(z) <= 0):
            raise ParameterDomainError("Frechet arguments must be positive")


def _w(z1, z2, a):
    lr = np.log(z2) - np.log(z1)
    w1 = a / 2.0 + lr / a
    return w1, a - w1


def exponent_measure(z1, z2, a):
    """V(z1, z2) on unit Frechet margins; broadcasts over arrays."""
    z1, z2, a = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (z1, z2, a)))
    out = np.empty(z1.shape)
    indep = a > A_INDEPENDENT
    dep = ~indep
    # a == 0 limit: max(1/z1, 1/z2)
    zero = a <= 0
    out[indep] = 1.0 / z1[indep] + 1.0 / z2[indep]
    m = dep & ~zero
    w1, w2 = _w(z1[m], z2[m], a[m])
    out[m] = ndtr(w1) / z1[m] + ndtr(w2) / z2[m]
    out[zero] = 1.0 / np.minimum(z1[zero], z2[zero])
    return out if out.ndim else float(out)


def cdf_frechet_pair(zi, zj, a):
    """Joint CDF of two sites on unit Frechet margins."""
    _check_z(zi, zj)
    if np.any(np.asarray(a) < 0):
        raise ParameterDomainError("pair coefficient must be nonnegative")
    return np.exp(-exponent_measure(zi, zj, a))


def log_cdf_frechet_pair(zi, zj, a):
    _check_z(zi, zj)
    return -exponent_measure(zi, zj, a)


def cdf_gumbel_pair(zi, zj, a):
    """Joint CDF on standard Gumbel margins, i.e. the Frechet CDF at exp(z)."""
    zi = np.asarray(zi, dtype=np.longdouble)
    zj = np.asarray(zj, dtype=np.longdouble)
    # extended precision avoids overflow of exp for |z| up to ~11000
    ei = np.exp(zi).astype(float)
    ej = np.exp(zj).astype(float)
    ei = np.clip(ei, np.finfo(float).tiny, np.finfo(float).max)
    ej = np.clip(ej, np.finfo(float).tiny, np.finfo(float).max)
    return cdf_frechet_pair(ei, ej, a)


def partials_pair(zi, zj, a, margin: str = "frechet"):
    """First partials, mixed partial and value of the pair CDF.

    Args:
        zi, zj: evaluation point on the chosen margin.
        a: pair coefficient, must be positive.
        margin: ``"frechet"`` or ``"gumbel"``.

    Returns:
        tuple ``(dG/dzi, dG/dzj, d2G/dzi dzj, G)``.
    """
    a = _check_a(a)
    if margin == "gumbel":
        x1 = np.asarray(zi, dtype=float)
        x2 = np.asarray(zj, dtype=float)
        z1, z2 = np.exp(x1), np.exp(x2)
    elif margin == "frechet":
        z1 = np.asarray(zi, dtype=float)
        z2 = np.asarray(zj, dtype=float)
        _check_z(z1, z2)
    else:
        raise ValueError(f"unknown margin {margin!r}")
    z1, z2, a = np.broadcast_arrays(z1, z2, a)
    big = a > A_INDEPENDENT
    w1, w2 = _w(z1, z2, a)
    p1 = np.where(big, 1.0, ndtr(w1))
    p2 = np.where(big, 1.0, ndtr(w2))
    dens = np.where(big, 0.0, np.exp(-0.5 * w1**2 - _LOG_SQRT_2PI))
    g = np.exp(-(p1 / z1 + p2 / z2))
    v1 = -p1 / z1**2
    v2 = -p2 / z2**2
    v12 = -dens / (a * z1**2 * z2)
    g1 = -v1 * g
    g2 = -v2 * g
    g12 = (v1 * v2 - v12) * g
    if margin == "gumbel":
        g1 = g1 * z1
        g2 = g2 * z2
        g12 = g12 * z1 * z2
    return g1, g2, g12, g


def log_partial_first(z1, z2, a):
    """log dG/dz1 on Frechet margins."""
    z1, z2, a = (np.asarray(x, dtype=float) for x in (z1, z2, a))
    w1, w2 = _w(z1, z2, a)
    big = a > A_INDEPENDENT
    lp1 = np.where(big, 0.0, log_ndtr(w1))
    v = np.where(big, 1.0 / z1 + 1.0 / z2, ndtr(w1) / z1 + ndtr(w2) / z2)
    return -v + lp1 - 2.0 * np.log(z1)


def log_mixed_density(z1, z2, a):
    """log d2G/dz1 dz2 on Frechet margins."""
    z1, z2, a = (np.asarray(x, dtype=float) for x in (z1, z2, a))
    w1, w2 = _w(z1, z2, a)
    big = a > A_INDEPENDENT
    lz1, lz2 = np.log(z1), np.log(z2)
    v = np.where(big, 1.0 / z1 + 1.0 / z2, ndtr(w1) / z1 + ndtr(w2) / z2)
    t1 = np.where(big, 0.0, log_ndtr(w1) + log_ndtr(w2)) - lz2
    with np.errstate(divide="ignore"):
        t2 = np.where(big, -np.inf, -0.5 * w1**2 - _LOG_SQRT_2PI - np.log(a))
    return -v - 2.0 * lz1 - lz2 + np.logaddexp(t1, t2)


def log_mixed_density_gumbel(x1, x2, a):
    """log d2G/dx1 dx2 on standard Gumbel margins."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return log_mixed_density(np.exp(x1), np.exp(x2), a) + x1 + x2


def log_rt_kernel(x1, x2, a):
    """log of the mixed partial of log G on Gumbel margins.

    Equals log(phi(w1) / (a * exp(x1))) with w1 = a/2 + (x2 - x1)/a.
    """
    x1, x2, a = (np.asarray(x, dtype=float) for x in (x1, x2, a))
    w1 = a / 2.0 + (x2 - x1) / a
    return -0.5 * w1**2 - _LOG_SQRT_2PI - np.log(a) - x1
