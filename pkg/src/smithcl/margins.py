"""Univariate threshold machinery: quantile thresholds, GP tails, Frechet transform."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .model import ParameterDomainError

logger = logging.getLogger(__name__)

#: |xi| below this switches to the exponential (xi = 0) branch
XI_ZERO = 1e-8
XI_BOUNDS = (-0.5, 1.0)


class MarginalFitError(RuntimeError):
    """GP fit failed; ``diagnostics`` holds optimizer output."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class MarginalParams:
    u: float
    sigma_u: float
    xi: float
    zeta: float

    def __post_init__(self):
        if not self.sigma_u > 0:
            raise ParameterDomainError(f"sigma_u must be positive, got {self.sigma_u}")
        if not 0 < self.zeta < 1:
            raise ParameterDomainError(f"zeta must lie in (0, 1), got {self.zeta}")


def empirical_quantile(data, level: float) -> float:
    """Linear-interpolation quantile at position (n-1)*level + 1 of the order statistics."""
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ParameterDomainError("empirical_quantile of empty data")
    if not 0 < level <= 1:
        raise ParameterDomainError(f"quantile level must lie in (0, 1], got {level}")
    return float(np.quantile(x, level, method="linear"))


def _log_survival(y, mp: MarginalParams):
    """log of (1 + xi (y-u)/sigma)^(-1/xi), the conditional exceedance survival."""
    z = (np.asarray(y, dtype=float) - mp.u) / mp.sigma_u
    if abs(mp.xi) < XI_ZERO:
        # second-order term keeps the seam continuous
        return -z + 0.5 * mp.xi * z**2
    s = mp.xi * z
    if np.any(s <= -1):
        raise ParameterDomainError("value outside the GP support")
    return -np.log1p(s) / mp.xi


def gp_tail_cdf(y, mp: MarginalParams):
    """Tail approximation 1 - zeta (1 + xi (y-u)/sigma)^(-1/xi) for y >= u."""
    if np.any(np.asarray(y) < mp.u):
        raise ParameterDomainError("gp_tail_cdf is only defined above the threshold")
    return 1.0 - mp.zeta * np.exp(_log_survival(y, mp))


def frechet_transform(y, mp: MarginalParams):
    """Map data above ``u`` to the unit Frechet scale via the GP tail.

    Values below ``u`` are mapped as if equal to ``u``.  Returns ``inf`` where the
    tail CDF rounds to 1.
    """
    y = np.maximum(np.asarray(y, dtype=float), mp.u)
    lp = np.log1p(-mp.zeta * np.exp(_log_survival(y, mp)))
    with np.errstate(divide="ignore"):
        return -1.0 / lp


def frechet_log_jacobian(y, mp: MarginalParams):
    """log d(frechet_transform)/dy for y >= u."""
    y = np.asarray(y, dtype=float)
    ls = _log_survival(y, mp)
    z = (y - mp.u) / mp.sigma_u
    t = mp.zeta * np.exp(ls)
    lp = np.log1p(-t)
    # d/dy of log survival is -1/(sigma (1 + xi z))
    if abs(mp.xi) < XI_ZERO:
        dls = -(1.0 - mp.xi * z) / mp.sigma_u
        ldls = np.log(np.maximum(-dls, np.finfo(float).tiny))
    else:
        ldls = -np.log(mp.sigma_u) - np.log1p(mp.xi * z)
    with np.errstate(divide="ignore"):
        return -2.0 * np.log(-lp) + np.log(t) + ldls - lp


def gp_negloglik(params, excesses) -> float:
    sigma, xi = params
    if sigma <= 0:
        return np.inf
    z = excesses / sigma
    if abs(xi) < XI_ZERO:
        return excesses.size * np.log(sigma) + z.sum()
    s = 1.0 + xi * z
    if np.any(s <= 0):
        return np.inf
    return excesses.size * np.log(sigma) + (1.0 + 1.0 / xi) * np.log(s).sum()


def fit_marginal_gp(excesses) -> tuple[float, float]:
    """Maximum likelihood GP fit to positive excesses, shape kept in (-0.5, 1).

    Raises:
        MarginalFitError: fewer than 10 excesses, a degenerate sample or an
            optimizer failure.
    """
    x = np.asarray(excesses, dtype=float).ravel()
    if x.size < 10:
        raise MarginalFitError(f"need at least 10 excesses, got {x.size}", {"n": x.size})
    if np.any(x < 0):
        raise MarginalFitError("excesses must be nonnegative")
    if np.ptp(x) == 0:
        raise MarginalFitError("degenerate sample: all excesses equal", {"n": x.size})
    mean, var = x.mean(), x.var()
    # method-of-moments start
    xi0 = float(np.clip(0.5 * (1.0 - mean**2 / var), -0.4, 0.9))
    sigma0 = max(mean * (1.0 - xi0), 1e-8)
    lo, hi = XI_BOUNDS
    eps = 1e-6
    with np.errstate(all="ignore"):
        res = minimize(
            lambda p: gp_negloglik((np.exp(p[0]), p[1]), x),
            x0=[np.log(sigma0), xi0],
            method="L-BFGS-B",
            bounds=[(None, None), (lo + eps, hi - eps)],
        )
    if not res.success or not np.isfinite(res.fun):
        # derivative-free retry before giving up
        res2 = minimize(
            lambda p: gp_negloglik((np.exp(p[0]), p[1]), x)
            if lo < p[1] < hi else np.inf,
            x0=res.x if np.isfinite(res.fun) else [np.log(sigma0), xi0],
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000},
        )
        if not res2.success:
            raise MarginalFitError(
                "GP maximum likelihood did not converge",
                {"message": str(res2.message), "nit": int(res2.nit), "x": res2.x.tolist()},
            )
        res = res2
    sigma, xi = float(np.exp(res.x[0])), float(res.x[1])
    logger.debug("GP fit n=%d sigma=%.4g xi=%.4g", x.size, sigma, xi)
    return sigma, xi
