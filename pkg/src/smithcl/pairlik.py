"""Pairwise log-likelihood kernels and the weighted composite log-likelihood.

Three pair models are available, all on Gumbel-scale data:

* ``LT``: censored tail approximation.  Values above the threshold are moved to
  the Frechet scale through the GP tail; the pair contributes the mixed
  density, a first partial or the CDF at the threshold depending on how many
  components exceed.
* ``RT``: bivariate GP density of the standardised pair, only for pairs with at
  least one exceedance.
* ``PRS``: bivariate density of per-year maxima with Gumbel margins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from . import kernels
from .margins import MarginalParams, empirical_quantile, frechet_log_jacobian, frechet_transform
from .model import (
    A_SINGULAR,
    ParameterDomainError,
    SingularModelError,
    SmithParams,
    exponent_measure,
    log_mixed_density,
    log_mixed_density_gumbel,
    log_partial_first,
    log_rt_kernel,
    pair_coefficient,
    pair_coefficients,
)

METHODS = ("RT", "LT", "PRS")
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class EmptyLikelihoodError(ValueError):
    """No pair contributes to the composite likelihood."""


@dataclass(frozen=True)
class WeightScheme:
    delta: float
    quantile_level: float
    weights: np.ndarray

    def pairs(self):
        """Arrays ``(i, j, w)`` of the positively weighted pairs with i < j."""
        i, j = np.triu_indices(self.weights.shape[0], k=1)
        w = self.weights[i, j]
        keep = w > 0
        return i[keep], j[keep], w[keep]


@dataclass(frozen=True)
class ThetaLT:
    sigma_u: float
    xi: float
    beta: SmithParams


@dataclass(frozen=True)
class ThetaRT:
    sigma_u: float
    beta: SmithParams
    xi: float = 0.0


@dataclass(frozen=True)
class ThetaPRS:
    beta: SmithParams
    loc: float = 0.0
    scale: float = 1.0


def pairwise_distances(sites) -> np.ndarray:
    sites = np.asarray(sites, dtype=float)
    i, j = np.triu_indices(sites.shape[0], k=1)
    return np.hypot(*(sites[i] - sites[j]).T)


def make_weights(sites, quantile_level: float) -> WeightScheme:
    """Cut-off weights: pairs closer than the ``quantile_level`` distance quantile."""
    sites = np.asarray(sites, dtype=float)
    p = sites.shape[0]
    if p < 2:
        raise ParameterDomainError("need at least two sites")
    if not 0 < quantile_level <= 1:
        raise ParameterDomainError("quantile_level must lie in (0, 1]")
    delta = empirical_quantile(pairwise_distances(sites), quantile_level)
    d = np.hypot(*(sites[:, None, :] - sites[None, :, :]).transpose(2, 0, 1))
    # relative slack so that grid distances equal to delta are kept
    w = (d <= delta * (1 + 1e-12)).astype(float)
    np.fill_diagonal(w, 0.0)
    return WeightScheme(delta, quantile_level, w)


# ---------------------------------------------------------------------------
# scalar pair kernels


def lt_pair_loglik(yi, yj, a, mp: MarginalParams) -> float:
    """Censored log-likelihood of one pair under the tail approximation."""
    if a < A_SINGULAR:
        raise SingularModelError("a=0 pair")
    ut = float(frechet_transform(mp.u, mp))
    above_i, above_j = yi >= mp.u, yj >= mp.u
    if above_i and above_j:
        zi, zj = frechet_transform(yi, mp), frechet_transform(yj, mp)
        return float(log_mixed_density(zi, zj, a) + frechet_log_jacobian(yi, mp)
                     + frechet_log_jacobian(yj, mp))
    if above_i:
        return float(log_partial_first(frechet_transform(yi, mp), ut, a)
                     + frechet_log_jacobian(yi, mp))
    if above_j:
        return float(log_partial_first(frechet_transform(yj, mp), ut, a)
                     + frechet_log_jacobian(yj, mp))
    return float(-exponent_measure(ut, ut, a))


def rt_pair_loglik(yi, yj, a, u, sigma_u, xi=0.0):
    """Bivariate GP log-density of one pair, or ``None`` when neither exceeds ``u``."""
    if a < A_SINGULAR:
        raise SingularModelError("a=0 pair")
    if yi <= u and yj <= u:
        return None
    if sigma_u <= 0:
        raise ParameterDomainError("sigma_u must be positive")
    x1, x2 = (yi - u) / sigma_u, (yj - u) / sigma_u
    lj = -2.0 * math.log(sigma_u)
    if xi != 0.0:
        s1, s2 = 1.0 + xi * x1, 1.0 + xi * x2
        if s1 <= 0 or s2 <= 0:
            raise ParameterDomainError("value outside the GP support")
        x1, x2 = math.log(s1) / xi, math.log(s2) / xi
        lj -= math.log(s1) + math.log(s2)
    log_norm = math.log(2.0) + float(log_ndtr(a / 2.0))
    return float(log_rt_kernel(x1, x2, a)) - log_norm + lj


def prs_pair_loglik(mi, mj, a, loc=0.0, scale=1.0) -> float:
    """log-density of a pair of block maxima with Gumbel(loc, scale) margins."""
    if a < A_SINGULAR:
        raise SingularModelError("a=0 pair")
    if scale <= 0:
        raise ParameterDomainError("scale must be positive")
    x1, x2 = (mi - loc) / scale, (mj - loc) / scale
    return float(log_mixed_density_gumbel(x1, x2, a)) - 2.0 * math.log(scale)


# ---------------------------------------------------------------------------
# composite likelihood


class CompositeLikelihood:
    """Weighted pairwise composite log-likelihood of one dataset.

    Term bookkeeping (which rows and pairs are censored or excluded) is done
    once here; calls only redo the parameter-dependent arithmetic.

    Args:
        ds: Gumbel-scale dataset.
        ws: pair weights.
        method: ``"RT"``, ``"LT"`` or ``"PRS"``.
        u: threshold on the data scale (LT and RT).
        zeta: exceedance probability of ``u`` (LT); defaults to the empirical one.
    """

    def __init__(self, ds, ws: WeightScheme, method: str, u: float | None = None,
                 zeta: float | None = None):
        method = method.upper()
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if ds.scale != "gumbel":
            raise ParameterDomainError(
                f"{method} expects Gumbel-scale data, got {ds.scale!r}"
            )
        self.method = method
        i, j, w = ws.pairs()
        if i.size == 0:
            raise EmptyLikelihoodError("no pair has positive weight")
        self.pi, self.pj, self.w = i, j, w
        self.lags = ds.sites[i] - ds.sites[j]
        if method == "PRS":
            y = ds.block_maxima()
        else:
            if u is None:
                raise ValueError(f"{method} needs a threshold")
            y = ds.values
        self.u = u
        self.n_rows = y.shape[0]
        self._margin_key = None
        if method == "LT":
            self.zeta = float(zeta) if zeta is not None else float(np.mean(ds.values > u))
            self._setup_lt(y)
        elif method == "RT":
            self._setup_rt(y)
        else:
            self._setup_prs(y)

    # -- term tables -------------------------------------------------------

    def _setup_lt(self, y):
        above = y >= self.u
        ai, aj = above[:, self.pi], above[:, self.pj]
        active = ai | aj
        rows, pair = np.nonzero(active)
        both = ai[rows, pair] & aj[rows, pair]
        only_j = ~ai[rows, pair]
        yi = y[rows, self.pi[pair]]
        yj = y[rows, self.pj[pair]]
        # the exceeding coordinate goes first
        self.y1 = np.where(only_j, yj, yi)
        self.y2 = np.where(only_j, yi, yj)
        self.kind = np.where(both, 2, 1).astype(np.int8)
        self.both = both
        self.rows = rows.astype(np.int32)
        self.pair = pair.astype(np.int32)
        self.n_below = self.n_rows - active.sum(axis=0)
        self.n_terms = int(rows.size)

    def _setup_rt(self, y):
        ai = y[:, self.pi] > self.u
        aj = y[:, self.pj] > self.u
        rows, pair = np.nonzero(ai | aj)
        if rows.size == 0:
            raise EmptyLikelihoodError("no pair has an exceedance of the threshold")
        self.rows = rows.astype(np.int32)
        self.pair = pair.astype(np.int32)
        self.y1 = y[rows, self.pi[pair]]
        self.y2 = y[rows, self.pj[pair]]
        # per-pair sufficient statistics of the xi = 0 log-density
        npair = self.pi.size
        d = self.y2 - self.y1
        self._rt_n = np.bincount(pair, minlength=npair).astype(float)
        self._rt_sd = np.bincount(pair, weights=d, minlength=npair)
        self._rt_sdd = np.bincount(pair, weights=d * d, minlength=npair)
        self._rt_sy = np.bincount(pair, weights=self.y1 - self.u, minlength=npair)

    def _setup_prs(self, m):
        t, npair = m.shape[0], self.pi.size
        rows = np.repeat(np.arange(t), npair)
        pair = np.tile(np.arange(npair), t)
        self.rows = rows.astype(np.int32)
        self.pair = pair.astype(np.int32)
        self.y1 = m[rows, self.pi[pair]]
        self.y2 = m[rows, self.pj[pair]]
        self.kind = np.full(rows.size, 2, dtype=np.int8)

    # -- evaluation --------------------------------------------------------

    def coefficients(self, beta: SmithParams) -> np.ndarray:
        a = pair_coefficients(self.lags, beta)
        if np.any(a < A_SINGULAR):
            raise SingularModelError("coincident sites have no pair density")
        return a

    def __call__(self, theta) -> float:
        """Composite log-likelihood; ``-inf`` for parameters outside the domain."""
        if self.method == "RT" and theta.xi == 0.0:
            try:
                return self._rt_closed_form(theta)
            except ParameterDomainError:
                return -np.inf
        try:
            terms, const = self._terms(theta)
        except (ParameterDomainError, FloatingPointError):
            return -np.inf
        total = np.sum(self.w[self.pair] * terms) + const
        return float(total) if np.isfinite(total) else -np.inf

    def per_row(self, theta) -> np.ndarray:
        """Contribution of every row (day, or year for PRS)."""
        terms, const = self._terms(theta)
        out = np.bincount(self.rows, weights=self.w[self.pair] * terms, minlength=self.n_rows)
        if self.method == "LT":
            c = self._lt_censored
            out += np.sum(self.w * c)
            out -= np.bincount(self.rows, weights=self.w[self.pair] * c[self.pair],
                               minlength=self.n_rows)
        return out

    def _terms(self, theta):
        with np.errstate(all="ignore"):
            if self.method == "LT":
                return self._lt_terms(theta)
            if self.method == "RT":
                return self._rt_terms(theta)
            return self._prs_terms(theta)

    def _lt_terms(self, theta: ThetaLT):
        a = self.coefficients(theta.beta)
        key = (theta.sigma_u, theta.xi)
        if key != self._margin_key:
            mp = MarginalParams(self.u, theta.sigma_u, theta.xi, self.zeta)
            ut = float(frechet_transform(self.u, mp))
            z1 = frechet_transform(self.y1, mp)
            z2 = np.where(self.both, frechet_transform(self.y2, mp), ut)
            lj = frechet_log_jacobian(self.y1, mp)
            lj = lj + np.where(self.both, frechet_log_jacobian(self.y2, mp), 0.0)
            ok = np.isfinite(z1) & np.isfinite(z2) & np.isfinite(lj) & (z1 > 0) & (z2 > 0)
            if not (np.all(ok) and np.isfinite(ut) and ut > 0):
                raise ParameterDomainError("data outside the GP support")
            self._z1, self._z2, self._lj, self._ut = z1, z2, lj, ut
            self._l1, self._l2 = np.log(z1), np.log(z2)
            self._margin_key = key
        terms = kernels.frechet_terms(a, self.pair, self._z1, self._z2, self.kind,
                                      self._l1, self._l2) + self._lj
        self._lt_censored = -exponent_measure(self._ut, self._ut, a)
        const = float(np.sum(self.w * self.n_below * self._lt_censored))
        return terms, const

    def _rt_terms(self, theta: ThetaRT):
        a = self.coefficients(theta.beta)
        if theta.sigma_u <= 0:
            raise ParameterDomainError("sigma_u must be positive")
        x1 = (self.y1 - self.u) / theta.sigma_u
        x2 = (self.y2 - self.u) / theta.sigma_u
        lj = -2.0 * np.log(theta.sigma_u)
        if theta.xi != 0.0:
            s1, s2 = 1.0 + theta.xi * x1, 1.0 + theta.xi * x2
            if np.any(s1 <= 0) or np.any(s2 <= 0):
                raise ParameterDomainError("data outside the GP support")
            x1, x2 = np.log(s1) / theta.xi, np.log(s2) / theta.xi
            lj = lj - np.log(s1) - np.log(s2)
        log_norm = np.log(2.0) + log_ndtr(a / 2.0)
        terms = kernels.rt_terms(a, self.pair, x1, x2) - log_norm[self.pair] + lj
        return terms, 0.0

    def _rt_closed_form(self, theta: ThetaRT) -> float:
        # sum over a pair's terms of -w1^2/2 - x1 - log a - log norm - 2 log sigma
        a = self.coefficients(theta.beta)
        sig = theta.sigma_u
        if not sig > 0:
            raise ParameterDomainError("sigma_u must be positive")
        n = self._rt_n
        sw2 = n * a * a / 4.0 + self._rt_sd / sig + self._rt_sdd / (sig * sig * a * a)
        per_pair = (-0.5 * sw2 - self._rt_sy / sig
                    - n * (_LOG_SQRT_2PI + np.log(a) + np.log(2.0) + log_ndtr(a / 2.0)
                           + 2.0 * np.log(sig)))
        total = float(np.sum(self.w * per_pair))
        return total if np.isfinite(total) else -np.inf

    def _prs_terms(self, theta: ThetaPRS):
        a = self.coefficients(theta.beta)
        if theta.scale <= 0:
            raise ParameterDomainError("scale must be positive")
        x1 = (self.y1 - theta.loc) / theta.scale
        x2 = (self.y2 - theta.loc) / theta.scale
        z1, z2 = np.exp(x1), np.exp(x2)
        if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(z2))):
            raise ParameterDomainError("block maxima overflow the Gumbel transform")
        terms = kernels.frechet_terms(a, self.pair, z1, z2, self.kind, x1, x2) + x1 + x2
        return terms - 2.0 * np.log(theta.scale), 0.0


def composite_loglik(ds, ws: WeightScheme, method: str, theta,
                     mp: MarginalParams | None = None) -> float:
    """Sum over rows and weighted pairs of the pair log-likelihood.

    ``mp`` supplies the threshold (and for LT the exceedance rate); the
    marginal parameters actually used come from ``theta``.
    """
    u = mp.u if mp is not None else None
    zeta = mp.zeta if mp is not None else None
    return CompositeLikelihood(ds, ws, method, u=u, zeta=zeta)(theta)


__all__ = [
    "CompositeLikelihood",
    "EmptyLikelihoodError",
    "METHODS",
    "ThetaLT",
    "ThetaPRS",
    "ThetaRT",
    "WeightScheme",
    "composite_loglik",
    "lt_pair_loglik",
    "make_weights",
    "pair_coefficient",
    "pairwise_distances",
    "prs_pair_loglik",
    "rt_pair_loglik",
]
