"""Composite likelihood maximisation and sandwich standard errors."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import rankdata

from .margins import MarginalFitError, empirical_quantile, fit_marginal_gp
from .model import SmithParams
from .pairlik import (
    CompositeLikelihood,
    ThetaLT,
    ThetaPRS,
    ThetaRT,
    WeightScheme,
    make_weights,
)

logger = logging.getLogger(__name__)

SIGMA_NAMES = ("sigma11", "sigma22", "sigma12")


class SingularHessianError(np.linalg.LinAlgError):
    def __init__(self, cond):
        super().__init__(f"H_T is singular (condition number {cond:.3g})")
        self.cond = cond


@dataclass
class SubsampleConfig:
    window_length: int = 91
    stride: int = 30

    def n_windows(self, n_obs: int) -> int:
        return (n_obs - self.window_length) // self.stride + 1

    def windows(self, n_obs: int):
        if not 1 <= self.window_length <= n_obs or not 1 <= self.stride <= self.window_length:
            raise ValueError("need 1 <= stride <= window_length <= T")
        m = self.n_windows(n_obs)
        if m < 2:
            raise ValueError(f"subsampling needs at least 2 windows, got {m}")
        return [slice(j * self.stride, j * self.stride + self.window_length) for j in range(m)]


@dataclass
class FitOptions:
    threshold_quantile: float = 0.98
    weights_quantile: float = 0.25
    maxiter: int = 5000
    fatol: float = 1e-8
    xatol: float = 1e-6
    restart: bool = True
    two_step: bool = True
    rt_fix_xi_zero: bool = True
    known_margins: bool = False
    standard_errors: bool = False
    subsample: SubsampleConfig = field(default_factory=SubsampleConfig)


@dataclass
class FitResult:
    method: str
    names: tuple
    theta_hat: np.ndarray
    cl_value: float
    converged: bool
    iterations: int
    runtime: float
    n_evals: int = 0
    H: np.ndarray | None = None
    J: np.ndarray | None = None
    V: np.ndarray | None = None
    hessian_indefinite: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def params(self) -> dict:
        return dict(zip(self.names, map(float, self.theta_hat)))

    @property
    def sigma(self) -> SmithParams:
        p = self.params
        return SmithParams(p["sigma11"], p["sigma22"], p["sigma12"])

    @property
    def standard_errors(self) -> dict | None:
        if self.V is None:
            return None
        return dict(zip(self.names, np.sqrt(np.clip(np.diag(self.V), 0, None)).tolist()))

    def to_dict(self) -> dict:
        def mat(m):
            return None if m is None else np.asarray(m).tolist()

        return {
            "method": self.method,
            "names": list(self.names),
            "theta_hat": self.params,
            "cl_value": self.cl_value,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_evals": self.n_evals,
            "runtime": self.runtime,
            "H_T": mat(self.H),
            "J_T": mat(self.J),
            "V_T": mat(self.V),
            "standard_errors": self.standard_errors,
            "hessian_indefinite": self.hessian_indefinite,
            **self.extras,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# parameterisation


def sigma_to_chol(s11, s22, s12):
    l11 = np.sqrt(s11)
    l21 = s12 / l11
    l22 = np.sqrt(s22 - l21**2)
    return np.log(l11), np.log(l22), l21


def chol_to_sigma(log_l11, log_l22, l21):
    l11, l22 = np.exp(log_l11), np.exp(log_l22)
    return l11**2, l21**2 + l22**2, l11 * l21


class Problem:
    """Binds a composite likelihood to a named parameter vector.

    ``natural`` vectors hold (sigma11, sigma22, sigma12, margins...);
    ``free`` vectors are the unconstrained coordinates seen by the optimizer.
    """

    def __init__(self, cl: CompositeLikelihood, names, fixed: dict | None = None):
        self.cl = cl
        self.method = cl.method
        self.names = tuple(names)
        self.fixed = dict(fixed or {})

    def theta(self, natural):
        p = {**self.fixed, **dict(zip(self.names, map(float, natural)))}
        beta = SmithParams(p["sigma11"], p["sigma22"], p["sigma12"])
        if self.method == "LT":
            return ThetaLT(p["sigma_u"], p["xi"], beta)
        if self.method == "RT":
            return ThetaRT(p["sigma_u"], beta, p.get("xi", 0.0))
        return ThetaPRS(beta, p["loc"], p["scale"])

    def loglik(self, natural) -> float:
        try:
            th = self.theta(natural)
        except ValueError:
            return -np.inf
        return self.cl(th)

    def per_row(self, natural) -> np.ndarray:
        return self.cl.per_row(self.theta(natural))

    def to_free(self, natural) -> np.ndarray:
        out = list(sigma_to_chol(*natural[:3]))
        for name, v in zip(self.names[3:], natural[3:]):
            out.append(np.log(v) if name in ("sigma_u", "scale") else v)
        return np.array(out, dtype=float)

    def to_natural(self, free) -> np.ndarray:
        out = list(chol_to_sigma(*free[:3]))
        for name, v in zip(self.names[3:], free[3:]):
            out.append(np.exp(v) if name in ("sigma_u", "scale") else v)
        return np.array(out, dtype=float)

    def free_steps(self, free) -> np.ndarray:
        steps = [0.15, 0.15, 0.15 * np.exp(free[0])]
        for name in self.names[3:]:
            steps.append(0.05 if name == "xi" else 0.1)
        return np.array(steps)


# ---------------------------------------------------------------------------
# starting values


def madogram_extremal(values, i, j) -> np.ndarray:
    """Rank-based F-madogram estimates of the pairwise extremal coefficient."""
    n = values.shape[0]
    f = rankdata(values, axis=0) / (n + 1.0)
    nu = 0.5 * np.mean(np.abs(f[:, i] - f[:, j]), axis=0)
    return (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu)


def initial_sigma(ds, ws: WeightScheme) -> SmithParams:
    """Isotropic c*I matching the empirical extremal coefficient at the median lag."""
    i, j, _ = ws.pairs()
    d = np.hypot(*(ds.sites[i] - ds.sites[j]).T)
    h_med = float(np.median(d))
    near = np.isclose(d, d[np.argmin(np.abs(d - h_med))])
    theta = float(np.mean(madogram_extremal(ds.values, i[near], j[near])))
    theta = min(max(theta, 1.02), 1.98)
    a = 2.0 * ndtri(theta / 2.0)
    c = (d[near][0] / a) ** 2
    return SmithParams(c, c, 0.0)


def _gumbel_moments(x):
    scale = np.std(x) * np.sqrt(6.0) / np.pi
    return float(np.mean(x) - 0.5772156649015329 * scale), float(scale)


# ---------------------------------------------------------------------------
# optimisation


def _nelder_mead(problem: Problem, x0_natural, options: FitOptions):
    f = lambda free: -problem.loglik(problem.to_natural(free))  # noqa: E731
    free0 = problem.to_free(np.asarray(x0_natural, dtype=float))
    if not np.isfinite(f(free0)):
        raise ValueError("initial value is outside the feasible region")
    nit = nfev = 0
    best = None
    scale = 1.0
    for attempt in range(2 if options.restart else 1):
        steps = problem.free_steps(free0) * scale
        simplex = np.vstack([free0] + [free0 + np.eye(free0.size)[k] * steps[k]
                                       for k in range(free0.size)])
        res = minimize(
            f, free0, method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxiter": options.maxiter - nit,
                     "maxfev": 10 * options.maxiter, "xatol": options.xatol,
                     "fatol": options.fatol, "adaptive": free0.size > 4},
        )
        nit += res.nit
        nfev += res.nfev
        if best is None or res.fun <= best.fun:
            best = res
        if nit >= options.maxiter:
            break
        # restart from the optimum with a smaller simplex
        free0 = best.x
        scale = 0.5
    converged = bool(best.success) and nit < options.maxiter
    return best, nit, nfev, converged


def _finish(problem, res, nit, nfev, converged, t0, extras, options, ds=None):
    theta = problem.to_natural(res.x)
    out = FitResult(problem.method, problem.names, theta, float(-res.fun), converged,
                    int(nit), time.perf_counter() - t0, int(nfev), extras=extras)
    if not converged:
        logger.warning("%s fit did not converge after %d iterations", problem.method, nit)
    if options.standard_errors and converged:
        add_standard_errors(out, problem, options.subsample, ds)
    return out


def build_problem(ds, ws: WeightScheme, method: str, options: FitOptions | None = None,
                  u: float | None = None, margins: dict | None = None):
    """Composite likelihood plus parameterisation for one method.

    ``margins`` pins the marginal parameters (two-step LT, pinned PRS).
    """
    options = options or FitOptions()
    method = method.upper()
    extras = {}
    if method in ("LT", "RT"):
        if u is None:
            u = empirical_quantile(ds.values, options.threshold_quantile)
        extras["threshold"] = float(u)
    cl = CompositeLikelihood(ds, ws, method, u=u)
    if method == "LT":
        extras["zeta"] = cl.zeta
        names = SIGMA_NAMES if margins else SIGMA_NAMES + ("sigma_u", "xi")
    elif method == "RT":
        names = SIGMA_NAMES + (("sigma_u",) if options.rt_fix_xi_zero else ("sigma_u", "xi"))
        if margins:
            names = SIGMA_NAMES
    else:
        names = SIGMA_NAMES if margins else SIGMA_NAMES + ("loc", "scale")
    fixed = dict(margins or {})
    if method == "RT" and options.rt_fix_xi_zero:
        fixed.setdefault("xi", 0.0)
    return Problem(cl, names, fixed), extras


def default_init(ds, ws, problem: Problem) -> np.ndarray:
    s = initial_sigma(ds, ws)
    x = [s.sigma11, s.sigma22, s.sigma12]
    for name in problem.names[3:]:
        if name == "sigma_u":
            exc = ds.values[ds.values > problem.cl.u] - problem.cl.u
            x.append(float(np.std(exc)) if exc.size > 1 else 1.0)
        elif name == "xi":
            x.append(0.0)
        elif name == "loc":
            x.append(_gumbel_moments(ds.block_maxima())[0])
        elif name == "scale":
            x.append(_gumbel_moments(ds.block_maxima())[1])
    return np.array(x)


def gumbel_margins(ds, method: str) -> dict:
    """Marginal parameters implied by exact standard Gumbel data.

    Excesses of a Gumbel variable over a high threshold are close to Exp(1), and
    the maximum of ``m`` daily values is Gumbel(log m, 1).
    """
    method = method.upper()
    if method == "PRS":
        days = int(np.bincount(ds.year_index).max())
        return {"loc": float(np.log(days)), "scale": 1.0}
    if method == "RT":
        return {"sigma_u": 1.0}
    return {"sigma_u": 1.0, "xi": 0.0}


def maximize_cl(ds, ws: WeightScheme, method: str, init=None,
                options: FitOptions | None = None, u: float | None = None,
                margins: dict | None = None) -> FitResult:
    """Maximise the composite likelihood by Nelder-Mead on log-Cholesky coordinates.

    Args:
        ds: Gumbel-scale dataset.
        ws: pair weights.
        method: ``"RT"``, ``"LT"`` or ``"PRS"``.
        init: natural-scale starting vector; moment-matched guess when omitted.
        options: tolerances and model flags.
        u: threshold; defaults to the pooled ``options.threshold_quantile`` quantile.
        margins: marginal parameters held fixed.

    Returns:
        FitResult with ``converged=False`` when the iteration cap was hit.
    """
    options = options or FitOptions()
    t0 = time.perf_counter()
    method = method.upper()
    if options.known_margins and margins is None:
        margins = gumbel_margins(ds, method)
    problem, extras = build_problem(ds, ws, method, options, u=u, margins=margins)
    if init is None:
        init = default_init(ds, ws, problem)
    res, nit, nfev, converged = _nelder_mead(problem, init, options)
    if margins:
        extras["fixed_margins"] = dict(margins)
    return _finish(problem, res, nit, nfev, converged, t0, extras, options, ds)


def fit_two_step_lt(ds, ws: WeightScheme, options: FitOptions | None = None,
                    u: float | None = None, init=None) -> FitResult:
    """Pooled GP fit of the margins, then the LT likelihood over Sigma only."""
    options = options or FitOptions()
    if u is None:
        u = empirical_quantile(ds.values, options.threshold_quantile)
    exc = ds.values[ds.values > u] - u
    sigma_u, xi = fit_marginal_gp(exc)
    res = maximize_cl(ds, ws, "LT", init=init, options=options, u=u,
                      margins={"sigma_u": sigma_u, "xi": xi})
    res.extras["marginal_fit"] = {"sigma_u": sigma_u, "xi": xi, "n_excesses": int(exc.size)}
    return res


def fit(ds, method: str, options: FitOptions | None = None, init=None) -> FitResult:
    """Threshold, weights and the method's estimator in one call."""
    options = options or FitOptions()
    ws = make_weights(ds.sites, options.weights_quantile)
    method = method.upper()
    if method == "LT" and options.two_step and not options.known_margins:
        return fit_two_step_lt(ds, ws, options, init=init)
    return maximize_cl(ds, ws, method, init=init, options=options)


# ---------------------------------------------------------------------------
# sandwich


def _fd_steps(theta, rel):
    return rel * (1.0 + np.abs(theta))


def numerical_hessian(f, theta, rel: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function, symmetrised."""
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    h = _fd_steps(theta, rel)
    f0 = f(theta)
    hess = np.empty((k, k))
    for a in range(k):
        ea = np.zeros(k)
        ea[a] = h[a]
        hess[a, a] = (f(theta + ea) - 2.0 * f0 + f(theta - ea)) / h[a] ** 2
        for b in range(a):
            eb = np.zeros(k)
            eb[b] = h[b]
            hess[a, b] = (f(theta + ea + eb) - f(theta + ea - eb)
                          - f(theta - ea + eb) + f(theta - ea - eb)) / (4.0 * h[a] * h[b])
            hess[b, a] = hess[a, b]
    return 0.5 * (hess + hess.T)


def hessian_cl(problem: Problem, theta_hat, rel: float = 1e-4):
    """H_T = minus the finite-difference Hessian of cl at ``theta_hat``.

    Returns ``(H, indefinite)``; the flag marks a boundary or unconverged optimum.
    """
    h = -numerical_hessian(problem.loglik, theta_hat, rel)
    indefinite = bool(np.any(np.linalg.eigvalsh(h) <= 0))
    if indefinite:
        logger.warning("H_T is not positive definite")
    return h, indefinite


def row_scores(problem: Problem, theta_hat, rel: float = 1e-5) -> np.ndarray:
    """T x k matrix of per-row score contributions by central differences."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    h = _fd_steps(theta_hat, rel)
    cols = []
    for k in range(theta_hat.size):
        e = np.zeros(theta_hat.size)
        e[k] = h[k]
        cols.append((problem.per_row(theta_hat + e) - problem.per_row(theta_hat - e)) / (2 * h[k]))
    return np.column_stack(cols)


def subsample_J(problem: Problem, theta_hat, sc: SubsampleConfig | None = None,
                rows_per_block: int = 1) -> np.ndarray:
    """Score covariance from overlapping temporal windows.

    ``rows_per_block`` rescales the window in days to likelihood rows; PRS rows
    are whole years.
    """
    sc = sc or SubsampleConfig()
    scores = row_scores(problem, theta_hat)
    n = scores.shape[0]
    if rows_per_block > 1:
        sc = SubsampleConfig(max(1, sc.window_length // rows_per_block),
                             max(1, sc.stride // rows_per_block))
    wins = sc.windows(n)
    k = scores.shape[1]
    j_mat = np.zeros((k, k))
    empty = 0
    for win in wins:
        g = scores[win].sum(axis=0)
        if not np.any(g):
            empty += 1
        j_mat += np.outer(g, g) / (win.stop - win.start)
    if empty:
        logger.info("%d of %d windows had a zero score", empty, len(wins))
    return j_mat * n / len(wins)


def godambe_variance(h_mat, j_mat) -> np.ndarray:
    """V_T = H^-1 J H^-1, the inverse Godambe information."""
    h_mat = np.asarray(h_mat, dtype=float)
    cond = np.linalg.cond(h_mat)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularHessianError(cond)
    hinv = np.linalg.inv(h_mat)
    v = hinv @ np.asarray(j_mat, dtype=float) @ hinv
    return 0.5 * (v + v.T)


def add_standard_errors(result: FitResult, problem: Problem,
                        sc: SubsampleConfig | None = None, ds=None) -> FitResult:
    h, indefinite = hessian_cl(problem, result.theta_hat)
    rows_per_block = 1
    if problem.method == "PRS" and ds is not None:
        rows_per_block = int(np.bincount(ds.year_index).max())
    j = subsample_J(problem, result.theta_hat, sc, rows_per_block)
    result.H, result.J, result.hessian_indefinite = h, j, indefinite
    try:
        result.V = godambe_variance(h, j)
    except SingularHessianError as err:
        result.extras["se_error"] = str(err)
    return result


def options_dict(options: FitOptions) -> dict:
    return asdict(options)
