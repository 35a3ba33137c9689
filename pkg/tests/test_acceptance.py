"""Acceptance criteria, one test per criterion.

Criteria 1 to 4 read the Monte Carlo studies under ``results/``.  Missing
replications are computed (and cached) on first use, which takes about
1.5 hours on one core; ``results/run_acceptance.sh`` does the same from the
command line.  Set ``SMITHCL_SKIP_STUDIES=1`` to skip instead.
"""

import json
import math
import os
from pathlib import Path

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy.stats import kstest

from smithcl.estimate import Problem
from smithcl.margins import MarginalParams
from smithcl.mcstudy import StudyConfig, load_summaries, run_study
from smithcl.model import (
    SmithParams,
    cdf_frechet_pair,
    extremal_coefficient,
    pair_coefficient,
    partials_pair,
)
from smithcl.pairlik import CompositeLikelihood, lt_pair_loglik, make_weights, rt_pair_loglik
from smithcl.simulate import SimConfig, regular_grid, simulate_dataset, simulate_field, to_gumbel

ROOT = Path(__file__).resolve().parent.parent
TRUTH = SmithParams(200.0, 300.0, 150.0)
PARAMS = ("sigma11", "sigma22", "sigma12")

# Reference tables at lags 1, 5, 10: (lag, delta, method) -> (mean, sd, rmse) per parameter
TABLES = {
    (1, 0.25, "RT"): ((209.13, 29.62, 30.99), (308.71, 44.14, 44.99), (156.49, 30.06, 30.75)),
    (1, 0.25, "LT"): ((204.24, 54.85, 55.01), (301.80, 80.63, 80.65), (152.71, 46.81, 46.89)),
    (1, 0.25, "PRS"): ((216.94, 47.77, 50.69), (320.01, 67.19, 70.10), (162.03, 46.94, 48.46)),
    (1, 0.50, "RT"): ((209.00, 29.18, 30.54), (308.46, 43.53, 44.34), (156.31, 29.57, 30.24)),
    (1, 0.50, "LT"): ((204.75, 54.35, 54.56), (302.42, 79.73, 79.76), (153.08, 46.53, 46.64)),
    (1, 0.50, "PRS"): ((217.53, 49.03, 52.07), (320.57, 68.79, 71.80), (162.36, 48.16, 49.73)),
    (1, 1.00, "RT"): ((208.79, 28.09, 29.44), (308.29, 42.12, 42.92), (156.02, 28.45, 29.07)),
    (1, 1.00, "LT"): ((204.88, 54.63, 54.85), (302.43, 79.90, 79.93), (153.13, 46.79, 46.89)),
    (1, 1.00, "PRS"): ((218.66, 51.33, 54.61), (321.70, 71.49, 74.71), (163.00, 50.13, 51.79)),
    (5, 0.25, "RT"): ((204.41, 16.33, 16.91), (305.37, 25.63, 26.19), (152.06, 16.92, 17.04)),
    (5, 0.25, "LT"): ((201.06, 35.39, 35.41), (302.03, 56.71, 56.74), (151.55, 32.59, 32.63)),
    (5, 0.25, "PRS"): ((206.78, 29.79, 30.55), (312.02, 49.35, 50.79), (155.90, 31.49, 32.04)),
    (5, 0.50, "RT"): ((205.58, 15.54, 16.51), (304.47, 24.01, 24.42), (148.33, 15.89, 15.97)),
    (5, 0.50, "LT"): ((201.53, 35.92, 35.95), (302.52, 57.17, 57.23), (151.87, 33.07, 33.13)),
    (5, 0.50, "PRS"): ((208.22, 33.67, 34.66), (313.99, 54.34, 56.11), (156.79, 35.34, 35.99)),
    (5, 1.00, "RT"): ((216.32, 13.80, 21.37), (306.31, 19.81, 20.79), (133.11, 13.26, 21.47)),
    (5, 1.00, "LT"): ((202.20, 37.21, 37.27), (303.47, 58.34, 58.44), (152.31, 33.65, 33.73)),
    (5, 1.00, "PRS"): ((211.34, 41.89, 43.40), (318.21, 64.93, 67.43), (158.78, 42.98, 43.87)),
    (10, 0.25, "RT"): ((207.38, 7.24, 10.33), (299.57, 11.98, 11.98), (138.27, 7.98, 14.18)),
    (10, 0.25, "LT"): ((199.91, 18.79, 18.77), (300.53, 31.43, 31.41), (150.21, 18.07, 18.07)),
    (10, 0.25, "PRS"): ((201.55, 19.56, 19.60), (305.64, 32.64, 33.09), (152.30, 20.97, 21.08)),
    (10, 0.50, "RT"): ((225.64, 6.59, 26.47), (309.70, 10.52, 14.30), (122.79, 7.06, 28.11)),
    (10, 0.50, "LT"): ((200.16, 19.56, 19.56), (300.98, 32.61, 32.61), (150.39, 18.65, 18.65)),
    (10, 0.50, "PRS"): ((202.43, 23.68, 23.78), (307.70, 39.42, 40.12), (153.23, 25.76, 25.93)),
    (10, 1.00, "RT"): ((315.27, 7.45, 115.51), (397.33, 10.25, 97.87), (120.22, 7.19, 30.63)),
    (10, 1.00, "LT"): ((200.56, 22.75, 22.75), (302.21, 37.72, 37.75), (150.96, 21.70, 21.70)),
    (10, 1.00, "PRS"): ((204.09, 31.00, 31.24), (311.48, 52.11, 53.31), (155.00, 33.83, 34.17)),
}


def study(name):
    path = ROOT / "configs" / f"{name}.json"
    cfg = StudyConfig.from_dict(json.loads(path.read_text()))
    out = ROOT / "results" / name
    summaries = load_summaries(cfg, out) if out.exists() else []
    complete = summaries and all(s.replications + s.failures == cfg.replications
                                 for s in summaries)
    if not complete:
        if os.environ.get("SMITHCL_SKIP_STUDIES"):
            pytest.skip(f"results/{name} incomplete; run results/run_acceptance.sh")
        summaries = run_study(cfg, out)
    return {(s.cell[2], s.cell[4]): s for s in summaries}


@pytest.fixture(scope="module")
def k1():
    return study("acceptance_k1")


@pytest.fixture(scope="module")
def k10():
    return study("acceptance_k10")


def test_criterion_1_rt_means(k1, acceptance):
    rt = k1[(0.98, "RT")]
    target = np.array([209.13, 308.71, 156.49])
    band = 3 * np.array([29.62, 44.14, 30.06]) / math.sqrt(100)
    ok = bool(np.all(np.abs(rt.mean - target) <= band))
    detail = ", ".join(f"{p}={m:.2f} in [{t - b:.2f}, {t + b:.2f}]"
                       for p, m, t, b in zip(PARAMS, rt.mean, target, band))
    assert acceptance(1, ok, f"RT means {detail}")


def test_criterion_2_efficiency_ordering(k1, acceptance):
    sd = {m: k1[(0.98 if m != "PRS" else None, m)].sd for m in ("RT", "LT", "PRS")}
    inversions = sum(int(sd[lo][i] >= sd[hi][i])
                     for i in range(3) for lo, hi in [("RT", "PRS"), ("PRS", "LT"), ("RT", "LT")])
    detail = "; ".join(f"{p}: {sd['RT'][i]:.1f} < {sd['PRS'][i]:.1f} < {sd['LT'][i]:.1f}"
                       for i, p in enumerate(PARAMS))
    assert acceptance(2, inversions <= 1, f"SD RT<PRS<LT, {inversions} inversions ({detail})")


def test_criterion_3_bias_pattern(k10, acceptance):
    levels = (0.90, 0.95, 0.98)
    rt = [k10[(u, "RT")].bias[0] for u in levels]
    lt = [k10[(u, "LT")].bias[0] for u in levels]
    ok = all(b > 50 for b in rt) and rt[0] > rt[1] > rt[2] and all(abs(b) < 10 for b in lt)
    detail = (f"RT sigma11 bias {' / '.join(f'{b:.2f}' for b in rt)}, "
              f"LT {' / '.join(f'{b:.2f}' for b in lt)} at u=0.90/0.95/0.98")
    assert acceptance(3, ok, detail)


def test_criterion_4_lt_beats_rt(k10, acceptance):
    rt, lt = k10[(0.98, "RT")].rmse, k10[(0.98, "LT")].rmse
    ok = bool(lt[0] < rt[0] and lt[1] < rt[1])
    detail = f"RMSE LT vs RT: sigma11 {lt[0]:.2f} vs {rt[0]:.2f}, sigma22 {lt[1]:.2f} vs {rt[1]:.2f}"
    assert acceptance(4, ok, detail)


def _mp_partials(x, y, a):
    with mpmath.workdps(40):
        a = mpmath.mpf(a)

        def f(p, q):
            w1 = a / 2 + mpmath.log(q / p) / a
            return mpmath.exp(-mpmath.ncdf(w1) / p - mpmath.ncdf(a - w1) / q)

        x, y, h = mpmath.mpf(x), mpmath.mpf(y), mpmath.mpf("1e-8")
        d1 = (f(x + h, y) - f(x - h, y)) / (2 * h)
        d2 = (f(x, y + h) - f(x, y - h)) / (2 * h)
        d12 = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4 * h * h)
        return float(d1), float(d2), float(d12)


def _property_suite():
    rng = np.random.default_rng(5)
    failures = []
    # analytic partials against 40-digit central differences
    for x, y, a in zip(rng.uniform(0.3, 5, 100), rng.uniform(0.3, 5, 100),
                       rng.uniform(0.2, 4, 100)):
        fd = _mp_partials(x, y, a)
        for analytic, numeric in zip(partials_pair(x, y, a)[:3], fd):
            if not math.isclose(analytic, numeric, rel_tol=1e-5):
                failures.append("partials")
    # max-stability
    z = rng.uniform(0.2, 8, (100, 2))
    a = rng.uniform(0.05, 6, 100)
    for n in (2, 5, 10):
        lhs = cdf_frechet_pair(n * z[:, 0], n * z[:, 1], a) ** n
        if not np.allclose(lhs, cdf_frechet_pair(z[:, 0], z[:, 1], a), rtol=1e-10, atol=0):
            failures.append("max-stability")
    # extremal coefficient bounds and the diagonal identity
    for _ in range(100):
        h = rng.normal(scale=30, size=2)
        v = extremal_coefficient(h, TRUTH)
        zz = rng.uniform(0.1, 20)
        g = cdf_frechet_pair(zz, zz, pair_coefficient(h, (0, 0), TRUTH))
        if not (1 <= v <= 2 and math.isclose(g, math.exp(-v / zz), rel_tol=1e-12)):
            failures.append("extremal")
    # RT density mass over the exceedance region
    f = lambda y2, y1: math.exp(rt_pair_loglik(y1, y2, 0.5, 0.0, 1.0))  # noqa: E731
    upper, _ = integrate.dblquad(f, 0.0, np.inf, -np.inf, np.inf, epsabs=1e-9)
    left, _ = integrate.dblquad(f, -np.inf, 0.0, 0.0, np.inf, epsabs=1e-9)
    if abs(upper + left - 1) > 1e-3:
        failures.append("RT mass")
    # LT four-case probabilities
    mp = MarginalParams(u=0.0, sigma_u=1.2, xi=0.1, zeta=0.05)
    g = lambda y1, y2: math.exp(lt_pair_loglik(y1, y2, 0.7, mp))  # noqa: E731
    one, _ = integrate.quad(lambda y: g(y, -1.0), 0.0, np.inf)
    two, _ = integrate.quad(lambda y: g(-1.0, y), 0.0, np.inf)
    both, _ = integrate.dblquad(lambda y2, y1: g(y1, y2), 0.0, np.inf, 0.0, np.inf, epsabs=1e-9)
    total = g(-1.0, -1.0) + one + two + both
    if abs(total - 1) > 1e-3:
        failures.append("LT total")
    return sorted(set(failures)), upper + left, total


def test_criterion_5_property_suite(acceptance):
    failures, rt_mass, lt_total = _property_suite()
    detail = (f"partials, max-stability, v bounds; RT mass {rt_mass:.6f}, "
              f"LT total {lt_total:.6f}" + (f"; failed: {failures}" if failures else ""))
    assert acceptance(5, not failures, detail)


def test_criterion_6_simulator(acceptance):
    probes = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 10.0], [15.0, 15.0], [-20.0, 10.0],
                       [30.0, 0.0]])
    rng = np.random.default_rng(np.random.SeedSequence(2013))
    z = np.array([simulate_field(probes, TRUTH, rng) for _ in range(10_000)])
    pvals = [kstest(z[:, s], lambda t: np.exp(-1 / t)).pvalue for s in range(len(probes))]
    zs = []
    for s in range(1, len(probes)):
        p = np.mean((z[:, 0] <= 1) & (z[:, s] <= 1))
        se = math.sqrt((1 - p) / (p * len(z)))
        zs.append((-math.log(p) - extremal_coefficient(probes[s], TRUTH)) / se)
    # six KS tests at level 0.01 allow one chance rejection
    ok = sum(p < 0.01 for p in pvals) <= 1 and all(abs(t) < 3 for t in zs)
    detail = (f"KS min p={min(pvals):.3f}; v-hat z-scores "
              f"{', '.join(f'{t:+.2f}' for t in zs)}")
    assert acceptance(6, ok, detail)


def _score(problem, theta):
    theta = np.asarray(theta, dtype=float)
    h = 1e-5 * (1 + np.abs(theta))
    out = np.empty(theta.size)
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = h[j]
        out[j] = (problem.loglik(theta + e) - problem.loglik(theta - e)) / (2 * h[j])
    return out


def test_criterion_7_unbiased_score(acceptance):
    level, days = 0.98, 100
    u = -math.log(-math.log(level))
    sites = regular_grid(4, 5)
    ws = make_weights(sites, 0.5)
    truth = list(TRUTH.as_tuple())
    specs = {
        "LT": (PARAMS + ("sigma_u", "xi"), truth + [1.0, 0.0], {}),
        "RT": (PARAMS + ("sigma_u",), truth + [1.0], {"xi": 0.0}),
        "PRS": (PARAMS + ("loc", "scale"), truth + [math.log(days), 1.0], {}),
    }
    scores = {m: [] for m in specs}
    for rep in range(200):
        cfg = SimConfig(sites, TRUTH, years=4, days_per_year=days, seed=10_000 + rep)
        ds = to_gumbel(simulate_dataset(cfg))
        for m, (names, theta, fixed) in specs.items():
            cl = CompositeLikelihood(ds, ws, m, u=None if m == "PRS" else u,
                                     zeta=1 - level if m == "LT" else None)
            scores[m].append(_score(Problem(cl, names, fixed), theta))
    parts, ok = [], True
    for m, s in scores.items():
        s = np.array(s)
        z = s.mean(axis=0) / (s.std(axis=0, ddof=1) / math.sqrt(len(s)))
        ok &= bool(np.all(np.abs(z) < 3))
        parts.append(f"{m} max|z|={np.abs(z).max():.2f}")
    assert acceptance(7, ok, "mean score / SE over 200 reps: " + ", ".join(parts))


def test_criterion_8_table_arithmetic(acceptance):
    bad, alt_ok = [], []
    truths = TRUTH.as_tuple()
    for key, rows in TABLES.items():
        for p, truth, (mean, sd, rmse) in zip(PARAMS, truths, rows):
            bias = mean - truth
            if abs(math.hypot(bias, sd) - rmse) > 0.02:
                bad.append(f"{key[0]}/{key[1]}/{key[2]}/{p}: "
                           f"{math.hypot(bias, sd):.2f} vs {rmse:.2f}")
                # population-variance convention over 500 replications
                if abs(math.sqrt(bias**2 + sd**2 * 499 / 500) - rmse) <= 0.02:
                    alt_ok.append(key)
    n = 3 * len(TABLES)
    detail = (f"{n - len(bad)}/{n} printed RMSEs match sqrt(bias^2+SD^2) within 0.02"
              + (f"; mismatches: {'; '.join(bad)}" if bad else "")
              + f" [{len(alt_ok)}/{len(bad)} mismatches fit sqrt(bias^2+SD^2*499/500)]")
    assert acceptance(8, not bad, detail)
