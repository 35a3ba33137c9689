import os
import subprocess
import sys

import numpy as np
import pytest

from smithcl import _fallback, kernels
from smithcl.model import log_cdf_frechet_pair, log_mixed_density, log_partial_first

compiled = pytest.importorskip("smithcl._kernels")


def _inputs(n=5000, seed=0):
    rng = np.random.default_rng(seed)
    a_pair = np.concatenate([rng.uniform(0.01, 6, 40), [45.0, 1e-3]])
    pair = rng.integers(0, a_pair.size, n).astype(np.int32)
    z1 = np.exp(rng.normal(scale=3, size=n))
    z2 = np.exp(rng.normal(scale=3, size=n))
    kind = rng.integers(0, 3, n).astype(np.int8)
    return a_pair, pair, z1, z2, kind


def test_frechet_terms_backends_agree():
    args = _inputs()
    c = compiled.frechet_terms(*args)
    p = _fallback.frechet_terms(*args)
    np.testing.assert_allclose(c, p, rtol=1e-12, atol=1e-12)


def test_frechet_terms_match_model():
    a_pair, pair, z1, z2, kind = _inputs(seed=1)
    out = kernels.frechet_terms(a_pair, pair, z1, z2, kind)
    a = a_pair[pair]
    ref = np.select(
        [kind == 0, kind == 1, kind == 2],
        [log_cdf_frechet_pair(z1, z2, a), log_partial_first(z1, z2, a),
         log_mixed_density(z1, z2, a)],
    )
    np.testing.assert_allclose(out, ref, rtol=1e-10, atol=1e-10)


def test_frechet_terms_precomputed_logs():
    a_pair, pair, z1, z2, kind = _inputs(seed=2)
    base = compiled.frechet_terms(a_pair, pair, z1, z2, kind)
    np.testing.assert_array_equal(
        base, compiled.frechet_terms(a_pair, pair, z1, z2, kind, np.log(z1), np.log(z2)))


def test_rt_terms_backends_agree():
    rng = np.random.default_rng(3)
    a_pair = rng.uniform(0.05, 5, 30)
    pair = rng.integers(0, 30, 4000).astype(np.int32)
    x1, x2 = rng.exponential(size=(2, 4000))
    np.testing.assert_allclose(compiled.rt_terms(a_pair, pair, x1, x2),
                               _fallback.rt_terms(a_pair, pair, x1, x2), rtol=1e-14)


def test_storm_batch_backends_agree():
    rng = np.random.default_rng(4)
    sx, sy = rng.uniform(0, 10, (2, 25))
    prec = np.linalg.inv(np.array([[2.0, 0.5], [0.5, 1.0]]))
    results = []
    for mod in (compiled, _fallback):
        z = np.zeros(25)
        gamma, done, used = 0.0, False, 0
        r = np.random.default_rng(9)
        while not done:
            expo = r.standard_exponential(64)
            cx, cy = r.uniform(-5, 15, (2, 64))
            gamma, k, done = mod.storm_batch(sx, sy, prec[0, 0], prec[0, 1], prec[1, 1],
                                             400.0, gamma, expo, cx, cy, z, 1e-6)
            used += k
        results.append((z.copy(), gamma, used))
    np.testing.assert_allclose(results[0][0], results[1][0], rtol=1e-15)
    assert results[0][2] == results[1][2]


def test_pure_switch():
    env = dict(os.environ, SMITHCL_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import smithcl; print(smithcl.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == "cython"
