"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy.special import log_ndtr, ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_A_INDEPENDENT = 38.0


def frechet_terms(a_pair, pair, z1, z2, kind, lz1=None, lz2=None):
    a = a_pair[pair]
    lz1 = np.log(z1) if lz1 is None else lz1
    lz2 = np.log(z2) if lz2 is None else lz2
    big = a > _A_INDEPENDENT
    safe_a = np.where(big, 1.0, a)
    w1 = 0.5 * safe_a + (lz2 - lz1) / safe_a
    w2 = safe_a - w1
    v = np.where(big, 1.0 / z1 + 1.0 / z2, ndtr(w1) / z1 + ndtr(w2) / z2)
    out = -v
    m1 = kind == 1
    out[m1] += np.where(big[m1], 0.0, log_ndtr(w1[m1])) - 2.0 * lz1[m1]
    m2 = kind == 2
    if m2.any():
        t1 = np.where(big[m2], 0.0, log_ndtr(w1[m2]) + log_ndtr(w2[m2])) - lz2[m2]
        t2 = np.where(
            big[m2], -np.inf,
            -0.5 * w1[m2] ** 2 - _LOG_SQRT_2PI - np.log(safe_a[m2]),
        )
        out[m2] += -2.0 * lz1[m2] - lz2[m2] + np.logaddexp(t1, t2)
    return out


def rt_terms(a_pair, pair, x1, x2):
    a = a_pair[pair]
    w1 = 0.5 * a + (x2 - x1) / a
    return -0.5 * w1 * w1 - _LOG_SQRT_2PI - np.log(a) - x1


def storm_batch(sx, sy, q11, q12, q22, scale, gamma, expo, cx, cy, z, tol):
    gammas = gamma + np.cumsum(expo)
    x = scale / gammas
    dx = sx[None, :] - cx[:, None]
    dy = sy[None, :] - cy[:, None]
    vals = x[:, None] * np.exp(-0.5 * (q11 * dx * dx + 2.0 * q12 * dx * dy + q22 * dy * dy))
    # running maxima after each storm, seeded with the incoming state
    run = np.maximum.accumulate(np.vstack([z[None, :], vals]), axis=0)
    zmin_before = run[:-1].min(axis=1)
    stop = np.nonzero(x < zmin_before * (1.0 - tol))[0]
    if stop.size:
        k = int(stop[0])
        z[:] = run[k]
        return float(gammas[k]), k, True
    z[:] = run[-1]
    return float(gammas[-1]), expo.shape[0], False
