"""Pure-numpy Polya-Gamma backend.

Vectorized rejection sampler for PG(1, c): the target is written as a
tilted Jacobi variable J*(1, z) with z = c/2 (and PG draw = J*/4), sampled
with the alternating-series accept/reject scheme on a two-piece proposal --
a truncated inverse-Gaussian below the split point ``TRUNC`` and a shifted
exponential above it.  Batches are processed with index masks so the loop
count is governed by the (very high) per-element acceptance rate, not the
batch size.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr

TRUNC = 0.64
MAX_REJECT = 10_000

_LOG_2_OVER_PI = np.log(2.0) - np.log(np.pi)


def _ig_cdf_trunc(z):
    """P(X <= TRUNC) for X ~ InverseGaussian(mean 1/z, shape 1), z >= 0."""
    rt = np.sqrt(TRUNC)
    upper = (TRUNC * z - 1.0) / rt
    lower = -(TRUNC * z + 1.0) / rt
    # exp(2z) * Phi(lower) via logs: the plain product overflows long after
    # the true value has become negligible.
    return ndtr(upper) + np.exp(2.0 * z + log_ndtr(lower))


def _series_coef(n, x):
    """n-th coefficient of the alternating series bounding the J* density."""
    npf = n + 0.5
    out = np.empty_like(x)
    left = x <= TRUNC
    xl = x[left]
    out[left] = np.exp(
        np.log(np.pi * npf) + 1.5 * (_LOG_2_OVER_PI - np.log(xl)) - 2.0 * npf**2 / xl
    )
    xr = x[~left]
    out[~left] = np.pi * npf * np.exp(-(npf**2) * np.pi**2 * xr / 2.0)
    return out


def _rtigauss(z, rng):
    """Inverse-Gaussian(1/z, 1) draws truncated to (0, TRUNC], elementwise."""
    x = np.empty_like(z)
    big_mean = z * TRUNC < 1.0  # mean above the truncation point (incl. z=0)

    idx = np.flatnonzero(big_mean)
    rounds = 0
    while idx.size:
        rounds += 1
        if rounds > MAX_REJECT:
            raise RuntimeError("truncated inverse-Gaussian rejection cap hit")
        e1 = rng.standard_exponential(idx.size)
        e2 = rng.standard_exponential(idx.size)
        ok = e1 * e1 <= 2.0 * e2 / TRUNC
        cand = TRUNC / (1.0 + TRUNC * e1) ** 2
        ok &= rng.random(idx.size) <= np.exp(-0.5 * z[idx] ** 2 * cand)
        x[idx[ok]] = cand[ok]
        idx = idx[~ok]

    idx = np.flatnonzero(~big_mean)
    rounds = 0
    while idx.size:
        rounds += 1
        if rounds > MAX_REJECT:
            raise RuntimeError("truncated inverse-Gaussian rejection cap hit")
        mu = 1.0 / z[idx]
        my = mu * rng.standard_normal(idx.size) ** 2
        # smaller root of the quadratic, rationalized to avoid cancellation
        root = mu * (1.0 - 2.0 * my / (my + np.sqrt(my * (my + 4.0))))
        flip = rng.random(idx.size) > mu / (mu + root)
        cand = np.where(flip, mu * mu / root, root)
        ok = cand <= TRUNC
        x[idx[ok]] = cand[ok]
        idx = idx[~ok]
    return x


def pg1_vec(c, rng):
    """Draw PG(1, c[i]) for a flat float64 array ``c``."""
    z = 0.5 * np.abs(c)
    big_k = np.pi**2 / 8.0 + 0.5 * z * z
    p_exp = (np.pi / (2.0 * big_k)) * np.exp(-big_k * TRUNC)
    q_ig = 2.0 * np.exp(-z) * _ig_cdf_trunc(z)
    total = p_exp + q_ig
    exp_prob = np.divide(p_exp, total, out=np.zeros_like(total), where=total > 0)

    out = np.empty_like(z)
    todo = np.arange(z.size)
    rounds = 0
    while todo.size:
        rounds += 1
        if rounds > MAX_REJECT:
            raise RuntimeError("PG(1,c) rejection cap hit; sampler defect")
        m = todo.size
        use_exp = rng.random(m) < exp_prob[todo]
        x = np.empty(m)
        x[use_exp] = TRUNC + rng.standard_exponential(use_exp.sum()) / big_k[todo[use_exp]]
        x[~use_exp] = _rtigauss(z[todo[~use_exp]], rng)

        s = _series_coef(0, x)
        y = rng.random(m) * s
        undecided = np.ones(m, bool)
        accepted = np.zeros(m, bool)
        n = 0
        while undecided.any():
            n += 1
            live = np.flatnonzero(undecided)
            coef = _series_coef(n, x[live])
            if n % 2 == 1:
                s[live] -= coef
                hit = y[live] <= s[live]
                accepted[live[hit]] = True
            else:
                s[live] += coef
                hit = y[live] > s[live]
            undecided[live[hit]] = False

        out[todo[accepted]] = 0.25 * x[accepted]
        todo = todo[~accepted]
    return out


def pg_sum_vec(b, c, rng):
    """Sum of b[i] independent PG(1, c[i]) draws, elementwise (b >= 0)."""
    reps = np.asarray(b, dtype=np.int64)
    total = int(reps.sum())
    out = np.zeros(reps.shape, dtype=np.float64)
    if total == 0:
        return out
    draws = pg1_vec(np.repeat(c, reps), rng)
    bounds = np.concatenate(([0], np.cumsum(reps)[:-1]))
    nonzero = reps > 0
    sums = np.add.reduceat(draws, bounds[nonzero])
    out[nonzero] = sums
    return out
