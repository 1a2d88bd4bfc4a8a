#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Polya-Gamma backend.

Scalar rejection sampler for PG(1, c) (alternating-series accept/reject on
a truncated inverse-Gaussian + shifted-exponential proposal, split at
``TRUNC``), driven by numpy's C-level bit-generator interface so draws stay
on the caller's Generator stream.
"""

from libc.math cimport M_PI, erfc, exp, fabs, log, sqrt
from libc.stdint cimport int64_t

from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_exponential,
    random_standard_normal,
    random_standard_uniform,
)

import numpy as np

cdef double TRUNC = 0.64
cdef int MAX_REJECT = 10000
cdef double SQRT2 = 1.4142135623730951


cdef inline double _phi(double x) noexcept nogil:
    return 0.5 * erfc(-x / SQRT2)


cdef double _ig_cdf_trunc(double z) noexcept nogil:
    # P(X <= TRUNC) for X ~ InverseGaussian(mean 1/z, shape 1), z >= 0.
    cdef double rt = sqrt(TRUNC)
    cdef double upper = (TRUNC * z - 1.0) / rt
    cdef double lower = -(TRUNC * z + 1.0) / rt
    cdef double second = 0.0
    if lower > -37.0:  # beyond this Phi underflows and the product is 0
        second = exp(2.0 * z) * _phi(lower)
    return _phi(upper) + second


cdef inline double _series_coef(int n, double x) noexcept nogil:
    cdef double npf = n + 0.5
    if x > TRUNC:
        return M_PI * npf * exp(-npf * npf * M_PI * M_PI * x / 2.0)
    return exp(log(M_PI * npf) + 1.5 * (log(2.0 / M_PI) - log(x)) - 2.0 * npf * npf / x)


cdef double _rtigauss(bitgen_t *rng, double z) noexcept nogil:
    # Inverse-Gaussian(1/z, 1) truncated to (0, TRUNC]; returns -1 on cap.
    cdef double mu, e1, e2, x, my, root
    cdef int tries = 0
    if z * TRUNC < 1.0:  # mean above the truncation point (incl. z = 0)
        while True:
            tries += 1
            if tries > MAX_REJECT:
                return -1.0
            e1 = random_standard_exponential(rng)
            e2 = random_standard_exponential(rng)
            if e1 * e1 <= 2.0 * e2 / TRUNC:
                x = TRUNC / ((1.0 + TRUNC * e1) * (1.0 + TRUNC * e1))
                if random_standard_uniform(rng) <= exp(-0.5 * z * z * x):
                    return x
    else:
        mu = 1.0 / z
        while True:
            tries += 1
            if tries > MAX_REJECT:
                return -1.0
            my = random_standard_normal(rng)
            my = mu * my * my
            # smaller quadratic root, rationalized against cancellation
            root = mu * (1.0 - 2.0 * my / (my + sqrt(my * (my + 4.0))))
            if random_standard_uniform(rng) > mu / (mu + root):
                root = mu * mu / root
            if root <= TRUNC:
                return root


cdef double _draw_pg1(bitgen_t *rng, double c) noexcept nogil:
    # One PG(1, c) draw; returns -1 if a rejection cap is hit.
    cdef double z = 0.5 * fabs(c)
    cdef double big_k = M_PI * M_PI / 8.0 + 0.5 * z * z
    cdef double p_exp = (M_PI / (2.0 * big_k)) * exp(-big_k * TRUNC)
    cdef double q_ig = 2.0 * exp(-z) * _ig_cdf_trunc(z)
    cdef double exp_prob = 0.0
    if p_exp + q_ig > 0.0:
        exp_prob = p_exp / (p_exp + q_ig)

    cdef double x, s, y
    cdef int n, rejects = 0
    while True:
        rejects += 1
        if rejects > MAX_REJECT:
            return -1.0
        if random_standard_uniform(rng) < exp_prob:
            x = TRUNC + random_standard_exponential(rng) / big_k
        else:
            x = _rtigauss(rng, z)
            if x < 0.0:
                return -1.0
        s = _series_coef(0, x)
        y = random_standard_uniform(rng) * s
        n = 0
        while True:
            n += 1
            if n & 1:
                s -= _series_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if y > s:
                    break


cdef bitgen_t *_get_bitgen(object bit_generator):
    return <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


def pg1_vec(const double[::1] c, object bit_generator):
    """Draw PG(1, c[i]) for a flat float64 array ``c``."""
    cdef Py_ssize_t i, n = c.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef bitgen_t *rng = _get_bitgen(bit_generator)
    cdef int failed = 0
    with bit_generator.lock, nogil:
        for i in range(n):
            view[i] = _draw_pg1(rng, c[i])
            if view[i] < 0.0:
                failed = 1
                break
    if failed:
        raise RuntimeError("PG(1,c) rejection cap hit; sampler defect")
    return out


def pg_sum_vec(const int64_t[::1] b, const double[::1] c, object bit_generator):
    """Sum of b[i] independent PG(1, c[i]) draws, elementwise (b >= 0)."""
    cdef Py_ssize_t i, n = b.shape[0]
    if c.shape[0] != n:
        raise ValueError("b and c must have the same length")
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] view = out
    cdef bitgen_t *rng = _get_bitgen(bit_generator)
    cdef double acc, d
    cdef int64_t k
    cdef int failed = 0
    with bit_generator.lock, nogil:
        for i in range(n):
            acc = 0.0
            for k in range(b[i]):
                d = _draw_pg1(rng, c[i])
                if d < 0.0:
                    failed = 1
                    break
                acc += d
            if failed:
                break
            view[i] = acc
    if failed:
        raise RuntimeError("PG(1,c) rejection cap hit; sampler defect")
    return out
