"""Polya-Gamma sampling: PG(1, c) exact draws and binomial-weight PG(b, c).

Two interchangeable backends provide the PG(1, c) kernel:

* ``compiled`` -- a Cython extension (``bgrass.pg._core``) looping in C on
  numpy's bit-generator interface; built at install time when a compiler
  is available.
* ``python``   -- a vectorized numpy implementation of the same rejection
  sampler (``bgrass.pg._ref``).

The compiled backend is selected at import when present; set the
environment variable ``BGRASS_PG_BACKEND=python`` (or call
:func:`use_backend`) to force the fallback.  Draw streams are deterministic
per (seed, backend) but differ between backends because they consume the
underlying bit stream differently.

PG(b, c) for integer b uses additivity: for b <= ``B_EXACT`` it is the sum
of b exact PG(1, c) draws; above that a moment-matched normal approximation
(resampled into the positive support) takes over.
"""

import os

import numpy as np

from . import _ref

try:
    from . import _core
except ImportError:
    _core = None

B_EXACT = 64

_BACKENDS = {"python"} | ({"compiled"} if _core is not None else set())
_active = "compiled" if _core is not None else "python"
_env = os.environ.get("BGRASS_PG_BACKEND")
if _env:
    if _env not in _BACKENDS:
        raise ImportError(
            f"BGRASS_PG_BACKEND={_env!r} not available (have: {sorted(_BACKENDS)})"
        )
    _active = _env


def available_backends():
    """Names of the usable backends, compiled first when present."""
    return sorted(_BACKENDS, reverse=False)


def current_backend():
    return _active


def use_backend(name):
    """Switch the active PG(1,c) kernel; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}")
    previous = _active
    _active = name
    return previous


def _pg1_flat(c, rng):
    if _active == "compiled":
        return _core.pg1_vec(c, rng.bit_generator)
    return _ref.pg1_vec(c, rng)


def _pg_sum_flat(b, c, rng):
    if _active == "compiled":
        return _core.pg_sum_vec(b, c, rng.bit_generator)
    return _ref.pg_sum_vec(b, c, rng)


def mean(b, c):
    """Analytic E[PG(b, c)] = (b / 2c) tanh(c / 2), with the b/4 limit at c=0."""
    b = np.asarray(b, dtype=np.float64)
    c = np.abs(np.asarray(c, dtype=np.float64))
    b, c = np.broadcast_arrays(b, c)
    out = np.empty(c.shape, dtype=np.float64)
    zero = c == 0.0
    out[zero] = b[zero] / 4.0
    cz = c[~zero]
    out[~zero] = b[~zero] * np.tanh(cz / 2.0) / (2.0 * cz)
    return out if out.ndim else float(out)


def variance(b, c):
    """Analytic Var[PG(b, c)] from the log-Laplace-transform cumulant.

    Var = b * (tanh(c/2) / (2 c^3) - sech(c/2)^2 / (4 c^2)); the c -> 0
    limit is b/24.  A series expansion guards the small-c cancellation.
    """
    b = np.asarray(b, dtype=np.float64)
    c = np.abs(np.asarray(c, dtype=np.float64))
    b, c = np.broadcast_arrays(b, c)
    out = np.empty(c.shape, dtype=np.float64)
    small = c < 1e-2
    x2 = (c[small] / 2.0) ** 2
    out[small] = b[small] * (1.0 / 24.0 - x2 / 30.0 + 17.0 * x2 * x2 / 840.0)
    cb = c[~small]
    th = np.tanh(cb / 2.0)
    sech2 = 1.0 / np.cosh(cb / 2.0) ** 2
    out[~small] = b[~small] * (th / (2.0 * cb**3) - sech2 / (4.0 * cb**2))
    return out if out.ndim else float(out)


def sample_pg1(c, rng):
    """Exact PG(1, c) draws, elementwise over ``c``.

    Parameters
    ----------
    c : float or array_like
        Tilt parameter(s); PG(1, c) = PG(1, -c), so the sign is ignored.
    rng : numpy.random.Generator
        Caller-owned stream.
    """
    scalar = np.ndim(c) == 0
    arr = np.ascontiguousarray(np.abs(c), dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite PG tilt parameter")
    flat = _pg1_flat(arr.reshape(-1), rng)
    if scalar:
        return float(flat[0])
    return flat.reshape(np.shape(c))


def sample_pg(b, c, rng, b_exact=B_EXACT):
    """PG(b, c) draws for integer b >= 1, elementwise over broadcast (b, c).

    For b <= ``b_exact`` the draw is the exact sum of b PG(1, c) variates;
    above that a normal approximation matched to the analytic mean and
    variance is used, resampling any non-positive values.
    """
    b_arr = np.asarray(b)
    c_arr = np.abs(np.asarray(c, dtype=np.float64))
    b_arr, c_arr = np.broadcast_arrays(b_arr, c_arr)
    scalar = b_arr.ndim == 0
    b_flat = np.ascontiguousarray(b_arr, dtype=np.int64).reshape(-1)
    c_flat = np.ascontiguousarray(c_arr, dtype=np.float64).reshape(-1)
    if b_flat.size and b_flat.min() < 1:
        raise ValueError("PG weight b must be a positive integer")
    if not np.all(np.isfinite(c_flat)):
        raise ValueError("non-finite PG tilt parameter")

    out = np.empty(b_flat.shape, dtype=np.float64)
    exact = b_flat <= b_exact
    if exact.any():
        out[exact] = _pg_sum_flat(b_flat[exact], c_flat[exact], rng)
    approx = ~exact
    if approx.any():
        mu = mean(b_flat[approx], c_flat[approx])
        sd = np.sqrt(variance(b_flat[approx], c_flat[approx]))
        draw = mu + sd * rng.standard_normal(mu.shape)
        bad = np.flatnonzero(draw <= 0.0)
        rounds = 0
        while bad.size:
            rounds += 1
            if rounds > 1000:
                raise RuntimeError("normal-approximation clamp failed to terminate")
            redraw = mu[bad] + sd[bad] * rng.standard_normal(bad.size)
            draw[bad] = redraw
            bad = bad[redraw <= 0.0]
        out[approx] = draw
    if scalar:
        return float(out[0])
    return out.reshape(b_arr.shape)
