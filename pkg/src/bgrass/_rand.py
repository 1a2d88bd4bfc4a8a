"""Random-variate helpers shared by the sampler."""

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

_ROUND_CAP = 10_000


def truncnorm_nonneg(mean, sd, rng):
    """Draw from N(mean, sd^2) conditioned on the value being >= 0.

    Elementwise over broadcast (mean, sd).  Uses plain rejection where the
    positive tail keeps enough mass and a translated-exponential proposal
    (Robert's method) deep in the tail, so it stays exact for arbitrarily
    negative means.
    """
    mean = np.asarray(mean, dtype=np.float64)
    sd = np.asarray(sd, dtype=np.float64)
    mean, sd = np.broadcast_arrays(mean, sd)
    scalar = mean.ndim == 0
    mean = np.atleast_1d(mean).reshape(-1)
    sd = np.atleast_1d(sd).reshape(-1)

    lo = -mean / sd  # standardized lower bound
    out = np.empty(lo.shape)

    easy = np.flatnonzero(lo < 0.35)
    rounds = 0
    while easy.size:
        rounds += 1
        if rounds > _ROUND_CAP:
            raise RuntimeError("truncated-normal rejection cap hit")
        z = rng.standard_normal(easy.size)
        ok = z >= lo[easy]
        out[easy[ok]] = z[ok]
        easy = easy[~ok]

    hard = np.flatnonzero(lo >= 0.35)
    if hard.size:
        a = lo[hard]
        lam = 0.5 * (a + np.sqrt(a * a + 4.0))
        rounds = 0
        while hard.size:
            rounds += 1
            if rounds > _ROUND_CAP:
                raise RuntimeError("truncated-normal rejection cap hit")
            z = a + rng.standard_exponential(hard.size) / lam
            ok = rng.random(hard.size) <= np.exp(-0.5 * (z - lam) ** 2)
            out[hard[ok]] = z[ok]
            hard = hard[~ok]
            a = lo[hard]
            lam = 0.5 * (a + np.sqrt(a * a + 4.0))

    draw = mean + sd * out
    # the standardized draw honors z >= lo; fold tiny negative round-off
    np.maximum(draw, 0.0, out=draw)
    return float(draw[0]) if scalar else draw


def chol_precision(prec, jitter=1e-10):
    """Lower Cholesky factor of a symmetric positive-definite precision.

    Retries once with ``jitter`` added to the diagonal before giving up,
    reporting an estimated condition number in the failure message.
    """
    try:
        return cholesky(prec, lower=True)
    except np.linalg.LinAlgError:
        try:
            bumped = prec + jitter * np.eye(prec.shape[0])
            return cholesky(bumped, lower=True)
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(prec)
            raise np.linalg.LinAlgError(
                f"precision factorization failed (cond~{cond:.3e})"
            ) from exc


def mvn_from_precision(chol_lower, shift, rng):
    """Draw x ~ N(Q^{-1} shift, Q^{-1}) given the lower Cholesky of Q."""
    m = cho_solve((chol_lower, True), shift)
    z = rng.standard_normal(chol_lower.shape[0])
    return m + solve_triangular(chol_lower, z, lower=True, trans="T")
