"""Gibbs sampler for the graph-regularized spike-and-slab logistic model.

Model, per stratum s and term j (binomial cells from ``ingest``):

    y_sj ~ Binomial(n_s, logistic(psi_sj))
    psi_sj = alpha_j . X_s + V_s * delta_j * sigma_beta_j * beta_ss_j

with priors: rows of alpha independent normal with per-column variances
(each variance carrying a conjugate inverse-gamma prior), beta_ss jointly
N(0, Omega) under the ontology correlation, sigma_beta_j half-normal with
per-term variance tau2_j (inverse-gamma on tau2_j, making sigma_beta_j
marginally half-t), and delta_j Bernoulli(pi_j).  The reported log odds
ratio is the composition beta_j = delta_j * sigma_beta_j * beta_ss_j.

Every block update is conjugate once a Polya-Gamma variable is attached to
each cell (omega_sj ~ PG(n_s, psi_sj)), so one sweep is a fixed-order scan:
omega, alpha, beta_ss (joint, using the sparse-precision form of Omega),
sigma_beta (truncated normal), delta (two-point), then the variances.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from . import pg
from ._rand import chol_precision, mvn_from_precision, truncnorm_nonneg
from ._util import file_sha256


def binomial_loglik(cells, psi, include_const=True):
    """Log likelihood of the binomial cells at linear predictor ``psi``.

    With ``include_const=False`` the binomial coefficients are dropped,
    which makes the value directly comparable to a sum of per-report
    Bernoulli log likelihoods.
    """
    y = np.asarray(cells.y, dtype=np.float64)
    n = np.asarray(cells.n, dtype=np.float64)[:, None]
    val = float(np.sum(y * psi - n * np.logaddexp(0.0, psi)))
    if include_const:
        val += float(np.sum(gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)))
    return val


def plugin_deviance(cells, alpha_hat, beta_hat):
    """Deviance at fixed coefficient values (posterior means, typically)."""
    X = np.asarray(cells.X, dtype=np.float64)
    V = np.asarray(cells.V, dtype=np.float64)
    psi = X @ np.asarray(alpha_hat).T + V[:, None] * np.asarray(beta_hat)[None, :]
    return -2.0 * binomial_loglik(cells, psi)


@dataclass(frozen=True)
class Hyperparams:
    a_alpha: float = 0.5
    b_alpha: float = 0.5
    k: float = 1.0
    pi: float | np.ndarray = 0.5

    def __post_init__(self):
        if not (self.a_alpha > 0 and self.b_alpha > 0 and self.k > 0):
            raise ValueError("a_alpha, b_alpha, k must be positive")
        pi = np.asarray(self.pi, dtype=np.float64)
        if np.any(pi <= 0) or np.any(pi >= 1):
            raise ValueError("pi must lie strictly in (0, 1)")


@dataclass(frozen=True)
class Schedule:
    iters: int = 20_000
    burn_in: int = 10_000
    thin: int = 2

    def __post_init__(self):
        if self.burn_in < 0 or self.iters < self.burn_in or self.thin < 1:
            raise ValueError("need iters >= burn_in >= 0 and thin >= 1")

    @property
    def n_draws(self):
        return (self.iters - self.burn_in) // self.thin


@dataclass
class ChainState:
    """All latent variables of one chain plus its random stream."""

    alpha: np.ndarray  # (J, 1+p)
    beta_ss: np.ndarray  # (J,)
    sigma_beta: np.ndarray  # (J,)
    delta: np.ndarray  # (J,) float 0/1
    tau2: np.ndarray  # (J,)
    sigma_alpha2: np.ndarray  # (1+p,)
    omega: np.ndarray  # (S, J)
    rng: np.random.Generator
    iteration: int = 0

    @property
    def beta(self):
        """Composed log odds ratios delta * sigma_beta * beta_ss."""
        return self.delta * self.sigma_beta * self.beta_ss


@dataclass
class DrawStore:
    """Thinned post-burn-in draws of one chain."""

    beta: np.ndarray  # (T, J)
    delta: np.ndarray  # (T, J) uint8
    alpha: np.ndarray  # (T, J, 1+p)
    deviance: np.ndarray  # (T,)
    seed: int
    schedule: Schedule
    hyper: Hyperparams
    epsilon: float
    ae_vocabulary: list[str] | None = None

    @property
    def n_draws(self):
        return self.beta.shape[0]


class GibbsSampler:
    """Fixed-scan Gibbs sampler bound to one dataset and one correlation.

    The correlation structure and cells are read-only; independent chains
    may share one sampler instance only if run sequentially, otherwise
    build one per worker.
    """

    def __init__(self, cells, corr, hyper):
        if corr.n_terms != cells.n_terms:
            raise ValueError("correlation structure and cells disagree on J")
        self.cells = cells
        self.corr = corr
        self.hyper = hyper
        self.X = np.asarray(cells.X, dtype=np.float64)
        self.V = np.asarray(cells.V, dtype=np.float64)
        self.S, self.p1 = self.X.shape
        self.J = cells.n_terms
        self.XV = self.X * self.V[:, None]
        self.Vsq = self.V**2
        self._XX_flat = (self.X[:, :, None] * self.X[:, None, :]).reshape(
            self.S, self.p1 * self.p1
        )
        self.logit_pi = np.broadcast_to(
            np.log(np.asarray(hyper.pi) / (1.0 - np.asarray(hyper.pi))), (self.J,)
        ).astype(np.float64)
        self.prec = corr.precision
        self._set_counts(np.asarray(cells.y, dtype=np.int64), np.asarray(cells.n, dtype=np.int64))

    def _set_counts(self, y, n):
        if y.shape != (self.S, self.J):
            raise ValueError("count matrix shape mismatch")
        self.y = y
        self.n = n
        self.kappa = y - 0.5 * n[:, None]
        self._nb = np.ascontiguousarray(np.broadcast_to(n[:, None], (self.S, self.J)))
        self._Xt_kappa = self.kappa.T @ self.X  # (J, 1+p)
        self._lgamma_const = float(
            np.sum(gammaln(n[:, None] + 1) - gammaln(y + 1) - gammaln(n[:, None] - y + 1))
        )

    def replace_counts(self, y):
        """Swap in a fresh outcome matrix (used by resimulation diagnostics)."""
        self._set_counts(np.asarray(y, dtype=np.int64), self.n)

    # -- state construction ------------------------------------------------

    def init_state(self, rng):
        """Deterministic-scale starting point: prior-plausible, not a prior draw."""
        beta_ss = self._prior_beta_ss(rng)
        delta = (rng.random(self.J) < expit(self.logit_pi)).astype(np.float64)
        state = ChainState(
            alpha=np.zeros((self.J, self.p1)),
            beta_ss=beta_ss,
            sigma_beta=np.ones(self.J),
            delta=delta,
            tau2=np.ones(self.J),
            sigma_alpha2=np.ones(self.p1),
            omega=np.empty((self.S, self.J)),
            rng=rng,
        )
        self.update_omega(state)
        return state

    def prior_state(self, rng):
        """Exact joint prior draw of every latent block (omega refreshed too)."""
        h = self.hyper
        sigma_alpha2 = 1.0 / rng.gamma(h.a_alpha, 1.0 / h.b_alpha, self.p1)
        tau2 = 1.0 / rng.gamma(0.5 * h.k, 2.0 / h.k, self.J)
        state = ChainState(
            alpha=rng.standard_normal((self.J, self.p1)) * np.sqrt(sigma_alpha2),
            beta_ss=self._prior_beta_ss(rng),
            sigma_beta=np.abs(rng.standard_normal(self.J)) * np.sqrt(tau2),
            delta=(rng.random(self.J) < expit(self.logit_pi)).astype(np.float64),
            tau2=tau2,
            sigma_alpha2=sigma_alpha2,
            omega=np.empty((self.S, self.J)),
            rng=rng,
        )
        self.update_omega(state)
        return state

    def _prior_beta_ss(self, rng):
        z = rng.standard_normal(self.J)
        if self.corr.is_independent:
            return z
        from scipy.linalg import solve_triangular

        return solve_triangular(self.corr.precision_chol, z, lower=True, trans="T")

    # -- likelihood pieces ---------------------------------------------------

    def psi(self, state):
        """Linear predictor per cell, (S, J)."""
        return self.X @ state.alpha.T + self.V[:, None] * state.beta[None, :]

    def simulate_counts(self, state, rng):
        """Binomial outcomes given the current state (resimulation step)."""
        return rng.binomial(self._nb, expit(self.psi(state)))

    def deviance(self, state):
        """-2 log binomial likelihood at the current linear predictor."""
        psi = self.psi(state)
        loglik = float(
            np.sum(self.y * psi - self.n[:, None] * np.logaddexp(0.0, psi))
            + self._lgamma_const
        )
        return -2.0 * loglik

    def _evidence(self, state):
        """Per-term sufficient statistics given omega and alpha.

        G_j = sum_s V_s (kappa_sj - omega_sj * alpha_j.X_s)
        H_j = sum_s omega_sj V_s^2
        Both are free of (beta_ss, sigma_beta, delta), so one evaluation
        serves the beta_ss, sigma_beta, and delta updates of a sweep.
        """
        mu = self.X @ state.alpha.T
        G = self.V @ (self.kappa - state.omega * mu)
        H = self.Vsq @ state.omega
        return G, H

    # -- block updates -------------------------------------------------------

    def update_omega(self, state):
        psi = self.psi(state)
        try:
            state.omega = pg.sample_pg(self._nb, np.abs(psi), state.rng)
        except ValueError as exc:
            raise RuntimeError(
                f"non-finite linear predictor at iteration {state.iteration}: {exc}"
            ) from exc
        return state.omega

    def update_alpha(self, state):
        Q = (state.omega.T @ self._XX_flat).reshape(self.J, self.p1, self.p1)
        idx = np.arange(self.p1)
        Q[:, idx, idx] += 1.0 / state.sigma_alpha2
        comp = state.beta  # delta * sigma_beta * beta_ss
        r = self._Xt_kappa - comp[:, None] * (state.omega.T @ self.XV)
        mean = np.linalg.solve(Q, r[:, :, None])[:, :, 0]
        chol = np.linalg.cholesky(Q)
        z = state.rng.standard_normal((self.J, self.p1, 1))
        noise = np.linalg.solve(np.swapaxes(chol, 1, 2), z)[:, :, 0]
        state.alpha = mean + noise
        return state.alpha

    def update_beta_ss(self, state, evidence=None):
        G, H = self._evidence(state) if evidence is None else evidence
        dsig = state.delta * state.sigma_beta
        Q = self.prec.copy()
        Q.flat[:: self.J + 1] += dsig**2 * H
        chol = chol_precision(Q)
        state.beta_ss = mvn_from_precision(chol, dsig * G, state.rng)
        return state.beta_ss

    def update_sigma_beta(self, state, evidence=None):
        G, H = self._evidence(state) if evidence is None else evidence
        q = 1.0 / state.tau2 + state.delta * state.beta_ss**2 * H
        loc = state.delta * state.beta_ss * G / q
        state.sigma_beta = truncnorm_nonneg(loc, 1.0 / np.sqrt(q), state.rng)
        return state.sigma_beta

    def update_delta(self, state, evidence=None):
        G, H = self._evidence(state) if evidence is None else evidence
        sb = state.sigma_beta * state.beta_ss
        logits = self.logit_pi + sb * G - 0.5 * sb**2 * H
        state.delta = (state.rng.random(self.J) < expit(logits)).astype(np.float64)
        return state.delta

    def update_variances(self, state):
        h = self.hyper
        ssq = np.sum(state.alpha**2, axis=0)
        prec_a = state.rng.gamma(h.a_alpha + 0.5 * self.J, 1.0 / (h.b_alpha + 0.5 * ssq))
        state.sigma_alpha2 = 1.0 / prec_a
        prec_t = state.rng.gamma(0.5 * (h.k + 1.0), 2.0 / (h.k + state.sigma_beta**2))
        state.tau2 = 1.0 / prec_t
        return state.sigma_alpha2, state.tau2

    def sweep(self, state):
        """One full fixed-order scan over all blocks."""
        self.update_omega(state)
        self.update_alpha(state)
        evidence = self._evidence(state)
        self.update_beta_ss(state, evidence)
        self.update_sigma_beta(state, evidence)
        self.update_delta(state, evidence)
        self.update_variances(state)
        state.iteration += 1
        return state

    # -- chain execution -----------------------------------------------------

    def run(self, schedule, seed, progress=None):
        """Run one chain and return its thinned post-burn-in draws."""
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        state = self.init_state(rng)
        t_count = schedule.n_draws
        beta = np.empty((t_count, self.J))
        delta = np.empty((t_count, self.J), dtype=np.uint8)
        alpha = np.empty((t_count, self.J, self.p1))
        deviance = np.empty(t_count)
        stored = 0
        for it in range(1, schedule.iters + 1):
            self.sweep(state)
            if progress is not None and it % progress[0] == 0:
                progress[1](it, schedule.iters)
            if it > schedule.burn_in and (it - schedule.burn_in) % schedule.thin == 0:
                if stored < t_count:
                    dev = self.deviance(state)
                    if not np.isfinite(dev):
                        raise RuntimeError(
                            f"non-finite deviance at iteration {it}; "
                            f"max |beta|={np.abs(state.beta).max():.3e}, "
                            f"max |alpha|={np.abs(state.alpha).max():.3e}"
                        )
                    beta[stored] = state.beta
                    delta[stored] = state.delta.astype(np.uint8)
                    alpha[stored] = state.alpha
                    deviance[stored] = dev
                    stored += 1
        return DrawStore(
            beta=beta,
            delta=delta,
            alpha=alpha,
            deviance=deviance,
            seed=seed,
            schedule=schedule,
            hyper=self.hyper,
            epsilon=self.corr.epsilon,
            ae_vocabulary=list(self.cells.ae_vocabulary),
        )


def chain_seed(base_seed, chain, context=()):
    """Stable integer seed for (base, context..., chain)."""
    ss = np.random.SeedSequence([int(base_seed), *map(int, context), int(chain)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_chains(cells, corr, hyper, schedule, base_seed, chains=3, context=(), progress=None):
    """Run independent chains sequentially; seeds derive from ``base_seed``."""
    sampler = GibbsSampler(cells, corr, hyper)
    stores = []
    for c in range(chains):
        stores.append(sampler.run(schedule, chain_seed(base_seed, c, context), progress))
    return stores


# -- persistence --------------------------------------------------------------


def save_draws(stores, draws_path, manifest_path=None, manifest_extra=None):
    """Write chains to a columnar binary file (+ JSON manifest).

    The binary file is numpy's zipped column container written through a
    file handle so the exact path is honored.
    """
    arrays = {"n_chains": np.array(len(stores))}
    for i, st in enumerate(stores):
        arrays[f"beta_{i}"] = st.beta
        arrays[f"delta_{i}"] = st.delta
        arrays[f"alpha_{i}"] = st.alpha
        arrays[f"deviance_{i}"] = st.deviance
    if stores and stores[0].ae_vocabulary is not None:
        arrays["ae_vocabulary"] = np.array(stores[0].ae_vocabulary, dtype=np.str_)
    with open(draws_path, "wb") as fh:
        np.savez(fh, **{k: np.asarray(v) for k, v in arrays.items()})

    if manifest_path is not None:
        first = stores[0]
        manifest = {
            "seeds": [st.seed for st in stores],
            "schedule": {
                "iters": first.schedule.iters,
                "burn_in": first.schedule.burn_in,
                "thin": first.schedule.thin,
            },
            "hyperparams": {
                "a_alpha": first.hyper.a_alpha,
                "b_alpha": first.hyper.b_alpha,
                "k": first.hyper.k,
                "pi": np.asarray(first.hyper.pi).tolist(),
            },
            "epsilon": None if np.isinf(first.epsilon) else first.epsilon,
            "draws_sha256": file_sha256(draws_path),
        }
        if manifest_extra:
            manifest.update(manifest_extra)
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_draws(draws_path):
    """Read chains back as a list of (beta, delta, alpha, deviance) dicts."""
    with open(draws_path, "rb") as fh:
        data = np.load(fh)
        n_chains = int(data["n_chains"])
        vocab = None
        if "ae_vocabulary" in data:
            vocab = [str(t) for t in data["ae_vocabulary"]]
        chains = []
        for i in range(n_chains):
            chains.append(
                {
                    "beta": data[f"beta_{i}"],
                    "delta": data[f"delta_{i}"],
                    "alpha": data[f"alpha_{i}"],
                    "deviance": data[f"deviance_{i}"],
                }
            )
    return chains, vocab
