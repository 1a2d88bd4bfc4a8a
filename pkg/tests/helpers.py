"""Shared test machinery: toy datasets, the joint-distribution (Geweke)
harness, and an independent per-term reference sampler used as the oracle
for the independence-limit equivalence check."""

import numpy as np
from scipy import stats
from scipy.special import expit, logsumexp

from bgrass import pg
from bgrass.ingest import StratifiedCells


def make_cells(X, V, n, y, vocab=None):
    X = np.asarray(X, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    n = np.asarray(n, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if vocab is None:
        vocab = [f"ae{j}" for j in range(y.shape[1])]
    labels = [(str(s), int(V[s])) for s in range(X.shape[0])]
    cells = StratifiedCells(
        X=X, V=V, n=n, y=y, ae_vocabulary=list(vocab),
        strata_labels=labels, design_columns=[f"x{i}" for i in range(X.shape[1])],
    )
    cells.validate()
    return cells


def toy_model(j_count=4, rng_seed=0):
    """Small stratified layout: 6 strata, 3 design columns, n_s <= 5."""
    X = np.array(
        [
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
            [1.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
        ]
    )
    V = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    n = np.array([2, 3, 4, 5, 3, 2], dtype=np.int64)
    y = np.zeros((6, j_count), dtype=np.int64)  # placeholder, resimulated
    return make_cells(X, V, n, y)


def state_statistics(state):
    """Tracked joint-test statistics: first/second moments of the blocks."""
    return np.concatenate(
        [
            state.beta_ss,
            state.beta_ss**2,
            state.sigma_beta,
            state.delta,
            state.alpha[:, 0],
            state.alpha[:, 0] ** 2,
        ]
    )


def geweke_zscores(sampler, n_forward, n_sweeps, seed, n_batches=40):
    """z-scores of forward-simulated vs Gibbs-resimulated statistics.

    Forward side: independent prior draws.  Chain side: alternate one full
    Gibbs sweep (given current data) with a fresh outcome draw (given the
    current state).  Correct transition kernels make both sides sample the
    same joint, so every statistic's z-score should look standard normal;
    the chain side's standard error comes from batch means to absorb
    autocorrelation.
    """
    rng_f = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    forward = np.empty((n_forward, len(state_statistics(sampler.prior_state(rng_f)))))
    for i in range(n_forward):
        forward[i] = state_statistics(sampler.prior_state(rng_f))

    rng_c = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    state = sampler.prior_state(rng_c)
    sampler.replace_counts(sampler.simulate_counts(state, rng_c))
    chain = np.empty((n_sweeps, forward.shape[1]))
    for t in range(n_sweeps):
        sampler.sweep(state)
        chain[t] = state_statistics(state)
        sampler.replace_counts(sampler.simulate_counts(state, rng_c))

    mean_f = forward.mean(axis=0)
    se_f = forward.std(axis=0, ddof=1) / np.sqrt(n_forward)
    batches = np.array_split(chain, n_batches, axis=0)
    bmeans = np.array([b.mean(axis=0) for b in batches])
    mean_c = chain.mean(axis=0)
    se_c = bmeans.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return (mean_f - mean_c) / np.sqrt(se_f**2 + se_c**2)


class ReferenceBss:
    """Independent-prior spike-and-slab sampler, written per term.

    Deliberately scalar and formula-explicit (log-sum-exp normalized
    two-point step, scipy truncated normal) so it shares no update code
    with the engine; only the PG primitive is common.
    """

    def __init__(self, cells, hyper):
        self.X = np.asarray(cells.X, dtype=np.float64)
        self.V = np.asarray(cells.V, dtype=np.float64)
        self.n = np.asarray(cells.n, dtype=np.int64)
        self.y = np.asarray(cells.y, dtype=np.float64)
        self.kappa = self.y - 0.5 * self.n[:, None]
        self.J = self.y.shape[1]
        self.p1 = self.X.shape[1]
        self.h = hyper

    def run(self, schedule, seed):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        h = self.h
        pi = float(np.asarray(h.pi).reshape(-1)[0])
        alpha = np.zeros((self.J, self.p1))
        beta_ss = rng.standard_normal(self.J)
        sigma = np.ones(self.J)
        delta = (rng.random(self.J) < pi).astype(float)
        tau2 = np.ones(self.J)
        sig_a2 = np.ones(self.p1)
        out = []
        for it in range(1, schedule.iters + 1):
            for j in range(self.J):
                comp = delta[j] * sigma[j] * beta_ss[j]
                psi = self.X @ alpha[j] + self.V * comp
                omega = pg.sample_pg(self.n, np.abs(psi), rng)

                Q = self.X.T @ (omega[:, None] * self.X) + np.diag(1.0 / sig_a2)
                r = self.X.T @ (self.kappa[:, j] - omega * self.V * comp)
                cov = np.linalg.inv(Q)
                alpha[j] = rng.multivariate_normal(cov @ r, cov, method="cholesky")

                mu = self.X @ alpha[j]
                g = np.sum(self.V * (self.kappa[:, j] - omega * mu))
                hsum = np.sum(omega * self.V**2)

                prec_b = 1.0 + (delta[j] * sigma[j]) ** 2 * hsum
                mean_b = delta[j] * sigma[j] * g / prec_b
                beta_ss[j] = rng.normal(mean_b, 1.0 / np.sqrt(prec_b))

                prec_s = 1.0 / tau2[j] + delta[j] * beta_ss[j] ** 2 * hsum
                mean_s = delta[j] * beta_ss[j] * g / prec_s
                sd_s = 1.0 / np.sqrt(prec_s)
                sigma[j] = stats.truncnorm.rvs(
                    -mean_s / sd_s, np.inf, loc=mean_s, scale=sd_s, random_state=rng
                )

                sb = sigma[j] * beta_ss[j]
                logw = np.array(
                    [np.log(1.0 - pi), np.log(pi) + sb * g - 0.5 * sb**2 * hsum]
                )
                p1_ = np.exp(logw[1] - logsumexp(logw))
                delta[j] = 1.0 if rng.random() < p1_ else 0.0

            ssq = np.sum(alpha**2, axis=0)
            sig_a2 = 1.0 / rng.gamma(h.a_alpha + 0.5 * self.J, 1.0 / (h.b_alpha + 0.5 * ssq))
            tau2 = 1.0 / rng.gamma(0.5 * (h.k + 1.0), 2.0 / (h.k + sigma**2))

            if it > schedule.burn_in and (it - schedule.burn_in) % schedule.thin == 0:
                out.append(delta * sigma * beta_ss)
        return np.array(out)


def simulate_binomial_cells(beta_true, intercepts, n_per_arm, rng):
    """Two-stratum (control/target) binomial dataset for given logORs."""
    j_count = beta_true.size
    p0 = expit(intercepts)
    p1 = expit(intercepts + beta_true)
    y = np.vstack([rng.binomial(n_per_arm, p0), rng.binomial(n_per_arm, p1)])
    return make_cells(
        X=np.ones((2, 1)),
        V=np.array([0.0, 1.0]),
        n=np.array([n_per_arm, n_per_arm]),
        y=y,
    )
