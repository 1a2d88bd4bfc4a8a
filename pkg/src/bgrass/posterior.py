"""Posterior summaries and signal-selection rules.

Works on immutable chain draws: per-term summaries and selection
probabilities, split-chain Gelman-Rubin diagnostics, Bayesian-FDR
thresholding, the negative-control adjustment for reporting bias, and
group enrichment scores.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

LOG2 = math.log(2.0)


def pool(stores, key="beta"):
    """Concatenate one field across chains: (sum_T, ...)."""
    arrays = [getattr(st, key) if hasattr(st, key) else st[key] for st in stores]
    return np.concatenate(arrays, axis=0)


@dataclass
class PosteriorSummary:
    ae_vocabulary: list[str]
    beta_mean: np.ndarray
    beta_median: np.ndarray
    beta_lo: np.ndarray  # 2.5%
    beta_hi: np.ndarray  # 97.5%
    delta_hat: np.ndarray
    ncprob: np.ndarray | None = None
    enrichment: dict | None = None  # group id -> {"size", "score", "flag"}
    rhat: np.ndarray | None = None
    rhat_degenerate: np.ndarray | None = None
    flags: dict = field(default_factory=dict)  # rule name -> bool mask

    def write_csv(self, path):
        """Summary table: term, logOR mean [95% CI], probabilities, flags."""
        rules = sorted(self.flags)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["ae", "logor_mean", "logor_median", "ci_lo", "ci_hi", "delta_hat"]
            if self.ncprob is not None:
                header.append("ncprob")
            header += [f"signal_{r}" for r in rules]
            writer.writerow(header)
            for j, term in enumerate(self.ae_vocabulary):
                row = [
                    term,
                    f"{self.beta_mean[j]:.6f}",
                    f"{self.beta_median[j]:.6f}",
                    f"{self.beta_lo[j]:.6f}",
                    f"{self.beta_hi[j]:.6f}",
                    f"{self.delta_hat[j]:.6f}",
                ]
                if self.ncprob is not None:
                    row.append(f"{self.ncprob[j]:.6f}")
                row += [int(self.flags[r][j]) for r in rules]
                writer.writerow(row)


def summarize(stores, ae_vocabulary=None):
    """Pooled posterior summary of the composed logORs and selection draws."""
    beta = pool(stores, "beta")
    delta = pool(stores, "delta")
    if beta.shape[0] < 2:
        raise ValueError("need at least two draws for credible intervals")
    if ae_vocabulary is None:
        first = stores[0]
        ae_vocabulary = getattr(first, "ae_vocabulary", None) or [
            f"ae{j}" for j in range(beta.shape[1])
        ]
    lo, med, hi = np.quantile(beta, [0.025, 0.5, 0.975], axis=0)
    return PosteriorSummary(
        ae_vocabulary=list(ae_vocabulary),
        beta_mean=beta.mean(axis=0),
        beta_median=med,
        beta_lo=lo,
        beta_hi=hi,
        delta_hat=delta.mean(axis=0, dtype=np.float64),
    )


def gelman_rubin(chains):
    """Split-chain potential scale reduction factor per parameter.

    Parameters
    ----------
    chains : sequence of (T, P) arrays
        One array per chain, equal lengths; odd trailing draws are dropped
        when halving.

    Returns
    -------
    rhat : (P,) array
    degenerate : (P,) bool array
        Parameters whose within-chain variance vanished (constant draws);
        their rhat is reported as 1.
    """
    if len(chains) < 1:
        raise ValueError("need at least one chain")
    t_len = min(c.shape[0] for c in chains)
    if t_len < 4:
        raise ValueError("chains too short for a split diagnostic")
    half = t_len // 2
    pieces = []
    for c in chains:
        pieces.append(np.asarray(c[:half], dtype=np.float64))
        pieces.append(np.asarray(c[half : 2 * half], dtype=np.float64))
    stacked = np.stack(pieces)  # (2C, half, P)
    m, n = stacked.shape[0], stacked.shape[1]
    means = stacked.mean(axis=1)
    within = stacked.var(axis=1, ddof=1).mean(axis=0)
    between = n * means.var(axis=0, ddof=1)
    degenerate = within <= 0
    var_hat = (n - 1) / n * within + between / n
    rhat = np.ones_like(var_hat)
    ok = ~degenerate
    # the (n-1)/n deflation can push the ratio below 1 when chains agree
    # (e.g. zero between-variance); that finite-sample artifact is clamped
    rhat[ok] = np.sqrt(np.maximum(var_hat[ok], within[ok]) / within[ok])
    return rhat, degenerate


def fdr_select(probabilities, alpha, effect=None, effect_threshold=LOG2):
    """Bayesian FDR thresholding on posterior selection probabilities.

    Flags the largest prefix of probability-sorted terms whose mean
    complement stays at or below ``alpha``; an optional effect filter
    (estimates > threshold) then prunes the flagged set.

    Returns
    -------
    selected : (J,) bool mask
    cutoff : float or None
        Probability of the last term inside the prefix (None if empty).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    probs = np.asarray(probabilities, dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    cum_fdr = np.cumsum(1.0 - probs[order]) / np.arange(1, probs.size + 1)
    passing = np.flatnonzero(cum_fdr <= alpha)
    selected = np.zeros(probs.size, dtype=bool)
    if passing.size == 0:
        return selected, None
    m = passing.max() + 1
    selected[order[:m]] = True
    cutoff = float(probs[order[m - 1]])
    if effect is not None:
        selected &= np.asarray(effect) > effect_threshold
    return selected, cutoff


def nc_adjust(beta_draws, nc_indices):
    """Selection probabilities against the negative-control empirical null.

    Per stored iteration the control set defines a normal null (mean and
    sample SD of its logOR draws); a term scores when its draw exceeds
    mean + 2 SD.  Control terms are scored like any other.
    """
    nc = np.asarray(sorted(set(int(i) for i in nc_indices)), dtype=np.int64)
    if nc.size < 2:
        raise ValueError("need at least two negative controls")
    if nc.min() < 0 or nc.max() >= beta_draws.shape[1]:
        raise ValueError("negative-control index outside vocabulary")
    null = beta_draws[:, nc]
    mu = null.mean(axis=1)
    sd = null.std(axis=1, ddof=1)
    threshold = mu + 2.0 * sd
    return (beta_draws > threshold[:, None]).mean(axis=0)


def resolve_nc_terms(ae_vocabulary, nc_terms):
    """Map control term names onto vocabulary indices, dropping misses."""
    index = {t: j for j, t in enumerate(ae_vocabulary)}
    found, missing = [], []
    for term in nc_terms:
        if term in index:
            found.append(index[term])
        else:
            missing.append(term)
    if missing:
        warnings.warn(f"negative controls not in vocabulary: {missing}")
    if len(found) < 2:
        raise ValueError("fewer than two usable negative controls")
    return found


def enrichment(delta_draws, groups, min_group_size=20, level=LOG2):
    """Per-group probability that signaled terms concentrate in the group.

    At each stored iteration the terms with delta = 1 are the signaled
    set; the group's 2x2 table (signaled x membership) gets a +0.5
    continuity correction in every cell before its log odds ratio is
    taken.  The score is the fraction of iterations with logOR > level.
    Groups must have more than ``min_group_size`` members and must not
    span the whole vocabulary.

    Returns group id -> {"size", "score"}.
    """
    delta = np.asarray(delta_draws, dtype=np.float64)
    n_draws, j_count = delta.shape
    sig_total = delta.sum(axis=1)
    out = {}
    for gid in sorted(groups):
        members = np.asarray(groups[gid], dtype=np.int64)
        size = members.size
        if size <= min_group_size:
            continue
        if size >= j_count:
            warnings.warn(f"group {gid!r} spans the whole vocabulary; skipped")
            continue
        in_sig = delta[:, members].sum(axis=1)
        a = in_sig + 0.5
        b = sig_total - in_sig + 0.5
        c = size - in_sig + 0.5
        d = (j_count - size) - (sig_total - in_sig) + 0.5
        gamma = np.log(a * d / (b * c))
        out[gid] = {"size": int(size), "score": float((gamma > level).mean())}
    return out


def write_enrichment_csv(path, enrich, flags=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "size", "score", "flag"])
        for gid in sorted(enrich):
            rec = enrich[gid]
            flag = int(flags[gid]) if flags else 0
            writer.writerow([gid, rec["size"], f"{rec['score']:.6f}", flag])
