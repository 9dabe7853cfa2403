"""Annotation aggregation: majority vote, frequency-count confusion
estimation, Bayes true-label posteriors, and Dawid-Skene EM.

Annotator confusions are factorized: annotators are conditionally
independent given the true label, so the likelihood of a joint annotation
vector is the product of per-annotator confusion entries over the observed
labels. All likelihood accumulation happens in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class ConfusionModel:
    """Per-annotator confusion estimates.

    ``matrices`` has shape (r, k, k); row j of annotator r's matrix is the
    distribution of the reported label given true class j.
    """

    matrices: np.ndarray
    smoothing: float

    def __post_init__(self):
        object.__setattr__(self, "matrices", np.asarray(self.matrices, dtype=float))
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("confusion matrices must have shape (r, k, k)")
        rowsums = self.matrices.sum(axis=2)
        if not np.allclose(rowsums, 1.0, atol=1e-9):
            raise ValueError("confusion rows must sum to 1")

    @property
    def r(self):
        return self.matrices.shape[0]

    @property
    def k(self):
        return self.matrices.shape[1]


def majority_vote(dataset, rng):
    """Per-instance plurality label; ties broken uniformly at random.

    ``rng`` is a numpy Generator (or seed) so tie-breaks are reproducible.
    """
    rng = np.random.default_rng(rng)
    counts = np.zeros((dataset.n, dataset.k), dtype=np.int64)
    inst, _, lab = dataset.annotations.T
    np.add.at(counts, (inst, lab), 1)
    top = counts.max(axis=1, keepdims=True)
    # Random tie-break: add seed-driven noise only among tied maxima.
    tie_noise = rng.random(counts.shape)
    masked = np.where(counts == top, tie_noise, -1.0)
    return np.argmax(masked, axis=1).astype(np.int64)


def estimate_confusions(dataset, anchors, smoothing=1.0):
    """Frequency-count confusion estimates from an anchor subset.

    ``anchors`` is a sequence of (instance_index, label) pairs, typically
    the small-loss subset with its majority-vote labels. Counts are
    Laplace-smoothed; a row with no anchor mass and zero smoothing falls
    back to uniform so rows always normalize.
    """
    anchors = list(anchors)
    if not anchors:
        raise ValueError("anchor set is empty")
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    r, k = dataset.r, dataset.k
    anchor_label = -np.ones(dataset.n, dtype=np.int64)
    for idx, lab in anchors:
        anchor_label[idx] = lab

    counts = np.zeros((r, k, k), dtype=float)
    inst, annot, lab = dataset.annotations.T
    keep = anchor_label[inst] >= 0
    np.add.at(counts, (annot[keep], anchor_label[inst[keep]], lab[keep]), 1.0)

    counts += smoothing
    rowsums = counts.sum(axis=2, keepdims=True)
    empty = rowsums[..., 0] == 0.0
    counts[empty] = 1.0
    rowsums = counts.sum(axis=2, keepdims=True)
    return ConfusionModel(matrices=counts / rowsums, smoothing=float(smoothing))


def bayes_posterior(prior, confusions, annotations):
    """Posterior over the true label given one instance's annotations.

    ``annotations`` is a sequence of (annotator_index, label) pairs;
    posterior[j] is proportional to prior[j] times the product of confusion
    entries. Falls back to the prior if every class underflows to zero mass.
    """
    prior = np.asarray(prior, dtype=float)
    log_post = np.log(np.maximum(prior, LOG_FLOOR))
    for annot, lab in annotations:
        if not 0 <= annot < confusions.r:
            raise ValueError(f"annotator index {annot} out of range")
        log_post = log_post + np.log(np.maximum(confusions.matrices[annot, :, lab], LOG_FLOOR))
    log_norm = logsumexp(log_post)
    if not np.isfinite(log_norm):
        return prior.copy()
    post = np.exp(log_post - log_norm)
    return post / post.sum()


def posterior_matrix(priors, confusions, dataset):
    """Vectorized ``bayes_posterior`` for every instance of a dataset.

    ``priors`` is (n, k); returns (n, k) posteriors.
    """
    priors = np.asarray(priors, dtype=float)
    log_post = np.log(np.maximum(priors, LOG_FLOOR))
    inst, annot, lab = dataset.annotations.T
    contrib = np.log(np.maximum(confusions.matrices[annot, :, lab], LOG_FLOOR))
    np.add.at(log_post, inst, contrib)
    log_post -= log_post.max(axis=1, keepdims=True)
    post = np.exp(log_post)
    norm = post.sum(axis=1, keepdims=True)
    underflow = ~np.isfinite(norm[:, 0]) | (norm[:, 0] <= 0.0)
    post = np.where(underflow[:, None], priors, post / np.where(norm > 0, norm, 1.0))
    return post / post.sum(axis=1, keepdims=True)


def observed_log_likelihood(dataset, class_prior, confusions):
    """Marginal log-likelihood of the observed annotations under the
    factorized model; the EM objective."""
    inst, annot, lab = dataset.annotations.T
    log_lik = np.tile(np.log(np.maximum(class_prior, LOG_FLOOR)), (dataset.n, 1))
    contrib = np.log(np.maximum(confusions.matrices[annot, :, lab], LOG_FLOOR))
    np.add.at(log_lik, inst, contrib)
    return float(logsumexp(log_lik, axis=1).sum())


def dawid_skene_em(dataset, max_iters=50, tol=1e-6, smoothing=1.0, rng=0):
    """Dawid-Skene EM over the factorized confusion model.

    Initialized from majority-vote labels; alternates posterior updates with
    smoothed soft-count re-estimation of the class prior and confusions
    until the largest posterior change drops below ``tol``. Returns
    (posteriors, confusions, class_prior).
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = np.random.default_rng(rng)
    n, k, r = dataset.n, dataset.k, dataset.r
    inst, annot, lab = dataset.annotations.T

    mv = majority_vote(dataset, rng)
    post = np.zeros((n, k))
    post[np.arange(n), mv] = 1.0

    confusions = None
    class_prior = None
    for _ in range(max_iters):
        # M-step: smoothed soft counts.
        class_prior = (post.sum(axis=0) + smoothing) / (n + k * smoothing)
        counts = np.full((r, k, k), smoothing, dtype=float)
        np.add.at(counts, (annot, slice(None), lab), post[inst])
        rowsums = counts.sum(axis=2, keepdims=True)
        empty = rowsums[..., 0] == 0.0
        counts[empty] = 1.0
        rowsums = counts.sum(axis=2, keepdims=True)
        confusions = ConfusionModel(matrices=counts / rowsums, smoothing=float(smoothing))

        # E-step.
        new_post = posterior_matrix(np.tile(class_prior, (n, 1)), confusions, dataset)
        delta = np.abs(new_post - post).max()
        post = new_post
        if delta < tol:
            break
    return post, confusions, class_prior
