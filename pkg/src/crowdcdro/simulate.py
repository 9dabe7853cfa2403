"""Synthetic datasets and instance-dependent noisy annotators.

Features are Gaussian blobs on a regular simplex; each annotator flips the
true label with a probability that scales a target rate by a softplus
feature projection (normalized to mean one over the dataset), so mislabel
rates average to the target while varying across instances. The flipped
label is drawn from the non-true classes with weights given by per-class
projection scores.

Annotator groups follow the three-tier expertise presets: per-annotator
target rates of (.1, .2, .3) for low, (.3, .4, .5) for mid and
(.5, .6, .7) for high noise, with tier counts depending on the pool size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AnnotationDataset

# (low-tier count, mid-tier count, high-tier count) per pool size.
_GROUP_COUNTS = {
    5: (2, 2, 1),
    10: (4, 4, 2),
    30: (11, 11, 8),
    50: (18, 18, 14),
    100: (35, 35, 30),
}

_GROUP_RATES = {
    "idn-low": (0.10, 0.20, 0.30),
    "idn-mid": (0.30, 0.40, 0.50),
    "idn-high": (0.50, 0.60, 0.70),
}


@dataclass(frozen=True)
class AnnotatorSpec:
    """One simulated annotator: a target mislabel rate plus a seed from
    which its feature-projection vectors are derived.

    ``dependence`` scales how strongly the flip probability follows the
    feature projection; 0 gives a constant flip rate equal to the target
    (useful for recovering known confusion matrices).
    """

    target_rate: float
    seed: int
    dependence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.target_rate < 1.0:
            raise ValueError(f"target_rate must be in [0, 1), got {self.target_rate}")
        if self.dependence < 0.0:
            raise ValueError(f"dependence must be >= 0, got {self.dependence}")

    def projections(self, d, k):
        """Rate-modulation vector (d,) and per-class flip vectors (k, d).

        The rate vector is damped so softplus projections of unit-variance
        features stay near their mean and the cap at twice the target rate
        bites only in the tails (keeping realized rates on target); class
        vectors get the wider 1/sqrt(d) scale since they only shape which
        wrong label is drawn.
        """
        rng = np.random.default_rng(self.seed)
        rate_vec = rng.standard_normal(d) / (2.0 * np.sqrt(d))
        class_vecs = rng.standard_normal((k, d)) / np.sqrt(d)
        return rate_vec, class_vecs


def annotator_group(level, pool_size, seed=0):
    """Annotator pool for a preset noise level ("idn-low"/"idn-mid"/
    "idn-high") and pool size in {5, 10, 30, 50, 100}."""
    if level not in _GROUP_RATES:
        raise ValueError(f"unknown level {level!r}; expected one of {sorted(_GROUP_RATES)}")
    if pool_size not in _GROUP_COUNTS:
        raise ValueError(
            f"unsupported pool size {pool_size}; expected one of {sorted(_GROUP_COUNTS)}"
        )
    rates = _GROUP_RATES[level]
    counts = _GROUP_COUNTS[pool_size]
    seeds = np.random.SeedSequence(seed).generate_state(pool_size)
    specs = []
    idx = 0
    for rate, count in zip(rates, counts):
        for _ in range(count):
            specs.append(AnnotatorSpec(target_rate=rate, seed=int(seeds[idx])))
            idx += 1
    return specs


def parse_preset(name):
    """Split a preset name like "idn-mid-r5" into (level, pool_size)."""
    parts = name.lower().rsplit("-r", 1)
    if len(parts) != 2 or parts[0] not in _GROUP_RATES:
        raise ValueError(f"malformed preset {name!r}; expected e.g. 'idn-mid-r5'")
    return parts[0], int(parts[1])


def simplex_means(k, d, separation):
    """k class means in R^d at pairwise distance ``separation`` (regular
    simplex, centered at the origin). Requires d >= k - 1."""
    if d < k - 1:
        raise ValueError(f"need d >= k - 1 to place {k} means, got d={d}")
    verts = np.eye(k) - 1.0 / k
    # Orthonormal basis of the simplex's (k-1)-dim subspace.
    basis, _ = np.linalg.qr(verts.T[:, : k - 1])
    coords = verts @ basis
    coords *= separation / np.sqrt(2.0)
    means = np.zeros((k, d))
    means[:, : k - 1] = coords
    return means


def make_gaussian_dataset(n, d, k, separation, seed):
    """Balanced Gaussian blobs with unit covariance.

    Returns (features, true_labels, means); deterministic per seed, with
    instance order shuffled so classes are interleaved.
    """
    if k < 2 or n < k or d < 2:
        raise ValueError(f"invalid dimensions n={n}, d={d}, k={k}")
    rng = np.random.default_rng(seed)
    means = simplex_means(k, d, separation)
    labels = np.arange(n) % k
    features = means[labels] + rng.standard_normal((n, d))
    order = rng.permutation(n)
    return features[order], labels[order].astype(np.int64), means


def annotate(features, true_labels, annotators, labels_per_instance, seed):
    """Simulate sparse annotations and assemble the dataset.

    Each instance is labeled by ``labels_per_instance`` distinct annotators
    drawn uniformly; annotator r flips the true label of instance i with
    probability clip(target_rate * w_i, 0, min(2 * target_rate, 1)) where
    w_i is the softplus feature projection normalized to mean one over the
    dataset.
    """
    features = np.asarray(features, dtype=float)
    true_labels = np.asarray(true_labels, dtype=np.int64)
    n, d = features.shape
    k = int(true_labels.max()) + 1
    r = len(annotators)
    if not 1 <= labels_per_instance <= r:
        raise ValueError(
            f"labels_per_instance must be in [1, {r}], got {labels_per_instance}"
        )

    rng = np.random.default_rng(seed)
    # Sample annotator subsets first so the flip stream below is stable.
    chosen = np.empty((n, labels_per_instance), dtype=np.int64)
    for i in range(n):
        chosen[i] = rng.choice(r, size=labels_per_instance, replace=False)

    flip_prob = np.empty((n, r))
    class_vecs = []
    for a_idx, spec in enumerate(annotators):
        rate_vec, vecs = spec.projections(d, k)
        raw = np.logaddexp(0.0, features @ rate_vec)  # softplus
        w = raw / raw.mean()
        w = 1.0 + spec.dependence * (w - 1.0)
        cap = min(2.0 * spec.target_rate, 1.0)
        flip_prob[:, a_idx] = np.clip(spec.target_rate * w, 0.0, cap)
        class_vecs.append(vecs)

    triples = []
    for i in range(n):
        for a_idx in chosen[i]:
            label = int(true_labels[i])
            if rng.random() < flip_prob[i, a_idx]:
                scores = np.logaddexp(0.0, class_vecs[a_idx] @ features[i])
                scores[label] = 0.0
                scores /= scores.sum()
                label = int(rng.choice(k, p=scores))
            triples.append((i, int(a_idx), label))

    return AnnotationDataset(
        features=features,
        annotations=np.array(triples, dtype=np.int64),
        num_classes=k,
        num_annotators=r,
        true_labels=true_labels,
    )
