"""Likelihood-ratio-test pseudo-labeling.

An instance receives a pseudo-label only when its top posterior class beats
the runner-up by a ratio of at least the threshold; everything else abstains
and drops out of the robust-risk batch for the epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_distribution

RUNNER_UP_FLOOR = 1e-12


@dataclass(frozen=True)
class PseudoLabelSet:
    """Selected (instance, label, ratio) entries plus the threshold used and
    the fraction of instances that were labeled."""

    entries: tuple
    threshold: float
    coverage: float

    @property
    def indices(self):
        return np.array([e[0] for e in self.entries], dtype=np.int64)

    @property
    def labels(self):
        return np.array([e[1] for e in self.entries], dtype=np.int64)

    def __len__(self):
        return len(self.entries)


def likelihood_ratio_assign(posterior, threshold):
    """LRT assignment for one posterior.

    Returns ``(label, ratio)`` when the argmax class dominates the runner-up
    by at least ``threshold``; returns None on abstention. Exact argmax ties
    abstain (the ratio is 1 < threshold).
    """
    if threshold <= 1.0:
        raise ValueError(f"threshold must be > 1, got {threshold}")
    posterior = check_distribution(posterior, name="posterior")
    order = np.argsort(posterior, kind="stable")
    top, runner = order[-1], order[-2]
    if posterior[top] == posterior[runner]:
        return None
    ratio = float(posterior[top] / max(posterior[runner], RUNNER_UP_FLOOR))
    if ratio >= threshold:
        return int(top), ratio
    return None


def select_pseudo_labels(dataset, posteriors, threshold):
    """Apply the LRT per instance and collect the selected set.

    The selected instances carry point-mass reference distributions in the
    robust risk; abstentions are excluded from that epoch's batch entirely.
    """
    if threshold <= 1.0:
        raise ValueError(f"threshold must be > 1, got {threshold}")
    posteriors = np.asarray(posteriors, dtype=float)
    if posteriors.shape[0] != dataset.n:
        raise ValueError("posteriors not aligned with dataset")
    top2 = np.partition(posteriors, posteriors.shape[1] - 2, axis=1)[:, -2:]
    runner, top = top2[:, 0], top2[:, 1]
    ratios = top / np.maximum(runner, RUNNER_UP_FLOOR)
    selected = (top > runner) & (ratios >= threshold)
    labels = np.argmax(posteriors, axis=1)
    entries = tuple(
        (int(i), int(labels[i]), float(ratios[i])) for i in np.flatnonzero(selected)
    )
    return PseudoLabelSet(
        entries=entries,
        threshold=float(threshold),
        coverage=len(entries) / dataset.n,
    )
