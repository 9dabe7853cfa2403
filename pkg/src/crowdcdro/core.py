"""Shared domain types: loss transforms, robust-loss configuration,
categorical distributions, and crowd-annotated datasets.

Class labels are 0-based everywhere in memory; file formats use 1-based
labels and the conversion happens at the I/O boundary (see ``io``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Input clipping band of the log transform. Clipping is applied inside the
# transform, never to the classifier output, so probability algebra elsewhere
# (posteriors, pseudo-labels) always sees the unclipped prediction.
CLIP_LO = 0.01
CLIP_HI = 0.99

DIST_ATOL = 1e-9


class LossTransform:
    """Bounded, decreasing map from a predicted probability to a loss value.

    ``deriv`` is the almost-everywhere derivative of the transform as
    implemented (zero on any clipped flat region), which is what gradient
    descent needs. ``deriv_interior`` evaluates the derivative with the
    argument pulled into the strictly-decreasing band, which is what the
    closed-form action thresholds need.
    """

    name: str = "base"
    is_concave: bool = False
    is_convex: bool = False

    def value(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def deriv_interior(self, t):
        return self.deriv(t)

    def __repr__(self):
        return f"{type(self).__name__}()"


class LinearTransform(LossTransform):
    """T(t) = 1 - t. Both convex and concave; loss is one minus the
    probability assigned to the label."""

    name = "linear"
    is_concave = True
    is_convex = True

    def value(self, t):
        return 1.0 - np.asarray(t, dtype=float)

    def deriv(self, t):
        return np.full_like(np.asarray(t, dtype=float), -1.0)


class ClippedLogTransform(LossTransform):
    """T(t) = -log(clip(t, 0.01, 0.99)). Convex; the clipped negative
    log-likelihood used for cross-entropy style training."""

    name = "clipped-log"
    is_concave = False
    is_convex = True

    def value(self, t):
        return -np.log(np.clip(np.asarray(t, dtype=float), CLIP_LO, CLIP_HI))

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= CLIP_LO) & (t <= CLIP_HI)
        out = np.zeros_like(t)
        np.divide(-1.0, t, out=out, where=inside)
        return out

    def deriv_interior(self, t):
        return -1.0 / np.clip(np.asarray(t, dtype=float), CLIP_LO, CLIP_HI)


_TRANSFORMS = {
    "linear": LinearTransform,
    "clipped-log": ClippedLogTransform,
}


def get_transform(name):
    """Resolve a transform by name ("linear" or "clipped-log")."""
    if isinstance(name, LossTransform):
        return name
    try:
        return _TRANSFORMS[name]()
    except KeyError:
        raise ValueError(
            f"unknown transform {name!r}; expected one of {sorted(_TRANSFORMS)}"
        ) from None


@dataclass(frozen=True)
class RobustLossSpec:
    """Robust loss configuration: transform T, Wasserstein order p, label
    move cost kappa, and ambiguity radius epsilon.

    The derived quantity ``ambiguity_budget`` = epsilon**p / kappa**p is the
    radius re-expressed in units of the discrete transport cost; for p=1 it
    equals the total-variation budget of the ambiguity ball.
    """

    transform: LossTransform
    p: float = 1.0
    kappa: float = 1.0
    epsilon: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "transform", get_transform(self.transform))
        if not np.isfinite(self.p) or self.p < 1.0:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not np.isfinite(self.kappa) or self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def ambiguity_budget(self):
        return float(self.epsilon**self.p / self.kappa**self.p)

    def move_cost(self):
        """Transport cost of changing one label: kappa**p."""
        return float(self.kappa**self.p)

    def losses(self, pred):
        """Per-class loss vector T(pred[j]); pred may be (k,) or (n, k)."""
        return self.transform.value(pred)


def loss_value(spec, pred, label):
    """Loss of predicting ``pred`` when the label is ``label``."""
    pred = np.asarray(pred, dtype=float)
    k = pred.shape[-1]
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    return float(spec.transform.value(pred[..., label]))


def check_distribution(probs, k=None, name="distribution"):
    """Validate a categorical distribution and return it as a float array.

    Entries must lie in [0, 1] and sum to 1 within 1e-9.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"{name} must be a 1-d vector over >= 2 classes, got shape {p.shape}")
    if k is not None and p.size != k:
        raise ValueError(f"{name} has {p.size} entries, expected {k}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    if p.min() < -DIST_ATOL or p.max() > 1.0 + DIST_ATOL:
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > DIST_ATOL:
        raise ValueError(f"{name} sums to {p.sum():.12f}, expected 1")
    return np.clip(p, 0.0, 1.0)


@dataclass
class AnnotationDataset:
    """Instances with sparse crowd annotations and optional ground truth.

    ``annotations`` is an (m, 3) integer array of
    (instance_index, annotator_index, label) triples, all 0-based. Ground
    truth, when present, is for simulation and evaluation only.
    """

    features: np.ndarray
    annotations: np.ndarray
    num_classes: int
    num_annotators: int
    true_labels: np.ndarray | None = None
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d (n, d) matrix")
        self.annotations = np.asarray(self.annotations, dtype=np.int64)
        if self.annotations.ndim != 2 or self.annotations.shape[1] != 3:
            raise ValueError("annotations must be an (m, 3) triple array")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.num_annotators < 1:
            raise ValueError("need at least 1 annotator")

        n = self.features.shape[0]
        inst, annot, lab = self.annotations.T
        if self.annotations.shape[0] == 0:
            raise ValueError("dataset has no annotations")
        if inst.min() < 0 or inst.max() >= n:
            raise ValueError("annotation instance index out of range")
        if annot.min() < 0 or annot.max() >= self.num_annotators:
            raise ValueError("annotator index out of range")
        if lab.min() < 0 or lab.max() >= self.num_classes:
            raise ValueError("annotation label out of range")

        pairs = inst * self.num_annotators + annot
        if np.unique(pairs).size != pairs.size:
            raise ValueError("duplicate (instance, annotator) annotation")
        covered = np.zeros(n, dtype=bool)
        covered[inst] = True
        if not covered.all():
            missing = int(np.flatnonzero(~covered)[0])
            raise ValueError(f"instance {missing} has no annotations")

        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if self.true_labels.shape != (n,):
                raise ValueError("true_labels must have one entry per instance")
            if self.true_labels.min() < 0 or self.true_labels.max() >= self.num_classes:
                raise ValueError("true label out of range")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def k(self):
        return self.num_classes

    @property
    def r(self):
        return self.num_annotators

    def annotation_matrix(self):
        """Dense (n, r) view of the annotations with -1 for missing."""
        if self._matrix is None:
            mat = np.full((self.n, self.num_annotators), -1, dtype=np.int64)
            inst, annot, lab = self.annotations.T
            mat[inst, annot] = lab
            self._matrix = mat
        return self._matrix

    @classmethod
    def from_matrix(cls, features, matrix, num_classes, true_labels=None):
        """Build a dataset from an (n, r) matrix with -1 marking missing."""
        matrix = np.asarray(matrix, dtype=np.int64)
        if matrix.ndim != 2:
            raise ValueError("annotation matrix must be 2-d")
        inst, annot = np.nonzero(matrix >= 0)
        triples = np.column_stack([inst, annot, matrix[inst, annot]])
        return cls(
            features=features,
            annotations=triples,
            num_classes=num_classes,
            num_annotators=matrix.shape[1],
            true_labels=true_labels,
        )

    def subset(self, indices):
        """Dataset restricted to ``indices`` (instances reindexed)."""
        indices = np.asarray(indices, dtype=np.int64)
        remap = -np.ones(self.n, dtype=np.int64)
        remap[indices] = np.arange(indices.size)
        keep = remap[self.annotations[:, 0]] >= 0
        triples = self.annotations[keep].copy()
        triples[:, 0] = remap[triples[:, 0]]
        return AnnotationDataset(
            features=self.features[indices],
            annotations=triples,
            num_classes=self.num_classes,
            num_annotators=self.num_annotators,
            true_labels=None if self.true_labels is None else self.true_labels[indices],
        )
