"""Scikit-learn style estimators over crowd-annotated data.

All estimators take ``fit(X, Y)`` where ``Y`` is an (n_samples,
n_annotators) integer matrix of 0-based labels with -1 marking a missing
annotation (a list of (instance, annotator, label) triples is also
accepted). They expose ``predict`` / ``predict_proba`` / ``score`` and the
usual ``get_params`` round trip, so they compose with model selection
utilities from the wider ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .aggregation import dawid_skene_em, majority_vote
from .core import AnnotationDataset
from .trainer import TrainConfig, run_training, train_on_labels


def check_annotations(Y, n_samples):
    """Validate crowd annotations and return an (n, r) matrix with -1 for
    missing entries. Accepts a dense matrix or (instance, annotator, label)
    triples."""
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise ValueError("annotations must be 2-d: a matrix or triples")
    if Y.shape[0] == n_samples and Y.shape[1] != 3:
        return Y.astype(np.int64)
    if Y.shape[1] == 3:
        triples = Y.astype(np.int64)
        r = int(triples[:, 1].max()) + 1
        mat = np.full((n_samples, r), -1, dtype=np.int64)
        mat[triples[:, 0], triples[:, 1]] = triples[:, 2]
        return mat
    if Y.shape[0] != n_samples:
        raise ValueError(f"annotations have {Y.shape[0]} rows, expected {n_samples}")
    return Y.astype(np.int64)


def _build_dataset(X, Y):
    X = check_array(X, dtype=float)
    mat = check_annotations(Y, X.shape[0])
    num_classes = int(mat.max()) + 1
    return AnnotationDataset.from_matrix(X, mat, num_classes=num_classes)


class _CrowdClassifierBase(BaseEstimator, ClassifierMixin):
    def predict_proba(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=float)
        return self.result_.predict_proba(X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


class RobustCrowdClassifier(_CrowdClassifierBase):
    """Distributionally robust classifier trained from noisy crowd labels.

    Two cross-trained networks build confusion-corrected label posteriors,
    keep only instances passing a likelihood-ratio test, and minimize the
    Wasserstein-dual robust risk on the surviving pseudo-labels with a
    per-epoch closed-form Lagrange multiplier update.

    Parameters mirror ``TrainConfig``; ``epsilon`` must lie in (0, 1/K).
    """

    def __init__(
        self,
        epochs=40,
        warmup_epochs=10,
        lrt_threshold=2.0,
        lam=10.0,
        epsilon=0.05,
        kappa=1.0,
        p=1.0,
        transform="clipped-log",
        arch="mlp",
        hidden=32,
        lr=1e-2,
        optimizer="adam",
        batch_size=128,
        seed=0,
        small_loss_ratio=None,
        smoothing=1.0,
        val_fraction=0.1,
        soft_reference=False,
    ):
        self.epochs = epochs
        self.warmup_epochs = warmup_epochs
        self.lrt_threshold = lrt_threshold
        self.lam = lam
        self.epsilon = epsilon
        self.kappa = kappa
        self.p = p
        self.transform = transform
        self.arch = arch
        self.hidden = hidden
        self.lr = lr
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.seed = seed
        self.small_loss_ratio = small_loss_ratio
        self.smoothing = smoothing
        self.val_fraction = val_fraction
        self.soft_reference = soft_reference

    def _config(self):
        return TrainConfig(
            epochs=self.epochs,
            warmup_epochs=self.warmup_epochs,
            lrt_threshold=self.lrt_threshold,
            lam=self.lam,
            epsilon=self.epsilon,
            kappa=self.kappa,
            p=self.p,
            transform=self.transform,
            arch=self.arch,
            hidden=self.hidden,
            lr=self.lr,
            optimizer=self.optimizer,
            batch_size=self.batch_size,
            seed=self.seed,
            small_loss_ratio=self.small_loss_ratio,
            smoothing=self.smoothing,
            val_fraction=self.val_fraction,
            soft_reference=self.soft_reference,
        )

    def fit(self, X, Y, true_labels=None, test_features=None, test_labels=None):
        dataset = _build_dataset(X, Y)
        if true_labels is not None:
            dataset.true_labels = np.asarray(true_labels, dtype=np.int64)
        self.result_ = run_training(
            dataset, self._config(), test_features=test_features, test_labels=test_labels
        )
        self.classes_ = np.arange(dataset.k)
        self.history_ = self.result_.history
        return self


class MajorityVoteClassifier(_CrowdClassifierBase):
    """Cross-entropy baseline on per-instance majority-vote labels."""

    def __init__(
        self,
        epochs=40,
        warmup_epochs=10,
        arch="mlp",
        hidden=32,
        lr=1e-2,
        optimizer="adam",
        batch_size=128,
        seed=0,
        val_fraction=0.1,
    ):
        self.epochs = epochs
        self.warmup_epochs = warmup_epochs
        self.arch = arch
        self.hidden = hidden
        self.lr = lr
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.seed = seed
        self.val_fraction = val_fraction

    def _config(self):
        return TrainConfig(
            epochs=self.epochs,
            warmup_epochs=self.warmup_epochs,
            arch=self.arch,
            hidden=self.hidden,
            lr=self.lr,
            optimizer=self.optimizer,
            batch_size=self.batch_size,
            seed=self.seed,
            val_fraction=self.val_fraction,
        )

    def _labels(self, dataset):
        return majority_vote(dataset, np.random.default_rng(self.seed + 1))

    def fit(self, X, Y, test_features=None, test_labels=None):
        dataset = _build_dataset(X, Y)
        labels = self._labels(dataset)
        self.result_ = train_on_labels(
            dataset, labels, self._config(),
            test_features=test_features, test_labels=test_labels,
        )
        self.classes_ = np.arange(dataset.k)
        self.history_ = self.result_.history
        return self


class DawidSkeneClassifier(MajorityVoteClassifier):
    """Cross-entropy baseline on labels aggregated by Dawid-Skene EM."""

    def __init__(
        self,
        epochs=40,
        warmup_epochs=10,
        arch="mlp",
        hidden=32,
        lr=1e-2,
        optimizer="adam",
        batch_size=128,
        seed=0,
        val_fraction=0.1,
        em_iters=50,
        em_tol=1e-6,
        em_smoothing=1.0,
    ):
        super().__init__(
            epochs=epochs, warmup_epochs=warmup_epochs, arch=arch, hidden=hidden,
            lr=lr, optimizer=optimizer, batch_size=batch_size, seed=seed,
            val_fraction=val_fraction,
        )
        self.em_iters = em_iters
        self.em_tol = em_tol
        self.em_smoothing = em_smoothing

    def _labels(self, dataset):
        post, _, _ = dawid_skene_em(
            dataset, max_iters=self.em_iters, tol=self.em_tol,
            smoothing=self.em_smoothing, rng=self.seed + 1,
        )
        return np.argmax(post, axis=1)
