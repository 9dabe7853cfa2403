"""End-to-end training loop: warm-up on majority-vote labels, small-loss
anchor selection, confusion estimation, then per-epoch posterior updates,
likelihood-ratio pseudo-labeling, cross-trained robust updates of two
classifiers, and a damped one-step multiplier update per classifier.

The two classifiers serve as priors for each other: each epoch builds both
pseudo-label sets from the epoch-start models, then each classifier trains
against its peer's set, so the two lanes are symmetric and swapping their
seeds swaps their trajectories exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import estimate_confusions, majority_vote, posterior_matrix
from .core import ClippedLogTransform, RobustLossSpec, get_transform
from .dual import empirical_robust_risk, gamma_one_step
from .nets import (
    Optimizer,
    SoftmaxNet,
    nominal_batch_loss_grad,
    onehot,
    robust_batch_loss_grad,
)
from .pseudo import select_pseudo_labels

_CE = ClippedLogTransform()


@dataclass(frozen=True)
class TrainConfig:
    """Configuration for the robust training loop.

    ``epochs`` counts robust epochs after ``warmup_epochs`` warm-up passes.
    ``small_loss_ratio`` overrides the anchor-set fraction; when None it is
    set to one minus the estimated noise rate (the warmed classifiers'
    disagreement rate with the majority-vote labels).
    """

    epochs: int = 40
    warmup_epochs: int = 10
    lrt_threshold: float = 2.0
    lam: float = 10.0
    epsilon: float = 0.05
    kappa: float = 1.0
    p: float = 1.0
    transform: str = "clipped-log"
    arch: str = "mlp"
    hidden: int = 32
    lr: float = 1e-2
    optimizer: str = "adam"
    batch_size: int = 128
    seed: int = 0
    seed_a: int | None = None
    seed_b: int | None = None
    small_loss_ratio: float | None = None
    smoothing: float = 1.0
    val_fraction: float = 0.1
    allow_zero_warmup: bool = False
    soft_reference: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("need at least one robust epoch after warm-up")
        if self.warmup_epochs < 0 or (self.warmup_epochs == 0 and not self.allow_zero_warmup):
            raise ValueError("warmup_epochs must be >= 1 (or set allow_zero_warmup)")
        if self.lrt_threshold <= 1.0:
            raise ValueError("lrt_threshold must be > 1")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.small_loss_ratio is not None and not 0.0 < self.small_loss_ratio <= 1.0:
            raise ValueError("small_loss_ratio must be in (0, 1]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")

    def loss_spec(self):
        return RobustLossSpec(
            transform=get_transform(self.transform),
            p=self.p,
            kappa=self.kappa,
            epsilon=self.epsilon,
        )

    def validate_for(self, num_classes):
        """End-to-end constraint: epsilon must lie in (0, 1/K)."""
        if not 0.0 < self.epsilon < 1.0 / num_classes:
            raise ValueError(
                f"epsilon must lie in (0, 1/{num_classes}) for {num_classes} classes, "
                f"got {self.epsilon}"
            )

    def lane_seeds(self):
        if self.seed_a is not None and self.seed_b is not None:
            return int(self.seed_a), int(self.seed_b)
        children = np.random.SeedSequence(self.seed).spawn(2)
        a = self.seed_a if self.seed_a is not None else children[0].generate_state(1)[0]
        b = self.seed_b if self.seed_b is not None else children[1].generate_state(1)[0]
        return int(a), int(b)


@dataclass
class TrainState:
    model_a: SoftmaxNet
    model_b: SoftmaxNet
    gamma_a: float = 0.0
    gamma_b: float = 0.0
    epoch: int = 0
    history: list = field(default_factory=list)


@dataclass
class TrainResult:
    model_a: SoftmaxNet
    model_b: SoftmaxNet
    history: list
    best_epoch: int
    val_acc: float
    test_acc: float | None
    extras: dict = field(default_factory=dict)

    def predict_proba(self, X):
        return 0.5 * (self.model_a.predict_proba(X) + self.model_b.predict_proba(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def _epoch_passes(net, optimizer, X, refs, rng, batch_size, grad_fn):
    """One shuffled pass over (X, refs); returns the mean batch loss."""
    n = X.shape[0]
    if n == 0:
        return 0.0
    order = rng.permutation(n)
    losses = []
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        loss, grads = grad_fn(net, X[idx], refs[idx])
        optimizer.step(net.params, grads)
        losses.append(loss)
    return float(np.mean(losses))


def warmup(dataset, mv_labels, config, lanes):
    """One warm-up pass for both classifiers: clipped cross-entropy on the
    majority-vote labels."""
    refs = onehot(mv_labels, dataset.k)

    def ce(net, Xb, rb):
        return nominal_batch_loss_grad(net, Xb, rb, _CE)

    losses = []
    for lane in lanes:
        loss = _epoch_passes(
            lane["model"], lane["optimizer"], dataset.features, refs,
            lane["rng"], config.batch_size, ce,
        )
        losses.append(loss)
    return float(np.mean(losses))


def small_loss_anchors(models, dataset, mv_labels, ratio):
    """The ceil(ratio * n) instances with the smallest model-averaged
    clipped cross-entropy against their majority-vote labels, as
    (index, label) pairs. Ties are broken by instance index."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    losses = np.zeros(dataset.n)
    for model in models:
        probs = model.predict_proba(dataset.features)
        losses += _CE.value(probs[np.arange(dataset.n), mv_labels])
    losses /= len(models)
    m = math.ceil(ratio * dataset.n)
    order = np.argsort(losses, kind="stable")[:m]
    order = np.sort(order)
    return [(int(i), int(mv_labels[i])) for i in order]


def estimated_clean_ratio(models, dataset, mv_labels):
    """One minus the estimated noise rate: the models' mean agreement rate
    with the majority-vote labels."""
    agree = [
        float(np.mean(model.predict(dataset.features) == mv_labels)) for model in models
    ]
    ratio = float(np.mean(agree))
    return min(max(ratio, 1.0 / dataset.n), 1.0)


def _reference_rows(posteriors, pseudo, k, soft):
    """Reference distributions for a pseudo-label set: point masses on the
    pseudo-labels, or the soft posterior rows when ``soft`` is set."""
    idx = pseudo.indices
    if soft:
        return idx, posteriors[idx]
    return idx, onehot(pseudo.labels, k)


def _mismatch_rate(spec, preds, labels, gamma):
    """Fraction of points whose adversarial inner-argmax label differs from
    the reference label at the given multiplier."""
    losses = spec.losses(preds)
    k = losses.shape[1]
    penalty = gamma * spec.move_cost() * (1.0 - np.eye(k))
    cand = losses[:, None, :] - penalty[None, :, :]
    active = np.argmax(cand, axis=2)
    worst = active[np.arange(labels.size), labels]
    return float(np.mean(worst != labels))


def train_epoch(state, dataset, confusions, mv_labels, config, lanes):
    """One robust epoch: posterior and pseudo-label updates for both lanes
    from the epoch-start models, cross-training of each model on its peer's
    pseudo set at the lane's current multiplier, then the closed-form
    reference multiplier and its damped one-step update.

    A lane whose peer produced no pseudo-labels falls back to
    majority-vote cross-entropy for this epoch and keeps its multiplier.
    """
    spec = config.loss_spec()
    k = dataset.k

    for lane in lanes:
        probs = lane["model"].predict_proba(dataset.features)
        lane["posteriors"] = posterior_matrix(probs, confusions, dataset)
        lane["pseudo"] = select_pseudo_labels(
            dataset, lane["posteriors"], config.lrt_threshold
        )

    losses = []
    for lane, peer in ((lanes[0], lanes[1]), (lanes[1], lanes[0])):
        pseudo = peer["pseudo"]
        if len(pseudo) == 0:
            refs = onehot(mv_labels, k)

            def ce(net, Xb, rb):
                return nominal_batch_loss_grad(net, Xb, rb, _CE)

            loss = _epoch_passes(
                lane["model"], lane["optimizer"], dataset.features, refs,
                lane["rng"], config.batch_size, ce,
            )
            lane["fallback"] = True
            losses.append(loss)
            continue
        lane["fallback"] = False
        idx, refs = _reference_rows(peer["posteriors"], pseudo, k, config.soft_reference)
        gamma = lane["gamma"]

        def robust(net, Xb, rb, _gamma=gamma):
            return robust_batch_loss_grad(net, Xb, rb, spec, _gamma)

        loss = _epoch_passes(
            lane["model"], lane["optimizer"], dataset.features[idx], refs,
            lane["rng"], config.batch_size, robust,
        )
        losses.append(loss)

        # Multiplier update from the post-update predictions on the
        # reference set: closed-form reference value, then one damped step
        # using the mismatch measured at the multiplier trained with.
        fresh = lane["model"].predict_proba(dataset.features[idx])
        risk = empirical_robust_risk(spec, fresh, refs)
        mismatch = _mismatch_rate(spec, fresh, pseudo.labels, gamma)
        lane["gamma"] = gamma_one_step(
            risk.gamma_star, config.epsilon, config.p, config.kappa, mismatch, config.lam
        )

    state.gamma_a = lanes[0]["gamma"]
    state.gamma_b = lanes[1]["gamma"]
    return float(np.mean(losses))


def _accuracy(models, X, labels):
    probs = sum(model.predict_proba(X) for model in models) / len(models)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def run_training(dataset, config, test_features=None, test_labels=None):
    """Full training run with validation-based model selection.

    Holds out ``config.val_fraction`` of the instances, trains on the rest,
    scores every epoch's ensemble against the held-out majority-vote labels
    and returns the best checkpoint. Test accuracy is tracked when a test
    set with labels is given.
    """
    config.validate_for(dataset.k)
    rng_main = np.random.default_rng(config.seed)

    n = dataset.n
    perm = rng_main.permutation(n)
    n_val = int(round(config.val_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    train_ds = dataset.subset(np.sort(train_idx))
    val_ds = dataset.subset(np.sort(val_idx)) if n_val > 0 else None

    mv_train = majority_vote(train_ds, np.random.default_rng(config.seed + 1))
    mv_val = (
        majority_vote(val_ds, np.random.default_rng(config.seed + 2))
        if val_ds is not None
        else None
    )

    seed_a, seed_b = config.lane_seeds()
    lanes = []
    for lane_seed in (seed_a, seed_b):
        rng = np.random.default_rng(lane_seed)
        model = SoftmaxNet.init(
            config.arch, train_ds.d, train_ds.k, hidden=config.hidden, rng=rng
        )
        optimizer = Optimizer(kind=config.optimizer, lr=config.lr)
        lanes.append({"model": model, "optimizer": optimizer, "rng": rng, "gamma": 0.0})

    state = TrainState(model_a=lanes[0]["model"], model_b=lanes[1]["model"])
    models = [lane["model"] for lane in lanes]

    def epoch_record(epoch, phase, train_loss):
        rec = {
            "epoch": epoch,
            "phase": phase,
            "train_loss": train_loss,
            "gamma_a": state.gamma_a,
            "gamma_b": state.gamma_b,
        }
        if phase == "robust":
            cov = [lane["pseudo"].coverage for lane in lanes]
            rec["pseudo_coverage"] = float(np.mean(cov))
            rec["pseudo_coverage_a"] = cov[0]
            rec["pseudo_coverage_b"] = cov[1]
            rec["fallback"] = any(lane.get("fallback", False) for lane in lanes)
            if train_ds.true_labels is not None:
                precs = []
                for lane in lanes:
                    pseudo = lane["pseudo"]
                    if len(pseudo) > 0:
                        precs.append(
                            float(
                                np.mean(
                                    train_ds.true_labels[pseudo.indices] == pseudo.labels
                                )
                            )
                        )
                if precs:
                    rec["pseudo_precision"] = float(np.mean(precs))
        if val_ds is not None:
            rec["val_acc"] = _accuracy(models, val_ds.features, mv_val)
        if test_features is not None and test_labels is not None:
            rec["test_acc"] = _accuracy(models, test_features, test_labels)
        return rec

    best = {"val_acc": -1.0, "epoch": 0, "params": None, "gammas": (0.0, 0.0)}

    def consider(rec):
        if "val_acc" not in rec:
            best["epoch"] = rec["epoch"]
            return
        if rec["val_acc"] > best["val_acc"]:
            best["val_acc"] = rec["val_acc"]
            best["epoch"] = rec["epoch"]
            best["params"] = [[p.copy() for p in m.params] for m in models]
            best["gammas"] = (state.gamma_a, state.gamma_b)

    epoch = 0
    for _ in range(config.warmup_epochs):
        epoch += 1
        loss = warmup(train_ds, mv_train, config, lanes)
        state.epoch = epoch
        rec = epoch_record(epoch, "warmup", loss)
        state.history.append(rec)
        consider(rec)

    if config.warmup_epochs > 0 or config.small_loss_ratio is not None:
        ratio = (
            config.small_loss_ratio
            if config.small_loss_ratio is not None
            else estimated_clean_ratio(models, train_ds, mv_train)
        )
    else:
        ratio = 1.0
    anchors = small_loss_anchors(models, train_ds, mv_train, ratio)
    confusions = estimate_confusions(train_ds, anchors, smoothing=config.smoothing)

    for _ in range(config.epochs):
        epoch += 1
        loss = train_epoch(state, train_ds, confusions, mv_train, config, lanes)
        state.epoch = epoch
        rec = epoch_record(epoch, "robust", loss)
        state.history.append(rec)
        consider(rec)
        for gamma in (state.gamma_a, state.gamma_b):
            if not np.isfinite(gamma) or gamma < 0:
                raise RuntimeError(f"multiplier left [0, inf): {gamma}")

    if best["params"] is not None:
        for model, params in zip(models, best["params"]):
            model.params = [p.copy() for p in params]
        state.gamma_a, state.gamma_b = best["gammas"]

    test_acc = None
    if test_features is not None and test_labels is not None:
        test_acc = _accuracy(models, test_features, test_labels)
    return TrainResult(
        model_a=lanes[0]["model"],
        model_b=lanes[1]["model"],
        history=state.history,
        best_epoch=best["epoch"],
        val_acc=best["val_acc"] if best["val_acc"] >= 0 else float("nan"),
        test_acc=test_acc,
        extras={
            "anchors": len(anchors),
            "small_loss_ratio": ratio,
            "gamma_a": state.gamma_a,
            "gamma_b": state.gamma_b,
        },
    )


def train_on_labels(dataset, labels, config, test_features=None, test_labels=None):
    """Cross-entropy baseline trainer on fixed aggregated labels.

    Uses the same split, budget (warm-up plus robust epochs), architecture
    and validation-based model selection as the robust loop, with a single
    classifier; ``labels`` are per-instance hard labels for the FULL
    dataset (they are re-indexed through the internal split).
    """
    config.validate_for(dataset.k)
    rng_main = np.random.default_rng(config.seed)
    n = dataset.n
    perm = rng_main.permutation(n)
    n_val = int(round(config.val_fraction * n))
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    train_ds = dataset.subset(train_idx)
    val_ds = dataset.subset(val_idx) if n_val > 0 else None
    labels = np.asarray(labels, dtype=np.int64)
    train_labels = labels[train_idx]

    mv_val = (
        majority_vote(val_ds, np.random.default_rng(config.seed + 2))
        if val_ds is not None
        else None
    )

    seed_a, _ = config.lane_seeds()
    rng = np.random.default_rng(seed_a)
    model = SoftmaxNet.init(config.arch, train_ds.d, train_ds.k, hidden=config.hidden, rng=rng)
    optimizer = Optimizer(kind=config.optimizer, lr=config.lr)
    refs = onehot(train_labels, train_ds.k)

    def ce(net, Xb, rb):
        return nominal_batch_loss_grad(net, Xb, rb, _CE)

    history = []
    best = {"val_acc": -1.0, "epoch": 0, "params": None}
    total = config.warmup_epochs + config.epochs
    for epoch in range(1, total + 1):
        loss = _epoch_passes(
            model, optimizer, train_ds.features, refs, rng, config.batch_size, ce
        )
        rec = {"epoch": epoch, "phase": "baseline", "train_loss": loss}
        if val_ds is not None:
            rec["val_acc"] = _accuracy([model], val_ds.features, mv_val)
        if test_features is not None and test_labels is not None:
            rec["test_acc"] = _accuracy([model], test_features, test_labels)
        history.append(rec)
        if "val_acc" not in rec:
            best["epoch"] = epoch
        elif rec["val_acc"] > best["val_acc"]:
            best.update(
                val_acc=rec["val_acc"], epoch=epoch,
                params=[p.copy() for p in model.params],
            )
    if best["params"] is not None:
        model.params = best["params"]

    test_acc = None
    if test_features is not None and test_labels is not None:
        test_acc = _accuracy([model], test_features, test_labels)
    return TrainResult(
        model_a=model,
        model_b=model,
        history=history,
        best_epoch=best["epoch"],
        val_acc=best["val_acc"] if best["val_acc"] >= 0 else float("nan"),
        test_acc=test_acc,
    )
