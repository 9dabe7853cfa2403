"""Wasserstein-dual robust loss under the scaled discrete label metric.

Everything here works on a single prediction/reference pair or on aligned
batches of them: the penalized inner supremum over adversarial labels, its
exact minimization over the Lagrange multiplier, a total-variation primal
oracle that certifies strong duality for p=1, the closed-form empirical
robust risk with its optimal multiplier, and the damped one-step multiplier
update used during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_distribution


@dataclass(frozen=True)
class PerPointDualResult:
    """Exact minimum of the per-point dual objective over gamma >= 0.

    ``gamma`` is the smallest minimizer; ``worst_labels[j]`` is the
    adversarial label attaining the inner supremum when the reference label
    is j (ties resolved to the smallest class index).
    """

    gamma: float
    value: float
    worst_labels: np.ndarray


@dataclass(frozen=True)
class EmpiricalRiskResult:
    """Closed-form empirical robust risk over a batch.

    ``gaps_sorted`` holds the n*k loss gaps (worst per-instance loss minus
    the per-class loss) in decreasing order; ``weights_aligned`` holds the
    reference probabilities in the same order. ``cutoff`` is the 1-based
    index into the sorted gaps at which the cumulative weight first covers
    the ambiguity budget (n*k + 1 when the budget exceeds the total weight),
    and ``gamma_star`` is the corresponding optimal multiplier.
    """

    gamma_star: float
    cutoff: int
    robust_risk: float
    nominal_risk: float
    gaps_sorted: np.ndarray
    weights_aligned: np.ndarray


def inner_sup(spec, pred, true_label, gamma):
    """Worst-case penalized loss over adversarial labels.

    Returns ``(value, label)`` with value = max over y' of
    loss(pred, y') - gamma * kappa**p * 1(y' != true_label) and the smallest
    maximizing label.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    pred = np.asarray(pred, dtype=float)
    k = pred.shape[-1]
    if not 0 <= true_label < k:
        raise ValueError(f"label {true_label} out of range for {k} classes")
    losses = spec.losses(pred)
    penalized = losses - gamma * spec.move_cost()
    penalized[true_label] = losses[true_label]
    best = int(np.argmax(penalized))
    return float(penalized[best]), best


def _max_excluding_self(losses):
    """maxother[j] = max over y' != j of losses[y']."""
    order = np.argsort(losses, kind="stable")
    maxother = np.full_like(losses, losses[order[-1]])
    maxother[order[-1]] = losses[order[-2]]
    return maxother


def dual_value(spec, pred, posterior, gamma):
    """Per-point dual objective at a fixed multiplier:
    gamma * epsilon**p + E_posterior[inner_sup]."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    pred = np.asarray(pred, dtype=float)
    posterior = check_distribution(posterior, k=pred.shape[-1], name="posterior")
    losses = spec.losses(pred)
    inner = np.maximum(losses, _max_excluding_self(losses) - gamma * spec.move_cost())
    return float(gamma * spec.epsilon**spec.p + np.dot(posterior, inner))


def _gamma_candidates(spec, losses):
    """Breakpoints of the piecewise-linear dual objective.

    The objective is piecewise linear in gamma with kinks only where two
    penalized losses cross, i.e. at nonnegative pairwise loss differences
    scaled by kappa**-p; {0} union these differences always contains a
    global minimizer.
    """
    diffs = (losses[:, None] - losses[None, :]).ravel() / spec.move_cost()
    cands = np.concatenate([[0.0], diffs[diffs > 0.0]])
    return np.unique(cands)


def dual_minimum(spec, pred, posterior):
    """Exact minimum of the per-point dual objective over gamma >= 0.

    Evaluates the objective at every breakpoint and returns the smallest
    minimizing gamma (candidates are scanned in increasing order).
    """
    pred = np.asarray(pred, dtype=float)
    posterior = check_distribution(posterior, k=pred.shape[-1], name="posterior")
    losses = spec.losses(pred)
    maxother = _max_excluding_self(losses)
    cands = _gamma_candidates(spec, losses)
    inner = np.maximum(losses[None, :], maxother[None, :] - cands[:, None] * spec.move_cost())
    values = cands * spec.epsilon**spec.p + inner @ posterior
    best = int(np.argmin(values))
    best_gamma = float(cands[best])
    worst = np.array(
        [inner_sup(spec, pred, j, best_gamma)[1] for j in range(posterior.size)],
        dtype=np.int64,
    )
    return PerPointDualResult(
        gamma=best_gamma, value=float(values[best]), worst_labels=worst
    )


def tv_worst_case(spec, pred, posterior):
    """Primal oracle: worst-case expected loss over the total-variation ball.

    Under the discrete metric with p=1 the Wasserstein ball of radius
    epsilon is a TV ball of radius min(budget, 1); the worst distribution
    moves as much mass as the budget allows from the lowest-loss classes to
    one highest-loss class, which solves the underlying linear program
    exactly.
    """
    pred = np.asarray(pred, dtype=float)
    posterior = check_distribution(posterior, k=pred.shape[-1], name="posterior")
    losses = spec.losses(pred)
    budget = min(spec.ambiguity_budget(), 1.0)
    target = int(np.argmax(losses))
    value = float(np.dot(posterior, losses))
    remaining = budget
    for j in np.argsort(losses, kind="stable"):
        if j == target or remaining <= 0.0:
            continue
        moved = min(posterior[j], remaining)
        value += moved * (losses[target] - losses[j])
        remaining -= moved
    return value


def empirical_robust_risk(spec, preds, posteriors):
    """Closed-form empirical robust risk and optimal multiplier for a batch.

    ``preds`` and ``posteriors`` are aligned (n, k) arrays (or lists of
    k-vectors). The per-pair loss gaps are sorted in decreasing order with
    ties broken by (instance, class) so the cutoff is deterministic; the
    robust risk is the nominal risk plus the weighted gap mass above the
    cutoff plus the partial term at the cutoff.
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=float))
    if preds.shape != posteriors.shape:
        raise ValueError(
            f"preds shape {preds.shape} != posteriors shape {posteriors.shape}"
        )
    n, k = preds.shape
    if n == 0:
        raise ValueError("empty batch")
    for row in posteriors:
        check_distribution(row, k=k, name="posterior")

    losses = spec.losses(preds)
    gaps = losses.max(axis=1, keepdims=True) - losses
    nominal = float((posteriors * losses).sum() / n)

    # Decreasing gaps; ties broken by instance then class index.
    flat_gaps = gaps.ravel()
    inst_idx, class_idx = np.divmod(np.arange(n * k), k)
    order = np.lexsort((class_idx, inst_idx, -flat_gaps))
    gaps_sorted = flat_gaps[order]
    weights = posteriors.ravel()[order]

    budget = spec.ambiguity_budget()
    cum = np.cumsum(weights) / n
    total = cum[-1]
    if budget >= total:
        cutoff = n * k + 1
        gamma_star = 0.0
        robust = nominal + float(np.dot(weights, gaps_sorted)) / n
    else:
        cutoff = int(np.searchsorted(cum, budget, side="left")) + 1
        alpha_cut = gaps_sorted[cutoff - 1]
        gamma_star = float(alpha_cut / spec.move_cost())
        head = float(np.dot(weights[: cutoff - 1], gaps_sorted[: cutoff - 1])) / n
        covered = float(cum[cutoff - 2]) if cutoff > 1 else 0.0
        robust = nominal + head + float(alpha_cut) * (budget - covered)
    return EmpiricalRiskResult(
        gamma_star=gamma_star,
        cutoff=cutoff,
        robust_risk=float(robust),
        nominal_risk=nominal,
        gaps_sorted=gaps_sorted,
        weights_aligned=weights,
    )


def gamma_one_step(gamma_ref, epsilon, p, kappa, mismatch_rate, lam):
    """Damped one-step multiplier update.

    Minimizes gamma * (epsilon**p - kappa**p * mismatch_rate)
    + lam/2 * (gamma - gamma_ref)**2 over gamma >= 0, where mismatch_rate is
    the fraction of reference points whose adversarial label differs from
    the reference label.
    """
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if not 0.0 <= mismatch_rate <= 1.0:
        raise ValueError(f"mismatch_rate must be in [0, 1], got {mismatch_rate}")
    drift = (epsilon**p - kappa**p * mismatch_rate) / lam
    return max(0.0, gamma_ref - drift)
