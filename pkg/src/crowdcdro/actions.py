"""Closed-form per-point classifier outputs minimizing the dual robust risk.

For a single reference posterior the robust risk is minimized either by a
hard assignment, the coin-flip output, or (for convex transforms) an
interior stationary point; the multi-class linear-loss case collapses to
spreading mass uniformly over the top posterior classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .core import LinearTransform, check_distribution


class ActionCase(Enum):
    ASSIGN_ZERO = "assign-zero"
    ASSIGN_ONE = "assign-one"
    HALF = "half"
    INTERIOR_LOW = "interior-low"
    INTERIOR_HIGH = "interior-high"


@dataclass(frozen=True)
class BinaryActionResult:
    """Optimal binary output: ``prob_one`` is the probability assigned to
    class 1, ``gamma_star`` the matching optimal multiplier."""

    prob_one: float
    case: ActionCase
    gamma_star: float


@dataclass(frozen=True)
class MultiClassActionResult:
    """Optimal multi-class output under the linear transform: mass 1/support
    on the ``support`` largest posterior classes, zero elsewhere."""

    probs: np.ndarray
    support: int
    order: np.ndarray


def concave_margin(transform):
    """Assignment margin for concave transforms:
    (T(0) - T(1/2)) / (T(0) - T(1)), in (0, 1/2]."""
    if not transform.is_concave:
        raise ValueError(f"transform {transform.name!r} is not concave")
    t0 = float(transform.value(0.0))
    t_half = float(transform.value(0.5))
    t1 = float(transform.value(1.0))
    margin = (t0 - t_half) / (t0 - t1)
    if not 0.0 < margin <= 0.5:
        raise ValueError(f"concave margin {margin} outside (0, 1/2]")
    return margin


def convex_margin(transform):
    """Assignment margin for convex transforms:
    T'(0) / (T'(0) + T'(1)), in [1/2, 1)."""
    if not transform.is_convex:
        raise ValueError(f"transform {transform.name!r} is not convex")
    d0 = float(transform.deriv_interior(0.0))
    d1 = float(transform.deriv_interior(1.0))
    if d0 >= 0.0 or d1 >= 0.0:
        raise ValueError("transform must be strictly decreasing at both endpoints")
    margin = d0 / (d0 + d1)
    if not 0.5 <= margin < 1.0:
        raise ValueError(f"convex margin {margin} outside [1/2, 1)")
    return margin


def _full_assign_gamma(spec):
    """Multiplier paired with a hard assignment: (T(0) - T(1)) / kappa**p."""
    t = spec.transform
    return (float(t.value(0.0)) - float(t.value(1.0))) / spec.move_cost()


def _interior_root(spec, p0, p1, low_side):
    """Stationary point of the assigned-multiplier risk for convex T.

    For the low branch solves (p0 - budget) T'(1-t) = (p1 + budget) T'(t)
    on (0, 1/2); the high branch solves the budget-swapped equation on
    (1/2, 1). The root is unique on its bracket.
    """
    t = spec.transform
    budget = spec.ambiguity_budget()
    if low_side:
        a, b = p0 - budget, p1 + budget
        lo, hi = 1e-9, 0.5 - 1e-9
    else:
        a, b = p0 + budget, p1 - budget
        lo, hi = 0.5 + 1e-9, 1.0 - 1e-9

    def stationarity(x):
        return a * float(t.deriv_interior(1.0 - x)) - b * float(t.deriv_interior(x))

    return float(brentq(stationarity, lo, hi, xtol=1e-10))


def binary_optimal_action(spec, posterior):
    """Closed-form minimizer of the per-point dual robust risk for K=2.

    Uses the concave rule when the transform is concave, otherwise the
    convex rule with its interior branch. The larger posterior class is
    checked first; an exact posterior tie yields the coin-flip output.
    """
    posterior = check_distribution(posterior, k=2, name="posterior")
    p0, p1 = float(posterior[0]), float(posterior[1])
    budget = spec.ambiguity_budget()
    transform = spec.transform

    # (probability, hard output, assignment case, interior case, low side)
    if p0 >= p1:
        branches = [(p0, 0.0, ActionCase.ASSIGN_ZERO, ActionCase.INTERIOR_LOW, True),
                    (p1, 1.0, ActionCase.ASSIGN_ONE, ActionCase.INTERIOR_HIGH, False)]
    else:
        branches = [(p1, 1.0, ActionCase.ASSIGN_ONE, ActionCase.INTERIOR_HIGH, False),
                    (p0, 0.0, ActionCase.ASSIGN_ZERO, ActionCase.INTERIOR_LOW, True)]

    if transform.is_concave:
        margin = concave_margin(spec.transform)
        if p0 == p1:
            return BinaryActionResult(0.5, ActionCase.HALF, 0.0)
        for prob, hard, assign_case, _, _ in branches:
            if prob >= budget + margin:
                return BinaryActionResult(hard, assign_case, _full_assign_gamma(spec))
        return BinaryActionResult(0.5, ActionCase.HALF, 0.0)

    margin = convex_margin(spec.transform)
    if p0 == p1:
        return BinaryActionResult(0.5, ActionCase.HALF, 0.0)
    for prob, hard, assign_case, interior_case, low_side in branches:
        if prob >= budget + margin:
            return BinaryActionResult(hard, assign_case, _full_assign_gamma(spec))
        if budget + 0.5 < prob < budget + margin:
            root = _interior_root(spec, p0, p1, low_side)
            if low_side:
                gamma = (float(transform.value(root)) - float(transform.value(1.0 - root)))
            else:
                gamma = (float(transform.value(1.0 - root)) - float(transform.value(root)))
            return BinaryActionResult(root, interior_case, gamma / spec.move_cost())
    return BinaryActionResult(0.5, ActionCase.HALF, 0.0)


def multiclass_optimal_action(spec, posterior):
    """Closed-form minimizer of the per-point dual robust risk, linear
    transform only.

    Sorts the posterior decreasingly (ties by class index), scores each
    prefix size by its budget-discounted mean, and spreads mass uniformly
    over the best prefix; if no prefix beats 1/K the output is uniform.
    """
    if not isinstance(spec.transform, LinearTransform):
        raise ValueError("multi-class optimal action requires the linear transform")
    posterior = check_distribution(posterior, name="posterior")
    k = posterior.size
    order = np.lexsort((np.arange(k), -posterior))
    sorted_p = posterior[order]
    budget = spec.ambiguity_budget()

    prefix = np.cumsum(sorted_p[: k - 1])
    sizes = np.arange(1, k)
    scores = (prefix - budget) / sizes

    best = int(np.argmax(scores))
    if scores[best] <= 1.0 / k:
        support = k
    else:
        support = int(sizes[best])
    probs = np.zeros(k)
    probs[order[:support]] = 1.0 / support
    return MultiClassActionResult(probs=probs, support=support, order=order)
