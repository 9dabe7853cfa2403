"""Self-check suites behind the ``oracle-check`` CLI subcommand.

Each check pits a closed-form routine against an independent brute-force
route: the per-point dual against greedy mass transport on the
total-variation ball, the binary action against a 2-d (output, multiplier)
grid, the multi-class action against exhaustive support enumeration, and
the batch risk against a fine multiplier grid.
"""

from __future__ import annotations

import numpy as np

from .actions import binary_optimal_action, multiclass_optimal_action
from .core import RobustLossSpec, get_transform
from .dual import dual_minimum, empirical_robust_risk, tv_worst_case


def random_distribution(rng, k):
    raw = rng.dirichlet(np.ones(k))
    return raw / raw.sum()


def binary_objective(spec, p0, p1, psi, gamma):
    """Literal two-term objective for a binary output psi = P(class 1)."""
    t = spec.transform
    move = gamma * spec.move_cost()
    term0 = np.maximum(t.value(1.0 - psi), t.value(psi) - move)
    term1 = np.maximum(t.value(1.0 - psi) - move, t.value(psi))
    return gamma * spec.epsilon**spec.p + p0 * term0 + p1 * term1


def check_duality(trials=1000, seed=20_240_601):
    """Strong duality: dual minimum equals the TV primal value (p=1)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 7))
        transform = get_transform(rng.choice(["linear", "clipped-log"]))
        spec = RobustLossSpec(
            transform=transform, p=1.0, kappa=float(rng.uniform(0.5, 2.0)),
            epsilon=float(rng.uniform(0.01, 2.0)),
        )
        pred = random_distribution(rng, k)
        posterior = random_distribution(rng, k)
        dual = dual_minimum(spec, pred, posterior).value
        primal = tv_worst_case(spec, pred, posterior)
        worst = max(worst, abs(dual - primal))
    return worst <= 1e-8, f"max |dual - primal| = {worst:.3e} over {trials} draws"


def check_binary_action(trials=500, seed=7, transform_name="linear", step=1e-3):
    """Closed-form binary action does not exceed the 2-d grid minimum.

    The grid covers (psi, gamma) in [0, 1] x [0, 2] at the given step with
    p = kappa = 1; only the posterior/epsilon combination varies per trial,
    so the two per-label max surfaces are precomputed.
    """
    rng = np.random.default_rng(seed)
    transform = get_transform(transform_name)
    psis = np.arange(0.0, 1.0 + step / 2, step)
    gammas = np.arange(0.0, 2.0 + step / 2, step)
    t_psi = transform.value(psis)[:, None]
    t_flip = transform.value(1.0 - psis)[:, None]
    surface0 = np.maximum(t_flip, t_psi - gammas[None, :])
    surface1 = np.maximum(t_flip - gammas[None, :], t_psi)

    worst = -np.inf
    for _ in range(trials):
        spec = RobustLossSpec(
            transform=transform, p=1.0, kappa=1.0,
            epsilon=float(rng.uniform(0.01, 0.6)),
        )
        p1 = float(rng.uniform(0.0, 1.0))
        p0 = 1.0 - p1
        grid = p0 * surface0 + p1 * surface1
        grid += spec.epsilon * gammas[None, :]
        result = binary_optimal_action(spec, [p0, p1])
        value = binary_objective(spec, p0, p1, result.prob_one, result.gamma_star)
        worst = max(worst, float(value - grid.min()))
    return worst <= 1e-3, f"max closed-form excess over grid = {worst:.3e}"


def support_oracle_value(posterior, budget, support_size, support_mass):
    """Objective of the uniform-on-support action, minimized over gamma."""
    k = posterior.size
    if support_size == k:
        return 1.0 - 1.0 / k
    return min(1.0, 1.0 + (budget - support_mass) / support_size)


def multiclass_objective(spec, posterior, probs):
    """Literal multi-class objective minimized over candidate multipliers."""
    losses = spec.losses(probs)
    k = posterior.size
    diffs = (losses[:, None] - losses[None, :]).ravel() / spec.move_cost()
    cands = np.unique(np.concatenate([[0.0], diffs[diffs > 0]]))
    best = np.inf
    for gamma in cands:
        move = gamma * spec.move_cost()
        value = gamma * spec.epsilon**spec.p
        for j in range(k):
            others = np.delete(losses, j) - move
            value += posterior[j] * max(losses[j], others.max(initial=-np.inf))
        best = min(best, value)
    return float(best)


def check_multiclass_action(trials=500, seed=11):
    """Closed-form multi-class action matches support enumeration."""
    from itertools import combinations

    rng = np.random.default_rng(seed)
    worst = -np.inf
    mismatched = 0
    for _ in range(trials):
        k = int(rng.integers(2, 7))
        spec = RobustLossSpec(
            transform=get_transform("linear"), p=1.0, kappa=1.0,
            epsilon=float(rng.uniform(0.01, 0.8)),
        )
        posterior = random_distribution(rng, k)
        budget = spec.ambiguity_budget()

        values = []
        for size in range(1, k + 1):
            for support in combinations(range(k), size):
                mass = posterior[list(support)].sum()
                values.append(
                    (support_oracle_value(posterior, budget, size, mass), size, support)
                )
        values.sort(key=lambda v: (v[0], v[1]))
        best_value, best_size, _ = values[0]
        runner_value = values[1][0] if len(values) > 1 else np.inf

        result = multiclass_optimal_action(spec, posterior)
        value = multiclass_objective(spec, posterior, result.probs)
        worst = max(worst, abs(value - best_value))
        if runner_value - best_value > 1e-6 and result.support != best_size:
            mismatched += 1
    passed = worst <= 1e-9 and mismatched == 0
    return passed, f"max |objective gap| = {worst:.3e}, support mismatches = {mismatched}"


def grid_scan_risk(spec, preds, posteriors, step=1e-5):
    """Multiplier-grid scan of the literal batch objective; returns
    (minimum value, argmin gamma)."""
    preds = np.atleast_2d(preds)
    posteriors = np.atleast_2d(posteriors)
    losses = spec.losses(preds)
    own = losses
    spread = float((losses.max(axis=1) - losses.min(axis=1)).max())
    gammas = np.arange(0.0, spread / spec.move_cost() + 10 * step, step)

    n, k = losses.shape
    maxother = np.empty_like(losses)
    for j in range(k):
        maxother[:, j] = np.delete(losses, j, axis=1).max(axis=1)

    best_val, best_gamma = np.inf, 0.0
    chunk = 4096
    flat_w = posteriors.ravel()
    own_f = own.ravel()
    other_f = maxother.ravel()
    for start in range(0, gammas.size, chunk):
        g = gammas[start : start + chunk]
        inner = np.maximum(own_f[None, :], other_f[None, :] - g[:, None] * spec.move_cost())
        vals = g * spec.epsilon**spec.p + inner @ flat_w / n
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_gamma = float(g[i])
    return best_val, best_gamma


def check_closed_form_risk(trials=200, seed=13, step=1e-5):
    """Closed-form batch risk and multiplier match the grid scan."""
    rng = np.random.default_rng(seed)
    worst_val, worst_gamma = 0.0, 0.0
    for trial in range(trials):
        n = int(rng.integers(1, 21))
        k = int(rng.integers(2, 6))
        name = "linear" if trial % 2 == 0 else "clipped-log"
        spec = RobustLossSpec(
            transform=get_transform(name), p=1.0, kappa=1.0,
            epsilon=float(rng.uniform(0.01, 1.2)),
        )
        preds = np.vstack([random_distribution(rng, k) for _ in range(n)])
        posts = np.vstack([random_distribution(rng, k) for _ in range(n)])
        res = empirical_robust_risk(spec, preds, posts)
        grid_val, grid_gamma = grid_scan_risk(spec, preds, posts, step=step)
        worst_val = max(worst_val, abs(res.robust_risk - grid_val))
        worst_gamma = max(worst_gamma, abs(res.gamma_star - grid_gamma))
    passed = worst_val <= 1e-4 and worst_gamma <= 1e-4
    return passed, f"max |risk gap| = {worst_val:.3e}, max |gamma gap| = {worst_gamma:.3e}"


def run_all(quick=False):
    scale = 0.1 if quick else 1.0
    suites = [
        ("duality (dual vs TV primal)", lambda: check_duality(trials=int(1000 * scale) or 10)),
        (
            "binary action vs 2-d grid (linear)",
            lambda: check_binary_action(trials=int(500 * scale) or 10, transform_name="linear"),
        ),
        (
            "binary action vs 2-d grid (clipped-log)",
            lambda: check_binary_action(
                trials=int(500 * scale) or 10, transform_name="clipped-log"
            ),
        ),
        (
            "multi-class action vs support enumeration",
            lambda: check_multiclass_action(trials=int(500 * scale) or 10),
        ),
        (
            "closed-form risk vs multiplier grid",
            lambda: check_closed_form_risk(trials=int(200 * scale) or 5),
        ),
    ]
    results = []
    for name, fn in suites:
        passed, detail = fn()
        results.append((name, passed, detail))
    return results
