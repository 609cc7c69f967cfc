"""Hierarchical recombination of GP experts.

A tree of arbitrary depth whose leaves are exact GP experts over data
subsets and whose interior nodes are stateless Gaussian recombiners.  The
training objective is the sum of the leaf log-marginal likelihoods, which
by construction does not depend on the interior structure; predictions
multiply the leaf Gaussians together, and because the product of Gaussian
products equals the product of all factors, the predictive moments are
also independent of depth (up to floating-point reassociation).

The combination rule for child Gaussians (mu_k, s2_k) is the
precision-weighted product

    s2* = (sum_k 1/s2_k)^-1,     mu* = s2* * sum_k mu_k / s2_k,

equivalently a weighted mean with weights w_k = (1/s2_k) / sum_j (1/s2_j).

Leaf sums are always accumulated in canonical (depth-first) leaf order,
so the objective is bitwise reproducible for any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expert
from .errors import ConfigError, DimensionError, TaskError
from .executor import Executor
from .expert import Dataset, ExpertState, GaussianPrediction
from .kernel import Hyperparameters
from .partition import PartitionPlan

__all__ = [
    "HgpTree",
    "CombinedPrediction",
    "TARGET_LATENT",
    "TARGET_NOISY",
    "build_tree",
    "hgp_lml",
    "hgp_lml_gradient",
    "objective_eval",
    "combine_gaussians",
    "hgp_predict",
    "batch_predict",
]

TARGET_LATENT = "latent_f"
TARGET_NOISY = "noisy_y"

# Where observation noise enters a noisy-target prediction: once at the
# root (default), or on every leaf variance before combination (which
# shrinks the combined noise by the number of experts).
NOISE_AT_ROOT = "root"
NOISE_PER_LEAF = "per_leaf"


@dataclass(frozen=True)
class CombinedPrediction:
    """Moments of the product of the leaf Gaussians, plus the leaf weights."""

    mean: float
    variance: float
    weights: np.ndarray

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class HgpTree:
    """Fitted hierarchy: leaf experts in canonical order plus the shape.

    Interior nodes hold no state; ``branching`` only dictates how
    predictions are recombined and how work is grouped for scheduling.
    """

    branching: tuple
    leaves: tuple
    plan: PartitionPlan
    hp: Hyperparameters

    def __post_init__(self):
        branching = tuple(int(b) for b in self.branching)
        if any(b < 1 for b in branching):
            raise ConfigError(f"branching factors must be >= 1, got {branching}")
        object.__setattr__(self, "branching", branching)
        object.__setattr__(self, "leaves", tuple(self.leaves))
        if math.prod(branching) != len(self.leaves):
            raise ConfigError(
                f"branching product {math.prod(branching)} does not match "
                f"{len(self.leaves)} leaves"
            )

    @property
    def num_leaves(self) -> int:
        return len(self.leaves)


def _check_branching(branching, num_subsets: int) -> tuple:
    branching = tuple(int(b) for b in branching)
    if any(b < 1 for b in branching):
        raise ConfigError(f"branching factors must be >= 1, got {branching}")
    if math.prod(branching) != num_subsets:
        raise ConfigError(
            f"branching product {math.prod(branching)} != experts {num_subsets}"
        )
    return branching


# ---------------------------------------------------------------------------
# leaf tasks (top-level functions so they cross process boundaries)
# ---------------------------------------------------------------------------


def _fit_leaf_task(Xs, ys, indices, hp):
    L, alpha, jitter = expert._fit_arrays(Xs, ys, hp)
    return ExpertState(indices=indices, chol=L, alpha=alpha, hp=hp, jitter=jitter)


def _objective_leaf_task(Xs, ys, log_theta):
    """Fit one leaf at the given log-parameters; return (lml, gradient).

    Fused so that optimizer evaluations ship only subset data out and two
    scalars-worth of result back, never the factorization.
    """
    return _gradient_leaf_task(Xs, ys, Hyperparameters.from_log(log_theta))


def _gradient_leaf_task(Xs, ys, hp):
    # trial hyperparameters may be extreme; breakdown is detected from the
    # resulting non-finite values rather than warned about
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        L, alpha, _ = expert._fit_arrays(Xs, ys, hp)
        lml = expert._lml_value(L, alpha, ys)
        grad = expert._lml_gradient_arrays(Xs, L, alpha, hp)
    return lml, grad


def _predict_leaf_task(Xs, ys, hp, X_star):
    """Refit one leaf in the worker and predict the whole query batch.

    Refitting is deterministic, so the moments are bitwise identical to
    predicting from a cached state, while only the small subset data and
    2M result floats cross the process boundary.
    """
    L, alpha, _ = expert._fit_arrays(Xs, ys, hp)
    return expert._predict_arrays(Xs, L, alpha, hp, X_star)


# ---------------------------------------------------------------------------
# construction and training quantities
# ---------------------------------------------------------------------------


def _run_leaf_tasks(fn, args, executor):
    """Serial or pooled leaf sweep; failures carry the leaf index either way."""
    if executor is not None:
        return executor.starmap(fn, args)
    results = []
    for index, a in enumerate(args):
        try:
            results.append(fn(*a))
        except Exception as exc:
            raise TaskError(index, exc) from exc
    return results


def build_tree(
    data: Dataset,
    plan: PartitionPlan,
    branching,
    hp: Hyperparameters,
    executor: Executor | None = None,
) -> HgpTree:
    """Fit every leaf expert (in parallel when an executor is given)."""
    branching = _check_branching(branching, plan.num_experts)
    args = [
        (data.X[idx], data.y[idx], idx, hp) for idx in plan.subsets
    ]
    leaves = _run_leaf_tasks(_fit_leaf_task, args, executor)
    return HgpTree(branching=branching, leaves=tuple(leaves), plan=plan, hp=hp)


def hgp_lml(tree: HgpTree, data: Dataset) -> float:
    """Sum of leaf log-marginal likelihoods, in canonical leaf order.

    The value depends only on the leaf sequence, never on ``branching``;
    the fixed summation order makes it bitwise reproducible.
    """
    total = 0.0
    for state in tree.leaves:
        total += expert.log_marginal_likelihood(state, data)
    return total


def hgp_lml_gradient(
    tree: HgpTree, data: Dataset, executor: Executor | None = None
) -> np.ndarray:
    """Sum of per-leaf LML gradients (log-parameter coordinates)."""
    args = [(data.X[idx], data.y[idx], tree.hp) for idx in tree.plan.subsets]
    parts = _run_leaf_tasks(_gradient_leaf_task, args, executor)
    total = np.zeros(tree.hp.num_params)
    for _, grad in parts:
        total += grad
    return total


def objective_eval(
    data: Dataset,
    plan: PartitionPlan,
    log_theta: np.ndarray,
    executor: Executor | None = None,
):
    """One training-objective evaluation: refit all leaves, return (lml, grad).

    This is the quantity an optimizer iterates on; no state is retained.
    """
    args = [(data.X[idx], data.y[idx], log_theta) for idx in plan.subsets]
    parts = _run_leaf_tasks(_objective_leaf_task, args, executor)
    lml = 0.0
    grad = np.zeros(np.asarray(log_theta).shape[0])
    for leaf_lml, leaf_grad in parts:
        lml += leaf_lml
        grad += leaf_grad
    return lml, grad


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def combine_gaussians(children) -> CombinedPrediction:
    """Product of child Gaussians: precisions add, means precision-average.

    Associative: combining pre-combined groups gives the same moments as
    combining all children at once.
    """
    children = list(children)
    if not children:
        raise ValueError("cannot combine an empty list of Gaussians")
    means = np.array([g.mean for g in children])
    variances = np.array([g.variance for g in children])
    if np.any(variances <= 0):
        raise ValueError("all child variances must be positive")
    precisions = 1.0 / variances
    total_precision = precisions.sum()
    variance = 1.0 / total_precision
    mean = variance * np.sum(means * precisions)
    return CombinedPrediction(
        mean=float(mean),
        variance=float(variance),
        weights=precisions / total_precision,
    )


def _combine_through_tree(means: np.ndarray, variances: np.ndarray, branching):
    """Bottom-up combination of (c, M) leaf moments through the tree levels."""
    m, v = means, variances
    for b in reversed(branching):
        groups = m.shape[0] // b
        prec = 1.0 / v.reshape(groups, b, -1)
        total = prec.sum(axis=1)
        m = (m.reshape(groups, b, -1) * prec).sum(axis=1) / total
        v = 1.0 / total
    return m[0], v[0]


def _leaf_moments(tree, data, X_star, executor):
    if executor is None:
        parts = [
            expert._predict_arrays(data.X[s.indices], s.chol, s.alpha, s.hp, X_star)
            for s in tree.leaves
        ]
    else:
        args = [
            (data.X[state.indices], data.y[state.indices], tree.hp, X_star)
            for state in tree.leaves
        ]
        parts = executor.starmap(_predict_leaf_task, args)
    means = np.stack([p[0] for p in parts])
    variances = np.stack([p[1] for p in parts])
    return means, variances  # (c, M) each


def _validate_target(target: str) -> None:
    if target not in (TARGET_LATENT, TARGET_NOISY):
        raise ValueError(
            f"target must be {TARGET_LATENT!r} or {TARGET_NOISY!r}, got {target!r}"
        )


def _combined_predictions(tree, means, variances, target, noise_mode):
    """Combine (c, M) leaf moments into M CombinedPrediction objects."""
    if target == TARGET_NOISY and noise_mode == NOISE_PER_LEAF:
        variances = variances + tree.hp.sigma_eps**2
    mean, variance = _combine_through_tree(means, variances, tree.branching)
    if target == TARGET_NOISY and noise_mode == NOISE_AT_ROOT:
        variance = variance + tree.hp.sigma_eps**2
    precisions = 1.0 / variances
    weights = precisions / precisions.sum(axis=0)
    return [
        CombinedPrediction(float(mean[j]), float(variance[j]), weights[:, j])
        for j in range(mean.shape[0])
    ]


def hgp_predict(
    tree: HgpTree,
    data: Dataset,
    x_star: np.ndarray,
    target: str = TARGET_NOISY,
    executor: Executor | None = None,
    noise_mode: str = NOISE_AT_ROOT,
) -> CombinedPrediction:
    """Predict at one input by recombining all leaf predictions bottom-up.

    For a noisy target, sigma_eps^2 enters the variance exactly once at
    the root (``noise_mode=NOISE_PER_LEAF`` instead adds it to every leaf
    before combination, dividing the noise floor by the expert count).
    """
    _validate_target(target)
    x = np.asarray(x_star, dtype=np.float64).ravel()
    if x.shape[0] != data.dim:
        raise DimensionError(f"x_star has dimension {x.shape[0]}, expected {data.dim}")
    means, variances = _leaf_moments(tree, data, x[None, :], executor)
    return _combined_predictions(tree, means, variances, target, noise_mode)[0]


def batch_predict(
    tree: HgpTree,
    data: Dataset,
    X_star: np.ndarray,
    target: str = TARGET_NOISY,
    executor: Executor | None = None,
    noise_mode: str = NOISE_AT_ROOT,
) -> list:
    """Elementwise :func:`hgp_predict` over M rows, parallelized per leaf.

    Results are returned in input order and are identical for serial and
    parallel execution.
    """
    _validate_target(target)
    Xq = np.asarray(X_star, dtype=np.float64)
    if Xq.size == 0:
        return []
    Xq = np.atleast_2d(Xq)
    if Xq.shape[1] != data.dim:
        raise DimensionError(f"X_star has dimension {Xq.shape[1]}, expected {data.dim}")
    means, variances = _leaf_moments(tree, data, Xq, executor)
    return _combined_predictions(tree, means, variances, target, noise_mode)
