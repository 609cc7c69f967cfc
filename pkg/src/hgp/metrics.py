"""Predictive-quality metrics and the training-cost timing harness.

The similarity of two Gaussian predictive distributions is measured by the
likelihood ratio LR = exp(-KL(G1 || G2)), a value in (0, 1] that equals 1
exactly when the distributions coincide.  By convention G1 is the
reference (exact) model and G2 the approximation.  Aggregation over a test
set uses the geometric mean, i.e. exp(-mean KL), so values are comparable
across test-set sizes; the arithmetic mean of the per-point ratios is
reported alongside for comparison.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

__all__ = [
    "MetricReport",
    "kl_gaussian",
    "likelihood_ratio",
    "aggregate_lr",
    "rmse",
    "nlpd",
    "evaluate_predictions",
    "TimingRow",
    "time_lml_gradient",
]


def _moments(g):
    """Accept anything with .mean/.variance attributes or a (mean, var) pair."""
    if hasattr(g, "mean") and hasattr(g, "variance"):
        return float(g.mean), float(g.variance)
    m, v = g
    return float(m), float(v)


def kl_gaussian(g1, g2) -> float:
    """KL(G1 || G2) for univariate Gaussians, in closed form:

    log(s2/s1) + (s1^2 + (m1 - m2)^2) / (2 s2^2) - 1/2
    """
    m1, v1 = _moments(g1)
    m2, v2 = _moments(g2)
    if v1 <= 0 or v2 <= 0:
        raise ValueError(f"variances must be positive, got {v1} and {v2}")
    return 0.5 * math.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / (2.0 * v2) - 0.5


def likelihood_ratio(g1, g2) -> float:
    """exp(-KL(G1 || G2)) in (0, 1]; G1 is the reference distribution."""
    return math.exp(-kl_gaussian(g1, g2))


def aggregate_lr(pairs) -> float:
    """Geometric-mean likelihood ratio over (reference, approximation) pairs.

    Equals exp(-mean KL), the per-point normalization of the product of
    per-sample ratios.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("aggregate_lr needs at least one pair")
    total = 0.0
    for g1, g2 in pairs:
        total += kl_gaussian(g1, g2)
    return math.exp(-total / len(pairs))


def rmse(predictions, targets) -> float:
    """Root-mean-square error of predictive means against targets."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape[0] != t.shape[0]:
        raise DimensionError(
            f"got {p.shape[0]} predictions for {t.shape[0]} targets"
        )
    if p.shape[0] == 0:
        raise ValueError("rmse needs at least one prediction")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def nlpd(predictions, targets) -> float:
    """Mean negative log predictive density under Gaussian predictions.

    Expects noisy-target predictions (variance includes sigma_eps^2).
    """
    targets = np.asarray(targets, dtype=np.float64).ravel()
    preds = list(predictions)
    if len(preds) != targets.shape[0]:
        raise DimensionError(
            f"got {len(preds)} predictions for {targets.shape[0]} targets"
        )
    if not preds:
        raise ValueError("nlpd needs at least one prediction")
    moments = np.array([_moments(g) for g in preds])
    mu, var = moments[:, 0], moments[:, 1]
    if np.any(var <= 0):
        raise ValueError("all predictive variances must be positive")
    dens = 0.5 * np.log(2.0 * math.pi * var) + (targets - mu) ** 2 / (2.0 * var)
    return float(np.mean(dens))


@dataclass
class MetricReport:
    """Bundle of quality metrics for one evaluation run."""

    count: int
    rmse: float
    nlpd: float
    lrs: np.ndarray | None = None
    lr_geometric: float | None = None
    lr_mean: float | None = None

    def rows(self) -> list:
        rows = [("count", self.count), ("rmse", self.rmse), ("nlpd", self.nlpd)]
        if self.lr_geometric is not None:
            rows.append(("likelihood_ratio_geometric", self.lr_geometric))
            rows.append(("likelihood_ratio_mean", self.lr_mean))
        return rows

    def to_csv(self) -> str:
        lines = ["metric,value"]
        lines += [f"{k},{v!r}" for k, v in self.rows()]
        return "\n".join(lines) + "\n"


def evaluate_predictions(predictions, targets, reference=None) -> MetricReport:
    """RMSE + NLPD of ``predictions``; likelihood ratios against an optional
    reference prediction list (reference first, per the LR convention)."""
    preds = list(predictions)
    means = [_moments(g)[0] for g in preds]
    report = MetricReport(
        count=len(preds), rmse=rmse(means, targets), nlpd=nlpd(preds, targets)
    )
    if reference is not None:
        reference = list(reference)
        if len(reference) != len(preds):
            raise DimensionError(
                f"got {len(reference)} reference predictions for {len(preds)} predictions"
            )
        lrs = np.array([likelihood_ratio(r, p) for r, p in zip(reference, preds)])
        report.lrs = lrs
        report.lr_geometric = aggregate_lr(list(zip(reference, preds)))
        report.lr_mean = float(np.mean(lrs))
    return report


@dataclass
class TimingRow:
    """One row of the objective-evaluation scaling table."""

    n: int
    experts: int
    seconds: float
    error: str = ""


def time_lml_gradient(
    sizes,
    leaf_size: int,
    workers: int | None = None,
    repetitions: int = 3,
    dim: int = 2,
    seed: int = 0,
) -> list:
    """Median wall-clock of one full objective evaluation per data size.

    For each N the data is split into ceil(N / leaf_size) random subsets
    and one fused LML + gradient sweep over all leaves is timed
    ``repetitions`` times.  Rows that fail (e.g. out of memory) carry the
    error message and a NaN time; remaining sizes still run.
    """
    from .executor import Executor
    from .expert import Dataset
    from .kernel import Hyperparameters
    from .model import objective_eval
    from .partition import assign_random

    hp = Hyperparameters.isotropic(1.0, 0.3, dim, 0.1)
    log_theta = hp.to_log()
    rows = []
    with Executor(workers=workers) as executor:
        for n in sizes:
            try:
                c = max(1, math.ceil(n / leaf_size))
                rng = np.random.default_rng(seed)
                X = rng.uniform(0.0, 1.0, size=(n, dim))
                y = np.sin(3.0 * X[:, 0]) + 0.1 * rng.standard_normal(n)
                data = Dataset(X, y)
                plan = assign_random(n, c, 1, seed)
                times = []
                for _ in range(repetitions):
                    tic = time.perf_counter()
                    objective_eval(data, plan, log_theta, executor)
                    times.append(time.perf_counter() - tic)
                rows.append(TimingRow(n=int(n), experts=c, seconds=float(np.median(times))))
            except MemoryError as exc:
                rows.append(
                    TimingRow(n=int(n), experts=max(1, math.ceil(n / leaf_size)),
                              seconds=float("nan"), error=f"out of memory: {exc}")
                )
    return rows
