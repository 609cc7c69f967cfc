"""Shared-hyperparameter training by limited-memory quasi-Newton ascent.

The objective is the factorized log-marginal likelihood (the sum over leaf
experts), maximized over the D+2 log-hyperparameters.  Every objective
evaluation refits all leaves at the trial parameters, fanned out through
the executor.  The loop is a standard two-loop-recursion L-BFGS with a
strong Wolfe line search (c1 = 1e-4, c2 = 0.9); trial points at which a
leaf factorization breaks down are treated as +inf and rejected by the
line search.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import ConfigError, NumericalError, TaskError
from .executor import Executor
from .expert import Dataset
from .kernel import Hyperparameters
from .model import HgpTree
from .partition import PartitionPlan

__all__ = ["TrainConfig", "TrainReport", "auto_init", "train"]

REASON_CONVERGED = "converged"
REASON_OBJECTIVE = "objective_converged"
REASON_MAX_ITERATIONS = "max_iterations"
REASON_LINE_SEARCH = "line_search_failed"

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9


@dataclass
class TrainConfig:
    """Stopping rules and memory for the quasi-Newton loop."""

    max_iterations: int = 100
    gradient_tolerance: float = 1e-5  # max-norm of the LML gradient
    objective_tolerance: float = 1e-9  # relative change between iterates
    history_size: int = 10
    init: Hyperparameters | None = None  # None means auto_init(data)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.gradient_tolerance <= 0 or self.objective_tolerance <= 0:
            raise ConfigError("tolerances must be positive")
        if self.history_size < 1:
            raise ConfigError(f"history_size must be >= 1, got {self.history_size}")


@dataclass
class TrainReport:
    """Per-iteration record of the ascent; objective values are LML."""

    iterations: int = 0
    final_objective: float = float("-inf")
    objective_trace: list = field(default_factory=list)
    gradient_norm_trace: list = field(default_factory=list)
    seconds_per_iteration: list = field(default_factory=list)
    termination_reason: str = ""
    evaluations: int = 0

    def log_rows(self) -> list:
        """Iteration log rows as 'iter,objective,gradnorm,seconds' strings."""
        rows = ["iter,objective,gradnorm,seconds"]
        for i, (obj, gn, sec) in enumerate(
            zip(self.objective_trace, self.gradient_norm_trace, self.seconds_per_iteration)
        ):
            rows.append(f"{i},{obj!r},{gn!r},{sec!r}")
        return rows

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.log_rows()) + "\n")

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "termination_reason": self.termination_reason,
            "evaluations": self.evaluations,
        }


def auto_init(data: Dataset) -> Hyperparameters:
    """Data-scaled starting point: sigma_f = std(y), sigma_eps = 0.1 std(y),
    lengthscale = per-dimension input std (1.0 for zero-spread dimensions)."""
    if data.n < 2:
        raise ConfigError("auto initialization needs at least 2 points")
    with np.errstate(over="ignore", invalid="ignore"):
        s = float(np.std(data.y))
        ls = np.std(data.X, axis=0)
    if s == 0.0:
        s = 1.0
    ls[ls == 0.0] = 1.0
    try:
        return Hyperparameters(sigma_f=s, lengthscales=ls, sigma_eps=0.1 * s)
    except ValueError as exc:
        raise NumericalError(
            f"data scale defeats auto initialization (target std {s!r}): {exc}"
        ) from exc


class _Objective:
    """Negated-LML evaluations with a small point cache.

    The line search probes value and gradient separately at the same
    point; caching makes each trial cost one leaf sweep.  Numerical
    breakdowns at trial parameters surface as +inf with a zero gradient,
    which the Wolfe conditions can never accept.
    """

    def __init__(self, data, plan, executor):
        self.data = data
        self.plan = plan
        self.executor = executor
        self.cache = {}
        self.evaluations = 0

    def value_and_grad(self, x: np.ndarray):
        key = x.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        try:
            lml, grad = model.objective_eval(self.data, self.plan, x, self.executor)
            result = (-lml, -grad)
            if not np.isfinite(result[0]) or not np.all(np.isfinite(result[1])):
                result = (np.inf, np.zeros_like(x))
        except NumericalError:
            result = (np.inf, np.zeros_like(x))
        except TaskError as err:
            if isinstance(err.cause, NumericalError):
                result = (np.inf, np.zeros_like(x))
            else:
                raise
        self.evaluations += 1
        if len(self.cache) > 64:
            self.cache.clear()
        self.cache[key] = result
        return result

    def value(self, x):
        return self.value_and_grad(x)[0]

    def grad(self, x):
        return self.value_and_grad(x)[1]


def _two_loop_direction(grad, history):
    """L-BFGS search direction from the curvature pair history."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = history[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def train(
    data: Dataset,
    plan: PartitionPlan,
    branching,
    cfg: TrainConfig | None = None,
    executor: Executor | None = None,
):
    """Maximize the factorized LML; returns (fitted tree, TrainReport).

    The returned tree is refit at the best parameters found.  On a line
    search failure the best-so-far parameters are kept and the report
    says so.
    """
    from scipy.optimize import line_search

    cfg = cfg or TrainConfig()
    hp0 = cfg.init if cfg.init is not None else auto_init(data)
    if hp0.input_dim != data.dim:
        raise ConfigError(
            f"init has {hp0.input_dim} lengthscales, data has dimension {data.dim}"
        )
    objective = _Objective(data, plan, executor)
    report = TrainReport()

    x = hp0.to_log()
    f, g = objective.value_and_grad(x)
    if not np.isfinite(f):
        raise NumericalError(
            "objective is not finite at the initial hyperparameters; "
            "check the data scale or supply an explicit init"
        )
    report.objective_trace.append(-f)
    report.gradient_norm_trace.append(float(np.max(np.abs(g))))
    report.seconds_per_iteration.append(0.0)

    history: deque = deque(maxlen=cfg.history_size)
    reason = REASON_MAX_ITERATIONS
    if np.max(np.abs(g)) <= cfg.gradient_tolerance:
        reason = REASON_CONVERGED
    else:
        import warnings

        for _ in range(cfg.max_iterations):
            tic = time.perf_counter()
            if history:
                direction = _two_loop_direction(g, history)
                if direction @ g >= 0:  # not a descent direction; restart
                    history.clear()
            if not history:
                # steepest descent, scaled so the unit trial step is sane
                direction = -g / max(1.0, float(np.linalg.norm(g)))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                alpha, _, _, f_new, _, _ = line_search(
                    objective.value,
                    objective.grad,
                    x,
                    direction,
                    gfk=g,
                    old_fval=f,
                    c1=WOLFE_C1,
                    c2=WOLFE_C2,
                    maxiter=30,
                )
            if alpha is None:
                reason = REASON_LINE_SEARCH
                break
            x_new = x + alpha * direction
            g_new = objective.grad(x_new)
            if f_new is None:
                f_new = objective.value(x_new)
            s = x_new - x
            y = g_new - g
            sy = s @ y
            if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
                history.append((s, y, 1.0 / sy))
            df = f - f_new
            x, f, g = x_new, f_new, g_new
            report.iterations += 1
            report.objective_trace.append(-f)
            report.gradient_norm_trace.append(float(np.max(np.abs(g))))
            report.seconds_per_iteration.append(time.perf_counter() - tic)
            if np.max(np.abs(g)) <= cfg.gradient_tolerance:
                reason = REASON_CONVERGED
                break
            if abs(df) <= cfg.objective_tolerance * max(abs(f), abs(f - df), 1.0):
                reason = REASON_OBJECTIVE
                break

    report.termination_reason = reason
    report.final_objective = -f
    report.evaluations = objective.evaluations
    hp_final = Hyperparameters.from_log(x)
    tree = model.build_tree(data, plan, branching, hp_final, executor)
    return tree, report
