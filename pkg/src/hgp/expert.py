"""Exact Gaussian process computations on one data subset.

Each expert owns a subset of the training data and performs the full,
dense GP algebra on it: a Cholesky factorization of the noisy kernel
matrix, the log-marginal likelihood and its gradient, and predictive
means/variances.  A single expert over the whole data set *is* the
standard full GP, which makes this module double as the ground-truth path
for small problems.

With the factor L (lower) of K + sigma_eps^2*I and alpha = (K + s^2 I)^-1 y:

    log p(y | X, theta) = -1/2 y^T alpha - sum_i log L_ii - p/2 log(2 pi)
    mean(x*)            = k*^T alpha
    var(x*)             = sigma_f^2 - ||L^-1 k*||^2        (latent f)

The constant term is kept so values are absolute, not merely comparable
up to an offset.  Gradients with respect to the log-hyperparameters use
the standard identity  1/2 tr((alpha alpha^T - (K+s^2 I)^-1) dK~/dtheta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular, LinAlgError

from .errors import CholeskyError, DimensionError
from .kernel import Hyperparameters, kernel_cross, kernel_matrix

__all__ = [
    "Dataset",
    "ExpertState",
    "GaussianPrediction",
    "fit",
    "log_marginal_likelihood",
    "lml_gradient",
    "predict",
    "predict_batch",
]

LOG_2PI = math.log(2.0 * math.pi)

# Jitter escalation: start at 1e-8 * sigma_f^2, multiply by 10 up to
# 1e-2 * sigma_f^2, then give up.
JITTER_START = 1e-8
JITTER_LIMIT = 1e-2

# Predictive variances are clamped to [VARIANCE_FLOOR * sigma_f^2, sigma_f^2]
# so that downstream precision-weighted combination never divides by zero.
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Immutable training corpus: inputs X (N x D) and targets y (N)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=np.float64)))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64).ravel())
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class GaussianPrediction:
    """A univariate Gaussian predictive distribution."""

    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class ExpertState:
    """Cached factorization for one expert, immutable after fitting.

    ``chol`` is the lower-triangular factor of K + sigma_eps^2*I (+ jitter
    if escalation was needed) over the rows selected by ``indices``, and
    ``alpha`` solves (K + sigma_eps^2*I) alpha = y on that subset.
    """

    indices: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    hp: Hyperparameters
    jitter: float = 0.0

    @property
    def p(self) -> int:
        return self.indices.shape[0]


def _fit_arrays(Xs: np.ndarray, ys: np.ndarray, hp: Hyperparameters):
    """Factorize K(Xs) + sigma_eps^2*I and solve for alpha.

    Returns (chol, alpha, jitter).  Escalates diagonal jitter on
    factorization failure; raises CholeskyError when even the largest
    permitted jitter does not help.
    """
    K = kernel_matrix(Xs, hp)
    diag = np.arange(K.shape[0])
    K[diag, diag] += hp.sigma_eps**2
    jitter = 0.0
    factor = JITTER_START
    while True:
        try:
            L = cholesky(K, lower=True, check_finite=False)
            break
        except LinAlgError:
            if factor > JITTER_LIMIT:
                raise CholeskyError(
                    "Cholesky factorization failed for a "
                    f"{K.shape[0]}x{K.shape[0]} kernel matrix even with jitter "
                    f"{jitter:.3e} (= {JITTER_LIMIT:.0e} * sigma_f^2)"
                ) from None
            step = factor * hp.sigma_f**2 - jitter
            K[diag, diag] += step
            jitter = factor * hp.sigma_f**2
            factor *= 10.0
    alpha = cho_solve((L, True), ys, check_finite=False)
    return L, alpha, jitter


def _lml_value(chol: np.ndarray, alpha: np.ndarray, ys: np.ndarray) -> float:
    p = ys.shape[0]
    return float(-0.5 * ys @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * p * LOG_2PI)


def _lml_gradient_arrays(
    Xs: np.ndarray, chol: np.ndarray, alpha: np.ndarray, hp: Hyperparameters
) -> np.ndarray:
    """Gradient of the subset LML w.r.t. the log-hyperparameters.

    Uses A = alpha alpha^T - (K + s^2 I)^-1 and contracts it against each
    derivative matrix without materializing them: for log l_d the
    contraction reduces to two O(p^2) products because the derivative is
    K odot squared-distance along dimension d.
    """
    p = Xs.shape[0]
    Kinv = cho_solve((chol, True), np.eye(p), check_finite=False)
    A = np.outer(alpha, alpha) - Kinv
    K = kernel_matrix(Xs, hp)
    B = A * K
    row = B.sum(axis=1)
    grad = np.empty(hp.num_params)
    grad[0] = row.sum()  # 1/2 tr(A * 2K)
    for d in range(hp.input_dim):
        xd = Xs[:, d]
        grad[1 + d] = (row @ (xd * xd) - xd @ (B @ xd)) / hp.lengthscales[d] ** 2
    grad[-1] = hp.sigma_eps**2 * np.trace(A)
    return grad


def _predict_arrays(
    Xs: np.ndarray,
    chol: np.ndarray,
    alpha: np.ndarray,
    hp: Hyperparameters,
    X_star: np.ndarray,
):
    """Latent means and variances at the query rows (clamped to the floor)."""
    Kc = kernel_cross(Xs, X_star, hp)  # (p, M)
    means = Kc.T @ alpha
    V = solve_triangular(chol, Kc, lower=True, check_finite=False)
    variances = hp.sigma_f**2 - np.einsum("ij,ij->j", V, V)
    np.clip(variances, VARIANCE_FLOOR * hp.sigma_f**2, hp.sigma_f**2, out=variances)
    return means, variances


def fit(data: Dataset, indices, hp: Hyperparameters) -> ExpertState:
    """Fit one expert on the subset of ``data`` selected by ``indices``."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("expert subset must be non-empty")
    if idx.min() < 0 or idx.max() >= data.n:
        raise IndexError(
            f"subset indices out of range [0, {data.n}): min={idx.min()}, max={idx.max()}"
        )
    if data.dim != hp.input_dim:
        raise DimensionError(
            f"data has dimension {data.dim}, hyperparameters expect {hp.input_dim}"
        )
    L, alpha, jitter = _fit_arrays(data.X[idx], data.y[idx], hp)
    idx = idx.copy()
    idx.setflags(write=False)
    return ExpertState(indices=idx, chol=L, alpha=alpha, hp=hp, jitter=jitter)


def log_marginal_likelihood(state: ExpertState, data: Dataset) -> float:
    """Exact subset LML, including the -p/2 log(2 pi) constant."""
    return _lml_value(state.chol, state.alpha, data.y[state.indices])


def lml_gradient(state: ExpertState, data: Dataset) -> np.ndarray:
    """Gradient of the subset LML in log-parameter coordinates (D+2,)."""
    return _lml_gradient_arrays(data.X[state.indices], state.chol, state.alpha, state.hp)


def predict(state: ExpertState, data: Dataset, x_star: np.ndarray) -> GaussianPrediction:
    """Latent-function prediction at one test input.

    The variance excludes observation noise; the hierarchy adds
    sigma_eps^2 exactly once at the root when a noisy prediction is
    requested.
    """
    x = np.asarray(x_star, dtype=np.float64).ravel()
    if x.shape[0] != data.dim:
        raise DimensionError(f"x_star has dimension {x.shape[0]}, expected {data.dim}")
    means, variances = _predict_arrays(
        data.X[state.indices], state.chol, state.alpha, state.hp, x[None, :]
    )
    return GaussianPrediction(float(means[0]), float(variances[0]))


def predict_batch(state: ExpertState, data: Dataset, X_star: np.ndarray):
    """Vectorized :func:`predict` over M query rows; returns (means, variances)."""
    Xq = np.atleast_2d(np.asarray(X_star, dtype=np.float64))
    if Xq.shape[1] != data.dim:
        raise DimensionError(
            f"X_star has dimension {Xq.shape[1]}, expected {data.dim}"
        )
    return _predict_arrays(data.X[state.indices], state.chol, state.alpha, state.hp, Xq)
