"""Squared-exponential kernel with per-dimension lengthscales (ARD).

The kernel is

    k(x, x') = sigma_f^2 * exp(-1/2 * sum_d (x_d - x'_d)^2 / l_d^2)

parameterised by a signal standard deviation ``sigma_f``, one lengthscale
``l_d`` per input dimension, and an observation-noise standard deviation
``sigma_eps`` (the noise term ``sigma_eps^2 * I`` is added by callers, not
here, so the same functions serve for cross-covariances).

All derivatives are taken with respect to the *natural logs* of the
hyperparameters, in the fixed order

    [log sigma_f, log l_1, ..., log l_D, log sigma_eps]

so that downstream optimization is unconstrained.  This ordering is the
single convention used everywhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionError, NumericalError

__all__ = [
    "Hyperparameters",
    "kernel_eval",
    "kernel_matrix",
    "kernel_matrix_gradients",
    "kernel_vector",
    "kernel_cross",
]


@dataclass(frozen=True)
class Hyperparameters:
    """Strictly positive kernel and noise parameters shared by all experts.

    Attributes
    ----------
    sigma_f : signal standard deviation (amplitude).
    lengthscales : array of D per-dimension lengthscales, same units as
        the inputs.
    sigma_eps : observation-noise standard deviation, same units as the
        targets.
    """

    sigma_f: float
    lengthscales: np.ndarray
    sigma_eps: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=np.float64)).copy()
        if ls.ndim != 1:
            raise DimensionError(f"lengthscales must be a vector, got shape {ls.shape}")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "sigma_f", float(self.sigma_f))
        object.__setattr__(self, "sigma_eps", float(self.sigma_eps))
        if not (self.sigma_f > 0 and self.sigma_eps > 0 and np.all(ls > 0)):
            raise ValueError(
                "hyperparameters must be strictly positive, got "
                f"sigma_f={self.sigma_f}, lengthscales={ls}, sigma_eps={self.sigma_eps}"
            )
        # the model works with variances, so the squares must be representable
        squares = np.square(np.array([self.sigma_f, self.sigma_eps]))
        if not (np.all(np.isfinite(squares)) and np.all(np.isfinite(ls))):
            raise ValueError(
                "hyperparameters overflow double precision: "
                f"sigma_f={self.sigma_f}, sigma_eps={self.sigma_eps}"
            )

    @property
    def input_dim(self) -> int:
        return self.lengthscales.shape[0]

    @property
    def num_params(self) -> int:
        return self.input_dim + 2

    def to_log(self) -> np.ndarray:
        """Log-parameter vector [log sigma_f, log l_1..l_D, log sigma_eps]."""
        return np.concatenate(
            ([np.log(self.sigma_f)], np.log(self.lengthscales), [np.log(self.sigma_eps)])
        )

    @classmethod
    def from_log(cls, values: np.ndarray) -> "Hyperparameters":
        """Inverse of :meth:`to_log` (componentwise exp).

        Overflow or underflow of the exponentials is a numerical failure
        (the log-parameters themselves are legal optimizer coordinates).
        """
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] < 3:
            raise DimensionError(
                f"log-parameter vector must have length D+2 >= 3, got shape {v.shape}"
            )
        with np.errstate(over="ignore", under="ignore"):
            sigma_f, lengthscales, sigma_eps = np.exp(v[0]), np.exp(v[1:-1]), np.exp(v[-1])
        try:
            return cls(sigma_f, lengthscales, sigma_eps)
        except ValueError as exc:
            raise NumericalError(
                f"log-parameters {v} map outside double precision: {exc}"
            ) from exc

    @classmethod
    def isotropic(cls, sigma_f: float, lengthscale: float, dim: int, sigma_eps: float) -> "Hyperparameters":
        """Convenience constructor tying all D lengthscales to one value."""
        return cls(sigma_f, np.full(dim, float(lengthscale)), sigma_eps)


def _check_dim(name: str, got: int, expected: int) -> None:
    if got != expected:
        raise DimensionError(f"{name} has dimension {got}, expected {expected}")


def kernel_eval(x_i: np.ndarray, x_j: np.ndarray, hp: Hyperparameters) -> float:
    """Evaluate k(x_i, x_j).  Symmetric in its arguments, in (0, sigma_f^2]."""
    a = np.asarray(x_i, dtype=np.float64).ravel()
    b = np.asarray(x_j, dtype=np.float64).ravel()
    if a.shape[0] != b.shape[0]:
        raise DimensionError(
            f"x_i has dimension {a.shape[0]}, x_j has dimension {b.shape[0]}"
        )
    _check_dim("input", a.shape[0], hp.input_dim)
    z = (a - b) / hp.lengthscales
    return float(hp.sigma_f**2 * np.exp(-0.5 * np.dot(z, z)))


def kernel_matrix(X: np.ndarray, hp: Hyperparameters) -> np.ndarray:
    """N x N kernel matrix of all pairs of rows of X (noise-free).

    Exactly symmetric with sigma_f^2 on the diagonal; the pairwise squared
    distances are accumulated per dimension on lengthscale-scaled
    coordinates, which keeps them finite for extreme lengthscales.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim("X columns", X.shape[1], hp.input_dim)
    Z = X / hp.lengthscales
    sq = cdist(Z, Z, metric="sqeuclidean")
    return hp.sigma_f**2 * np.exp(-0.5 * sq)


def kernel_matrix_gradients(X: np.ndarray, hp: Hyperparameters) -> np.ndarray:
    """Derivatives of K + sigma_eps^2*I w.r.t. each log-hyperparameter.

    Returns an array of shape (D+2, N, N):

    * d/d(log sigma_f)   = 2*K
    * d/d(log l_d)       = K_ij * (x_id - x_jd)^2 / l_d^2
    * d/d(log sigma_eps) = 2*sigma_eps^2 * I
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim("X columns", X.shape[1], hp.input_dim)
    n, d = X.shape
    K = kernel_matrix(X, hp)
    grads = np.empty((d + 2, n, n))
    grads[0] = 2.0 * K
    for j in range(d):
        diff = X[:, j, None] - X[None, :, j]
        grads[1 + j] = K * (diff * diff) / hp.lengthscales[j] ** 2
    grads[-1] = 2.0 * hp.sigma_eps**2 * np.eye(n)
    return grads


def kernel_vector(x_star: np.ndarray, X: np.ndarray, hp: Hyperparameters) -> np.ndarray:
    """Cross-covariances k(x_star, x_i) for every row x_i of X."""
    x = np.asarray(x_star, dtype=np.float64).ravel()
    _check_dim("x_star", x.shape[0], hp.input_dim)
    return kernel_cross(x[None, :], X, hp)[0]


def kernel_cross(X_star: np.ndarray, X: np.ndarray, hp: Hyperparameters) -> np.ndarray:
    """M x N cross-kernel matrix between query rows and training rows."""
    X_star = np.atleast_2d(np.asarray(X_star, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim("X_star columns", X_star.shape[1], hp.input_dim)
    _check_dim("X columns", X.shape[1], hp.input_dim)
    sq = cdist(X_star / hp.lengthscales, X / hp.lengthscales, metric="sqeuclidean")
    return hp.sigma_f**2 * np.exp(-0.5 * sq)
