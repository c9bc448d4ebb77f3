"""Classical static-state estimators used as comparison algorithms.

These treat the measurements ``y_i = h_i x + noise`` as a regression on a
fixed unknown vector, ignoring any state dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError

__all__ = ["RegressionProblem", "sgd_estimate", "ols_estimate", "ridge_estimate"]

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class RegressionProblem:
    """Stacked measurement rows ``H_bar`` (N x n) and outcomes ``Y`` (N,)."""

    H_bar: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H_bar, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64).reshape(-1)
        if H.ndim != 2:
            raise ConfigurationError(f"H_bar must be 2-D, got shape {H.shape}")
        if H.shape[0] != Y.shape[0]:
            raise ConfigurationError(
                f"H_bar has {H.shape[0]} rows but Y has {Y.shape[0]} entries")
        object.__setattr__(self, "H_bar", H)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.H_bar.shape[1]


def sgd_estimate(p: RegressionProblem, alpha: float, passes: int = 1,
                 grad_tol: float = 0.0) -> np.ndarray:
    """Stochastic gradient descent on the squared residuals, from zero.

    Sweeps the measurements in presentation order, applying
    ``x <- x - 2 alpha h^T (h x - y)`` per measurement, for a fixed number
    of passes. ``grad_tol > 0`` adds an early stop when every per-step
    gradient in a pass stays below the threshold.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if passes < 1:
        raise ValueError(f"passes must be >= 1, got {passes}")
    x = np.zeros(p.n)
    for _ in range(passes):
        max_grad = 0.0
        for h, y in zip(p.H_bar, p.Y):
            g = 2.0 * (h @ x - y) * h
            x = x - alpha * g
            max_grad = max(max_grad, float(np.max(np.abs(g), initial=0.0)))
        if grad_tol > 0 and max_grad < grad_tol:
            break
    return x


def _gram_cond(H: np.ndarray) -> float:
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s[-1] == 0 or H.shape[0] < H.shape[1]:
        return np.inf
    return float((s[0] / s[-1]) ** 2)


def ols_estimate(p: RegressionProblem) -> np.ndarray:
    """Least-squares solution via a stable factorization (not the normal
    equations). Raises :class:`NumericalError` on rank deficiency."""
    cond = _gram_cond(p.H_bar)
    if not cond < _COND_LIMIT:
        raise NumericalError(
            f"normal-equations matrix is rank deficient or near singular "
            f"(cond ~ {cond:.3e})")
    x, *_ = np.linalg.lstsq(p.H_bar, p.Y, rcond=None)
    return x


def ridge_estimate(p: RegressionProblem, lam: float) -> np.ndarray:
    """Regularized least squares, solved through the augmented system
    ``[H_bar; sqrt(lam) I] x ~= [Y; 0]`` for stability."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if lam == 0:
        return ols_estimate(p)
    n = p.n
    A = np.vstack([p.H_bar, np.sqrt(lam) * np.eye(n)])
    b = np.concatenate([p.Y, np.zeros(n)])
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    return x
