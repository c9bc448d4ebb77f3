"""Kalman filter reference implementations.

Four update routes over the same state-space model:

* ``kf_update`` — the general matrix form with an explicit innovation
  covariance solve;
* ``kf_update_scalar`` — the scalar-measurement form, where the gain is a
  plain division;
* ``kf_update_sequential`` — vector measurements with diagonal noise,
  absorbed one scalar row at a time (no matrix inverse anywhere);
* ``dual_kf_step`` — joint estimation of the state and the vectorized
  transition matrix by two interleaved filters.

Covariances are re-symmetrized as (P + P^T)/2 after every operation; the
plain-form update drifts asymmetric in floating point otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .ssm import SystemParams

__all__ = [
    "DualFilterState",
    "FilterOutput",
    "FilterState",
    "dual_kf_run",
    "dual_kf_step",
    "kf_predict",
    "kf_run",
    "kf_update",
    "kf_update_scalar",
    "kf_update_sequential",
    "predict_observation",
]

COND_LIMIT = 1e12
_DENOM_FLOOR = 1e-14


def _sym(P: np.ndarray) -> np.ndarray:
    return (P + P.T) / 2.0


@dataclass(frozen=True)
class FilterState:
    """Filter mean and covariance at time ``t``; ``is_posterior`` tags
    whether the measurement at ``t`` has been absorbed."""

    x_hat: np.ndarray
    P: np.ndarray
    t: int = 0
    is_posterior: bool = True

    @property
    def n(self) -> int:
        return self.x_hat.shape[0]

    @classmethod
    def initial(cls, n: int, x0=None, P0=None) -> "FilterState":
        """Default initial condition: zero mean, identity covariance."""
        x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(n)
        P0 = np.eye(n) if P0 is None else np.asarray(P0, dtype=np.float64)
        return cls(x_hat=x0, P=P0, t=0, is_posterior=True)


@dataclass(frozen=True)
class DualFilterState:
    """State filter plus the running estimate of the transition matrix,
    kept as the row-major vectorization ``f_hat`` with covariance ``P_f``."""

    state: FilterState
    f_hat: np.ndarray      # (n*n,)
    P_f: np.ndarray        # (n*n, n*n)

    @property
    def F_hat(self) -> np.ndarray:
        n = self.state.n
        return self.f_hat.reshape(n, n)

    @classmethod
    def initial(cls, n: int) -> "DualFilterState":
        """Identity transition prior: f = vec(I), P_f = I."""
        return cls(state=FilterState.initial(n),
                   f_hat=np.eye(n).reshape(-1), P_f=np.eye(n * n))


@dataclass(frozen=True)
class FilterOutput:
    """A full forward pass: posterior means/covariances for t = 0..N and
    the one-step observation predictions ``y_pred[t-1] = H_t x_prior_t``."""

    x_filt: np.ndarray     # (N+1, n)
    P_filt: np.ndarray     # (N+1, n, n)
    y_pred: np.ndarray     # (N, m)

    @property
    def N(self) -> int:
        return self.y_pred.shape[0]


def kf_predict(s: FilterState, F: np.ndarray, Q: np.ndarray,
               B: np.ndarray | None = None, u=None) -> FilterState:
    """Time update: mean through the dynamics, covariance F P F^T + Q."""
    F = np.asarray(F, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    n = s.n
    if F.shape != (n, n):
        raise ConfigurationError(f"F must be {n}x{n}, got {F.shape}")
    if Q.shape != (n, n):
        raise ConfigurationError(f"Q must be {n}x{n}, got {Q.shape}")
    x = F @ s.x_hat
    if B is not None:
        B = np.asarray(B, dtype=np.float64)
        if B.shape != (n, n):
            raise ConfigurationError(f"B must be {n}x{n}, got {B.shape}")
        x = x + B @ np.asarray(u, dtype=np.float64).reshape(n)
    P = _sym(F @ s.P @ F.T + Q)
    return FilterState(x_hat=x, P=P, t=s.t + 1, is_posterior=False)


def kf_update(s: FilterState, H: np.ndarray, R: np.ndarray, y) -> FilterState:
    """Measurement update in matrix form.

    Raises :class:`NumericalError` when the innovation covariance is too
    ill-conditioned to invert (condition number >= 1e12).
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(H.shape[0])
    m, n = H.shape
    if n != s.n:
        raise ConfigurationError(f"H must have {s.n} columns, got {n}")
    if R.shape != (m, m):
        raise ConfigurationError(f"R must be {m}x{m}, got {R.shape}")

    S = H @ s.P @ H.T + R
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise NumericalError(
            f"innovation covariance is ill-conditioned (cond ~ {cond:.3e})")
    # K = P H^T S^{-1}; with S symmetric, K^T = S^{-1} H P.
    K = np.linalg.solve(S, H @ s.P).T
    innovation = y - H @ s.x_hat
    x = s.x_hat + K @ innovation
    P = _sym((np.eye(s.n) - K @ H) @ s.P)
    return FilterState(x_hat=x, P=P, t=s.t, is_posterior=True)


def kf_update_scalar(s: FilterState, h: np.ndarray, sigma2: float, y: float) -> FilterState:
    """Measurement update for a single scalar measurement row ``h``.

    Algebraically identical to :func:`kf_update` with m = 1, but the gain
    is computed by scalar division instead of a matrix solve.
    """
    h = np.asarray(h, dtype=np.float64).reshape(s.n)
    Ph = s.P @ h
    denom = float(h @ Ph) + float(sigma2)
    if denom <= _DENOM_FLOOR:
        raise NumericalError(
            f"scalar innovation variance {denom:.3e} is not positive; "
            "the filter state is corrupted or sigma2 is not positive")
    K = Ph / denom
    innovation = float(y) - float(h @ s.x_hat)
    x = s.x_hat + K * innovation
    P = _sym(s.P - np.outer(K, h @ s.P))
    return FilterState(x_hat=x, P=P, t=s.t, is_posterior=True)


def kf_update_sequential(s: FilterState, H: np.ndarray, R: np.ndarray, y) -> FilterState:
    """Vector measurement with diagonal noise, absorbed row by row.

    Each row j is a scalar update with variance R[j, j]; the result after
    the last row is the full posterior, matching the joint matrix update.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    m = H.shape[0]
    y = np.asarray(y, dtype=np.float64).reshape(m)
    if R.shape != (m, m):
        raise ConfigurationError(f"R must be {m}x{m}, got {R.shape}")
    if np.max(np.abs(R - np.diag(np.diagonal(R)))) > 0:
        raise ConfigurationError("sequential update requires a diagonal R")
    if np.min(np.diagonal(R)) <= 0:
        raise ConfigurationError("sequential update requires positive R entries")
    for j in range(m):
        s = kf_update_scalar(s, H[j], R[j, j], y[j])
    return s


def predict_observation(x_hat: np.ndarray, F: np.ndarray, H_next: np.ndarray,
                        B: np.ndarray | None = None, u=None) -> np.ndarray:
    """One-step observation prediction ``H_next (F x_hat (+ B u))``."""
    x = np.asarray(F) @ np.asarray(x_hat)
    if B is not None:
        x = x + np.asarray(B) @ np.asarray(u).reshape(x.shape)
    H_next = np.atleast_2d(np.asarray(H_next, dtype=np.float64))
    if H_next.shape[1] != x.shape[0]:
        raise ConfigurationError(
            f"H_next must have {x.shape[0]} columns, got {H_next.shape}")
    return H_next @ x


def kf_run(params: SystemParams, y_seq, x0_hat=None, P0=None,
           update: str = "auto") -> FilterOutput:
    """Full forward pass over ``y_seq`` alternating predict and update.

    ``update`` selects the measurement-update route: ``"matrix"``,
    ``"scalar"`` (m = 1 only), ``"sequential"``, or ``"auto"`` (scalar when
    m = 1, matrix otherwise). The one-step prediction for step t is made at
    the prior, before y_t is absorbed.
    """
    y_seq = np.asarray(y_seq, dtype=np.float64).reshape(-1, params.m)
    N = y_seq.shape[0]
    if N > params.N:
        raise ConfigurationError(
            f"y_seq has {N} steps but the system only defines {params.N}")
    if update == "auto":
        update = "scalar" if params.m == 1 else "matrix"
    if update == "scalar" and params.m != 1:
        raise ConfigurationError("scalar updates require m = 1")

    s = FilterState.initial(params.n, x0_hat, P0)
    x_filt = np.empty((N + 1, params.n))
    P_filt = np.empty((N + 1, params.n, params.n))
    y_pred = np.empty((N, params.m))
    x_filt[0], P_filt[0] = s.x_hat, s.P

    for t in range(N):
        u = params.u_seq[t] if params.u_seq is not None else None
        s = kf_predict(s, params.F, params.Q, params.B, u)
        H_t = params.H_seq[t]
        y_pred[t] = H_t @ s.x_hat
        if update == "scalar":
            s = kf_update_scalar(s, H_t[0], params.R[0, 0], y_seq[t, 0])
        elif update == "sequential":
            s = kf_update_sequential(s, H_t, params.R, y_seq[t])
        else:
            s = kf_update(s, H_t, params.R, y_seq[t])
        x_filt[t + 1], P_filt[t + 1] = s.x_hat, s.P

    return FilterOutput(x_filt=x_filt, P_filt=P_filt, y_pred=y_pred)


def transition_regressor(x_prev: np.ndarray) -> np.ndarray:
    """The n x n^2 block matrix with ``x_prev^T`` on each block row, so that
    ``transition_regressor(x) @ vec(F) == F @ x`` under row-major vec."""
    x_prev = np.asarray(x_prev, dtype=np.float64).reshape(-1)
    return np.kron(np.eye(x_prev.shape[0]), x_prev[None, :])


def dual_kf_step(s: DualFilterState, h: np.ndarray, sigma2: float,
                 Q: np.ndarray, y: float) -> DualFilterState:
    """One scalar-measurement step of the joint state/transition filter.

    The state filter runs a plain predict/update with the current estimate
    ``F_hat = unvec(f_hat)``. The transition filter then treats the same
    measurement as ``y = (h X) f + noise`` where ``X`` is built from the
    state posterior of the *previous* step, the measurement map is
    ``H_f = h X``, and the noise variance is ``h Q h^T + sigma2``. Both
    updates share the innovation ``y - h x_prior``, which the two
    measurement models agree on exactly.
    """
    n = s.state.n
    h = np.asarray(h, dtype=np.float64).reshape(n)
    Q = np.asarray(Q, dtype=np.float64)
    x_prev = s.state.x_hat

    F_hat = s.F_hat
    prior = kf_predict(s.state, F_hat, Q)
    innovation = float(y) - float(h @ prior.x_hat)
    post = kf_update_scalar(prior, h, sigma2, y)

    X = transition_regressor(x_prev)
    H_f = h @ X                                # (n^2,)
    R_f = float(h @ Q @ h) + float(sigma2)
    PfHf = s.P_f @ H_f
    denom = float(H_f @ PfHf) + R_f
    if denom <= _DENOM_FLOOR:
        raise NumericalError(
            f"transition-filter innovation variance {denom:.3e} is not positive")
    K_f = PfHf / denom
    f_hat = s.f_hat + K_f * innovation
    P_f = _sym(s.P_f - np.outer(K_f, H_f @ s.P_f))

    return DualFilterState(state=post, f_hat=f_hat, P_f=P_f)


def dual_kf_run(Q: np.ndarray, sigma2: float, h_seq: np.ndarray, y_seq,
                init: DualFilterState | None = None):
    """Forward pass of the joint filter over scalar measurements.

    Returns ``(states, y_pred)`` where ``states[t]`` is the
    :class:`DualFilterState` after absorbing t measurements (``states[0]``
    is the initial condition) and ``y_pred[t-1] = h_t F_hat_{t-1} x_hat_{t-1}``
    is the one-step observation prediction.
    """
    h_seq = np.asarray(h_seq, dtype=np.float64)
    if h_seq.ndim == 3:       # (N, 1, n) measurement-matrix layout
        h_seq = h_seq[:, 0, :]
    y_seq = np.asarray(y_seq, dtype=np.float64).reshape(-1)
    N, n = h_seq.shape
    s = DualFilterState.initial(n) if init is None else init
    states = [s]
    y_pred = np.empty(N)
    for t in range(N):
        y_pred[t] = h_seq[t] @ (s.F_hat @ s.state.x_hat)
        s = dual_kf_step(s, h_seq[t], sigma2, Q, y_seq[t])
        states.append(s)
    return states, y_pred
