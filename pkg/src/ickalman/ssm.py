"""Linear state-space model types and trajectory simulation.

The model is

    x_t = F x_{t-1} (+ B u_t) + q_t        q_t ~ N(0, Q)
    y_t = H_t x_t + r_t                    r_t ~ N(0, R), R diagonal

for t = 1..N, with a fixed transition matrix F and per-step measurement
matrices H_t. Array indexing convention: ``x_seq[t]`` is the state at time
t (so ``x_seq[0]`` is the initial state), while ``y_seq[i]``, ``H_seq[i]``,
``u_seq[i]`` and the recorded noise draws all refer to time t = i + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = ["SystemParams", "Trajectory", "simulate"]

_SYM_TOL = 1e-12
_EIG_FLOOR = -1e-10


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class SystemParams:
    """One sampled dynamical system.

    Parameters
    ----------
    n, m : int
        State and measurement dimensions.
    F : (n, n) array
        State transition matrix.
    Q : (n, n) array
        Process noise covariance; symmetric positive semidefinite.
    R : (m, m) array
        Measurement noise covariance; diagonal with nonnegative entries.
    H_seq : (N, m, n) array
        Measurement matrix for each step.
    B : (n, n) array, optional
        Control matrix. Requires ``u_seq``.
    u_seq : (N, n) array, optional
        Control input applied on the transition into each step.
    """

    n: int
    m: int
    F: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    H_seq: np.ndarray
    B: np.ndarray | None = None
    u_seq: np.ndarray | None = None

    def __post_init__(self):
        n, m = int(self.n), int(self.m)
        if n < 1 or m < 1:
            raise ConfigurationError(f"dimensions must be positive, got n={n}, m={m}")
        F = _as_matrix(self.F, "F")
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        H_seq = np.asarray(self.H_seq, dtype=np.float64)
        if F.shape != (n, n):
            raise ConfigurationError(f"F must be {n}x{n}, got {F.shape}")
        if Q.shape != (n, n):
            raise ConfigurationError(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise ConfigurationError(f"R must be {m}x{m}, got {R.shape}")
        if H_seq.ndim != 3 or H_seq.shape[1:] != (m, n):
            raise ConfigurationError(
                f"H_seq must have shape (N, {m}, {n}), got {H_seq.shape}")
        if np.max(np.abs(Q - Q.T)) > _SYM_TOL:
            raise ConfigurationError("Q is not symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < _EIG_FLOOR:
            raise ConfigurationError("Q is not positive semidefinite")
        if np.max(np.abs(R - np.diag(np.diagonal(R)))) > 0:
            raise ConfigurationError("R must be diagonal")
        if np.min(np.diagonal(R)) < 0:
            raise ConfigurationError("R must have nonnegative diagonal entries")

        B = self.B
        u_seq = self.u_seq
        if B is not None:
            B = _as_matrix(B, "B")
            if B.shape != (n, n):
                raise ConfigurationError(f"B must be {n}x{n}, got {B.shape}")
        if u_seq is not None:
            u_seq = np.asarray(u_seq, dtype=np.float64)
            if u_seq.ndim != 2 or u_seq.shape[1] != n:
                raise ConfigurationError(
                    f"u_seq must have shape (N, {n}), got {u_seq.shape}")
            if u_seq.shape[0] != H_seq.shape[0]:
                raise ConfigurationError(
                    f"u_seq length {u_seq.shape[0]} does not match "
                    f"H_seq length {H_seq.shape[0]}")

        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "H_seq", H_seq)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "u_seq", u_seq)

    @property
    def N(self) -> int:
        return self.H_seq.shape[0]

    @property
    def r_diag(self) -> np.ndarray:
        return np.diagonal(self.R)


@dataclass(frozen=True)
class Trajectory:
    """A simulated run of a system.

    ``q_seq``/``r_seq`` record the exact noise draws so the recursion can be
    replayed: ``x_seq[t] = F x_seq[t-1] (+ B u_seq[t-1]) + q_seq[t-1]`` and
    ``y_seq[t-1] = H_seq[t-1] x_seq[t] + r_seq[t-1]`` hold to machine
    precision.
    """

    x_seq: np.ndarray          # (N+1, n)
    y_seq: np.ndarray          # (N, m)
    params_ref: SystemParams
    seed: int | tuple | None
    q_seq: np.ndarray = field(repr=False, default=None)  # (N, n)
    r_seq: np.ndarray = field(repr=False, default=None)  # (N, m)

    @property
    def N(self) -> int:
        return self.y_seq.shape[0]


def _psd_factor(Q: np.ndarray) -> np.ndarray | None:
    """Cholesky-like factor L with L L^T ~= Q, or None for an exactly zero Q.

    A PSD-but-singular Q (eigenvalues sampled down to 0) gets a 1e-12
    diagonal jitter, which preserves the distribution to within the jitter.
    """
    if not np.any(Q):
        return None
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(Q + 1e-12 * np.eye(Q.shape[0]))


def simulate(params: SystemParams, x0=None, N: int | None = None,
             rng=None) -> Trajectory:
    """Simulate a trajectory of length ``N`` under ``params``.

    ``x0`` defaults to a standard-normal draw. ``rng`` may be an integer
    seed, a seed-sequence key, or a ``numpy.random.Generator``; given the
    same seed and parameters the result is bit-identical.
    """
    if N is None:
        N = params.N
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")
    if N != params.N:
        raise ConfigurationError(
            f"N={N} does not match H_seq length {params.N}")
    if params.B is not None and params.u_seq is None:
        raise ConfigurationError("B given but u_seq missing")

    seed = None
    if isinstance(rng, np.random.Generator):
        gen = rng
    else:
        seed = rng
        gen = np.random.default_rng(rng)

    n, m = params.n, params.m
    if x0 is None:
        x0 = gen.standard_normal(n)
    x0 = np.asarray(x0, dtype=np.float64).reshape(n)

    Lq = _psd_factor(params.Q)
    r_std = np.sqrt(params.r_diag)

    q_seq = np.zeros((N, n)) if Lq is None else gen.standard_normal((N, n)) @ Lq.T
    r_seq = gen.standard_normal((N, m)) * r_std

    x_seq = np.empty((N + 1, n))
    y_seq = np.empty((N, m))
    x_seq[0] = x0
    x = x0
    for t in range(N):
        x = params.F @ x
        if params.B is not None:
            x = x + params.B @ params.u_seq[t]
        x = x + q_seq[t]
        x_seq[t + 1] = x
        y_seq[t] = params.H_seq[t] @ x + r_seq[t]

    return Trajectory(x_seq=x_seq, y_seq=y_seq, params_ref=params, seed=seed,
                      q_seq=q_seq, r_seq=r_seq)
