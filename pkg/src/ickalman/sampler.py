"""Random system generation and training-curriculum schedules.

Transition matrices come from one of two generators:

* strategy 1: ``F = (1 - alpha) I + alpha U`` with ``U`` Haar-orthonormal,
  so every eigenvalue lies in the disk centered at ``1 - alpha`` with
  radius ``alpha`` (exactly on the unit circle for alpha in {0, 1});
* strategy 2: ``F = U diag(d) U^T`` with ``d ~ U[-1, 1]``, which is
  symmetric and always stable.

Covariances are ``U diag(d) U^T`` with ``d ~ U[0, cap]``; measurement noise
is diagonal with ``U[0, cap]`` entries. Measurement matrices and the
initial state are isotropic Gaussian; optional controls are unit-norm
Gaussian directions through a symmetric control matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .ssm import SystemParams, Trajectory, simulate

__all__ = [
    "CurriculumSchedule",
    "SamplerConfig",
    "default_schedule",
    "example_rng",
    "sample_B",
    "sample_F_strategy1",
    "sample_F_strategy2",
    "sample_R",
    "sample_batch",
    "sample_controls",
    "sample_covariance",
    "sample_example",
    "sample_orthonormal",
]

SCHEDULE_QUANTITIES = ("alpha", "sigma_q2", "sigma_r2", "context_length")

# Context-length ramps advance in discrete increments: +2 every 2000 steps.
_CONTEXT_INCREMENT = 2
_CONTEXT_PERIOD = 2000


@dataclass(frozen=True)
class CurriculumSchedule:
    """A training schedule for one scalar quantity.

    ``linear-ramp`` interpolates from ``start_value`` to ``end_value`` over
    ``ramp_steps`` steps and stays constant afterwards. For
    ``context_length`` the ramp is quantized to +2 every 2000 steps
    (start 10, cap 40 under the defaults), so the value is a plateaued
    staircase rather than a continuous line.
    """

    quantity: str
    kind: str = "linear-ramp"
    start_value: float = 0.0
    end_value: float = 0.0
    ramp_steps: int = 1

    def __post_init__(self):
        if self.quantity not in SCHEDULE_QUANTITIES:
            raise ConfigurationError(f"unknown schedule quantity {self.quantity!r}")
        if self.kind not in ("linear-ramp", "constant"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "linear-ramp" and self.ramp_steps < 1:
            raise ConfigurationError("ramp_steps must be >= 1")

    def value(self, step: int):
        if step < 0:
            raise ConfigurationError(f"step must be >= 0, got {step}")
        if self.kind == "constant":
            v = self.end_value
        else:
            progress = min(step, self.ramp_steps)
            if self.quantity == "context_length":
                progress = min(self.ramp_steps,
                               _CONTEXT_PERIOD * (step // _CONTEXT_PERIOD))
            v = (self.start_value
                 + (self.end_value - self.start_value) * progress / self.ramp_steps)
        if self.quantity == "context_length":
            return int(round(v))
        return float(v)

    def to_dict(self) -> dict:
        return {"quantity": self.quantity, "kind": self.kind,
                "start": self.start_value, "end": self.end_value,
                "ramp_steps": self.ramp_steps}

    @classmethod
    def from_dict(cls, d: dict, quantity: str | None = None) -> "CurriculumSchedule":
        return cls(quantity=d.get("quantity", quantity),
                   kind=d.get("kind", "linear-ramp"),
                   start_value=d.get("start", 0.0),
                   end_value=d.get("end", 0.0),
                   ramp_steps=d.get("ramp_steps", 1))


def default_schedule(quantity: str) -> CurriculumSchedule:
    """The stock training schedules: context length 10 -> 40 stepping +2
    every 2000 steps; noise caps 0 -> 0.025 over 100000 steps; blend
    coefficient alpha 0 -> 1 over 50000 steps."""
    if quantity == "context_length":
        ramp = _CONTEXT_PERIOD * (40 - 10) // _CONTEXT_INCREMENT
        return CurriculumSchedule("context_length", "linear-ramp", 10, 40, ramp)
    if quantity in ("sigma_q2", "sigma_r2"):
        return CurriculumSchedule(quantity, "linear-ramp", 0.0, 0.025, 100_000)
    if quantity == "alpha":
        return CurriculumSchedule("alpha", "linear-ramp", 0.0, 1.0, 50_000)
    raise ConfigurationError(f"unknown schedule quantity {quantity!r}")


def sample_orthonormal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform n x n orthonormal matrix (Gaussian QR with the sign of
    the triangular factor's diagonal folded in)."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_F_strategy1(n: int, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Transition matrix ``(1 - alpha) I + alpha U`` with Haar-orthonormal U."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    u = sample_orthonormal(n, rng)
    return (1.0 - alpha) * np.eye(n) + alpha * u


def _conjugate_diag(u: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``U diag(d) U^T`` without materializing the diagonal matrix."""
    return (u * d) @ u.T


def sample_F_strategy2(n: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric transition matrix with eigenvalues drawn from U[-1, 1]."""
    u = sample_orthonormal(n, rng)
    d = rng.uniform(-1.0, 1.0, n)
    return _conjugate_diag(u, d)


def sample_covariance(n: int, sigma2_cap: float, rng: np.random.Generator) -> np.ndarray:
    """Random PSD covariance with eigenvalues drawn from U[0, sigma2_cap]."""
    if sigma2_cap < 0:
        raise ValueError(f"sigma2_cap must be >= 0, got {sigma2_cap}")
    u = sample_orthonormal(n, rng)
    d = rng.uniform(0.0, sigma2_cap, n)
    return _conjugate_diag(u, d)


def sample_R(m: int, sigma2_cap: float, rng: np.random.Generator) -> np.ndarray:
    """Diagonal measurement covariance with U[0, sigma2_cap] entries."""
    if sigma2_cap < 0:
        raise ValueError(f"sigma2_cap must be >= 0, got {sigma2_cap}")
    return np.diag(rng.uniform(0.0, sigma2_cap, m))


def sample_B(n: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric control matrix with eigenvalues drawn from U[-1, 1]."""
    u = sample_orthonormal(n, rng)
    d = rng.uniform(-1.0, 1.0, n)
    return _conjugate_diag(u, d)


def sample_controls(n: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """N control inputs: standard-normal draws normalized to unit norm."""
    u = rng.standard_normal((N, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


ScheduleOrValue = float | int | CurriculumSchedule


@dataclass(frozen=True)
class SamplerConfig:
    """Configuration for drawing (system, trajectory) examples.

    ``sigma_q2``, ``sigma_r2`` and ``context_length`` may be fixed values
    or :class:`CurriculumSchedule` instances evaluated at a training step.
    ``alpha`` (strategy 1 only) additionally accepts ``"uniform"``, meaning
    a fresh U[0, 1] draw per example, which is the evaluation-time default.
    """

    n: int = 8
    m: int = 1
    strategy: int = 2
    sigma_q2: ScheduleOrValue = 0.025
    sigma_r2: ScheduleOrValue = 0.025
    alpha: ScheduleOrValue | str = "uniform"
    context_length: ScheduleOrValue = 40
    with_control: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigurationError(f"dimensions must be positive, got "
                                     f"n={self.n}, m={self.m}")
        if self.strategy not in (1, 2):
            raise ConfigurationError(f"strategy must be 1 or 2, got {self.strategy}")
        for name in ("sigma_q2", "sigma_r2"):
            v = getattr(self, name)
            if not isinstance(v, CurriculumSchedule) and v < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {v}")
        if (not isinstance(self.alpha, (CurriculumSchedule, str))
                and not 0.0 <= self.alpha <= 1.0):
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")
        if isinstance(self.alpha, str) and self.alpha != "uniform":
            raise ConfigurationError(f"alpha must be a number, a schedule, or "
                                     f"'uniform', got {self.alpha!r}")

    def _eval(self, v, step: int):
        return v.value(step) if isinstance(v, CurriculumSchedule) else v

    def at_step(self, step: int) -> dict:
        """Evaluate all scheduled quantities at a training step."""
        return {
            "sigma_q2": float(self._eval(self.sigma_q2, step)),
            "sigma_r2": float(self._eval(self.sigma_r2, step)),
            "context_length": int(self._eval(self.context_length, step)),
            "alpha": (self.alpha if isinstance(self.alpha, str)
                      else float(self._eval(self.alpha, step))),
        }

    def to_dict(self) -> dict:
        def enc(v):
            return v.to_dict() if isinstance(v, CurriculumSchedule) else v
        return {"n": self.n, "m": self.m, "strategy": self.strategy,
                "sigma_q2": enc(self.sigma_q2), "sigma_r2": enc(self.sigma_r2),
                "alpha": enc(self.alpha),
                "context_length": enc(self.context_length),
                "with_control": self.with_control, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        def dec(v, quantity):
            if isinstance(v, dict):
                return CurriculumSchedule.from_dict(v, quantity)
            return v
        kwargs = dict(d)
        for key in ("sigma_q2", "sigma_r2", "alpha", "context_length"):
            if key in kwargs:
                kwargs[key] = dec(kwargs[key], key)
        return cls(**kwargs)


def example_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-example stream keyed by (seed, index), so batches are
    order-independent and safe to generate in parallel."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def sample_example(cfg: SamplerConfig, step: int,
                   rng: np.random.Generator) -> tuple[SystemParams, Trajectory]:
    """Draw one (system, trajectory) pair with schedules evaluated at ``step``."""
    vals = cfg.at_step(step)
    n, m, N = cfg.n, cfg.m, vals["context_length"]

    if cfg.strategy == 1:
        alpha = vals["alpha"]
        if alpha == "uniform":
            alpha = rng.uniform(0.0, 1.0)
        F = sample_F_strategy1(n, alpha, rng)
    else:
        F = sample_F_strategy2(n, rng)

    Q = sample_covariance(n, vals["sigma_q2"], rng)
    R = sample_R(m, vals["sigma_r2"], rng)
    B = u_seq = None
    if cfg.with_control:
        B = sample_B(n, rng)
        u_seq = sample_controls(n, N, rng)
    H_seq = rng.standard_normal((N, m, n))
    x0 = rng.standard_normal(n)

    params = SystemParams(n=n, m=m, F=F, Q=Q, R=R, H_seq=H_seq, B=B, u_seq=u_seq)
    traj = simulate(params, x0=x0, N=N, rng=rng)
    return params, traj


def sample_batch(cfg: SamplerConfig, count: int,
                 step: int = 0) -> list[tuple[SystemParams, Trajectory]]:
    """Draw ``count`` examples on independent substreams of ``cfg.seed``."""
    return [sample_example(cfg, step, example_rng(cfg.seed, i))
            for i in range(count)]
