"""Pure-NumPy batch filtering kernels.

These are the fallback implementations behind :mod:`ickalman.kernels`:
whole-batch forward passes vectorized across examples, used by the
evaluation harness where per-example object construction would dominate.
They follow the exact operation order of the per-example routines in
:mod:`ickalman.filters` (including covariance re-symmetrization), so the
two agree to floating-point noise.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

__all__ = ["scalar_kf_forward", "seq_kf_forward"]

_DENOM_FLOOR = 1e-14


def _sym(P: np.ndarray) -> np.ndarray:
    return (P + np.swapaxes(P, -1, -2)) / 2.0


def scalar_kf_forward(F, Q, h, sigma2, y, x0, P0, drift=None):
    """Batched scalar-measurement filter forward pass.

    Parameters
    ----------
    F, Q, P0 : (B, n, n) arrays
    h : (B, N, n) array of measurement rows
    sigma2 : (B,) measurement noise variances
    y : (B, N) observations
    x0 : (B, n) initial means
    drift : (B, N, n) optional per-step additive mean drift (control term)

    Returns
    -------
    preds : (B, N) one-step observation predictions made at the prior
    x_filt : (B, N+1, n) posterior means (index 0 is the initial mean)
    """
    F = np.asarray(F, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    B, N, n = h.shape

    x = np.array(x0, dtype=np.float64)
    P = np.array(P0, dtype=np.float64)
    preds = np.empty((B, N))
    x_filt = np.empty((B, N + 1, n))
    x_filt[:, 0] = x

    Ft = np.swapaxes(F, 1, 2)
    for t in range(N):
        x = np.einsum("bij,bj->bi", F, x)
        if drift is not None:
            x = x + drift[:, t]
        P = _sym(F @ P @ Ft + Q)

        ht = h[:, t]
        preds[:, t] = np.einsum("bi,bi->b", ht, x)
        Ph = np.einsum("bij,bj->bi", P, ht)
        denom = np.einsum("bi,bi->b", ht, Ph) + sigma2
        if np.min(denom) <= _DENOM_FLOOR:
            b = int(np.argmin(denom))
            raise NumericalError(
                f"scalar innovation variance {denom[b]:.3e} is not positive "
                f"(example {b}, step {t})")
        K = Ph / denom[:, None]
        innovation = y[:, t] - preds[:, t]
        x = x + K * innovation[:, None]
        hP = np.einsum("bi,bij->bj", ht, P)
        P = _sym(P - K[:, :, None] * hP[:, None, :])
        x_filt[:, t + 1] = x

    return preds, x_filt


def seq_kf_forward(F, Q, H, r_diag, y, x0, P0, drift=None):
    """Batched diagonal-noise vector-measurement forward pass.

    Measurement rows are absorbed one at a time (no matrix inverses).
    ``H`` is (B, N, m, n), ``r_diag`` (B, m), ``y`` (B, N, m). Returns
    ``(preds (B, N, m), x_filt (B, N+1, n))``; predictions for all m
    components are made at the prior, before any row of y_t is absorbed.
    """
    F = np.asarray(F, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    r_diag = np.asarray(r_diag, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    B, N, m, n = H.shape

    x = np.array(x0, dtype=np.float64)
    P = np.array(P0, dtype=np.float64)
    preds = np.empty((B, N, m))
    x_filt = np.empty((B, N + 1, n))
    x_filt[:, 0] = x

    Ft = np.swapaxes(F, 1, 2)
    for t in range(N):
        x = np.einsum("bij,bj->bi", F, x)
        if drift is not None:
            x = x + drift[:, t]
        P = _sym(F @ P @ Ft + Q)
        preds[:, t] = np.einsum("bmi,bi->bm", H[:, t], x)
        for j in range(m):
            hj = H[:, t, j]
            Ph = np.einsum("bij,bj->bi", P, hj)
            denom = np.einsum("bi,bi->b", hj, Ph) + r_diag[:, j]
            if np.min(denom) <= _DENOM_FLOOR:
                b = int(np.argmin(denom))
                raise NumericalError(
                    f"scalar innovation variance {denom[b]:.3e} is not "
                    f"positive (example {b}, step {t}, row {j})")
            K = Ph / denom[:, None]
            innovation = y[:, t, j] - np.einsum("bi,bi->b", hj, x)
            x = x + K * innovation[:, None]
            hP = np.einsum("bi,bij->bj", hj, P)
            P = _sym(P - K[:, :, None] * hP[:, None, :])
        x_filt[:, t + 1] = x

    return preds, x_filt
