"""Prompt-matrix encoding and the dataset / prediction file formats.

A context matrix interleaves system parameters and observations column by
column. Five schemes are supported (0-based column indices):

``scalar`` (m = 1), shape (n+1) x (2n+2N+1)::

    cols [0, n)   rows 1..n : F
    cols [n, 2n)  rows 1..n : Q
    col  2n       row 0     : sigma^2      (rows 1..n stay zero)
    col  2n+2t-1  rows 1..n : h_t^T
    col  2n+2t    row 0     : y_t          (rows 1..n stay zero)

``scalar-no-cov``
    same shape as ``scalar`` with the Q block and sigma^2 entry zeroed.

``scalar-no-params``, shape (n+1) x (n+2N+1)
    the F block is dropped entirely: Q at cols [0, n), sigma^2 at col n,
    then the same h/y interleave starting at col n+1.

``vector``, shape m(n+1) x (2n+2N+1)
    rows 0..m-1 carry sigma_j^2 (col 2n) and the components y_t^(j)
    (col 2n+2t); below them sit m row-groups of n rows, the j-th holding
    the columns H_t^(j)T, with F and Q stored in the first group.

``control`` (m = 1), shape (n+1) x (2n+3N+2)
    like ``scalar`` with an extra all-zero column at 2n+1 and a triplet
    (h_t^T at 2n+3t-1, u_t at 2n+3t, y_t at 2n+3t+1) per step.

``target_positions`` are the columns where one-step predictions are read:
the column of h_t (of u_t for ``control``), i.e. the position right before
the column where y_t appears.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SchemaError
from .ssm import SystemParams, Trajectory

__all__ = [
    "ContextMatrix",
    "DecodedContext",
    "SCHEMES",
    "decode",
    "encode",
    "mask_context",
    "read_dataset",
    "read_predictions",
    "write_dataset",
    "write_predictions",
]

SCHEMES = ("scalar", "vector", "control", "scalar-no-cov", "scalar-no-params")

DATASET_VERSION = 1
PREDICTIONS_VERSION = 1


def context_shape(scheme: str, n: int, m: int, N: int) -> tuple[int, int]:
    if scheme in ("scalar", "scalar-no-cov"):
        return (n + 1, 2 * n + 2 * N + 1)
    if scheme == "scalar-no-params":
        return (n + 1, n + 2 * N + 1)
    if scheme == "vector":
        return (m * (n + 1), 2 * n + 2 * N + 1)
    if scheme == "control":
        return (n + 1, 2 * n + 3 * N + 2)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


def _interleave_start(scheme: str, n: int) -> int:
    """Column of h_1 (first interleaved column)."""
    if scheme == "scalar-no-params":
        return n + 1
    if scheme == "control":
        return 2 * n + 2
    return 2 * n + 1


def target_positions(scheme: str, n: int, N: int) -> tuple[int, ...]:
    start = _interleave_start(scheme, n)
    stride = 3 if scheme == "control" else 2
    offset = 1 if scheme == "control" else 0
    return tuple(start + offset + stride * t for t in range(N))


@dataclass(frozen=True)
class ContextMatrix:
    """One encoded example: the dense prompt matrix plus its layout facts."""

    data: np.ndarray
    scheme: str
    n: int
    m: int
    N: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        expected = context_shape(self.scheme, self.n, self.m, self.N)
        if self.data.shape != expected:
            raise ConfigurationError(
                f"{self.scheme} context must have shape {expected}, "
                f"got {self.data.shape}")

    @property
    def target_positions(self) -> tuple[int, ...]:
        return target_positions(self.scheme, self.n, self.N)


@dataclass(frozen=True)
class DecodedContext:
    """Fields recovered from a context; withheld blocks come back as None."""

    F: np.ndarray | None
    Q: np.ndarray | None
    r_diag: np.ndarray | None    # (m,) measurement noise variances
    H_seq: np.ndarray            # (N, m, n)
    y_seq: np.ndarray            # (N, m)
    u_seq: np.ndarray | None = None

    @property
    def sigma2(self) -> float | None:
        return None if self.r_diag is None else float(self.r_diag[0])


def _y_of(traj_or_y) -> np.ndarray:
    y = getattr(traj_or_y, "y_seq", traj_or_y)
    return np.asarray(y, dtype=np.float64)


def encode(params: SystemParams, traj_or_y, scheme: str) -> ContextMatrix:
    """Lay out one example as a prompt matrix under ``scheme``."""
    n, m = params.n, params.m
    y_seq = _y_of(traj_or_y).reshape(-1, m)
    N = y_seq.shape[0]
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    if scheme != "vector" and m != 1:
        raise ConfigurationError(f"scheme {scheme!r} requires m = 1, got m = {m}")
    if scheme == "control":
        if params.u_seq is None:
            raise ConfigurationError("control scheme requires u_seq")
    if N != params.N:
        raise ConfigurationError(
            f"y_seq length {N} does not match H_seq length {params.N}")

    data = np.zeros(context_shape(scheme, n, m, N))
    start = _interleave_start(scheme, n)

    if scheme in ("scalar", "scalar-no-cov", "control"):
        data[1:, 0:n] = params.F
        if scheme != "scalar-no-cov":
            data[1:, n:2 * n] = params.Q
            data[0, 2 * n] = params.R[0, 0]
        stride = 3 if scheme == "control" else 2
        for t in range(N):
            c = start + stride * t
            data[1:, c] = params.H_seq[t, 0]
            if scheme == "control":
                data[1:, c + 1] = params.u_seq[t]
                data[0, c + 2] = y_seq[t, 0]
            else:
                data[0, c + 1] = y_seq[t, 0]
    elif scheme == "scalar-no-params":
        data[1:, 0:n] = params.Q
        data[0, n] = params.R[0, 0]
        for t in range(N):
            c = start + 2 * t
            data[1:, c] = params.H_seq[t, 0]
            data[0, c + 1] = y_seq[t, 0]
    else:  # vector
        data[0:m, 2 * n] = params.r_diag
        data[m:m + n, 0:n] = params.F
        data[m:m + n, n:2 * n] = params.Q
        for t in range(N):
            c = start + 2 * t
            for j in range(m):
                rows = slice(m + j * n, m + (j + 1) * n)
                data[rows, c] = params.H_seq[t, j]
            data[0:m, c + 1] = y_seq[t]

    return ContextMatrix(data=data, scheme=scheme, n=n, m=m, N=N)


def mask_context(ctx: ContextMatrix, scheme: str) -> ContextMatrix:
    """Re-label a full ``scalar`` context as a withholding scheme, zeroing
    (``scalar-no-cov``) or dropping (``scalar-no-params``) the masked blocks."""
    if ctx.scheme != "scalar":
        raise ConfigurationError(f"can only mask a scalar context, got {ctx.scheme!r}")
    n = ctx.n
    if scheme == "scalar-no-cov":
        data = ctx.data.copy()
        data[1:, n:2 * n] = 0.0
        data[0, 2 * n] = 0.0
        return ContextMatrix(data=data, scheme=scheme, n=n, m=ctx.m, N=ctx.N)
    if scheme == "scalar-no-params":
        data = ctx.data[:, n:].copy()
        return ContextMatrix(data=data, scheme=scheme, n=n, m=ctx.m, N=ctx.N)
    raise ConfigurationError(f"cannot mask to scheme {scheme!r}")


def decode(ctx: ContextMatrix) -> DecodedContext:
    """Recover all non-withheld fields of a context, bit-exactly."""
    n, m, N = ctx.n, ctx.m, ctx.N
    data = ctx.data
    start = _interleave_start(ctx.scheme, n)
    F = Q = r_diag = u_seq = None
    H_seq = np.empty((N, m, n))
    y_seq = np.empty((N, m))

    if ctx.scheme in ("scalar", "scalar-no-cov", "control"):
        F = data[1:, 0:n].copy()
        if ctx.scheme != "scalar-no-cov":
            Q = data[1:, n:2 * n].copy()
            r_diag = data[0, 2 * n:2 * n + 1].copy()
        stride = 3 if ctx.scheme == "control" else 2
        if ctx.scheme == "control":
            u_seq = np.empty((N, n))
        for t in range(N):
            c = start + stride * t
            H_seq[t, 0] = data[1:, c]
            if ctx.scheme == "control":
                u_seq[t] = data[1:, c + 1]
                y_seq[t, 0] = data[0, c + 2]
            else:
                y_seq[t, 0] = data[0, c + 1]
    elif ctx.scheme == "scalar-no-params":
        Q = data[1:, 0:n].copy()
        r_diag = data[0, n:n + 1].copy()
        for t in range(N):
            c = start + 2 * t
            H_seq[t, 0] = data[1:, c]
            y_seq[t, 0] = data[0, c + 1]
    else:  # vector
        r_diag = data[0:m, 2 * n].copy()
        F = data[m:m + n, 0:n].copy()
        Q = data[m:m + n, n:2 * n].copy()
        for t in range(N):
            c = start + 2 * t
            for j in range(m):
                H_seq[t, j] = data[m + j * n:m + (j + 1) * n, c]
            y_seq[t] = data[0:m, c + 1]

    return DecodedContext(F=F, Q=Q, r_diag=r_diag, H_seq=H_seq, y_seq=y_seq,
                          u_seq=u_seq)


# ---------------------------------------------------------------------------
# Dataset and prediction files.
#
# Plain JSON with numbers emitted through Python's shortest round-trip float
# repr, so double-precision values survive a write/read cycle bit-exactly.
# ---------------------------------------------------------------------------

def _lists(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def dataset_record(params: SystemParams, traj: Trajectory, scheme: str) -> dict:
    """One example entry: its context plus the generating ground truth."""
    ctx = encode(params, traj, scheme)
    p = {"F": _lists(params.F), "Q": _lists(params.Q), "R": _lists(params.R)}
    p["B"] = None if params.B is None else _lists(params.B)
    p["u_seq"] = None if params.u_seq is None else _lists(params.u_seq)
    return {"context": _lists(ctx.data), "targets": _lists(traj.y_seq),
            "states": _lists(traj.x_seq), "params": p}


def dataset_document(examples, scheme: str, seed: int | None) -> dict:
    """Assemble a dataset document from (SystemParams, Trajectory) pairs."""
    examples = list(examples)
    if not examples:
        raise ConfigurationError("dataset must contain at least one example")
    params0, traj0 = examples[0]
    doc = {"version": DATASET_VERSION, "kind": "dataset", "scheme": scheme,
           "n": params0.n, "m": params0.m, "N": traj0.N,
           "count": len(examples), "seed": seed,
           "examples": [dataset_record(p, t, scheme) for p, t in examples]}
    return doc


def _check_header(doc: dict, kind: str, version: int, path: str) -> None:
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise SchemaError(f"{path}: expected a {kind} file, got "
                          f"kind={doc.get('kind')!r}")
    if doc.get("version") != version:
        raise SchemaError(f"{path}: unsupported {kind} schema version "
                          f"{doc.get('version')!r} (expected {version})")


def write_dataset(path: str, examples_or_doc, scheme: str | None = None,
                  seed: int | None = None) -> dict:
    """Write a dataset file; accepts a prepared document or raw examples."""
    if isinstance(examples_or_doc, dict):
        doc = examples_or_doc
    else:
        doc = dataset_document(examples_or_doc, scheme, seed)
    _atomic_dump(doc, path)
    return doc


def read_dataset(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    _check_header(doc, "dataset", DATASET_VERSION, path)
    for key in ("scheme", "n", "m", "N", "count", "examples"):
        if key not in doc:
            raise SchemaError(f"{path}: dataset file missing field {key!r}")
    if len(doc["examples"]) != doc["count"]:
        raise SchemaError(f"{path}: count={doc['count']} but "
                          f"{len(doc['examples'])} examples present")
    return doc


def predictions_document(algorithm: str, dataset_doc: dict,
                         preds: np.ndarray) -> dict:
    """Assemble a prediction document aligned with ``dataset_doc``.

    ``preds`` has shape (count, N, m): one prediction per example per
    context length (per measurement component).
    """
    preds = np.asarray(preds, dtype=np.float64)
    expected = (dataset_doc["count"], dataset_doc["N"], dataset_doc["m"])
    if preds.shape != expected:
        raise ConfigurationError(
            f"predictions must have shape {expected}, got {preds.shape}")
    return {"version": PREDICTIONS_VERSION, "kind": "predictions",
            "algorithm": algorithm, "scheme": dataset_doc["scheme"],
            "n": dataset_doc["n"], "m": dataset_doc["m"], "N": dataset_doc["N"],
            "count": dataset_doc["count"], "dataset_seed": dataset_doc.get("seed"),
            "predictions": preds.tolist()}


def write_predictions(path: str, doc: dict) -> None:
    _check_header(doc, "predictions", PREDICTIONS_VERSION, path)
    _atomic_dump(doc, path)


def read_predictions(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    _check_header(doc, "predictions", PREDICTIONS_VERSION, path)
    for key in ("algorithm", "n", "m", "N", "count", "predictions"):
        if key not in doc:
            raise SchemaError(f"{path}: predictions file missing field {key!r}")
    preds = np.asarray(doc["predictions"], dtype=np.float64)
    if preds.shape != (doc["count"], doc["N"], doc["m"]):
        raise SchemaError(
            f"{path}: predictions shape {preds.shape} does not match header "
            f"({doc['count']}, {doc['N']}, {doc['m']})")
    return doc


def _atomic_dump(doc: dict, path: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)
