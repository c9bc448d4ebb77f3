"""Dataset-file loading and batching.

The trainer consumes the dataset JSON files produced by the `ickalman`
CLI. Each example carries a dense context matrix whose columns are fed to
the model as tokens; one-step predictions are read at the *target
positions*, the column of h_t (of u_t for the control scheme), i.e. the
position right before the column where y_t appears:

    scalar / scalar-no-cov / vector : 2n + 2t - 1      (t = 1..N, 0-based)
    scalar-no-params                : n + 2t - 1
    control                         : 2n + 3t
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DATASET_VERSION = 1


class SchemaError(ValueError):
    pass


def target_positions(scheme: str, n: int, N: int) -> tuple[int, ...]:
    if scheme in ("scalar", "scalar-no-cov", "vector"):
        return tuple(2 * n + 2 * t - 1 for t in range(1, N + 1))
    if scheme == "scalar-no-params":
        return tuple(n + 2 * t - 1 for t in range(1, N + 1))
    if scheme == "control":
        return tuple(2 * n + 3 * t for t in range(1, N + 1))
    raise SchemaError(f"unknown scheme {scheme!r}")


@dataclass
class ContextDataset:
    """All examples of one dataset file, stacked."""

    contexts: np.ndarray      # (count, rows, cols) float32
    targets: np.ndarray       # (count, N, m) float32
    states: np.ndarray        # (count, N+1, n) float32
    scheme: str
    n: int
    m: int
    N: int
    seed: int | None
    path: str

    @property
    def count(self) -> int:
        return self.contexts.shape[0]

    @property
    def positions(self) -> tuple[int, ...]:
        return target_positions(self.scheme, self.n, self.N)

    def labels(self, target: str) -> np.ndarray:
        """Per-position regression labels: y_t or x_t, shape (count, N, dim)."""
        if target == "observation":
            return self.targets
        if target == "state":
            return self.states[:, 1:]
        raise SchemaError(f"unknown target {target!r}")


def load_dataset(path: str) -> ContextDataset:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "dataset":
        raise SchemaError(f"{path}: not a dataset file (kind={doc.get('kind')!r})")
    if doc.get("version") != DATASET_VERSION:
        raise SchemaError(f"{path}: unsupported dataset version "
                          f"{doc.get('version')!r}")
    n, m, N = doc["n"], doc["m"], doc["N"]
    contexts = np.asarray([ex["context"] for ex in doc["examples"]],
                          dtype=np.float32)
    targets = np.asarray([ex["targets"] for ex in doc["examples"]],
                         dtype=np.float32).reshape(-1, N, m)
    states = np.asarray([ex["states"] for ex in doc["examples"]],
                        dtype=np.float32)
    if contexts.ndim != 3:
        raise SchemaError(f"{path}: ragged context matrices")
    pos = target_positions(doc["scheme"], n, N)
    if max(pos) + 1 >= contexts.shape[2]:
        raise SchemaError(f"{path}: context has {contexts.shape[2]} columns "
                          f"but the last target position is {max(pos)}")
    return ContextDataset(contexts=contexts, targets=targets, states=states,
                          scheme=doc["scheme"], n=n, m=m, N=N,
                          seed=doc.get("seed"), path=path)


def batches(ds: ContextDataset, batch_size: int, steps: int, seed: int):
    """Yield `steps` random batches of example indices (with replacement
    across steps, without within a batch)."""
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        yield rng.choice(ds.count, size=min(batch_size, ds.count),
                         replace=False)
