"""Prediction-file emission in the evaluation harness's JSON format."""

from __future__ import annotations

import json
import os

import numpy as np
import torch

from .data import ContextDataset

PREDICTIONS_VERSION = 1


def predict(model, ds: ContextDataset, target: str = "observation",
            batch_size: int = 256) -> np.ndarray:
    """Model outputs at every target position, shape (count, N, out_dim)."""
    model.eval()
    outs = []
    positions = torch.as_tensor(ds.positions, dtype=torch.long)
    with torch.no_grad():
        for lo in range(0, ds.count, batch_size):
            ctx = torch.from_numpy(ds.contexts[lo:lo + batch_size])
            out = model(ctx)[:, positions, :]
            outs.append(out.numpy())
    return np.concatenate(outs, axis=0).astype(np.float64)


def predictions_document(algorithm: str, ds: ContextDataset,
                         preds: np.ndarray) -> dict:
    if preds.shape[:2] != (ds.count, ds.N):
        raise ValueError(f"predictions shape {preds.shape} does not match "
                         f"dataset ({ds.count}, {ds.N})")
    return {"version": PREDICTIONS_VERSION, "kind": "predictions",
            "algorithm": algorithm, "scheme": ds.scheme, "n": ds.n,
            "m": ds.m, "N": ds.N, "count": ds.count, "dataset_seed": ds.seed,
            "predictions": preds.tolist()}


def write_predictions(path: str, doc: dict) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)
