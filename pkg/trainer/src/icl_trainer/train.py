"""Training loop: masked regression at the target positions."""

from __future__ import annotations

import json
import os

import numpy as np
import torch

from .data import ContextDataset, batches
from .model import TrainConfig, build_model

__all__ = ["TrainingDiverged", "train", "save_checkpoint", "load_checkpoint"]


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the message carries the step index."""


def _label_dim(ds: ContextDataset, target: str) -> int:
    return ds.m if target == "observation" else ds.n


def train(cfg: TrainConfig, datasets: list[ContextDataset] | ContextDataset,
          log_every: int = 0):
    """Train a model over one or more dataset phases.

    Multiple datasets realize sampler-side curricula (noise caps, blend
    coefficient): the total step budget is split evenly across the phases
    in order. The context-length curriculum is applied as a loss mask that
    admits two more target positions every ``2000 * curriculum_scale``
    steps. Returns ``(model, trace)`` where ``trace`` is the per-step loss.
    """
    if isinstance(datasets, ContextDataset):
        datasets = [datasets]
    first = datasets[0]
    for ds in datasets[1:]:
        if (ds.scheme, ds.n, ds.m, ds.N) != (first.scheme, first.n, first.m,
                                             first.N):
            raise ValueError("all dataset phases must share scheme/n/m/N")
    if first.scheme != cfg.scheme:
        raise ValueError(f"dataset scheme {first.scheme!r} does not match "
                         f"config scheme {cfg.scheme!r}")

    torch.manual_seed(cfg.seed)
    out_dim = _label_dim(first, cfg.target)
    model = build_model(cfg, first.contexts.shape[1], out_dim,
                        first.contexts.shape[2])
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    positions = torch.as_tensor(first.positions, dtype=torch.long)

    per_phase = max(1, cfg.steps // len(datasets))
    trace = []
    step = 0
    model.train()
    for phase, ds in enumerate(datasets):
        n_steps = cfg.steps - per_phase * (len(datasets) - 1) \
            if phase == len(datasets) - 1 else per_phase
        ctx_all = torch.from_numpy(ds.contexts)
        lab_all = torch.from_numpy(ds.labels(cfg.target))
        for idx in batches(ds, cfg.batch_size, n_steps, cfg.seed + phase):
            length = cfg.context_length_at(step, ds.N)
            out = model(ctx_all[idx])                      # (b, cols, out)
            preds = out[:, positions[:length], :]
            labels = lab_all[idx][:, :length, :]
            loss = torch.mean((preds - labels) ** 2)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            trace.append(loss.item())
            if log_every and step % log_every == 0:
                print(f"step {step:6d} phase {phase} length {length:3d} "
                      f"loss {trace[-1]:.5f}")
            step += 1
    return model, trace


def save_checkpoint(path: str, model, cfg: TrainConfig, trace: list[float],
                    meta: dict | None = None) -> None:
    """Atomic checkpoint write (tmp file + rename) plus a JSON loss trace."""
    payload = {"config": cfg.to_dict(), "state_dict": model.state_dict(),
               "steps_completed": len(trace),
               "model_shape": {"in_rows": model.in_rows,
                               "out_dim": model.out_dim,
                               "max_len": model.max_len},
               "meta": meta or {}}
    tmp = f"{path}.tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)
    with open(f"{path}.loss.json", "w") as fh:
        json.dump({"steps": len(trace), "loss": trace}, fh)


def load_checkpoint(path: str):
    payload = torch.load(path, weights_only=False)
    cfg = TrainConfig.from_dict(payload["config"])
    shape = payload["model_shape"]
    model = build_model(cfg, shape["in_rows"], shape["out_dim"],
                        shape["max_len"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, cfg, payload
