"""A small decoder-only transformer over prompt-matrix columns.

Each column of the context matrix is one token; a linear layer embeds the
column into the model width, learned positional embeddings are added, and
a stack of pre-norm causal self-attention blocks with GeLU feed-forwards
follows. A linear head reads a regression output at every position; the
training loss only touches the target positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class TrainConfig:
    """Architecture and optimization settings.

    The reference scale is 16 layers / 4 heads / width 512 with Adam at
    1e-4 on batches of 64; the defaults here are the toy scale used in the
    tests. ``curriculum_scale`` multiplies every curriculum step count
    (context length grows by +2 every ``2000 * curriculum_scale`` steps
    from 10 until it reaches the dataset's horizon).
    """

    layers: int = 2
    heads: int = 2
    d_model: int = 64
    lr: float = 1e-4
    batch_size: int = 64
    steps: int = 3000
    scheme: str = "scalar"
    target: str = "observation"       # or "state"
    seed: int = 0
    curriculum: bool = False
    curriculum_scale: float = 1.0
    curriculum_start: int = 10
    curriculum_increment: int = 2
    curriculum_period: int = 2000

    def __post_init__(self):
        if min(self.layers, self.heads, self.d_model, self.batch_size) < 1:
            raise ValueError("layers, heads, d_model, batch_size must be >= 1")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.target not in ("observation", "state"):
            raise ValueError(f"unknown target {self.target!r}")

    def context_length_at(self, step: int, cap: int) -> int:
        if not self.curriculum:
            return cap
        period = max(1, int(round(self.curriculum_period * self.curriculum_scale)))
        value = self.curriculum_start + self.curriculum_increment * (step // period)
        return min(cap, value)

    def to_dict(self) -> dict:
        return self.__dict__.copy()

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class Block(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)
        self.ff = nn.Sequential(nn.Linear(d_model, 4 * d_model), nn.GELU(),
                                nn.Linear(4 * d_model, d_model))
        self.heads = heads

    def forward(self, x):
        b, t, d = x.shape
        h = self.ln1(x)
        q, k, v = self.qkv(h).split(d, dim=2)
        q = q.view(b, t, self.heads, d // self.heads).transpose(1, 2)
        k = k.view(b, t, self.heads, d // self.heads).transpose(1, 2)
        v = v.view(b, t, self.heads, d // self.heads).transpose(1, 2)
        a = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        a = a.transpose(1, 2).reshape(b, t, d)
        x = x + self.proj(a)
        x = x + self.ff(self.ln2(x))
        return x


class ColumnTransformer(nn.Module):
    """Maps a (batch, rows, cols) context matrix to a per-column regression
    output of dimension ``out_dim``."""

    def __init__(self, in_rows: int, out_dim: int, max_len: int,
                 cfg: TrainConfig):
        super().__init__()
        self.embed = nn.Linear(in_rows, cfg.d_model)
        self.pos = nn.Embedding(max_len, cfg.d_model)
        self.blocks = nn.ModuleList(Block(cfg.d_model, cfg.heads)
                                    for _ in range(cfg.layers))
        self.ln = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, out_dim)
        self.in_rows = in_rows
        self.out_dim = out_dim
        self.max_len = max_len

    def forward(self, ctx: torch.Tensor) -> torch.Tensor:
        # ctx: (batch, rows, cols) -> tokens are columns
        x = ctx.transpose(1, 2)                      # (batch, cols, rows)
        t = x.shape[1]
        x = self.embed(x) + self.pos(torch.arange(t, device=x.device))
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln(x))                 # (batch, cols, out_dim)


def build_model(cfg: TrainConfig, in_rows: int, out_dim: int,
                max_len: int) -> ColumnTransformer:
    torch.manual_seed(cfg.seed)
    return ColumnTransformer(in_rows, out_dim, max_len, cfg)
