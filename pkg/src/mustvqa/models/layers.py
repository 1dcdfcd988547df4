"""Transformer building blocks with explicit boolean attention masks."""

from __future__ import annotations

import math

import torch
from torch import nn


class Attention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def forward(self, x, context, allowed):
        """``allowed`` is a bool tensor (B, Lq, Lk); every row needs a True."""
        B, Lq, D = x.shape
        Lk = context.shape[1]
        h, dh = self.n_heads, D // self.n_heads
        q = self.q(x).view(B, Lq, h, dh).transpose(1, 2)
        k = self.k(context).view(B, Lk, h, dh).transpose(1, 2)
        v = self.v(context).view(B, Lk, h, dh).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(dh)
        scores = scores.masked_fill(~allowed[:, None], float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.o(out.transpose(1, 2).reshape(B, Lq, D))


class Block(nn.Module):
    """Pre-LayerNorm transformer layer, optionally with cross-attention."""

    def __init__(self, d_model: int, n_heads: int, ff_mult: int = 2, cross: bool = False):
        super().__init__()
        self.ln_self = nn.LayerNorm(d_model)
        self.self_attn = Attention(d_model, n_heads)
        self.cross = cross
        if cross:
            self.ln_cross = nn.LayerNorm(d_model)
            self.cross_attn = Attention(d_model, n_heads)
        self.ln_ff = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, ff_mult * d_model), nn.GELU(), nn.Linear(ff_mult * d_model, d_model)
        )

    def forward(self, x, allowed, memory=None, memory_allowed=None):
        h = self.ln_self(x)
        x = x + self.self_attn(h, h, allowed)
        if self.cross:
            x = x + self.cross_attn(self.ln_cross(x), memory, memory_allowed)
        return x + self.ff(self.ln_ff(x))


def init_parameters(module: nn.Module, generator: torch.Generator, std: float = 0.02) -> None:
    """normal(0, std) weights, zero biases, unit LayerNorm; PAD rows zeroed."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.normal_(m.weight, 0.0, std, generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Embedding):
            nn.init.normal_(m.weight, 0.0, std, generator=generator)
            if m.padding_idx is not None:
                with torch.no_grad():
                    m.weight[m.padding_idx].zero_()
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def self_allowed(valid: torch.Tensor) -> torch.Tensor:
    """Keys restricted to valid positions; each query may also see itself."""
    L = valid.shape[1]
    eye = torch.eye(L, dtype=torch.bool, device=valid.device)
    return valid[:, None, :].expand(-1, L, -1) | eye


def masked_mean(x: torch.Tensor, mask: torch.Tensor, dim: int) -> torch.Tensor:
    w = mask.to(x.dtype).unsqueeze(-1)
    return (x * w).sum(dim) / w.sum(dim).clamp_min(1.0)

