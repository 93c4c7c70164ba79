"""Parameterized building blocks over the kernel catalog."""

import math

import torch
from einops import rearrange
from torch import nn

from ..numerics import kernels


class Linear(nn.Module):
    """Affine map with weight stored as [in, out].

    ``zero_init`` starts the layer at exactly zero output, which residual
    branches use to begin as the identity.
    """

    def __init__(self, in_dim: int, out_dim: int, bias: bool = True, zero_init: bool = False):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = nn.Parameter(torch.empty(in_dim, out_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim)) if bias else None
        if zero_init:
            nn.init.zeros_(self.weight)
        else:
            nn.init.normal_(self.weight, std=1.0 / math.sqrt(in_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return kernels.linear(x, self.weight, self.bias)


class LayerNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return kernels.layer_norm(x, self.weight, self.bias)


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: int = 4, zero_init: bool = False):
        super().__init__()
        self.fc1 = Linear(dim, dim * mult)
        self.fc2 = Linear(dim * mult, dim, zero_init=zero_init)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(kernels.gelu(self.fc1(x)))


class Attention(nn.Module):
    """Multi-head scaled dot-product attention from ``x`` onto ``context``."""

    def __init__(
        self,
        query_dim: int,
        context_dim: int,
        heads: int = 4,
        dim_head: int = 32,
        zero_init: bool = False,
    ):
        super().__init__()
        self.heads = heads
        inner = heads * dim_head
        self.to_q = Linear(query_dim, inner, bias=False)
        self.to_k = Linear(context_dim, inner, bias=False)
        self.to_v = Linear(context_dim, inner, bias=False)
        self.to_out = Linear(inner, query_dim, zero_init=zero_init)

    def forward(self, x: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        h = self.heads
        q = rearrange(self.to_q(x), "b n (h d) -> b h n d", h=h)
        k = rearrange(self.to_k(context), "b n (h d) -> b h n d", h=h)
        v = rearrange(self.to_v(context), "b n (h d) -> b h n d", h=h)
        out = kernels.attention(q, k, v)
        return self.to_out(rearrange(out, "b h n d -> b n (h d)"))


def fourier_features(values: torch.Tensor, bands: int) -> torch.Tensor:
    """[B] -> [B, 2*bands] sin/cos features at log-spaced frequencies."""
    freqs = torch.logspace(0.0, math.log10(64.0), steps=bands, dtype=values.dtype)
    angles = values[:, None] * freqs[None, :] * math.pi
    return torch.cat([angles.sin(), angles.cos()], dim=-1)
