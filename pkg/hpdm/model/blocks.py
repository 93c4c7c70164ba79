"""Read-compute-write block over a token grid and a small latent set."""

import torch
from torch import nn

from ..numerics import kernels
from .config import DenoiserConfig
from .layers import Attention, FeedForward, LayerNorm


class ComputeLayer(nn.Module):
    """Latent self-attention followed by an MLP, both pre-norm residual."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        D = config.latent_dim
        self.norm_attn = LayerNorm(D)
        self.attn = Attention(D, D, config.heads, config.head_dim)
        self.norm_mlp = LayerNorm(D)
        self.mlp = FeedForward(D, config.mlp_ratio)

    def forward(self, latents: torch.Tensor) -> torch.Tensor:
        h = self.norm_attn(latents)
        latents = kernels.add(latents, self.attn(h, h))
        return kernels.add(latents, self.mlp(self.norm_mlp(latents)))


class RINBlock(nn.Module):
    """Latents read from tokens, think among themselves, then write back.

    There is no token-token attention. The write branch and the token MLP
    end in zero-initialized projections, so a fresh block returns its
    fused tokens unchanged.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        d, D = config.token_dim, config.latent_dim
        self.read_norm_latents = LayerNorm(D)
        self.read_norm_tokens = LayerNorm(d)
        self.read = Attention(D, d, config.heads, config.head_dim)
        self.compute = nn.ModuleList(ComputeLayer(config) for _ in range(config.compute_depth))
        self.write_norm_tokens = LayerNorm(d)
        self.write_norm_latents = LayerNorm(D)
        self.write = Attention(d, D, config.heads, config.head_dim, zero_init=True)
        self.token_norm = LayerNorm(d)
        self.token_mlp = FeedForward(d, config.mlp_ratio, zero_init=True)

    def forward(
        self, tokens: torch.Tensor, latents: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """tokens [B, N, d], latents [B, n, D] -> same shapes."""
        latents = kernels.add(
            latents,
            self.read(self.read_norm_latents(latents), self.read_norm_tokens(tokens)),
        )
        for layer in self.compute:
            latents = layer(latents)
        tokens = kernels.add(
            tokens,
            self.write(self.write_norm_tokens(tokens), self.write_norm_latents(latents)),
        )
        tokens = kernels.add(tokens, self.token_mlp(self.token_norm(tokens)))
        return tokens, latents
