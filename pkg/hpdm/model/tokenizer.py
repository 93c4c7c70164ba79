"""Patch tokenizer/detokenizer and the noise + class conditioning embedding."""

import math
from typing import Optional

import torch
from einops import rearrange
from torch import nn

from ..errors import ShapeError, UnknownClassError
from ..numerics import kernels
from .config import DenoiserConfig, Dims
from .layers import LayerNorm, Linear, fourier_features


class Tokenizer(nn.Module):
    """Linear voxel-block embedding plus conditioning.

    Every token of a patch receives the same conditioning vector, the sum
    of an MLP over Fourier features of the noise level and a learned class
    embedding. Class index ``num_classes`` is the null (dropped) label.
    """

    def __init__(self, config: DenoiserConfig, levels: int, patch: Dims):
        super().__init__()
        self.config = config
        self.patch = tuple(patch)
        self.grid = config.token_grid(patch)
        d, D = config.token_dim, config.latent_dim
        voxel = config.channels * math.prod(config.tokenizer)
        self.embed = Linear(voxel, d)
        self.noise_in = Linear(2 * config.fourier_bands, d)
        self.noise_out = Linear(d, d)
        self.class_table = nn.Parameter(torch.randn(config.num_classes + 1, d) * 0.02)
        self.latents = nn.Parameter(torch.randn(levels, config.num_latents, D) * 0.02)
        self.latent_cond = Linear(d, D)

    @property
    def null_class(self) -> int:
        return self.config.num_classes

    def conditioning(self, noise_level: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        """[B] noise levels and [B] class ids -> [B, d]."""
        labels = labels.long()
        if bool(((labels < 0) | (labels > self.null_class)).any()):
            bad = labels[(labels < 0) | (labels > self.null_class)][0].item()
            raise UnknownClassError(
                f"unknown class id {bad}; valid ids are 0..{self.null_class - 1}"
            )
        dtype = self.class_table.dtype
        features = fourier_features(noise_level.to(dtype), self.config.fourier_bands)
        noise = self.noise_out(kernels.gelu(self.noise_in(features)))
        return kernels.add(noise, self.class_table[labels])

    def patchify(self, patch: torch.Tensor) -> torch.Tensor:
        if tuple(patch.shape[2:]) != self.patch:
            expected = (patch.shape[0], patch.shape[1], *self.patch)
            raise ShapeError("tokenize", patch.shape, expected)
        tf, th, tw = self.config.tokenizer
        return rearrange(
            patch, "b c (f tf) (h th) (w tw) -> b (f h w) (c tf th tw)", tf=tf, th=th, tw=tw
        )

    def forward(
        self,
        patch: torch.Tensor,
        noise_level: torch.Tensor,
        labels: torch.Tensor,
        level: int,
        cond: Optional[torch.Tensor] = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Return (tokens [B, N, d], latents [B, n, D]) for one pyramid level."""
        if cond is None:
            cond = self.conditioning(noise_level, labels)
        tokens = kernels.add(self.embed(self.patchify(patch)), cond[:, None, :])
        base = self.latents[level].unsqueeze(0)
        latents = kernels.add(base, self.latent_cond(cond)[:, None, :])
        return tokens, latents


class Detokenizer(nn.Module):
    """Per-token linear map back to a voxel block, then unpatchify."""

    def __init__(self, config: DenoiserConfig, patch: Dims):
        super().__init__()
        self.config = config
        self.grid = config.token_grid(patch)
        voxel = config.channels * math.prod(config.tokenizer)
        self.norm = LayerNorm(config.token_dim)
        self.proj = Linear(config.token_dim, voxel, zero_init=True)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        gf, gh, gw = self.grid
        tf, th, tw = self.config.tokenizer
        out = self.proj(self.norm(tokens))
        return rearrange(
            out,
            "b (f h w) (c tf th tw) -> b c (f tf) (h th) (w tw)",
            f=gf, h=gh, w=gw, tf=tf, th=th, tw=tw,
        )
