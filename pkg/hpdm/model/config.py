"""Denoiser architecture settings."""

import math
from dataclasses import dataclass, field
from typing import Sequence

Dims = tuple[int, int, int]

CONTEXT_MODES = ("all", "immediate")


@dataclass
class DenoiserConfig:
    """Architecture of the joint multi-level denoiser.

    ``num_levels_per_block[b]`` is how many pyramid levels (counted from the
    coarsest) block ``b`` processes.
    """

    num_blocks: int = 6
    num_latents: int = 32
    latent_dim: int = 128
    token_dim: int = 64
    heads: int = 4
    head_dim: int = 32
    tokenizer: Dims = (1, 2, 2)
    num_levels_per_block: list[int] = field(default_factory=lambda: [1, 1, 2, 2, 3, 3])
    num_classes: int = 4
    channels: int = 3
    mlp_ratio: int = 4
    compute_depth: int = 2
    fourier_bands: int = 16
    context_mode: str = "all"
    use_coords: bool = True
    detach_context: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "DenoiserConfig":
        config = cls()
        for key, value in data.items():
            if not hasattr(config, key):
                raise KeyError(key)
            if key == "tokenizer":
                value = tuple(int(v) for v in value)
            elif key == "num_levels_per_block":
                value = [int(v) for v in value]
            setattr(config, key, value)
        return config

    def to_dict(self) -> dict:
        return {
            "num_blocks": self.num_blocks,
            "num_latents": self.num_latents,
            "latent_dim": self.latent_dim,
            "token_dim": self.token_dim,
            "heads": self.heads,
            "head_dim": self.head_dim,
            "tokenizer": list(self.tokenizer),
            "num_levels_per_block": list(self.num_levels_per_block),
            "num_classes": self.num_classes,
            "channels": self.channels,
            "mlp_ratio": self.mlp_ratio,
            "compute_depth": self.compute_depth,
            "fourier_bands": self.fourier_bands,
            "context_mode": self.context_mode,
            "use_coords": self.use_coords,
            "detach_context": self.detach_context,
        }

    @property
    def fused_width(self) -> int:
        """Channels entering the fusion projection: tokens, context, coordinates."""
        return 2 * self.token_dim + 3

    def validate(self, levels: int, patch: Sequence[int]) -> list[str]:
        """Check the architecture against a pyramid of ``levels`` with ``patch`` dims."""
        errors = []
        positive = (
            "num_blocks", "num_latents", "latent_dim", "token_dim", "heads",
            "head_dim", "num_classes", "channels", "mlp_ratio", "fourier_bands",
        )
        for name in positive:
            if getattr(self, name) < 1:
                errors.append(f"denoiser.{name}: must be positive")
        if self.compute_depth < 0:
            errors.append("denoiser.compute_depth: must be non-negative")

        load = list(self.num_levels_per_block)
        if len(load) != self.num_blocks:
            errors.append(
                f"denoiser.num_levels_per_block: has {len(load)} entries, "
                f"expected num_blocks = {self.num_blocks}"
            )
        if any(b < a for a, b in zip(load, load[1:])):
            errors.append("denoiser.num_levels_per_block: must be non-decreasing")
        if load and any(n < 1 or n > levels for n in load):
            errors.append(f"denoiser.num_levels_per_block: entries must lie in [1, {levels}]")
        if load and load[-1] != levels:
            errors.append(
                f"denoiser.num_levels_per_block: last entry must equal the level count {levels}"
            )

        if len(self.tokenizer) != 3 or any(t < 1 for t in self.tokenizer):
            errors.append(f"denoiser.tokenizer: must be three positive dims, got {self.tokenizer}")
        elif any(r % t for r, t in zip(patch, self.tokenizer)):
            errors.append(
                f"denoiser.tokenizer: patch {tuple(patch)} is not divisible by {self.tokenizer}"
            )
        if self.context_mode not in CONTEXT_MODES:
            errors.append(
                f"denoiser.context_mode: must be one of {', '.join(CONTEXT_MODES)}"
            )
        return errors

    def token_grid(self, patch: Sequence[int]) -> Dims:
        return tuple(r // t for r, t in zip(patch, self.tokenizer))  # type: ignore[return-value]

    def level_passes(self, levels: int) -> int:
        """(block, level) applications per pyramid forward pass."""
        return sum(min(n, levels) for n in self.num_levels_per_block)

    def parameter_count(self, levels: int) -> int:
        """Analytic trainable-parameter count of the denoiser."""
        d, D, n = self.token_dim, self.latent_dim, self.num_latents
        inner = self.heads * self.head_dim
        voxel = self.channels * math.prod(self.tokenizer)
        hidden_tok = d * self.mlp_ratio
        hidden_lat = D * self.mlp_ratio

        def linear(i: int, o: int) -> int:
            return i * o + o

        def attention(q: int, kv: int) -> int:
            return q * inner + 2 * kv * inner + linear(inner, q)

        def mlp(width: int, hidden: int) -> int:
            return linear(width, hidden) + linear(hidden, width)

        norm_tok, norm_lat = 2 * d, 2 * D
        tokenizer = (
            linear(voxel, d)
            + linear(2 * self.fourier_bands, d)
            + linear(d, d)
            + (self.num_classes + 1) * d
            + levels * n * D
            + linear(d, D)
        )
        fusion = linear(self.fused_width, d)
        block = (
            norm_lat + norm_tok + attention(D, d)
            + self.compute_depth * (norm_lat + attention(D, D) + norm_lat + mlp(D, hidden_lat))
            + norm_tok + norm_lat + attention(d, D)
            + norm_tok + mlp(d, hidden_tok)
        )
        detokenizer = norm_tok + linear(d, voxel)
        return tokenizer + fusion + self.num_blocks * block + detokenizer
