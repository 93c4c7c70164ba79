"""Joint multi-level denoiser with deep context fusion and adaptive computation."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import torch
from torch import nn

from ..errors import ConfigError, ShapeError
from ..geometry.coords import Dims, PatchCoords, PyramidSpec
from .blocks import RINBlock
from .config import DenoiserConfig
from .fusion import ContextFusion, coordinate_tokens, sample_parent, tokens_to_grid
from .tokenizer import Detokenizer, Tokenizer

logger = logging.getLogger(__name__)

# (block index, level) -> averaged parent context [B, N, d], or None at level 0
ContextFn = Callable[[int, int], Optional[torch.Tensor]]


@dataclass
class LevelState:
    """Activations of one pyramid level between blocks."""

    tokens: torch.Tensor
    latents: torch.Tensor
    coords: list[PatchCoords]
    coord_tokens: torch.Tensor


class HPDMDenoiser(nn.Module):
    """Shared-weight denoiser applied jointly to every level of a patch pyramid.

    Block ``b`` only processes levels ``< num_levels_per_block[b]``. Before
    each block a level is fused with the block-input activations of the
    levels below it, so level ``l`` depends on levels ``<= l`` only.
    """

    def __init__(self, config: DenoiserConfig, spec: PyramidSpec):
        super().__init__()
        errors = config.validate(spec.levels, spec.patch) + spec.validate()
        if errors:
            raise ConfigError("invalid denoiser configuration", errors)
        self.config = config
        self.spec = spec
        self.grid: Dims = config.token_grid(spec.patch)
        self.tokenizer = Tokenizer(config, spec.levels, spec.patch)
        self.fusion = ContextFusion(config)
        self.blocks = nn.ModuleList(RINBlock(config) for _ in range(config.num_blocks))
        self.detokenizer = Detokenizer(config, spec.patch)

    @property
    def load(self) -> list[int]:
        return list(self.config.num_levels_per_block)

    def blocks_for_level(self, level: int) -> list[int]:
        """Indices of the blocks that process ``level``."""
        return [b for b, n in enumerate(self.load) if level < n]

    def context_parents(self, level: int) -> list[int]:
        if level == 0:
            return []
        if self.config.context_mode == "immediate":
            return [level - 1]
        return list(range(level))

    # -- single-level pieces -------------------------------------------------

    def tokenize(
        self,
        patch: torch.Tensor,
        noise_level: torch.Tensor,
        labels: torch.Tensor,
        coords: Sequence[PatchCoords],
        level: int,
    ) -> LevelState:
        """Embed a batch of level-``level`` patches (already input-scaled)."""
        if len(coords) != patch.shape[0]:
            raise ShapeError("tokenize", patch.shape, (len(coords),), detail="coords per sample")
        tokens, latents = self.tokenizer(patch, noise_level, labels, level)
        coord_tokens = coordinate_tokens(coords, self.grid, tokens.dtype)
        return LevelState(tokens, latents, list(coords), coord_tokens)

    def apply_block(
        self, index: int, state: LevelState, context: Optional[torch.Tensor]
    ) -> LevelState:
        fused = self.fusion(state.tokens, context, state.coord_tokens)
        tokens, latents = self.blocks[index](fused, state.latents)
        return LevelState(tokens, latents, state.coords, state.coord_tokens)

    def detokenize(self, state: LevelState) -> torch.Tensor:
        return self.detokenizer(state.tokens)

    def pyramid_context(
        self, level: int, states: Sequence[LevelState], block_inputs: Sequence[torch.Tensor]
    ) -> Optional[torch.Tensor]:
        """Mean of parent block-input grids sampled at ``level``'s token centers."""
        parents = self.context_parents(level)
        if not parents:
            return None
        samples = []
        for k in parents:
            parent = block_inputs[k]
            if self.config.detach_context:
                parent = parent.detach()
            samples.append(
                sample_parent(
                    tokens_to_grid(parent, self.grid),
                    states[level].coords,
                    states[k].coords,
                    self.grid,
                )
            )
        return torch.stack(samples).mean(dim=0)

    # -- full passes ---------------------------------------------------------

    def forward_pyramid(
        self,
        inputs: Sequence[torch.Tensor],
        noise_levels: Sequence[torch.Tensor],
        labels: torch.Tensor,
        coords: Sequence[Sequence[PatchCoords]],
    ) -> list[torch.Tensor]:
        """Predict every level of a (possibly truncated) pyramid.

        inputs[l]: [B, C, r_f, r_h, r_w]; noise_levels[l]: [B];
        coords[l]: one PatchCoords per batch element.
        """
        levels = len(inputs)
        if levels < 1 or levels > self.spec.levels:
            raise ShapeError("forward_pyramid", (levels,), (self.spec.levels,), detail="levels")
        states = [
            self.tokenize(inputs[l], noise_levels[l], labels, coords[l], l)
            for l in range(levels)
        ]
        for b, n in enumerate(self.load):
            active = min(n, levels)
            block_inputs = [s.tokens for s in states[:active]]
            for l in range(active):
                context = self.pyramid_context(l, states, block_inputs)
                states[l] = self.apply_block(b, states[l], context)
        return [self.detokenize(s) for s in states]

    def forward_level(
        self,
        state: LevelState,
        level: int,
        context_fn: ContextFn,
        record: Optional[dict[int, torch.Tensor]] = None,
    ) -> torch.Tensor:
        """Run one level with externally supplied parent context.

        ``context_fn(b, level)`` returns the averaged parent context for block
        ``b``. When ``record`` is given, the block-input tokens of every block
        that processes this level are stored into it keyed by block index.
        """
        for b in self.blocks_for_level(level):
            if record is not None:
                record[b] = state.tokens.detach()
            state = self.apply_block(b, state, context_fn(b, level))
        return self.detokenize(state)

    def level_passes(self, levels: Optional[int] = None) -> int:
        return self.config.level_passes(self.spec.levels if levels is None else levels)
