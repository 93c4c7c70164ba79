"""Level-by-level tiled generation with overlapped prediction averaging.

Every level is sampled over its whole canvas, but the network only ever
sees patch-sized tiles. Predictions of overlapping tiles are averaged per
voxel (accumulate, then divide by coverage). Once a level is clean, one
extra pass at ``sigma_min`` records each block's input tokens, which are
stitched into full-canvas token grids and cached for the levels above.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import torch

from ..diffusion.precondition import combine, precondition
from ..diffusion.sampler import run_sampler
from ..diffusion.schedule import NoiseSchedule, SamplerConfig, sigma_grid
from ..errors import GeometryError, ShapeError
from ..geometry.coords import FULL, Dims, PatchCoords, frame_queries, recompute_coords
from ..geometry.tiles import OVERLAP_CHOICES, TilePlan, format_overlap, parse_overlap, plan_tiles
from ..model.denoiser import ContextFn, HPDMDenoiser
from ..model.fusion import tokens_to_grid
from ..numerics.rng import torch_generator
from .cache import ActivationCache
from .manifest import LevelRecord, Manifest

logger = logging.getLogger(__name__)

CacheSource = Callable[[], Optional[ActivationCache]]


def _as_bool(value: object) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class TiledConfig:
    """Tiling and caching knobs for generation."""

    overlap: str = "hw"
    tile_batch: int = 8
    use_cache: bool = True
    cache_budget_mb: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "TiledConfig":
        config = cls()
        for key, value in data.items():
            if key == "overlap":
                config.overlap = str(value).strip().lower()
            elif key == "tile_batch":
                config.tile_batch = int(value)
            elif key == "use_cache":
                config.use_cache = _as_bool(value)
            elif key == "cache_budget_mb":
                config.cache_budget_mb = float(value)
            else:
                raise KeyError(key)
        return config

    def to_dict(self) -> dict:
        return {
            "overlap": self.overlap,
            "tile_batch": self.tile_batch,
            "use_cache": self.use_cache,
            "cache_budget_mb": self.cache_budget_mb,
        }

    def validate(self) -> list[str]:
        errors = []
        if self.overlap not in OVERLAP_CHOICES:
            errors.append(f"tiled.overlap: must be one of {', '.join(OVERLAP_CHOICES)}")
        if self.tile_batch < 1:
            errors.append("tiled.tile_batch: must be at least 1")
        if self.cache_budget_mb < 0:
            errors.append("tiled.cache_budget_mb: must be non-negative (0 = unlimited)")
        return errors

    @property
    def budget_bytes(self) -> int:
        return int(self.cache_budget_mb * 2**20)


@dataclass
class LevelCanvas:
    """A level's full-resolution pixel canvas and the tiles that cover it."""

    level: int
    x: torch.Tensor
    plan: TilePlan
    sigma_index: int = 0


def fuse_tile_predictions(predictions: torch.Tensor, plan: TilePlan) -> torch.Tensor:
    """Per-voxel mean of every tile covering that voxel.

    predictions: [T, C, r_f, r_h, r_w] in plan order -> [C, *plan.canvas].
    """
    if predictions.shape[0] != plan.count or tuple(predictions.shape[2:]) != plan.patch:
        raise ShapeError(
            "fuse_tile_predictions",
            predictions.shape,
            (plan.count, predictions.shape[1], *plan.patch),
        )
    if bool((plan.coverage == 0).any()):
        raise GeometryError(f"tile plan for level {plan.level} leaves voxels uncovered")
    value = torch.zeros(
        (predictions.shape[1], *plan.canvas), dtype=predictions.dtype
    )
    for i in range(plan.count):
        value[(slice(None), *plan.slices(i))] += predictions[i]
    return value / plan.coverage.to(predictions.dtype)


def token_plan(plan: TilePlan, tokenizer: Dims) -> TilePlan:
    """The same tiling expressed on the token lattice."""
    canvas = tuple(n // t for n, t in zip(plan.canvas, tokenizer))
    grid = tuple(r // t for r, t in zip(plan.patch, tokenizer))
    tokens = plan_tiles(canvas, grid, plan.overlap, plan.level)  # type: ignore[arg-type]
    expected = [tuple(o // t for o, t in zip(origin, tokenizer)) for origin in plan.origins]
    if tokens.origins != expected:
        raise GeometryError(f"tile strides {plan.strides} do not align with tokens {tokenizer}")
    return tokens


class TiledSampler:
    """Generates one video level by level, keeping the parent-activation cache."""

    def __init__(
        self,
        model: HPDMDenoiser,
        schedule: NoiseSchedule,
        sampler: SamplerConfig,
        tiled: Optional[TiledConfig] = None,
        label: int = 0,
        seed: int = 0,
        spill_dir: Optional[Path] = None,
    ):
        self.model = model
        self.spec = model.spec
        self.schedule = schedule
        self.sampler = sampler
        self.tiled = tiled or TiledConfig()
        self.overlap = parse_overlap(self.tiled.overlap)
        self.label = label
        self.seed = seed
        self.cache = ActivationCache(self.tiled.budget_bytes, spill_dir)
        self.clean: list[torch.Tensor] = []
        self.records: list[LevelRecord] = []
        if sampler.guidance_scale != 1.0:
            logger.warning("guidance_scale=%s is not applied", sampler.guidance_scale)

    # -- geometry --------------------------------------------------------------

    def plan(self, level: int) -> TilePlan:
        plan = plan_tiles(self.spec.canvas(level), self.spec.patch, self.overlap, level)
        tokenizer = self.model.config.tokenizer
        for axis, (stride, t) in enumerate(zip(plan.strides, tokenizer)):
            if stride % t:
                raise GeometryError(
                    f"tile stride {stride} on axis {'fhw'[axis]} is not a multiple of "
                    f"the tokenizer size {t}"
                )
        return plan

    def canvas_grid(self, level: int) -> Dims:
        return tuple(  # type: ignore[return-value]
            n // t for n, t in zip(self.spec.canvas(level), self.model.config.tokenizer)
        )

    # -- tile evaluation ---------------------------------------------------------

    def context_fn(
        self, cache: Optional[ActivationCache], coords: Sequence[PatchCoords], level: int
    ) -> ContextFn:
        """Parent context for a batch of tiles, read from cached level canvases."""
        parents = self.model.context_parents(level)
        queries = {
            k: torch.stack([
                frame_queries(recompute_coords(c, FULL), self.model.grid, self.canvas_grid(k))
                for c in coords
            ])
            for k in parents
        }

        def context(block: int, level: int) -> Optional[torch.Tensor]:
            if not parents:
                return None
            if cache is None:
                raise GeometryError(f"level {level} needs cached parents, none available")
            samples = [cache.query(k, block, queries[k]) for k in parents]
            return torch.stack(samples).mean(dim=0)

        return context

    def run_tiles(
        self,
        level: int,
        x: torch.Tensor,
        sigma: float,
        plan: TilePlan,
        cache_source: CacheSource,
        record: bool = False,
    ) -> tuple[torch.Tensor, dict[int, torch.Tensor]]:
        """D(tile; sigma) for every tile of ``plan``, in batches of ``tile_batch``.

        With ``record`` the block-input token grids [T, d, g_f, g_h, g_w] are
        returned keyed by block.
        """
        coords = plan.coords()
        outputs: list[torch.Tensor] = []
        recorded: dict[int, list[torch.Tensor]] = {
            b: [] for b in self.model.blocks_for_level(level)
        }
        size = self.tiled.tile_batch
        for start in range(0, plan.count, size):
            batch = list(range(start, min(start + size, plan.count)))
            tiles = torch.stack([x[(slice(None), *plan.slices(i))] for i in batch])
            batch_coords = [coords[i] for i in batch]
            net_in, c_skip, c_out, c_noise = precondition(tiles, sigma, self.schedule.sigma_data)
            labels = torch.full((len(batch),), self.label, dtype=torch.long)
            state = self.model.tokenize(
                net_in, c_noise.reshape(1).expand(len(batch)), labels, batch_coords, level
            )
            blocks: Optional[dict[int, torch.Tensor]] = {} if record else None
            raw = self.model.forward_level(
                state, level, self.context_fn(cache_source(), batch_coords, level), blocks
            )
            outputs.append(combine(tiles, raw, c_skip, c_out))
            for b, tokens in (blocks or {}).items():
                recorded[b].append(tokens_to_grid(tokens, self.model.grid))
        stacked = {b: torch.cat(grids) for b, grids in recorded.items() if grids}
        return torch.cat(outputs), stacked

    # -- cache -----------------------------------------------------------------

    def stitch_level(
        self,
        level: int,
        x0: torch.Tensor,
        plan: TilePlan,
        cache_source: CacheSource,
        target: ActivationCache,
    ) -> None:
        """Clean pass at sigma_min; store every block's stitched input tokens."""
        _, recorded = self.run_tiles(
            level, x0, self.schedule.sigma_min, plan, cache_source, record=True
        )
        tokens = token_plan(plan, self.model.config.tokenizer)
        for block, grids in recorded.items():
            target.store(level, block, fuse_tile_predictions(grids, tokens))

    def recompute_cache(self, level: int) -> ActivationCache:
        """Rebuild parent activations for ``level`` from the clean lower canvases."""
        cache = ActivationCache()
        for k in range(level):
            self.stitch_level(k, self.clean[k], self.plan(k), lambda: cache, cache)
        return cache

    def cache_source(self, level: int) -> CacheSource:
        if level == 0:
            return lambda: None
        if self.tiled.use_cache:
            return lambda: self.cache
        return lambda: self.recompute_cache(level)

    # -- sampling --------------------------------------------------------------

    @torch.no_grad()
    def sample_level(self, level: int) -> torch.Tensor:
        """Sample level ``level`` to sigma = 0 and cache its activations."""
        if len(self.clean) != level:
            raise GeometryError(
                f"level {level} requested after {len(self.clean)} completed levels"
            )
        for k in range(level):
            for b in self.model.blocks_for_level(level):
                if self.tiled.use_cache and not self.cache.has(k, b):
                    raise GeometryError(f"cache is missing level {k}, block {b}")

        plan = self.plan(level)
        sigmas = sigma_grid(self.sampler, self.schedule, level)
        generator = torch_generator(self.seed, "sample", level)
        channels = self.model.config.channels
        canvas = LevelCanvas(
            level,
            torch.randn((channels, *plan.canvas), generator=generator) * float(sigmas[0]),
            plan,
        )
        source = self.cache_source(level)
        heun = level in self.sampler.heun_levels
        churn = self.sampler.churn if level == 0 else 0.0
        record = LevelRecord(
            level=level,
            canvas=plan.canvas,
            heun=heun,
            churn=churn,
            sigmas=[float(s) for s in sigmas],
            tiles=plan.coords(),
        )

        def denoise(x: torch.Tensor, sigma: float) -> torch.Tensor:
            tiles, _ = self.run_tiles(level, x, sigma, plan, source)
            return fuse_tile_predictions(tiles, plan)

        last = time.perf_counter()

        def on_step(index: int, sigma: float) -> None:
            nonlocal last
            now = time.perf_counter()
            record.step_ms.append((now - last) * 1000.0)
            canvas.sigma_index = index + 1
            last = now
            logger.debug("level %d step %d sigma=%.4g", level, index, sigma)

        canvas.x = run_sampler(
            canvas.x,
            sigmas,
            denoise,
            heun=heun,
            churn=churn,
            s_tmin=self.sampler.s_tmin,
            s_tmax=self.sampler.s_tmax,
            s_noise=self.sampler.s_noise,
            generator=generator,
            on_step=on_step,
        )
        self.clean.append(canvas.x)
        if self.tiled.use_cache and level < self.spec.depth:
            self.stitch_level(level, canvas.x, plan, source, self.cache)
        self.records.append(record)
        logger.info(
            "level %d: %d tiles, %d steps, %.1f ms",
            level, plan.count, record.steps, sum(record.step_ms),
        )
        return canvas.x

    @torch.no_grad()
    def generate(self) -> torch.Tensor:
        """All levels in order; returns the native-resolution video [C, F, H, W]."""
        self.model.eval()
        video = None
        for level in range(self.spec.levels):
            video = self.sample_level(level)
        assert video is not None
        return video

    def manifest(self, config_hash: str = "0" * 16, total_ms: float = 0.0) -> Manifest:
        return Manifest(
            config_hash=config_hash,
            seed=self.seed,
            label=self.label,
            levels=self.spec.levels,
            patch=self.spec.patch,
            full=self.spec.full,
            overlap=format_overlap(self.overlap),
            use_cache=self.tiled.use_cache,
            records=list(self.records),
            total_ms=total_ms,
        )

    def close(self) -> None:
        self.cache.close()


def generate(
    model: HPDMDenoiser,
    schedule: NoiseSchedule,
    sampler: SamplerConfig,
    label: int,
    seed: int,
    tiled: Optional[TiledConfig] = None,
    config_hash: str = "0" * 16,
    spill_dir: Optional[Path] = None,
) -> tuple[torch.Tensor, Manifest]:
    """Generate one video and describe how it was made."""
    runner = TiledSampler(model, schedule, sampler, tiled, label, seed, spill_dir)
    start = time.perf_counter()
    try:
        video = runner.generate()
    finally:
        runner.close()
    total_ms = (time.perf_counter() - start) * 1000.0
    return video, runner.manifest(config_hash, total_ms)
