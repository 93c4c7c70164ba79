"""Cost model and wall-clock benchmarks for adaptive computation, patch size and caching."""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import torch

from .config import RunConfig
from .diffusion.training import joint_loss, make_batch
from .errors import ConfigError
from .geometry.coords import PyramidSpec, format_dims
from .model import build_denoiser
from .model.config import DenoiserConfig
from .numerics.autodiff import backward
from .numerics.rng import stream, torch_generator
from .tiled.inference import generate

logger = logging.getLogger(__name__)

BENCH_MODES = ("adaptive", "no-adaptive", "patch-size", "cache")

# a backward pass costs about twice its forward pass
BACKWARD_FACTOR = 2


def flat_load(config: DenoiserConfig, levels: int) -> list[int]:
    """Every block processes every level."""
    return [levels] * config.num_blocks


def pass_macs(config: DenoiserConfig, patch: tuple[int, int, int]) -> int:
    """Multiply-accumulates of one (block, level) application, fusion included."""
    N = math.prod(config.token_grid(patch))
    n, d, D = config.num_latents, config.token_dim, config.latent_dim
    inner = config.heads * config.head_dim

    def attention(q_len: int, q_dim: int, kv_len: int, kv_dim: int) -> int:
        projections = q_len * q_dim * inner + 2 * kv_len * kv_dim * inner + q_len * inner * q_dim
        return projections + 2 * q_len * kv_len * inner

    fusion = N * config.fused_width * d
    read = attention(n, D, N, d)
    compute = config.compute_depth * (
        attention(n, D, n, D) + 2 * n * D * D * config.mlp_ratio
    )
    write = attention(N, d, n, D)
    token_mlp = 2 * N * d * d * config.mlp_ratio
    return fusion + read + compute + write + token_mlp


def level_io_macs(config: DenoiserConfig, patch: tuple[int, int, int]) -> int:
    """Tokenizer and detokenizer cost for one level."""
    N = math.prod(config.token_grid(patch))
    voxel = config.channels * math.prod(config.tokenizer)
    return 2 * N * voxel * config.token_dim


@dataclass
class FlopEstimate:
    passes: int
    block_flops: int
    io_flops: int

    @property
    def forward_flops(self) -> int:
        return self.block_flops + self.io_flops

    @property
    def train_flops(self) -> int:
        return self.forward_flops * (1 + BACKWARD_FACTOR)


def estimate_flops(
    config: DenoiserConfig, spec: PyramidSpec, levels: Optional[int] = None
) -> FlopEstimate:
    """Analytic forward FLOPs (2 per MAC) of one pyramid sample."""
    levels = spec.levels if levels is None else levels
    passes = config.level_passes(levels)
    return FlopEstimate(
        passes=passes,
        block_flops=2 * passes * pass_macs(config, spec.patch),
        io_flops=2 * levels * level_io_macs(config, spec.patch),
    )


def time_training_pass(
    config: RunConfig,
    batch_size: int = 4,
    repeats: int = 5,
    warmup: int = 1,
    seed: int = 0,
) -> float:
    """Median wall-clock seconds of one joint forward + backward pass."""
    spec = config.spec
    model = build_denoiser(config.denoiser, spec, seed)
    model.train()
    generator = torch_generator(seed, "bench-videos")
    videos = torch.randn((batch_size, config.denoiser.channels, *spec.full), generator=generator)
    labels = torch.zeros(batch_size, dtype=torch.long)
    timings = []
    for i in range(warmup + repeats):
        batch = make_batch(
            videos,
            labels,
            spec,
            config.schedule,
            rng=stream(seed, "bench", i),
            generator=torch_generator(seed, "bench-noise", i),
            null_class=model.tokenizer.null_class,
        )
        model.zero_grad(set_to_none=True)
        start = time.perf_counter()
        loss, _ = joint_loss(
            model, batch.patches, batch.coords, batch.sigmas, batch.labels, batch.noise,
            config.schedule.sigma_data,
        )
        backward(loss)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            timings.append(elapsed)
    timings.sort()
    return timings[len(timings) // 2]


def time_generation(config: RunConfig, repeats: int = 3, seed: int = 0) -> float:
    """Median wall-clock seconds to generate one video with the configured tiling."""
    model = build_denoiser(config.denoiser, config.spec, seed)
    model.eval()
    timings = []
    for i in range(repeats):
        start = time.perf_counter()
        generate(model, config.schedule, config.sampler, 0, seed + i, config.tiled)
        timings.append(time.perf_counter() - start)
    timings.sort()
    return timings[len(timings) // 2]


@dataclass
class BenchRow:
    label: str
    load: list[int]
    patch: tuple[int, int, int]
    estimate: FlopEstimate
    seconds: float = 0.0
    batch_size: int = 1

    @property
    def videos_per_second(self) -> float:
        return self.batch_size / self.seconds if self.seconds > 0 else math.inf


@dataclass
class BenchReport:
    mode: str
    rows: list[BenchRow] = field(default_factory=list)

    def ratio(self, numerator: int = 0, denominator: int = 1) -> dict[str, float]:
        """Cost of row ``numerator`` over row ``denominator``."""
        a, b = self.rows[numerator], self.rows[denominator]
        return {
            "passes": a.estimate.passes / b.estimate.passes,
            "block_flops": a.estimate.block_flops / b.estimate.block_flops,
            "train_flops": a.estimate.train_flops / b.estimate.train_flops,
            "wall_clock": a.seconds / b.seconds if b.seconds > 0 else math.nan,
        }


def _with_load(config: RunConfig, load: list[int]) -> RunConfig:
    return replace(config, denoiser=replace(config.denoiser, num_levels_per_block=list(load)))


def _with_patch(config: RunConfig, patch: tuple[int, int, int]) -> RunConfig:
    factor = 2 ** (config.pyramid.levels - 1)
    full = tuple(r * factor for r in patch)
    pyramid = replace(config.pyramid, patch=patch, full=full)
    return replace(config, pyramid=pyramid, data=replace(config.data, resolution=full))


def smaller_patch(
    patch: tuple[int, int, int], tokenizer: tuple[int, int, int]
) -> tuple[int, int, int]:
    """Halve the voxel count along the longest axis that stays tokenizer-aligned."""
    for axis in sorted(range(3), key=lambda a: -patch[a]):
        half = patch[axis] // 2
        if patch[axis] % 2 == 0 and half % tokenizer[axis] == 0 and half > 0:
            dims = [half if a == axis else patch[a] for a in range(3)]
            return (dims[0], dims[1], dims[2])
    raise ConfigError(
        "patch-size comparison impossible",
        [f"pyramid.patch: {format_dims(patch)} has no axis that halves onto the tokenizer grid"],
    )


def run_bench(
    config: RunConfig,
    mode: str = "adaptive",
    batch_size: int = 4,
    repeats: int = 5,
    measure: bool = True,
) -> BenchReport:
    """Estimate (and optionally time) the configurations a mode compares.

    adaptive:    configured load vs flat load (ratios flat / adaptive)
    no-adaptive: flat load only
    patch-size:  configured patch vs half the voxels (ratios full / half)
    cache:       tiled generation recomputing parent activations vs caching them
                 (ratios recompute / cached; one video per timed run)
    """
    if mode not in BENCH_MODES:
        raise ValueError(f"unknown bench mode {mode!r}; choose one of {', '.join(BENCH_MODES)}")
    spec = config.spec
    flat = flat_load(config.denoiser, spec.levels)
    variants: list[tuple[str, RunConfig]] = []
    if mode == "adaptive":
        variants = [("flat", _with_load(config, flat)), ("adaptive", config)]
    elif mode == "no-adaptive":
        variants = [("flat", _with_load(config, flat))]
    elif mode == "cache":
        variants = [
            ("recompute", replace(config, tiled=replace(config.tiled, use_cache=False))),
            ("cached", replace(config, tiled=replace(config.tiled, use_cache=True))),
        ]
    else:
        half = smaller_patch(spec.patch, config.denoiser.tokenizer)
        variants = [("patch " + format_dims(spec.patch), config)]
        variants.append(("patch " + format_dims(half), _with_patch(config, half)))

    report = BenchReport(mode)
    for label, variant in variants:
        row = BenchRow(
            label=label,
            load=list(variant.denoiser.num_levels_per_block),
            patch=variant.spec.patch,
            estimate=estimate_flops(variant.denoiser, variant.spec),
            batch_size=1 if mode == "cache" else batch_size,
        )
        if measure and mode == "cache":
            row.seconds = time_generation(variant, repeats, seed=config.run.seed)
            logger.info("%s: %.4f s per generated video", label, row.seconds)
        elif measure:
            row.seconds = time_training_pass(variant, batch_size, repeats, seed=config.run.seed)
            logger.info("%s: %.4f s per forward+backward", label, row.seconds)
        report.rows.append(row)
    return report
