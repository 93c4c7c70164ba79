"""HPDM CLI - train, sample, benchmark and inspect hierarchical patch diffusion models."""

from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Iterator, Optional

import typer

from . import __version__
from .bench import BENCH_MODES, run_bench
from .config import DEFAULT_CONFIG_NAME, RunConfig, default_config
from .data.frames import export_frames
from .data.synthetic import VideoRecord
from .data.video_io import read_video, write_video
from .diffusion.schedule import sigma_grid
from .errors import ConfigError, DataError, HPDMError, UnknownClassError
from .geometry.coords import format_dims
from .geometry.tiles import OVERLAP_CHOICES
from .model import HPDMDenoiser, build_denoiser
from .numerics.checkpoint import Checkpoint, read_checkpoint, restore
from .numerics.runtime import configure_threads
from .runner import TrainingSession
from .state.identity import ArtifactKind, detect_artifact, hash_text
from .state.store import RunStore
from .tiled.cache import read_spill
from .tiled.inference import generate
from .tiled.manifest import Manifest, read_manifest, write_manifest
from .tiled.seams import overlap_ablation
from .ui import setup_logging, ui

app = typer.Typer(
    name="hpdm",
    help="HPDM - Hierarchical patch diffusion for video",
    add_completion=False,
    no_args_is_help=True,
)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        ui.console.print(f"HPDM v{__version__}")
        raise typer.Exit()


@app.callback()
def main_options(
    verbose: bool = typer.Option(
        False, "--verbose", "-v",
        help="Verbose logging",
    ),
    version: bool = typer.Option(
        False, "--version",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
) -> None:
    setup_logging(verbose)


@contextmanager
def reported_errors() -> Iterator[None]:
    """Turn HPDM errors into an error panel and the matching exit code."""
    try:
        yield
    except HPDMError as e:
        ui.print_error(str(e).splitlines()[0], None)
        if isinstance(e, ConfigError):
            for error in e.errors:
                ui.console.print(f"  [red]-[/red] {error}")
        raise typer.Exit(e.exit_code)


def _load_config(path: str) -> RunConfig:
    return RunConfig.load(path)


def _config_rows(config: RunConfig) -> list[tuple[str, str]]:
    spec = config.spec
    return [
        ("Pyramid", f"{spec.levels} levels, patch {format_dims(spec.patch)}, "
                    f"full {format_dims(spec.full)}"),
        ("Blocks", f"{config.denoiser.num_blocks} x load "
                   f"{','.join(str(n) for n in config.denoiser.num_levels_per_block)}"),
        ("Widths", f"tokens {config.denoiser.token_dim}, latents "
                   f"{config.denoiser.num_latents}x{config.denoiser.latent_dim}"),
        ("Parameters", f"{config.denoiser.parameter_count(spec.levels):,}"),
        ("Output", config.run.output_dir),
        ("Config hash", config.config_hash()),
    ]


@app.command()
def init(
    path: str = typer.Option(
        DEFAULT_CONFIG_NAME, "--config", "-c",
        help="Where to write the config",
    ),
    force: bool = typer.Option(
        False, "--force",
        help="Overwrite an existing config",
    ),
) -> None:
    """
    Write a default desk-scale run config.

    A 3-level 16x32x32 pyramid over 4x8x8 patches with six blocks and
    load 1,1,2,2,3,3, trained on the synthetic moving-shapes dataset.
    """
    target = Path(path)
    if target.exists() and not force:
        ui.console.print(f"[yellow]{target} already exists[/yellow] (use --force to overwrite)")
        raise typer.Exit(0)
    config = default_config()
    config.save(target)
    ui.print_status(f"Created config: {target}")
    ui.console.print("\nNext steps:")
    ui.console.print(f"  1. Edit [cyan]{target}[/cyan]")
    ui.console.print(f"  2. Run [cyan]hpdm train --config {target}[/cyan]")


@app.command()
def train(
    config_path: str = typer.Option(
        DEFAULT_CONFIG_NAME, "--config", "-c",
        help="Run config file",
    ),
    steps: Optional[int] = typer.Option(
        None, "--steps", "-n",
        help="Stop after this many optimizer steps (default train.steps)",
    ),
    resume: bool = typer.Option(
        False, "--resume", "-r",
        help="Continue from the latest checkpoint in the run directory",
    ),
    log_every: Optional[int] = typer.Option(
        None, "--log-every",
        help="Steps between status lines and metrics flushes",
    ),
    deterministic: bool = typer.Option(
        False, "--deterministic",
        help="Single-threaded bitwise-reproducible mode",
    ),
) -> None:
    """Train the joint pyramid denoiser; writes checkpoints and metrics.csv."""
    with reported_errors():
        config = _load_config(config_path)
        if deterministic:
            config = replace(config, run=replace(config.run, deterministic=True))
        if steps is not None and steps < 0:
            raise ConfigError("invalid option", ["--steps: must be non-negative"])

        ui.print_banner()
        ui.print_config(_config_rows(config))
        session = TrainingSession(config, resume=resume, steps=steps, log_every=log_every)
        run = session.run()
        summary = run.get_summary()
        ui.print_summary("Run", [
            ("Status", summary["status"]),
            ("Steps", f"{summary['steps_completed']}/{summary['target_steps']}"),
            ("Last loss", "-" if summary["last_loss"] is None else f"{summary['last_loss']:.4f}"),
            ("Last checkpoint", str(summary["last_checkpoint"])),
            ("Metrics", str(session.store.metrics_file)),
        ])


def _checkpoint_config(checkpoint: Checkpoint, path: Path) -> RunConfig:
    if not checkpoint.config_text:
        raise DataError(f"{path} carries no config text")
    if hash_text(checkpoint.config_text) != checkpoint.config_hash:
        raise DataError(f"{path}: stored config does not match its hash")
    return RunConfig.from_text(checkpoint.config_text).check()


def _restored_model(config: RunConfig, checkpoint: Checkpoint, use_ema: bool) -> HPDMDenoiser:
    configure_threads(config.run.effective_threads, config.run.deterministic)
    model = build_denoiser(config.denoiser, config.spec, seed=config.run.seed)
    restore(checkpoint, model, use_ema=use_ema)
    return model


def _dump_sigmas(config: RunConfig) -> str:
    lines = []
    for level in range(config.spec.levels):
        grid = sigma_grid(config.sampler, config.schedule, level)
        values = " ".join(repr(float(s)) for s in grid)
        lines.append(f"level {level} steps {len(grid) - 1}: {values}")
    return "\n".join(lines) + "\n"


@app.command()
def sample(
    checkpoint_path: str = typer.Argument(..., help="Checkpoint file"),
    label: int = typer.Option(
        0, "--class", "-k",
        help="Class id to generate",
    ),
    seed: int = typer.Option(
        0, "--seed", "-s",
        help="Sampling seed",
    ),
    overlap: Optional[str] = typer.Option(
        None, "--overlap",
        help=f"Overlapped axes: {', '.join(OVERLAP_CHOICES)} (default tiled.overlap)",
    ),
    out: Optional[str] = typer.Option(
        None, "--out", "-o",
        help="Output directory (default <run>/samples/<class>_<seed>_<overlap>)",
    ),
    config_path: Optional[str] = typer.Option(
        None, "--config", "-c",
        help="Config whose sampler/tiled sections replace the checkpoint's",
    ),
    no_ema: bool = typer.Option(
        False, "--no-ema",
        help="Use raw instead of EMA weights",
    ),
    no_cache: bool = typer.Option(
        False, "--no-cache",
        help="Recompute parent activations per tile instead of caching them",
    ),
    dump_sigmas: bool = typer.Option(
        False, "--dump-sigmas",
        help="Also write the per-level sigma grids to sigmas.txt",
    ),
) -> None:
    """Generate one video by tiled coarse-to-fine sampling."""
    with reported_errors():
        path = Path(checkpoint_path)
        if not path.exists():
            raise DataError(f"checkpoint not found: {path}")
        checkpoint = read_checkpoint(path)
        config = _checkpoint_config(checkpoint, path)
        if config_path is not None:
            override = _load_config(config_path)
            if override.model_hash() != config.model_hash():
                raise ConfigError(
                    f"{config_path} is incompatible with {path}",
                    ["pyramid/denoiser sections differ from the checkpoint's config"],
                )
            config = replace(
                config, sampler=override.sampler, schedule=override.schedule, tiled=override.tiled
            )
        tiled = config.tiled
        if overlap is not None:
            tiled = replace(tiled, overlap=overlap)
        if no_cache:
            tiled = replace(tiled, use_cache=False)
        errors = tiled.validate()
        if errors:
            raise ConfigError("invalid sampling options", errors)
        if not 0 <= label < config.denoiser.num_classes:
            raise UnknownClassError(
                f"unknown class id {label}; valid ids are 0..{config.denoiser.num_classes - 1}"
            )

        model = _restored_model(config, checkpoint, use_ema=not no_ema)

        if out is not None:
            directory = Path(out)
            directory.mkdir(parents=True, exist_ok=True)
        else:
            store = RunStore(str(path.resolve().parent.parent))
            directory = store.sample_dir(f"class{label}_seed{seed}_{tiled.overlap}")

        ui.print_status(
            f"Sampling class {label}, seed {seed}, overlap {tiled.overlap}, "
            f"{'EMA' if not no_ema else 'raw'} weights"
        )
        video, manifest = generate(
            model,
            config.schedule,
            config.sampler,
            label=label,
            seed=seed,
            tiled=tiled,
            config_hash=checkpoint.config_hash,
            spill_dir=directory / "cache",
        )

        write_video(directory / "video.hpdmvid", VideoRecord(video, label, seed))
        write_manifest(directory / "manifest.txt", manifest)
        frames = []
        if video.shape[0] == 3:
            frames = export_frames(video, directory / "frames")
        else:
            ui.print_status(f"{video.shape[0]}-channel video; frame export skipped")
        if dump_sigmas:
            (directory / "sigmas.txt").write_text(_dump_sigmas(config), encoding="utf-8")

        ui.print_summary("Sample", [
            ("Video", str(directory / "video.hpdmvid")),
            ("Frames", f"{len(frames)} PPM files"),
            ("Tiles per level", " / ".join(str(n) for n in manifest.tile_counts)),
            ("Time", f"{manifest.total_ms / 1000.0:.2f}s"),
        ])


@app.command()
def seams(
    checkpoint_path: str = typer.Argument(..., help="Checkpoint file"),
    seeds: int = typer.Option(
        10, "--seeds",
        help="Number of sampling seeds (0..n-1)",
    ),
    overlap: str = typer.Option(
        "hw", "--overlap",
        help="Overlapped axes to compare against no overlap",
    ),
    label: int = typer.Option(
        0, "--class", "-k",
        help="Class id to generate",
    ),
) -> None:
    """Compare tile-seam sharpness with and without overlapped inference."""
    with reported_errors():
        path = Path(checkpoint_path)
        if not path.exists():
            raise DataError(f"checkpoint not found: {path}")
        if overlap not in OVERLAP_CHOICES or overlap == "none":
            raise ConfigError("invalid option", ["--overlap: must name at least one axis"])
        if seeds < 1:
            raise ConfigError("invalid option", ["--seeds: must be at least 1"])
        checkpoint = read_checkpoint(path)
        config = _checkpoint_config(checkpoint, path)
        if not 0 <= label < config.denoiser.num_classes:
            raise UnknownClassError(
                f"unknown class id {label}; valid ids are 0..{config.denoiser.num_classes - 1}"
            )
        model = _restored_model(config, checkpoint, use_ema=True)
        results = overlap_ablation(
            model, config.schedule, config.sampler, label, range(seeds), overlap, config.tiled
        )
        ui.print_table(
            f"Seam metric: none vs {overlap}",
            ["Seed", "No overlap", f"Overlap {overlap}", "Lower with overlap"],
            [(r.seed, f"{r.plain:.5f}", f"{r.overlapped:.5f}", "yes" if r.improved else "no")
             for r in results],
        )
        wins = sum(r.improved for r in results)
        ui.print_summary("Overlap ablation", [("Seeds improved", f"{wins}/{len(results)}")])


@app.command()
def sigmas(
    config_path: str = typer.Option(
        DEFAULT_CONFIG_NAME, "--config", "-c",
        help="Run config file",
    ),
    out: Optional[str] = typer.Option(
        None, "--out", "-o",
        help="Write the grids to this file instead of the terminal",
    ),
) -> None:
    """Print the per-level sampling sigma grids."""
    with reported_errors():
        config = _load_config(config_path)
        text = _dump_sigmas(config)
        if out:
            Path(out).write_text(text, encoding="utf-8")
            ui.print_status(f"Wrote {out}")
        else:
            ui.console.print(text, end="", markup=False, highlight=False)


@app.command()
def bench(
    config_path: str = typer.Option(
        DEFAULT_CONFIG_NAME, "--config", "-c",
        help="Run config file",
    ),
    mode: str = typer.Option(
        "adaptive", "--mode", "-m",
        help=f"What to compare: {', '.join(BENCH_MODES)}",
    ),
    batch_size: int = typer.Option(
        4, "--batch",
        help="Videos per timed forward+backward pass",
    ),
    repeats: int = typer.Option(
        5, "--repeats",
        help="Timed passes per configuration (median reported)",
    ),
    estimate_only: bool = typer.Option(
        False, "--estimate-only",
        help="Skip wall-clock timing",
    ),
) -> None:
    """Compare compute cost of adaptive load, patch sizes and the activation cache."""
    with reported_errors():
        if mode not in BENCH_MODES:
            choices = ", ".join(BENCH_MODES)
            raise ConfigError("invalid option", [f"--mode: must be one of {choices}"])
        config = _load_config(config_path)
        configure_threads(config.run.effective_threads, config.run.deterministic)
        report = run_bench(
            config, mode, batch_size=batch_size, repeats=repeats, measure=not estimate_only
        )

        rows = []
        for row in report.rows:
            rows.append((
                row.label,
                ",".join(str(n) for n in row.load),
                format_dims(row.patch),
                row.estimate.passes,
                f"{row.estimate.forward_flops / 1e6:.2f}",
                f"{row.estimate.train_flops / 1e6:.2f}",
                "-" if estimate_only else f"{row.seconds * 1000.0:.1f}",
                "-" if estimate_only else f"{row.videos_per_second:.2f}",
            ))
        ui.print_table(
            f"Bench: {mode}",
            ["Config", "Load", "Patch", "Passes", "Fwd MFLOP", "Train MFLOP", "ms", "videos/s"],
            rows,
        )
        if len(report.rows) == 2:
            ratios = report.ratio(0, 1)
            ui.print_summary(f"{report.rows[0].label} / {report.rows[1].label}", [
                ("Block passes", f"{ratios['passes']:.3f}"),
                ("Block FLOPs", f"{ratios['block_flops']:.3f}"),
                ("Train FLOPs", f"{ratios['train_flops']:.3f}"),
                ("Wall clock", "-" if estimate_only else f"{ratios['wall_clock']:.3f}"),
            ])


# -- inspect -------------------------------------------------------------------


def _inspect_checkpoint(path: Path) -> None:
    checkpoint = read_checkpoint(path)
    rows = [
        ("Kind", "checkpoint"),
        ("Global step", str(checkpoint.global_step)),
        ("Tensors", str(len(checkpoint.params))),
        ("Parameters", f"{checkpoint.parameter_count:,}"),
        ("Config hash", checkpoint.config_hash),
    ]
    if checkpoint.config_text:
        config = _checkpoint_config(checkpoint, path)
        analytic = config.denoiser.parameter_count(config.spec.levels)
        if analytic == checkpoint.parameter_count:
            match = "[green]match[/green]"
        else:
            match = "[red]MISMATCH[/red]"
        rows.append(("Analytic parameters", f"{analytic:,} ({match})"))
        rows.append(("Pyramid", f"{config.spec.levels} levels, patch "
                                f"{format_dims(config.spec.patch)}"))
        for level in range(config.spec.levels):
            grid = sigma_grid(config.sampler, config.schedule, level)
            steps = f"{len(grid) - 1} steps from {float(grid[0]):.3f}"
            rows.append((f"Level {level} sigmas", steps))
    ui.print_config(rows, title=path.name)
    ui.print_table(
        "Parameters",
        ["Name", "Shape"],
        [(name, "x".join(str(n) for n in t.shape)) for name, t in checkpoint.params.items()],
    )


def _inspect_video(path: Path) -> None:
    record = read_video(path)
    video = record.video
    ui.print_config([
        ("Kind", "video"),
        ("Class", str(record.label)),
        ("Shape (C, F, H, W)", "x".join(str(n) for n in video.shape)),
        ("Range", f"[{float(video.min()):.3f}, {float(video.max()):.3f}]"),
        ("Mean", f"{float(video.mean()):.4f}"),
    ], title=path.name)


def _inspect_manifest(path: Path) -> None:
    manifest: Manifest = read_manifest(path)
    ui.print_config([
        ("Kind", "manifest"),
        ("Config hash", manifest.config_hash),
        ("Seed", str(manifest.seed)),
        ("Class", str(manifest.label)),
        ("Pyramid", f"{manifest.levels} levels, patch {format_dims(manifest.patch)}, "
                    f"full {format_dims(manifest.full)}"),
        ("Overlap", manifest.overlap),
        ("Cache", "on" if manifest.use_cache else "off"),
        ("Total time", f"{manifest.total_ms:.1f} ms"),
    ], title=path.name)
    rows = []
    for record in manifest.records:
        rows.append((
            record.level,
            format_dims(record.canvas),
            record.steps,
            len(record.sigmas),
            "yes" if record.heun else "no",
            record.churn,
            len(record.tiles),
        ))
    ui.print_table(
        "Levels", ["Level", "Canvas", "Steps", "Sigma grid", "Heun", "Churn", "Tiles"], rows
    )


def _inspect_spill(path: Path) -> None:
    level, block, canvas = read_spill(path)
    ui.print_config([
        ("Kind", "cache spill"),
        ("Level", str(level)),
        ("Block", str(block)),
        ("Canvas", "x".join(str(n) for n in canvas.shape)),
    ], title=path.name)


def _inspect_config(path: Path) -> None:
    config = RunConfig.load(path)
    ui.print_config(_config_rows(config), title=path.name)


@app.command()
def inspect(
    path: str = typer.Argument(..., help="Checkpoint, video, manifest, cache spill or config"),
) -> None:
    """Summarize an artifact; exits nonzero if it is corrupt."""
    with reported_errors():
        target = Path(path)
        if not target.is_file():
            raise DataError(f"not a file: {target}")
        kind = detect_artifact(target)
        handlers = {
            ArtifactKind.CHECKPOINT: _inspect_checkpoint,
            ArtifactKind.VIDEO: _inspect_video,
            ArtifactKind.MANIFEST: _inspect_manifest,
            ArtifactKind.CACHE_SPILL: _inspect_spill,
            ArtifactKind.CONFIG: _inspect_config,
        }
        if kind is None:
            raise DataError(f"{target}: unrecognized file (no known magic bytes)")
        handlers[kind](target)


def main() -> None:
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
