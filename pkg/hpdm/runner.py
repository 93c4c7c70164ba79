"""Training session: the step loop, checkpoints, metrics and graceful interruption."""

import logging
import signal
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional

import torch

from .config import RunConfig
from .data.synthetic import load_tensors
from .diffusion.training import training_step
from .errors import ConfigError, NumericError
from .model import HPDMDenoiser, build_denoiser
from .numerics.checkpoint import read_checkpoint, restore, save_checkpoint
from .numerics.optim import OptimizerState
from .numerics.rng import stream
from .numerics.runtime import configure_threads
from .state.models import RunStatus, TrainingRun
from .state.store import RunStore
from .state.tracker import MetricsTracker
from .ui import ui

logger = logging.getLogger(__name__)


def build_optimizer(config: RunConfig, model: HPDMDenoiser) -> OptimizerState:
    """AdamW + EMA for ``model``; the LR schedule always spans ``train.steps``."""
    optim = config.optim
    return OptimizerState(
        model,
        schedule=optim.schedule(config.train.steps),
        weight_decay=optim.weight_decay,
        betas=(optim.beta1, optim.beta2),
        eps=optim.eps,
        ema_decay=optim.ema_decay,
        grad_clip=optim.grad_clip,
    )


def batch_indices(seed: int, step: int, dataset_size: int, batch_size: int) -> torch.Tensor:
    """Dataset rows used at ``step``; a function of (seed, step) only."""
    rng = stream(seed, "batch", step)
    replace = batch_size > dataset_size
    return torch.from_numpy(rng.choice(dataset_size, size=batch_size, replace=replace))


class TrainingSession:
    """Manages one invocation of the training loop.

    ``steps`` caps how far this invocation trains (default ``train.steps``);
    with ``resume`` the latest checkpoint in the run directory is restored
    first, so stopping at step 100 and resuming to 200 retraces the
    uninterrupted run exactly in deterministic mode.
    """

    def __init__(
        self,
        config: RunConfig,
        resume: bool = False,
        steps: Optional[int] = None,
        log_every: Optional[int] = None,
        on_progress: Optional[Callable[[dict], None]] = None,
    ):
        self.config = config
        self.resume = resume
        self.target_steps = config.train.steps if steps is None else steps
        self.log_every = log_every or config.train.log_every
        self.on_progress = on_progress
        self.store = RunStore(config.run.output_dir)
        self.config_text = config.to_text()
        self.config_hash = config.config_hash()
        self.model: Optional[HPDMDenoiser] = None
        self.optimizer: Optional[OptimizerState] = None
        self.tracker: Optional[MetricsTracker] = None
        self.start_step = 0
        self.start_time: Optional[datetime] = None
        self._interrupted = False
        self._previous_handlers: dict[int, object] = {}

    # -- signals ---------------------------------------------------------------

    def _setup_signal_handlers(self) -> None:
        """Set up signal handlers for graceful shutdown."""
        def handler(_signum, _frame):
            self._interrupted = True

        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                self._previous_handlers[sig] = signal.signal(sig, handler)
            except ValueError:
                # not in the main thread; interruption then relies on interrupt()
                pass

    def _restore_signal_handlers(self) -> None:
        """Put back the handlers replaced by _setup_signal_handlers."""
        for sig, previous in self._previous_handlers.items():
            signal.signal(sig, previous)  # type: ignore[arg-type]
        self._previous_handlers.clear()

    def interrupt(self) -> None:
        """Ask the loop to stop after the current step."""
        self._interrupted = True

    # -- setup -----------------------------------------------------------------

    def prepare(self) -> None:
        """Build the model, optimizer and data; restore a checkpoint when resuming."""
        config = self.config
        configure_threads(config.run.effective_threads, config.run.deterministic)
        self.model = build_denoiser(config.denoiser, config.spec, seed=config.run.seed)
        self.optimizer = build_optimizer(config, self.model)
        self.videos, self.labels = load_tensors(
            config.data, config.train.dataset_size, config.spec
        )

        run = self.store.get_or_create_run(Path(config.run.output_dir).name, self.config_hash)
        latest = self.store.latest_checkpoint() if self.resume else None
        if latest is not None:
            self._resume_from(latest)
            run = self.store.load() or run
        elif self.resume:
            logger.warning("no checkpoint in %s; starting from scratch", self.store.root)

        self.store.save_config(self.config_text)
        self.store.truncate_metrics(self.start_step)
        self.tracker = MetricsTracker(
            self.store,
            run,
            levels=config.train.active_levels or config.spec.levels,
            batch_size=config.train.batch_size,
            on_progress=self.on_progress,
        )

    def _resume_from(self, path: Path) -> None:
        """Restore model and optimizer state from ``path``."""
        assert self.model is not None and self.optimizer is not None
        checkpoint = read_checkpoint(path)
        stored = RunConfig.from_text(checkpoint.config_text) if checkpoint.config_text else None
        if stored is None or stored.model_hash() != self.config.model_hash():
            raise ConfigError(
                f"{path} was written for a different model configuration",
                ["pyramid/denoiser sections differ from the checkpoint's config"],
            )
        restore(checkpoint, self.model, self.optimizer)
        self.start_step = self.optimizer.global_step
        ui.print_status(f"Resumed from {path.name} at step {self.start_step}")

    # -- checkpoints -------------------------------------------------------------

    def save(self, step: int) -> Path:
        """Write a checkpoint for ``step`` and record it."""
        assert self.model is not None and self.tracker is not None
        path = self.store.checkpoint_path(step)
        save_checkpoint(path, self.model, self.optimizer, self.config_hash, self.config_text)
        self.tracker.checkpoint(step, str(path))
        ui.print_checkpoint(step, str(path))
        return path

    # -- main loop -------------------------------------------------------------

    def run(self) -> TrainingRun:
        """Train up to ``target_steps``; returns the run record."""
        if self.model is None:
            self.prepare()
        assert self.model is not None and self.optimizer is not None
        assert self.tracker is not None
        config = self.config
        tracker = self.tracker

        self._setup_signal_handlers()
        self.start_time = datetime.now()
        ui.start_session(self.target_steps)
        tracker.start(self.target_steps, self.start_step)
        if self.start_step == 0 and not self.store.list_checkpoints():
            self.save(0)

        step = self.start_step
        try:
            while step < self.target_steps and not self._interrupted:
                rows = batch_indices(
                    config.run.seed, step, config.train.dataset_size, config.train.batch_size
                )
                result = training_step(
                    self.model,
                    self.optimizer,
                    self.videos[rows],
                    self.labels[rows],
                    config.schedule,
                    seed=config.run.seed,
                    step=step,
                    cond_dropout=config.train.cond_dropout,
                    snap_offsets=config.pyramid.snap_offsets,
                    active_levels=config.train.active_levels,
                )
                step += 1
                tracker.record(step, result.loss, result.level_losses, result.lr)
                if step % self.log_every == 0:
                    tracker.flush()
                    ui.print_step(tracker.format_status_line())
                if step % config.train.checkpoint_every == 0 or step == self.target_steps:
                    self.save(step)
        except NumericError as e:
            # parameters of the last checkpoint stay on disk untouched
            tracker.finish(RunStatus.FAILED, str(e))
            raise
        finally:
            self._restore_signal_handlers()

        if self._interrupted:
            if not any(s == step for s, _ in self.store.list_checkpoints()):
                self.save(step)
            tracker.finish(RunStatus.INTERRUPTED)
            ui.print_interrupted(step)
        else:
            tracker.finish(RunStatus.COMPLETED)
            ui.print_training_complete(step - self.start_step, self.start_time)
        return tracker.run
