"""Progress tracking for training runs."""

import time
from datetime import datetime
from typing import Callable, Optional

from .models import RunStatus, StepRecord, TrainingRun
from .store import RunStore


class MetricsTracker:
    """Records per-step metrics, writes them to metrics.csv and reports progress."""

    def __init__(
        self,
        store: RunStore,
        run: TrainingRun,
        levels: int,
        batch_size: int,
        on_progress: Optional[Callable[[dict], None]] = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.store = store
        self.run = run
        self.levels = levels
        self.batch_size = batch_size
        self.on_progress = on_progress
        self.clock = clock
        self.history: list[StepRecord] = []
        self._pending: list[StepRecord] = []
        self._started: Optional[float] = None
        self._last: Optional[float] = None
        self._elapsed_before = 0.0

    def start(self, target_steps: int, start_step: int = 0) -> None:
        """Begin (or resume) tracking at ``start_step``."""
        previous = [r for r in self.store.read_metrics() if r.step <= start_step]
        self.history = previous
        self._elapsed_before = previous[-1].wall_clock if previous else 0.0
        self._started = self._last = self.clock()
        self.run.steps_completed = start_step
        self.run.mark_running(target_steps)
        self.store.save(self.run)
        self._notify_progress("training_started", {
            "start_step": start_step,
            "target_steps": target_steps,
            "timestamp": datetime.now().isoformat(),
        })

    def record(self, step: int, loss: float, level_losses: list[float], lr: float) -> StepRecord:
        """Record the step that just finished; ``step`` counts completed updates."""
        now = self.clock()
        assert self._started is not None and self._last is not None, "start() not called"
        duration = max(now - self._last, 1e-9)
        record = StepRecord(
            step=step,
            loss=loss,
            level_losses=list(level_losses),
            lr=lr,
            wall_clock=self._elapsed_before + (now - self._started),
            throughput=self.batch_size / duration,
        )
        self._last = now
        self.history.append(record)
        self._pending.append(record)
        self.run.steps_completed = step
        self.run.last_loss = loss
        self._notify_progress("step", {"step": step, "loss": loss, "lr": lr})
        return record

    def flush(self) -> None:
        self.store.append_metrics(self._pending, self.levels)
        self._pending = []
        self.store.save(self.run)

    def checkpoint(self, step: int, path: str) -> None:
        self.flush()
        self.run.add_checkpoint(step, path)
        self.store.save(self.run)
        self._notify_progress("checkpoint_written", {"step": step, "path": path})

    def finish(self, status: RunStatus, error: Optional[str] = None) -> None:
        self.flush()
        self.run.mark_finished(status, error)
        self.store.save(self.run)
        self._notify_progress("training_ended", {
            "status": status.value,
            "error": error,
            "duration_seconds": self.run.duration_seconds,
        })

    def smoothed_loss(self, window: int = 25) -> Optional[float]:
        if not self.history:
            return None
        recent = self.history[-window:]
        return sum(r.loss for r in recent) / len(recent)

    def get_progress(self) -> dict:
        last = self.history[-1] if self.history else None
        return {
            "status": self.run.status.value,
            "steps_completed": self.run.steps_completed,
            "target_steps": self.run.target_steps,
            "progress_percent": round(self.run.progress * 100, 1),
            "loss": last.loss if last else None,
            "smoothed_loss": self.smoothed_loss(),
            "level_losses": list(last.level_losses) if last else [],
            "lr": last.lr if last else None,
            "throughput": last.throughput if last else None,
        }

    def _notify_progress(self, event: str, data: dict) -> None:
        if self.on_progress:
            self.on_progress({
                "event": event,
                "data": data,
                "progress": self.get_progress(),
            })

    def format_status_line(self) -> str:
        progress = self.get_progress()
        parts = [f"step {progress['steps_completed']}/{progress['target_steps']}"]
        if progress["loss"] is not None:
            parts.append(f"loss {progress['loss']:.4f}")
            levels = " ".join(f"{x:.3f}" for x in progress["level_losses"])
            parts.append(f"levels [{levels}]")
            parts.append(f"lr {progress['lr']:.2e}")
            parts.append(f"{progress['throughput']:.1f} videos/s")
        return " | ".join(parts)
