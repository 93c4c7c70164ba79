"""Data models for training-run bookkeeping."""

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Optional


class RunStatus(str, Enum):
    """Status of a training run."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    INTERRUPTED = "interrupted"
    FAILED = "failed"


@dataclass
class StepRecord:
    """Metrics of one optimizer step."""
    step: int
    loss: float
    level_losses: list[float] = field(default_factory=list)
    lr: float = 0.0
    wall_clock: float = 0.0
    throughput: float = 0.0  # videos per second

    @staticmethod
    def csv_header(levels: int) -> list[str]:
        return (
            ["step", "loss"]
            + [f"loss_l{level}" for level in range(levels)]
            + ["lr", "wall_clock", "throughput"]
        )

    def csv_row(self) -> list[str]:
        return (
            [str(self.step), f"{self.loss:.8g}"]
            + [f"{x:.8g}" for x in self.level_losses]
            + [f"{self.lr:.8g}", f"{self.wall_clock:.4f}", f"{self.throughput:.4f}"]
        )

    @classmethod
    def from_csv(cls, row: dict[str, str]) -> "StepRecord":
        levels = sorted(
            (k for k in row if k.startswith("loss_l")), key=lambda k: int(k[len("loss_l"):])
        )
        return cls(
            step=int(row["step"]),
            loss=float(row["loss"]),
            level_losses=[float(row[k]) for k in levels],
            lr=float(row["lr"]),
            wall_clock=float(row["wall_clock"]),
            throughput=float(row["throughput"]),
        )


@dataclass
class CheckpointRecord:
    """A checkpoint written during a run."""
    step: int
    path: str
    written_at: datetime = field(default_factory=datetime.now)

    def to_dict(self) -> dict:
        return {"step": self.step, "path": self.path, "written_at": self.written_at.isoformat()}

    @classmethod
    def from_dict(cls, data: dict) -> "CheckpointRecord":
        return cls(
            step=data["step"],
            path=data["path"],
            written_at=datetime.fromisoformat(data["written_at"]),
        )


@dataclass
class TrainingRun:
    """Everything the run directory remembers between invocations."""
    name: str
    config_hash: str
    status: RunStatus = RunStatus.PENDING
    started_at: datetime = field(default_factory=datetime.now)
    updated_at: datetime = field(default_factory=datetime.now)
    ended_at: Optional[datetime] = None
    steps_completed: int = 0
    target_steps: int = 0
    checkpoints: list[CheckpointRecord] = field(default_factory=list)
    last_loss: Optional[float] = None
    error: Optional[str] = None

    @property
    def last_checkpoint(self) -> Optional[CheckpointRecord]:
        return max(self.checkpoints, key=lambda c: c.step) if self.checkpoints else None

    @property
    def progress(self) -> float:
        return self.steps_completed / self.target_steps if self.target_steps else 1.0

    @property
    def duration_seconds(self) -> Optional[float]:
        if self.ended_at:
            return (self.ended_at - self.started_at).total_seconds()
        return None

    def add_checkpoint(self, step: int, path: str) -> CheckpointRecord:
        record = CheckpointRecord(step, path)
        self.checkpoints = [c for c in self.checkpoints if c.step != step] + [record]
        self.updated_at = datetime.now()
        return record

    def mark_running(self, target_steps: int) -> None:
        self.status = RunStatus.RUNNING
        self.target_steps = target_steps
        self.ended_at = None
        self.error = None
        self.updated_at = datetime.now()

    def mark_finished(self, status: RunStatus, error: Optional[str] = None) -> None:
        self.status = status
        self.error = error
        self.ended_at = datetime.now()
        self.updated_at = self.ended_at

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "status": self.status.value,
            "started_at": self.started_at.isoformat(),
            "updated_at": self.updated_at.isoformat(),
            "ended_at": self.ended_at.isoformat() if self.ended_at else None,
            "steps_completed": self.steps_completed,
            "target_steps": self.target_steps,
            "checkpoints": [c.to_dict() for c in self.checkpoints],
            "last_loss": self.last_loss,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingRun":
        run = cls(
            name=data["name"],
            config_hash=data["config_hash"],
            status=RunStatus(data.get("status", "pending")),
            started_at=datetime.fromisoformat(data["started_at"]),
            updated_at=datetime.fromisoformat(data["updated_at"]),
            ended_at=datetime.fromisoformat(data["ended_at"]) if data.get("ended_at") else None,
            steps_completed=data.get("steps_completed", 0),
            target_steps=data.get("target_steps", 0),
            last_loss=data.get("last_loss"),
            error=data.get("error"),
        )
        run.checkpoints = [CheckpointRecord.from_dict(c) for c in data.get("checkpoints", [])]
        return run

    def get_summary(self) -> dict:
        last = self.last_checkpoint
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "status": self.status.value,
            "steps_completed": self.steps_completed,
            "target_steps": self.target_steps,
            "progress_percent": round(self.progress * 100, 1),
            "last_loss": self.last_loss,
            "last_checkpoint": last.path if last else None,
            "error": self.error,
        }
