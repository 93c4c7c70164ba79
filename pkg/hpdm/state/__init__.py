"""Run directories, training records and metrics tracking."""

from .identity import ArtifactKind, detect_artifact, hash_text
from .models import CheckpointRecord, RunStatus, StepRecord, TrainingRun
from .store import RunStore
from .tracker import MetricsTracker

__all__ = [
    "ArtifactKind",
    "CheckpointRecord",
    "MetricsTracker",
    "RunStatus",
    "RunStore",
    "StepRecord",
    "TrainingRun",
    "detect_artifact",
    "hash_text",
]
