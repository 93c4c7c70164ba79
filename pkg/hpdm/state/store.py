"""Run directory persistence."""

import csv
import io
import json
import logging
import re
from pathlib import Path
from typing import Optional

from ..numerics.records import write_atomic
from .models import StepRecord, TrainingRun

logger = logging.getLogger(__name__)

CHECKPOINT_PATTERN = re.compile(r"^ckpt_(\d+)\.hpdm$")


class RunStore:
    """Manages the files of one training run.

    Directory structure:
        <output_dir>/
            config.cfg
            run.json
            metrics.csv
            checkpoints/
                ckpt_<step>.hpdm
            samples/
    """

    CONFIG_FILE = "config.cfg"
    STATE_FILE = "run.json"
    METRICS_FILE = "metrics.csv"
    CHECKPOINT_DIR = "checkpoints"
    SAMPLES_DIR = "samples"

    def __init__(self, output_dir: str):
        self.root = Path(output_dir).resolve()
        self.config_file = self.root / self.CONFIG_FILE
        self.state_file = self.root / self.STATE_FILE
        self.metrics_file = self.root / self.METRICS_FILE
        self.checkpoint_dir = self.root / self.CHECKPOINT_DIR
        self.samples_dir = self.root / self.SAMPLES_DIR
        self._run: Optional[TrainingRun] = None

    def ensure_dirs(self) -> Path:
        """Ensure the run directory and its subdirectories exist."""
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        self.samples_dir.mkdir(parents=True, exist_ok=True)
        return self.root

    # -- run record ----------------------------------------------------------------

    def exists(self) -> bool:
        """Check if the run state file exists."""
        return self.state_file.exists()

    def load(self) -> Optional[TrainingRun]:
        """Load the run record from disk."""
        if not self.state_file.exists():
            return None
        try:
            with open(self.state_file) as f:
                self._run = TrainingRun.from_dict(json.load(f))
            return self._run
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            logger.warning("could not load run state %s: %s", self.state_file, e)
            return None

    def save(self, run: Optional[TrainingRun] = None) -> None:
        """Save the run record to disk."""
        if run is not None:
            self._run = run
        if self._run is None:
            return
        self.ensure_dirs()
        text = json.dumps(self._run.to_dict(), indent=2)
        write_atomic(self.state_file, text.encode("utf-8"))

    def get_or_create_run(self, name: str, config_hash: str) -> TrainingRun:
        """Get the stored run if its config hash matches, else start a new one."""
        existing = self.load() if self.exists() else None
        if existing is not None and existing.config_hash == config_hash:
            return existing
        self._run = TrainingRun(name=name, config_hash=config_hash)
        return self._run

    # -- config --------------------------------------------------------------------

    def save_config(self, text: str) -> None:
        """Write the resolved config text."""
        self.ensure_dirs()
        write_atomic(self.config_file, text.encode("utf-8"))

    def load_config_text(self) -> Optional[str]:
        """Read the stored config text, if any."""
        if not self.config_file.exists():
            return None
        return self.config_file.read_text(encoding="utf-8")

    # -- checkpoints ---------------------------------------------------------------

    def checkpoint_path(self, step: int) -> Path:
        """Path of the checkpoint written at ``step``."""
        return self.checkpoint_dir / f"ckpt_{step:06d}.hpdm"

    def list_checkpoints(self) -> list[tuple[int, Path]]:
        """All (step, path) checkpoints, oldest first."""
        if not self.checkpoint_dir.exists():
            return []
        found = []
        for path in self.checkpoint_dir.iterdir():
            match = CHECKPOINT_PATTERN.match(path.name)
            if match:
                found.append((int(match.group(1)), path))
        return sorted(found)

    def latest_checkpoint(self) -> Optional[Path]:
        """Most recent checkpoint, if any."""
        checkpoints = self.list_checkpoints()
        return checkpoints[-1][1] if checkpoints else None

    # -- metrics -------------------------------------------------------------------

    def append_metrics(self, records: list[StepRecord], levels: int) -> None:
        """Append rows to metrics.csv, writing the header for a new file."""
        if not records:
            return
        self.ensure_dirs()
        new_file = not self.metrics_file.exists()
        with open(self.metrics_file, "a", newline="") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(StepRecord.csv_header(levels))
            for record in records:
                writer.writerow(record.csv_row())

    def read_metrics(self) -> list[StepRecord]:
        """Parse metrics.csv back into step records."""
        if not self.metrics_file.exists():
            return []
        with open(self.metrics_file, newline="") as f:
            return [StepRecord.from_csv(row) for row in csv.DictReader(f)]

    def truncate_metrics(self, last_step: int) -> None:
        """Drop rows after ``last_step`` so a resumed run does not duplicate them."""
        if not self.metrics_file.exists():
            return
        with open(self.metrics_file, newline="") as f:
            rows = list(csv.reader(f))
        if not rows:
            return
        kept = [rows[0]] + [r for r in rows[1:] if r and int(r[0]) <= last_step]
        buffer = io.StringIO()
        csv.writer(buffer).writerows(kept)
        write_atomic(self.metrics_file, buffer.getvalue().encode("utf-8"))

    # -- samples -------------------------------------------------------------------

    def sample_dir(self, name: str) -> Path:
        """Create and return a directory under samples/."""
        path = self.samples_dir / name
        path.mkdir(parents=True, exist_ok=True)
        return path
