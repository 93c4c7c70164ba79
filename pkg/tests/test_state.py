"""Tests for run bookkeeping: records, the run directory and metrics tracking."""

from datetime import datetime, timedelta

import pytest
import torch

from hpdm.data.synthetic import VideoRecord
from hpdm.data.video_io import write_video
from hpdm.state.identity import ArtifactKind, detect_artifact, hash_text
from hpdm.state.models import CheckpointRecord, RunStatus, StepRecord, TrainingRun
from hpdm.state.store import RunStore
from hpdm.state.tracker import MetricsTracker
from hpdm.tiled.cache import write_spill


class FakeClock:
    def __init__(self, start: float = 100.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


# =============================================================================
# Records
# =============================================================================


class TestStepRecord:
    def test_csv_header(self):
        assert StepRecord.csv_header(2) == [
            "step", "loss", "loss_l0", "loss_l1", "lr", "wall_clock", "throughput",
        ]

    def test_csv_round_trip(self):
        record = StepRecord(3, 0.25, [0.5, 0.125], lr=0.001, wall_clock=1.5, throughput=4.0)
        row = dict(zip(StepRecord.csv_header(2), record.csv_row()))
        assert StepRecord.from_csv(row) == record

    def test_level_columns_sort_numerically(self):
        header = StepRecord.csv_header(11)
        row = {key: "0" for key in header}
        row["loss_l10"] = "10"
        row["loss_l2"] = "2"
        assert StepRecord.from_csv(row).level_losses[2] == 2.0
        assert StepRecord.from_csv(row).level_losses[10] == 10.0


class TestTrainingRun:
    def test_dict_round_trip(self):
        run = TrainingRun(name="tiny", config_hash="abc")
        run.mark_running(10)
        run.add_checkpoint(5, "ckpt_000005.hpdm")
        run.steps_completed = 5
        run.last_loss = 0.5
        run.mark_finished(RunStatus.INTERRUPTED)

        loaded = TrainingRun.from_dict(run.to_dict())

        assert loaded.to_dict() == run.to_dict()
        assert loaded.status is RunStatus.INTERRUPTED
        assert loaded.last_checkpoint.path == "ckpt_000005.hpdm"

    def test_rewriting_a_step_replaces_its_checkpoint(self):
        run = TrainingRun(name="tiny", config_hash="abc")
        run.add_checkpoint(2, "a")
        run.add_checkpoint(4, "b")
        run.add_checkpoint(2, "c")

        assert sorted((c.step, c.path) for c in run.checkpoints) == [(2, "c"), (4, "b")]
        assert run.last_checkpoint.step == 4

    def test_progress_and_summary(self):
        run = TrainingRun(name="tiny", config_hash="abc")
        assert run.progress == 1.0
        run.mark_running(8)
        run.steps_completed = 2

        summary = run.get_summary()

        assert summary["progress_percent"] == 25.0
        assert summary["status"] == "running"
        assert summary["last_checkpoint"] is None

    def test_duration(self):
        run = TrainingRun(name="tiny", config_hash="abc")
        assert run.duration_seconds is None
        run.mark_finished(RunStatus.COMPLETED)
        run.ended_at = run.started_at + timedelta(seconds=90)
        assert run.duration_seconds == 90.0

    def test_checkpoint_record_round_trip(self):
        record = CheckpointRecord(3, "x", datetime(2024, 1, 2, 3, 4, 5))
        assert CheckpointRecord.from_dict(record.to_dict()) == record


# =============================================================================
# Run directory
# =============================================================================


class TestRunStore:
    def test_layout(self, tmp_path):
        store = RunStore(str(tmp_path / "run"))
        store.ensure_dirs()

        assert store.checkpoint_dir.is_dir()
        assert store.samples_dir.is_dir()
        assert store.checkpoint_path(12).name == "ckpt_000012.hpdm"

    def test_checkpoint_listing(self, tmp_path):
        store = RunStore(str(tmp_path))
        store.ensure_dirs()
        for step in (10, 2, 100):
            store.checkpoint_path(step).write_bytes(b"")
        (store.checkpoint_dir / "notes.txt").write_text("ignored")

        assert [s for s, _ in store.list_checkpoints()] == [2, 10, 100]
        assert store.latest_checkpoint() == store.checkpoint_path(100)

    def test_no_checkpoints(self, tmp_path):
        store = RunStore(str(tmp_path / "empty"))
        assert store.list_checkpoints() == []
        assert store.latest_checkpoint() is None

    def test_run_state_persists(self, tmp_path):
        store = RunStore(str(tmp_path))
        run = store.get_or_create_run("tiny", "hash-a")
        run.steps_completed = 3
        store.save(run)

        again = RunStore(str(tmp_path)).get_or_create_run("tiny", "hash-a")

        assert again.steps_completed == 3

    def test_config_change_starts_a_new_record(self, tmp_path):
        store = RunStore(str(tmp_path))
        run = store.get_or_create_run("tiny", "hash-a")
        run.steps_completed = 3
        store.save(run)

        fresh = RunStore(str(tmp_path)).get_or_create_run("tiny", "hash-b")

        assert fresh.steps_completed == 0
        assert fresh.config_hash == "hash-b"

    def test_unreadable_state_is_ignored(self, tmp_path):
        store = RunStore(str(tmp_path))
        store.state_file.write_text("{broken")
        assert store.load() is None

    def test_config_text(self, tmp_path):
        store = RunStore(str(tmp_path / "run"))
        assert store.load_config_text() is None
        store.save_config("train.steps = 3\n")
        assert store.load_config_text() == "train.steps = 3\n"

    def test_metrics_append_read_truncate(self, tmp_path):
        store = RunStore(str(tmp_path))
        records = [StepRecord(i, 1.0 / i, [0.5, 0.25], 0.001, float(i), 2.0) for i in (1, 2, 3)]
        store.append_metrics(records[:2], levels=2)
        store.append_metrics(records[2:], levels=2)

        assert [r.step for r in store.read_metrics()] == [1, 2, 3]
        assert store.metrics_file.read_text().count("step,loss") == 1

        store.truncate_metrics(2)

        assert [r.step for r in store.read_metrics()] == [1, 2]

    def test_sample_dir(self, tmp_path):
        path = RunStore(str(tmp_path)).sample_dir("0_0_hw")
        assert path.is_dir()
        assert path.parent.name == "samples"


# =============================================================================
# Metrics tracking
# =============================================================================


class TestMetricsTracker:
    def make(self, tmp_path, events=None):
        store = RunStore(str(tmp_path))
        run = store.get_or_create_run("tiny", "abc")
        clock = FakeClock()
        on_progress = events.append if events is not None else None
        tracker = MetricsTracker(store, run, 2, 4, on_progress=on_progress, clock=clock)
        return tracker, clock, store

    def test_records_wall_clock_and_throughput(self, tmp_path):
        tracker, clock, _ = self.make(tmp_path)
        tracker.start(10)
        clock.advance(2.0)
        first = tracker.record(1, 0.5, [0.4, 0.6], 0.001)
        clock.advance(0.5)
        second = tracker.record(2, 0.25, [0.2, 0.3], 0.002)

        assert first.wall_clock == pytest.approx(2.0)
        assert first.throughput == pytest.approx(2.0)
        assert second.wall_clock == pytest.approx(2.5)
        assert second.throughput == pytest.approx(8.0)
        assert tracker.run.steps_completed == 2
        assert tracker.smoothed_loss() == pytest.approx(0.375)

    def test_flush_writes_metrics(self, tmp_path):
        tracker, clock, store = self.make(tmp_path)
        tracker.start(2)
        clock.advance(1.0)
        tracker.record(1, 0.5, [0.4, 0.6], 0.001)
        assert store.read_metrics() == []

        tracker.flush()

        assert [r.step for r in store.read_metrics()] == [1]

    def test_resume_continues_wall_clock(self, tmp_path):
        tracker, clock, _ = self.make(tmp_path)
        tracker.start(4)
        for step in (1, 2, 3):
            clock.advance(1.0)
            tracker.record(step, 0.5, [0.5, 0.5], 0.001)
        tracker.flush()

        resumed, clock2, _ = self.make(tmp_path)
        resumed.start(4, start_step=2)
        clock2.advance(1.0)
        record = resumed.record(3, 0.4, [0.4, 0.4], 0.001)

        assert [r.step for r in resumed.history] == [1, 2, 3]
        assert record.wall_clock == pytest.approx(3.0)

    def test_progress_events(self, tmp_path):
        events: list[dict] = []
        tracker, clock, _ = self.make(tmp_path, events)
        tracker.start(1)
        clock.advance(1.0)
        tracker.record(1, 0.5, [0.4, 0.6], 0.001)
        tracker.checkpoint(1, "ckpt_000001.hpdm")
        tracker.finish(RunStatus.COMPLETED)

        assert [e["event"] for e in events] == [
            "training_started", "step", "checkpoint_written", "training_ended",
        ]
        assert events[-1]["data"]["status"] == "completed"
        assert events[1]["progress"]["loss"] == 0.5
        assert tracker.run.last_checkpoint.step == 1

    def test_status_line(self, tmp_path):
        tracker, clock, _ = self.make(tmp_path)
        tracker.start(10)
        assert tracker.format_status_line() == "step 0/10"
        clock.advance(1.0)
        tracker.record(1, 0.5, [0.4, 0.6], 0.001)

        line = tracker.format_status_line()

        assert line.startswith("step 1/10 | loss 0.5000 | levels [0.400 0.600]")
        assert line.endswith("4.0 videos/s")


# =============================================================================
# Identity
# =============================================================================


class TestIdentity:
    def test_hash_text(self):
        assert hash_text("a") == hash_text("a")
        assert hash_text("a") != hash_text("b")
        assert len(hash_text("a")) == 16

    def test_detect_artifact(self, tmp_path):
        video = tmp_path / "clip.hpdmvid"
        write_video(video, VideoRecord(torch.zeros(3, 1, 2, 2), 0))
        spill = tmp_path / "level0_block0.hpdmcache"
        write_spill(spill, 0, 0, torch.zeros(1, 1, 1, 1))
        manifest = tmp_path / "manifest.txt"
        manifest.write_text("HPDM-MANIFEST 1\n")
        config = tmp_path / "hpdm.cfg"
        config.write_text("train.steps = 1\n")
        other = tmp_path / "notes.txt"
        other.write_text("hello")

        assert detect_artifact(video) is ArtifactKind.VIDEO
        assert detect_artifact(spill) is ArtifactKind.CACHE_SPILL
        assert detect_artifact(manifest) is ArtifactKind.MANIFEST
        assert detect_artifact(config) is ArtifactKind.CONFIG
        assert detect_artifact(other) is None
