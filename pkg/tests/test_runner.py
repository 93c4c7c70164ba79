"""Tests for the training session: checkpoints, resume, failure and interruption."""

from dataclasses import replace

import pytest
import torch
from conftest import tiny_run_config

import hpdm.runner
from hpdm.diffusion.schedule import NoiseSchedule, SamplerConfig
from hpdm.errors import ConfigError, NonFiniteError
from hpdm.model import build_denoiser
from hpdm.numerics.checkpoint import read_checkpoint, restore
from hpdm.runner import TrainingSession, batch_indices
from hpdm.state.models import RunStatus
from hpdm.state.store import RunStore
from hpdm.tiled.inference import TiledConfig
from hpdm.tiled.seams import overlap_ablation


def assert_same_checkpoint(a, b):
    assert a.global_step == b.global_step
    assert a.params.keys() == b.params.keys()
    for name in a.params:
        assert torch.equal(a.params[name], b.params[name]), name
        assert torch.equal(a.ema[name], b.ema[name]), name
    assert len(a.moments) == len(b.moments)
    for (step, m, v), (step2, m2, v2) in zip(a.moments, b.moments):
        assert step == step2
        assert torch.equal(m, m2) and torch.equal(v, v2)


class TestBatchIndices:
    def test_depends_only_on_seed_and_step(self):
        assert torch.equal(batch_indices(0, 3, 8, 2), batch_indices(0, 3, 8, 2))
        assert not torch.equal(batch_indices(0, 3, 64, 8), batch_indices(0, 4, 64, 8))

    def test_rows_are_in_range(self):
        rows = batch_indices(1, 0, 5, 4)
        assert rows.shape == (4,)
        assert int(rows.min()) >= 0 and int(rows.max()) < 5
        assert len(set(rows.tolist())) == 4

    def test_oversized_batches_sample_with_replacement(self):
        rows = batch_indices(0, 0, 2, 6)
        assert rows.shape == (6,)
        assert set(rows.tolist()) <= {0, 1}


class TestTrainingSession:
    def test_zero_steps_writes_the_initial_checkpoint(self, run_config):
        run = TrainingSession(run_config, steps=0).run()
        store = RunStore(run_config.run.output_dir)

        assert run.status is RunStatus.COMPLETED
        assert run.steps_completed == 0
        assert [s for s, _ in store.list_checkpoints()] == [0]
        assert store.read_metrics() == []
        assert store.load_config_text() == run_config.to_text()

    def test_full_run(self, run_config):
        session = TrainingSession(run_config)
        run = session.run()
        store = session.store

        assert run.status is RunStatus.COMPLETED
        assert run.steps_completed == 4
        assert [s for s, _ in store.list_checkpoints()] == [0, 2, 4]
        metrics = store.read_metrics()
        assert [r.step for r in metrics] == [1, 2, 3, 4]
        assert all(len(r.level_losses) == 2 for r in metrics)
        assert metrics[0].lr == 0.0
        assert run.last_loss == pytest.approx(metrics[-1].loss, rel=1e-6)

        checkpoint = read_checkpoint(store.checkpoint_path(4))
        assert checkpoint.global_step == 4
        assert checkpoint.config_hash == run_config.config_hash()
        assert checkpoint.config_text == run_config.to_text()

    def test_resume_retraces_the_uninterrupted_run(self, tmp_path):
        straight = tiny_run_config(str(tmp_path / "straight"))
        TrainingSession(straight).run()

        split = tiny_run_config(str(tmp_path / "split"))
        TrainingSession(split, steps=2).run()
        resumed = TrainingSession(split, resume=True)
        run = resumed.run()

        assert resumed.start_step == 2
        assert run.steps_completed == 4
        assert_same_checkpoint(
            read_checkpoint(RunStore(straight.run.output_dir).checkpoint_path(4)),
            read_checkpoint(RunStore(split.run.output_dir).checkpoint_path(4)),
        )
        straight_losses = [r.loss for r in RunStore(straight.run.output_dir).read_metrics()]
        split_losses = [r.loss for r in RunStore(split.run.output_dir).read_metrics()]
        assert split_losses == straight_losses

    def test_resume_without_checkpoints_starts_fresh(self, run_config):
        session = TrainingSession(run_config, resume=True, steps=1)
        session.run()
        assert session.start_step == 0

    def test_resume_rejects_another_architecture(self, run_config):
        TrainingSession(run_config, steps=2).run()
        changed = replace(run_config, denoiser=replace(run_config.denoiser, num_latents=8))

        with pytest.raises(ConfigError, match="different model"):
            TrainingSession(changed, resume=True).run()

    def test_numeric_failure_marks_the_run_failed(self, run_config, monkeypatch):
        TrainingSession(run_config, steps=2).run()
        before = read_checkpoint(RunStore(run_config.run.output_dir).checkpoint_path(2))

        def diverge(*args, **kwargs):
            raise NonFiniteError("joint_loss", "loss is nan")

        monkeypatch.setattr(hpdm.runner, "training_step", diverge)
        session = TrainingSession(run_config, resume=True)

        with pytest.raises(NonFiniteError):
            session.run()

        store = RunStore(run_config.run.output_dir)
        run = store.load()
        assert run.status is RunStatus.FAILED
        assert "joint_loss" in run.error
        assert [s for s, _ in store.list_checkpoints()] == [0, 2]
        assert_same_checkpoint(before, read_checkpoint(store.checkpoint_path(2)))

    def test_interrupt_checkpoints_the_current_step(self, run_config):
        session = TrainingSession(run_config)

        def on_progress(update: dict) -> None:
            if update["event"] == "step" and update["data"]["step"] == 1:
                session.interrupt()

        session.on_progress = on_progress
        run = session.run()

        assert run.status is RunStatus.INTERRUPTED
        assert run.steps_completed == 1
        assert [s for s, _ in session.store.list_checkpoints()] == [0, 1]
        assert read_checkpoint(session.store.checkpoint_path(1)).global_step == 1

    def test_log_every_override(self, run_config):
        session = TrainingSession(run_config, steps=1, log_every=3)
        assert session.log_every == 3
        assert TrainingSession(run_config).log_every == run_config.train.log_every


# =============================================================================
# End to end (slow)
# =============================================================================


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    output = tmp_path_factory.mktemp("trained") / "run"
    config = tiny_run_config(str(output))
    config = replace(
        config,
        train=replace(
            config.train, steps=500, batch_size=4, dataset_size=32,
            checkpoint_every=500, log_every=50,
        ),
        optim=replace(config.optim, warmup_steps=20),
    )
    session = TrainingSession(config)
    session.run()
    return config, session.store


@pytest.mark.slow
class TestEndToEnd:
    def test_training_halves_the_loss(self, trained_run):
        _, store = trained_run
        losses = [r.loss for r in store.read_metrics()]
        assert len(losses) == 500
        early = sum(losses[:25]) / 25
        late = sum(losses[-25:]) / 25
        assert late <= 0.5 * early

    def test_overlap_lowers_the_seam_metric(self, trained_run):
        config, store = trained_run
        checkpoint = read_checkpoint(store.checkpoint_path(500))
        model = build_denoiser(config.denoiser, config.spec, seed=config.run.seed)
        restore(checkpoint, model, use_ema=True)

        results = overlap_ablation(
            model, NoiseSchedule(), SamplerConfig(steps=8, min_steps=4), 0, range(10), "hw",
            TiledConfig(tile_batch=8),
        )

        assert sum(r.improved for r in results) >= 8
