"""Tests for run configuration files, validation and hashing."""

import json
import math
from dataclasses import replace

import pytest
from conftest import tiny_run_config

from hpdm.config import RunConfig, coerce, default_config, render
from hpdm.errors import ConfigError


class TestRoundTrip:
    def test_default_config_is_valid(self):
        assert default_config().validate() == []

    def test_tiny_config_is_valid(self):
        assert tiny_run_config().validate() == []

    @pytest.mark.parametrize("factory", [default_config, tiny_run_config])
    def test_text_round_trip(self, factory):
        config = factory()
        assert RunConfig.from_text(config.to_text()) == config

    def test_text_is_canonical(self):
        config = tiny_run_config()
        assert RunConfig.from_text(config.to_text()).to_text() == config.to_text()

    def test_save_and_load(self, tmp_path):
        config = tiny_run_config(str(tmp_path / "run"))
        config.save(tmp_path / "hpdm.cfg")
        assert RunConfig.load(tmp_path / "hpdm.cfg") == config

    def test_json_load(self, tmp_path):
        config = tiny_run_config(str(tmp_path / "run"))
        path = tmp_path / "hpdm.json"
        path.write_text(json.dumps(config.to_dict()))
        assert RunConfig.load(path) == config

    def test_partial_text_keeps_defaults(self):
        config = RunConfig.from_text("pyramid.levels = 2\n# comment\n\ntrain.steps = 7  # inline\n")
        assert config.pyramid.levels == 2
        assert config.train.steps == 7
        assert config.optim == default_config().optim

    def test_values_render_and_parse(self):
        assert render((4, 8, 8)) == "4x8x8"
        assert render([1, 1, 2]) == "1,1,2"
        assert render(True) == "true"
        assert render(math.inf) == "inf"
        assert coerce(" 4x8x8 ", (1, 1, 1)) == (4, 8, 8)
        assert coerce("1, 2,3", [0]) == [1, 2, 3]
        assert coerce("off", True) is False
        assert coerce("inf", 1.0) == math.inf


class TestParseErrors:
    def test_collects_every_problem(self):
        text = "\n".join([
            "pyramid.levels = three",
            "bogus.key = 1",
            "train.nonsense = 2",
            "no equals sign here",
        ])
        with pytest.raises(ConfigError) as info:
            RunConfig.from_text(text)

        errors = info.value.errors
        assert len(errors) == 4
        assert errors[0].startswith("pyramid.levels:")
        assert errors[1] == "bogus: unknown section (line 2)"
        assert errors[2] == "train.nonsense: unknown key (line 3)"
        assert errors[3].startswith("line 4:")

    def test_bad_boolean(self):
        with pytest.raises(ConfigError, match="could not parse"):
            RunConfig.from_text("run.deterministic = maybe")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(tmp_path / "absent.cfg")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            RunConfig.load(path)

    def test_unknown_json_section(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.from_dict({"extras": {}, "train": {"steps": 3, "speed": 1}})
        assert info.value.errors == ["extras: unknown section", "train.speed: unknown key"]

    def test_json_top_level_must_be_an_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="expected an object of sections"):
            RunConfig.load(path)

    def test_json_section_must_be_an_object(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.from_dict({"train": 5})
        assert info.value.errors == ["train: expected an object of keys, got int"]

    def test_non_utf8_config(self, tmp_path):
        path = tmp_path / "binary.cfg"
        path.write_bytes(b"\xff\xfe\x00")
        with pytest.raises(ConfigError, match="not UTF-8"):
            RunConfig.load(path)

    def test_load_validates(self, tmp_path):
        path = tmp_path / "hpdm.cfg"
        path.write_text("train.steps = -1\n")
        with pytest.raises(ConfigError, match="invalid configuration"):
            RunConfig.load(path)
        assert RunConfig.load(path, validate=False).train.steps == -1


class TestValidation:
    def errors(self, **sections) -> list[str]:
        return tiny_run_config(**sections).validate()

    def test_optimizer_fields(self):
        config = tiny_run_config()
        optim = replace(config.optim, peak_lr=0.0, beta2=1.0, ema_decay=1.0, grad_clip=-1.0)
        errors = self.errors(optim=optim)
        assert "optim.peak_lr: must be positive" in errors
        assert "optim.beta2: must lie in [0, 1)" in errors
        assert "optim.ema_decay: must lie in (0, 1)" in errors
        assert any(e.startswith("optim.grad_clip:") for e in errors)

    def test_train_fields(self):
        train = replace(tiny_run_config().train, batch_size=0, cond_dropout=1.0, active_levels=3)
        errors = self.errors(train=train)
        assert "train.batch_size: must be at least 1" in errors
        assert "train.cond_dropout: must lie in [0, 1)" in errors
        assert any(e.startswith("train.active_levels:") for e in errors)

    def test_run_fields(self):
        run = replace(tiny_run_config().run, seed=-1, threads=-2, output_dir="")
        errors = self.errors(run=run)
        assert "run.seed: must be non-negative" in errors
        assert any(e.startswith("run.threads:") for e in errors)
        assert "run.output_dir: must not be empty" in errors

    def test_data_must_match_the_pyramid(self):
        data = replace(tiny_run_config().data, resolution=(8, 16, 16), num_classes=3)
        errors = self.errors(data=data)
        assert "data.resolution: must equal pyramid.full (4x8x8)" in errors
        assert "data.num_classes: must equal denoiser.num_classes" in errors

    def test_heun_levels_must_exist(self):
        sampler = replace(tiny_run_config().sampler, heun_levels=[0, 2])
        assert "sampler.heun_levels: levels must be below 2" in self.errors(sampler=sampler)

    def test_tiled_and_sampler_sections_are_checked(self):
        config = tiny_run_config()
        errors = self.errors(
            tiled=replace(config.tiled, tile_batch=0),
            sampler=replace(config.sampler, min_steps=2),
        )
        assert "tiled.tile_batch: must be at least 1" in errors
        assert "sampler.min_steps: must be at least 4" in errors

    def test_check_raises_with_every_error(self):
        config = tiny_run_config(run=replace(tiny_run_config().run, seed=-1))
        with pytest.raises(ConfigError) as info:
            config.check()
        assert info.value.errors == config.validate()


class TestHashes:
    def test_hash_is_stable_and_short(self):
        assert tiny_run_config().config_hash() == tiny_run_config().config_hash()
        assert len(tiny_run_config().config_hash()) == 16

    def test_any_field_changes_the_config_hash(self):
        base = tiny_run_config()
        changed = replace(base, train=replace(base.train, steps=5))
        assert changed.config_hash() != base.config_hash()

    def test_model_hash_ignores_training_settings(self):
        base = tiny_run_config()
        changed = replace(base, train=replace(base.train, steps=5), run=replace(base.run, seed=3))
        assert changed.model_hash() == base.model_hash()

    def test_model_hash_tracks_the_architecture(self):
        base = tiny_run_config()
        changed = replace(base, denoiser=replace(base.denoiser, num_latents=8))
        assert changed.model_hash() != base.model_hash()
