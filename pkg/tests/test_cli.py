"""End-to-end tests of the hpdm command line on a tiny run."""

import pytest
from conftest import tiny_run_config
from typer.testing import CliRunner

from hpdm import __version__
from hpdm.cli import app
from hpdm.config import RunConfig
from hpdm.data.video_io import read_video
from hpdm.tiled.manifest import read_manifest

runner = CliRunner()


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A tiny run trained for two steps through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    config = tiny_run_config(str(root / "run"))
    config_path = root / "hpdm.cfg"
    config.save(config_path)
    result = runner.invoke(app, ["train", "--config", str(config_path), "--steps", "2"])
    assert result.exit_code == 0, result.output
    return config_path, root / "run" / "checkpoints" / "ckpt_000002.hpdm"


class TestBasics:
    def test_version(self):
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert f"HPDM v{__version__}" in result.output

    def test_init_writes_a_valid_config(self, tmp_path):
        path = tmp_path / "hpdm.cfg"
        result = runner.invoke(app, ["init", "--config", str(path)])

        assert result.exit_code == 0
        assert RunConfig.load(path).validate() == []

    def test_init_keeps_an_existing_config(self, tmp_path):
        path = tmp_path / "hpdm.cfg"
        path.write_text("train.steps = 3\n")

        result = runner.invoke(app, ["init", "--config", str(path)])
        assert result.exit_code == 0
        assert "already exists" in result.output
        assert path.read_text() == "train.steps = 3\n"

        result = runner.invoke(app, ["init", "--config", str(path), "--force"])
        assert result.exit_code == 0
        assert path.read_text() != "train.steps = 3\n"

    def test_sigmas(self, tmp_path):
        config_path = tmp_path / "hpdm.cfg"
        tiny_run_config(str(tmp_path / "run")).save(config_path)
        out = tmp_path / "sigmas.txt"

        result = runner.invoke(app, ["sigmas", "--config", str(config_path), "--out", str(out)])

        assert result.exit_code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        head, _, values = lines[1].partition(": ")
        assert lines[0].startswith("level 0 steps 8: ")
        assert head == "level 1 steps 4"
        sigmas = [float(v) for v in values.split()]
        assert len(sigmas) == 5
        assert sigmas[0] == pytest.approx(40.0)
        assert sigmas[-1] == 0.0

    def test_bench_estimate(self, tmp_path):
        config_path = tmp_path / "hpdm.cfg"
        tiny_run_config(str(tmp_path / "run")).save(config_path)

        result = runner.invoke(
            app, ["bench", "--config", str(config_path), "--estimate-only"]
        )

        assert result.exit_code == 0, result.output
        assert "1.333" in result.output

    def test_bench_cache_mode(self, tmp_path):
        config_path = tmp_path / "hpdm.cfg"
        tiny_run_config(str(tmp_path / "run")).save(config_path)

        result = runner.invoke(
            app, ["bench", "--config", str(config_path), "--mode", "cache", "--repeats", "1"]
        )

        assert result.exit_code == 0, result.output
        assert "recompute" in result.output
        assert "Wall clock" in result.output

    def test_bench_rejects_unknown_mode(self, tmp_path):
        result = runner.invoke(app, ["bench", "--mode", "fastest"])
        assert result.exit_code == 2


class TestTrain:
    def test_writes_checkpoints_and_metrics(self, trained):
        _, checkpoint = trained
        run_dir = checkpoint.parent.parent
        assert checkpoint.exists()
        assert (run_dir / "metrics.csv").exists()
        assert (run_dir / "config.cfg").exists()

    def test_missing_config_exits_2(self, tmp_path):
        result = runner.invoke(app, ["train", "--config", str(tmp_path / "absent.cfg")])
        assert result.exit_code == 2
        assert "not found" in result.output

    def test_invalid_config_lists_errors(self, tmp_path):
        path = tmp_path / "hpdm.cfg"
        path.write_text("train.batch_size = 0\n")
        result = runner.invoke(app, ["train", "--config", str(path)])
        assert result.exit_code == 2
        assert "train.batch_size" in result.output

    def test_negative_steps_exit_2(self, trained):
        config_path, _ = trained
        result = runner.invoke(app, ["train", "--config", str(config_path), "--steps", "-1"])
        assert result.exit_code == 2


class TestSample:
    def test_writes_video_manifest_and_frames(self, trained, tmp_path):
        _, checkpoint = trained
        out = tmp_path / "sample"

        result = runner.invoke(
            app,
            ["sample", str(checkpoint), "--class", "1", "--seed", "3", "--out", str(out),
             "--dump-sigmas"],
        )

        assert result.exit_code == 0, result.output
        record = read_video(out / "video.hpdmvid")
        assert record.video.shape == (3, 4, 8, 8)
        assert record.label == 1
        manifest = read_manifest(out / "manifest.txt")
        assert manifest.seed == 3
        assert manifest.tile_counts == [1, 18]
        assert len(list((out / "frames").glob("frame_*.ppm"))) == 4
        assert (out / "sigmas.txt").read_text().startswith("level 0 steps 8:")

    def test_default_output_lives_in_the_run(self, trained):
        _, checkpoint = trained
        result = runner.invoke(app, ["sample", str(checkpoint), "--overlap", "none"])

        assert result.exit_code == 0, result.output
        sample_dir = checkpoint.parent.parent / "samples" / "class0_seed0_none"
        assert read_manifest(sample_dir / "manifest.txt").tile_counts == [1, 8]

    def test_same_seed_same_video(self, trained, tmp_path):
        _, checkpoint = trained
        for name in ("a", "b"):
            result = runner.invoke(
                app, ["sample", str(checkpoint), "--no-cache", "--out", str(tmp_path / name)]
            )
            assert result.exit_code == 0, result.output
        assert (tmp_path / "a" / "video.hpdmvid").read_bytes() == \
            (tmp_path / "b" / "video.hpdmvid").read_bytes()

    def test_unknown_class_exits_2(self, trained):
        _, checkpoint = trained
        result = runner.invoke(app, ["sample", str(checkpoint), "--class", "5"])
        assert result.exit_code == 2
        assert "unknown class" in result.output

    def test_bad_overlap_exits_2(self, trained):
        _, checkpoint = trained
        result = runner.invoke(app, ["sample", str(checkpoint), "--overlap", "diagonal"])
        assert result.exit_code == 2

    def test_missing_checkpoint_exits_3(self, tmp_path):
        result = runner.invoke(app, ["sample", str(tmp_path / "none.hpdm")])
        assert result.exit_code == 3

    def test_corrupt_checkpoint_exits_3(self, trained, tmp_path):
        _, checkpoint = trained
        data = bytearray(checkpoint.read_bytes())
        data[len(data) // 2] ^= 0x01
        broken = tmp_path / "broken.hpdm"
        broken.write_bytes(bytes(data))

        result = runner.invoke(app, ["sample", str(broken)])
        assert result.exit_code == 3


class TestSeams:
    def test_reports_each_seed(self, trained):
        _, checkpoint = trained
        result = runner.invoke(app, ["seams", str(checkpoint), "--seeds", "2"])

        assert result.exit_code == 0, result.output
        assert "Seeds improved" in result.output

    def test_needs_an_overlapped_axis(self, trained):
        _, checkpoint = trained
        result = runner.invoke(app, ["seams", str(checkpoint), "--overlap", "none"])
        assert result.exit_code == 2


class TestInspect:
    def test_every_artifact_kind(self, trained, tmp_path):
        config_path, checkpoint = trained
        out = tmp_path / "sample"
        result = runner.invoke(app, ["sample", str(checkpoint), "--out", str(out)])
        assert result.exit_code == 0, result.output

        for path in (checkpoint, out / "video.hpdmvid", out / "manifest.txt", config_path):
            result = runner.invoke(app, ["inspect", str(path)])
            assert result.exit_code == 0, (path, result.output)

    def test_checkpoint_parameter_count_matches(self, trained):
        _, checkpoint = trained
        result = runner.invoke(app, ["inspect", str(checkpoint)])
        assert "match" in result.output
        assert "MISMATCH" not in result.output

    def test_unrecognized_file_exits_3(self, tmp_path):
        path = tmp_path / "notes.bin"
        path.write_bytes(b"hello")
        result = runner.invoke(app, ["inspect", str(path)])
        assert result.exit_code == 3

    def test_binary_config_exits_2(self, tmp_path):
        path = tmp_path / "a.cfg"
        path.write_bytes(b"\xff\xfe\x00\x01pyramid.levels = 2\n")
        result = runner.invoke(app, ["inspect", str(path)])
        assert result.exit_code == 2

    @pytest.mark.parametrize(
        "document", ["[1, 2]", '"hpdm"', "3", '{"train": [1, 2]}', '{"train": 5}']
    )
    def test_malformed_json_config_exits_2(self, tmp_path, document):
        path = tmp_path / "d.json"
        path.write_text(document)
        result = runner.invoke(app, ["inspect", str(path)])
        assert result.exit_code == 2, result.output
        assert not isinstance(result.exception, (AttributeError, TypeError))

    def test_corrupt_manifest_exits_3(self, trained, tmp_path):
        _, checkpoint = trained
        out = tmp_path / "sample"
        runner.invoke(app, ["sample", str(checkpoint), "--out", str(out)])
        path = out / "manifest.txt"
        path.write_text(path.read_text().replace("seed 0", "seed 1"))

        result = runner.invoke(app, ["inspect", str(path)])
        assert result.exit_code == 3
