"""Tests for the synthetic dataset, HPDMVID0 files and frame export."""

import numpy as np
import pytest
import torch
from conftest import TINY_FULL

from hpdm.data.frames import FRAME_NAME, export_frames, read_frame, to_bytes
from hpdm.data.synthetic import (
    BACKGROUND,
    SyntheticSpec,
    VideoRecord,
    check_resolution,
    generate_dataset,
    load_tensors,
    make_record,
)
from hpdm.data.video_io import decode_video, encode_video, read_video, write_video
from hpdm.errors import BadMagicError, DataError, ShapeError, TruncatedError
from hpdm.geometry.coords import PyramidSpec

# =============================================================================
# Synthetic videos
# =============================================================================


class TestSyntheticSpec:
    def test_defaults_validate(self):
        assert SyntheticSpec().validate() == []

    def test_from_dict_parses_resolution_text(self):
        spec = SyntheticSpec.from_dict({"resolution": "4x8x8", "num_classes": "3"})
        assert spec.resolution == (4, 8, 8)
        assert spec.num_classes == 3

    def test_unknown_key_raises(self):
        with pytest.raises(KeyError):
            SyntheticSpec.from_dict({"colour": 1})

    def test_dict_round_trip(self):
        spec = SyntheticSpec(resolution=TINY_FULL, num_classes=2, seed=5)
        assert SyntheticSpec.from_dict(spec.to_dict()) == spec

    def test_validation_messages(self):
        spec = SyntheticSpec(
            resolution=(0, 8, 8), channels=1, num_classes=0, shapes_per_video=0, max_velocity=-1
        )
        assert spec.validate() == [
            "data.resolution: dims must be positive",
            "data.channels: synthetic videos are RGB (3 channels)",
            "data.num_classes: must be at least 1",
            "data.shapes_per_video: must be at least 1",
            "data.max_velocity: must be non-negative",
        ]


class TestSyntheticVideos:
    def test_record_layout(self):
        spec = SyntheticSpec(resolution=TINY_FULL, num_classes=2)
        record = make_record(spec, 0)

        assert record.video.shape == (3, *TINY_FULL)
        assert record.video.dtype == torch.float32
        assert 0 <= record.label < 2
        assert float(record.video.min()) >= -1.0
        assert float(record.video.max()) <= 1.0
        assert len(record.velocities) == spec.shapes_per_video

    def test_records_depend_only_on_seed_and_index(self):
        spec = SyntheticSpec(resolution=(4, 16, 16))
        first = make_record(spec, 3)
        again = make_record(spec, 3)

        assert torch.equal(first.video, again.video)
        assert first.label == again.label
        assert first.velocities == again.velocities

    def test_seed_changes_the_videos(self):
        videos = [make_record(SyntheticSpec(seed=s), 0).video for s in range(2)]
        assert not torch.equal(*videos)

    @pytest.mark.parametrize("index", range(5))
    def test_single_shape_slides_with_wraparound(self, index):
        spec = SyntheticSpec(resolution=(4, 16, 16), shapes_per_video=1, max_velocity=3)
        record = make_record(spec, index)
        dy, dx = record.velocities[0]
        frames = record.video.numpy()

        for t in range(1, 4):
            expected = np.roll(frames[:, 0], (t * dy, t * dx), axis=(1, 2))
            assert np.array_equal(frames[:, t], expected)

    def test_background_fills_the_rest(self):
        record = make_record(SyntheticSpec(), 1)
        assert bool((record.video == BACKGROUND).any())
        assert bool((record.video != BACKGROUND).any())

    def test_dataset_matches_individual_records(self):
        spec = SyntheticSpec(resolution=TINY_FULL)
        records = list(generate_dataset(spec, 3, start=2))

        assert len(records) == 3
        for offset, record in enumerate(records):
            assert torch.equal(record.video, make_record(spec, 2 + offset).video)

    def test_empty_dataset_raises(self):
        with pytest.raises(DataError):
            list(generate_dataset(SyntheticSpec(), 0))

    def test_load_tensors_stacks_records(self, tiny_spec):
        spec = SyntheticSpec(resolution=TINY_FULL, num_classes=2)
        videos, labels = load_tensors(spec, 4, tiny_spec)

        assert videos.shape == (4, 3, *TINY_FULL)
        assert labels.dtype == torch.long
        assert labels.tolist() == [make_record(spec, i).label for i in range(4)]

    def test_resolution_must_match_the_pyramid(self):
        with pytest.raises(DataError, match="does not match"):
            check_resolution(SyntheticSpec(resolution=TINY_FULL), PyramidSpec())


# =============================================================================
# HPDMVID0 files
# =============================================================================


def sample_record() -> VideoRecord:
    video = torch.randn(3, 2, 4, 4, generator=torch.Generator().manual_seed(0))
    return VideoRecord(video, label=3)


class TestVideoFiles:
    def test_round_trip_is_bitwise(self, tmp_path):
        record = sample_record()
        path = tmp_path / "clip.hpdmvid"
        write_video(path, record)

        loaded = read_video(path)

        assert path.read_bytes() == encode_video(record)
        assert loaded.label == 3
        assert torch.equal(loaded.video, record.video)

    def test_header_layout(self):
        data = encode_video(sample_record())
        assert data[:8] == b"HPDMVID0"
        assert int.from_bytes(data[8:12], "little") == 3
        dims = [int.from_bytes(data[12 + 4 * i: 16 + 4 * i], "little") for i in range(4)]
        assert dims == [3, 2, 4, 4]
        assert len(data) == 8 + 4 + 16 + 4 * 96 + 4

    def test_needs_a_4d_video(self):
        with pytest.raises(ShapeError):
            encode_video(VideoRecord(torch.zeros(3, 4, 4), 0))

    def test_bad_magic(self):
        data = b"HPDMVIDX" + encode_video(sample_record())[8:]
        with pytest.raises(BadMagicError):
            decode_video(data)

    def test_truncated_file(self):
        with pytest.raises(TruncatedError):
            decode_video(encode_video(sample_record())[:10])

    @pytest.mark.parametrize("position", [8, 13, 40, 200, -2])
    def test_corrupted_byte_raises(self, position):
        data = bytearray(encode_video(sample_record()))
        data[position] ^= 0x10
        with pytest.raises(DataError):
            decode_video(bytes(data))


# =============================================================================
# Frame export
# =============================================================================


class TestFrames:
    def test_byte_mapping(self):
        values = torch.tensor([-1.0, 0.0, 1.0, -2.0, 2.0, 0.5])
        assert to_bytes(values).tolist() == [0, 128, 255, 0, 255, 191]

    def test_export_writes_one_ppm_per_frame(self, tmp_path):
        video = torch.rand(3, 4, 8, 8, generator=torch.Generator().manual_seed(1)) * 2 - 1

        paths = export_frames(video, tmp_path / "frames")

        assert [p.name for p in paths] == [FRAME_NAME.format(i) for i in range(4)]
        assert paths[0].read_bytes().startswith(b"P6")
        for t, path in enumerate(paths):
            frame = read_frame(path)
            assert frame.shape == (3, 8, 8)
            assert (frame - video[:, t]).abs().max() <= 1.0 / 255.0 + 1e-6

    def test_export_needs_rgb(self, tmp_path):
        with pytest.raises(ShapeError):
            export_frames(torch.zeros(1, 2, 4, 4), tmp_path)
