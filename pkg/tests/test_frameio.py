import numpy as np
import pytest

from rgbdreg.errors import LoadError
from rgbdreg.frameio import (
    load_frame,
    load_pair,
    read_intrinsics,
    read_pose,
    save_frame,
    write_intrinsics,
    write_pose,
)
from rgbdreg.geometry import CameraIntrinsics

from conftest import random_transform, textured_frame


class TestIntrinsicsFile:
    def test_round_trip(self, tmp_path, intrinsics):
        path = tmp_path / "intrinsics.txt"
        write_intrinsics(path, intrinsics)
        loaded = read_intrinsics(path)
        assert loaded == intrinsics

    def test_wrong_token_count(self, tmp_path):
        path = tmp_path / "intrinsics.txt"
        path.write_text("50 48 20 15\n")
        with pytest.raises(LoadError, match="expected 6"):
            read_intrinsics(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError, match="missing intrinsics"):
            read_intrinsics(tmp_path / "absent.txt")


class TestPoseFile:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        t = random_transform(rng)
        path = tmp_path / "pose.txt"
        write_pose(path, t)
        loaded = read_pose(path)
        np.testing.assert_array_equal(loaded.rotation, t.rotation)
        np.testing.assert_array_equal(loaded.translation, t.translation)

    def test_wrong_value_count(self, tmp_path):
        path = tmp_path / "pose.txt"
        path.write_text("1 0 0 0\n0 1 0 0\n")
        with pytest.raises(LoadError, match="expected 12"):
            read_pose(path)


class TestFrameRoundTrip:
    def test_depth_quantized_to_millimeters(self, tmp_path, intrinsics):
        frame = textured_frame(intrinsics, seed=1, missing=0.1)
        save_frame(tmp_path / "f", frame)
        loaded, pose = load_frame(tmp_path / "f")
        assert pose is None
        assert np.abs(loaded.depth - frame.depth).max() <= 0.0005 + 1e-12
        np.testing.assert_array_equal(loaded.depth == 0, frame.depth == 0)

    def test_color_quantized_to_8bit(self, tmp_path, intrinsics):
        frame = textured_frame(intrinsics, seed=2)
        save_frame(tmp_path / "f", frame)
        loaded, _ = load_frame(tmp_path / "f")
        assert np.abs(loaded.color - frame.color).max() <= 0.5 / 255 + 1e-12

    def test_pose_saved_alongside(self, tmp_path, intrinsics):
        rng = np.random.default_rng(3)
        frame = textured_frame(intrinsics, seed=3)
        pose = random_transform(rng)
        save_frame(tmp_path / "f", frame, pose)
        _, loaded_pose = load_frame(tmp_path / "f")
        np.testing.assert_array_equal(loaded_pose.rotation, pose.rotation)

    def test_depth_overflow_rejected(self, tmp_path):
        intr = CameraIntrinsics(fx=10.0, fy=10.0, cx=1.5, cy=1.5, width=4, height=4)
        from rgbdreg.geometry import RGBDFrame

        frame = RGBDFrame(
            color=np.zeros((4, 4, 3)), depth=np.full((4, 4), 70.0), intrinsics=intr
        )
        with pytest.raises(LoadError, match="16-bit"):
            save_frame(tmp_path / "f", frame)

    def test_missing_color_named(self, tmp_path, intrinsics):
        frame = textured_frame(intrinsics, seed=4)
        save_frame(tmp_path / "f", frame)
        (tmp_path / "f" / "color.png").unlink()
        with pytest.raises(LoadError, match="color.png"):
            load_frame(tmp_path / "f")


class TestPairDirectory:
    def test_pair_without_poses_has_no_relative(self, tmp_path, intrinsics):
        for i in range(2):
            save_frame(tmp_path / "pair" / str(i), textured_frame(intrinsics, seed=i))
        frame0, frame1, relative = load_pair(tmp_path / "pair")
        assert relative is None
        assert frame0.intrinsics == frame1.intrinsics
