"""On-disk RGB-D frame and pair formats.

A frame directory holds:

* ``color.png``       8-bit RGB
* ``depth.png``       16-bit single channel, value = millimeters, 0 = missing
* ``intrinsics.txt``  six whitespace-separated numbers: fx fy cx cy width height
* ``pose.txt``        optional, row-major 3x4 [R|t], camera-to-world, meters

A pair directory holds two frame directories named ``0`` and ``1``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import LoadError
from .geometry import CameraIntrinsics, RGBDFrame, RigidTransform, compose, invert

DEPTH_UNIT_M = 0.001  # stored depth is millimeters
MAX_STORED_DEPTH_M = 0.001 * np.iinfo(np.uint16).max


def read_intrinsics(path: Path) -> CameraIntrinsics:
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"missing intrinsics file: {path}")
    tokens = path.read_text().split()
    if len(tokens) != 6:
        raise LoadError(f"{path}: expected 6 values (fx fy cx cy width height), got {len(tokens)}")
    try:
        fx, fy, cx, cy = (float(t) for t in tokens[:4])
        width, height = (int(float(t)) for t in tokens[4:])
    except ValueError as e:
        raise LoadError(f"{path}: {e}") from e
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


def write_intrinsics(path: Path, intrinsics: CameraIntrinsics) -> None:
    Path(path).write_text(
        f"{float(intrinsics.fx)!r} {float(intrinsics.fy)!r} "
        f"{float(intrinsics.cx)!r} {float(intrinsics.cy)!r} "
        f"{int(intrinsics.width)} {int(intrinsics.height)}\n"
    )


def read_pose(path: Path) -> RigidTransform:
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"missing pose file: {path}")
    values = path.read_text().split()
    if len(values) != 12:
        raise LoadError(f"{path}: expected 12 values for a 3x4 pose, got {len(values)}")
    try:
        mat = np.array([float(v) for v in values], dtype=np.float64).reshape(3, 4)
    except ValueError as e:
        raise LoadError(f"{path}: {e}") from e
    return RigidTransform.from_matrix(mat)


def write_pose(path: Path, transform: RigidTransform) -> None:
    rows = [" ".join(repr(float(x)) for x in row) for row in transform.as_matrix()]
    Path(path).write_text("\n".join(rows) + "\n")


def load_frame(frame_dir: Path) -> tuple[RGBDFrame, RigidTransform | None]:
    """Load one frame directory; returns the frame and its optional pose."""
    frame_dir = Path(frame_dir)
    color_path = frame_dir / "color.png"
    depth_path = frame_dir / "depth.png"
    if not color_path.is_file():
        raise LoadError(f"missing color image: {color_path}")
    if not depth_path.is_file():
        raise LoadError(f"missing depth image: {depth_path}")
    intrinsics = read_intrinsics(frame_dir / "intrinsics.txt")

    color = np.asarray(Image.open(color_path).convert("RGB"), dtype=np.float64) / 255.0

    depth_raw = np.asarray(Image.open(depth_path))
    if depth_raw.ndim != 2:
        raise LoadError(f"{depth_path}: depth must be single channel, got shape {depth_raw.shape}")
    if depth_raw.dtype not in (np.uint16, np.int32, np.uint8):
        raise LoadError(f"{depth_path}: unsupported depth dtype {depth_raw.dtype}")
    if (np.asarray(depth_raw, dtype=np.int64) < 0).any():
        raise LoadError(f"{depth_path}: negative depth values")
    depth = depth_raw.astype(np.float64) * DEPTH_UNIT_M

    pose_path = frame_dir / "pose.txt"
    pose = read_pose(pose_path) if pose_path.is_file() else None
    try:
        frame = RGBDFrame(color=color, depth=depth, intrinsics=intrinsics)
    except Exception as e:
        raise LoadError(f"{frame_dir}: {e}") from e
    return frame, pose


def save_frame(frame_dir: Path, frame: RGBDFrame, pose: RigidTransform | None = None) -> None:
    """Write one frame directory. Depth is quantized to millimeters here only."""
    frame_dir = Path(frame_dir)
    frame_dir.mkdir(parents=True, exist_ok=True)

    color8 = np.clip(np.rint(frame.color * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(color8, mode="RGB").save(frame_dir / "color.png")

    if frame.depth.max() > MAX_STORED_DEPTH_M:
        raise LoadError(
            f"depth {frame.depth.max():.3f} m exceeds the 16-bit millimeter range "
            f"({MAX_STORED_DEPTH_M:.3f} m)"
        )
    depth_mm = np.rint(frame.depth / DEPTH_UNIT_M).astype(np.uint16)
    Image.fromarray(depth_mm).save(frame_dir / "depth.png")

    write_intrinsics(frame_dir / "intrinsics.txt", frame.intrinsics)
    if pose is not None:
        write_pose(frame_dir / "pose.txt", pose)


def load_pair(pair_dir: Path) -> tuple[RGBDFrame, RGBDFrame, RigidTransform | None]:
    """Load a pair directory (subdirs ``0`` and ``1``).

    When both frames carry pose files, also returns the ground-truth
    relative pose mapping frame-0 coordinates into frame-1:
    ``invert(pose1) o pose0``.
    """
    pair_dir = Path(pair_dir)
    frame0, pose0 = load_frame(pair_dir / "0")
    frame1, pose1 = load_frame(pair_dir / "1")
    relative = None
    if pose0 is not None and pose1 is not None:
        relative = compose(invert(pose1), pose0)
    return frame0, frame1, relative


def save_pair(
    pair_dir: Path,
    frame0: RGBDFrame,
    frame1: RGBDFrame,
    pose0: RigidTransform | None = None,
    pose1: RigidTransform | None = None,
) -> None:
    pair_dir = Path(pair_dir)
    save_frame(pair_dir / "0", frame0, pose0)
    save_frame(pair_dir / "1", frame1, pose1)
