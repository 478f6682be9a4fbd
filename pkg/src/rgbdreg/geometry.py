"""Pinhole camera model and rigid (SE(3)) transforms.

Conventions, stated once and enforced by the round-trip tests:

* camera frame: x right, y down, z forward (optical axis);
* pixel centers sit at integer coordinates (u, v), u = column, v = row;
* depth maps store the camera-frame z value in meters, 0 marks missing;
* flattened pixel arrays are row-major, index = v * width + u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class RigidTransform:
    """An SE(3) element: ``p -> rotation @ p + translation``.

    The rotation must already be a proper rotation; construction checks
    orthonormality and det = +1 to 1e-9 instead of silently re-projecting,
    so solver bugs surface here rather than being laundered away.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise InputError(f"rotation must be 3x3, got {R.shape}")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > ORTHONORMALITY_TOL:
            raise InputError(f"rotation is not orthonormal (max deviation {err:.3e})")
        det = np.linalg.det(R)
        if abs(det - 1.0) > ORTHONORMALITY_TOL:
            raise InputError(f"rotation determinant {det!r} != 1 (improper rotation?)")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "RigidTransform":
        """Build from a 3x4 or 4x4 row-major [R|t] matrix."""
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape not in ((3, 4), (4, 4)):
            raise InputError(f"expected 3x4 or 4x4 matrix, got {mat.shape}")
        return cls(mat[:3, :3], mat[:3, 3])

    def as_matrix(self) -> np.ndarray:
        """Return the 3x4 [R|t] matrix."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return transform_points(self, points)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def inverse(self) -> "RigidTransform":
        return invert(self)


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix for a rotation of ``angle_rad`` about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise InputError("rotation axis must be nonzero")
    x, y, z = axis / n
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1.0 - np.cos(angle_rad)) * (K @ K)


def transform_points(transform: RigidTransform, points: np.ndarray) -> np.ndarray:
    """Apply ``transform`` to an (N, 3) array of points (or a single 3-vector)."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ transform.rotation.T + transform.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return the transform applying ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return RigidTransform(t.rotation.T, -(t.rotation.T @ t.translation))


def validate_depth(depth: np.ndarray) -> np.ndarray:
    """Check the depth-map contract: finite, and either 0 (missing) or > 0."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise InputError(f"depth map must be 2-D, got shape {depth.shape}")
    if not np.isfinite(depth).all():
        raise InputError("depth map contains non-finite values")
    if (depth < 0).any():
        raise InputError("depth map contains negative values (sentinel for missing is 0)")
    return depth


@dataclass(frozen=True)
class RGBDFrame:
    """A color image, its depth map, and the intrinsics they share.

    ``color`` is (H, W, 3) in [0, 1]; ``depth`` is (H, W) meters with 0
    marking missing measurements.
    """

    color: np.ndarray
    depth: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        color = np.asarray(self.color, dtype=np.float64)
        depth = validate_depth(self.depth)
        shape = self.intrinsics.shape
        if color.shape != shape + (3,):
            raise InputError(f"color shape {color.shape} does not match intrinsics {shape}")
        if depth.shape != shape:
            raise InputError(f"depth shape {depth.shape} does not match intrinsics {shape}")
        if color.min() < 0.0 or color.max() > 1.0:
            raise InputError("color values must lie in [0, 1]")
        color.setflags(write=False)
        depth.setflags(write=False)
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "depth", depth)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.depth > 0


def pixel_grid(intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Flattened (u, v) integer coordinates for every pixel, row-major."""
    v, u = np.mgrid[0 : intrinsics.height, 0 : intrinsics.width]
    return u.ravel().astype(np.float64), v.ravel().astype(np.float64)


def unproject(frame: RGBDFrame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lift every pixel of ``frame`` into the camera frame.

    Returns ``(positions, valid, pixel_index)`` where positions is
    (H*W, 3), valid marks pixels with a depth measurement, and
    pixel_index is the flat row-major pixel id. Invalid pixels get a
    zero position and must be ignored downstream.
    """
    K = frame.intrinsics
    u, v = pixel_grid(K)
    d = frame.depth.ravel()
    valid = d > 0
    x = (u - K.cx) * d / K.fx
    y = (v - K.cy) * d / K.fy
    positions = np.stack([x, y, d], axis=1)
    pixel_index = np.arange(d.size, dtype=np.int64)
    return positions, valid, pixel_index


def project(
    points: np.ndarray, intrinsics: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project camera-frame points to pixel coordinates.

    Returns ``(pixels, depths, in_frustum)``. A point is in the frustum
    when z > 0 and its containing pixel (nearest integer coordinate)
    lies inside the image. Points with z <= 0 are never divided into.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    positive = z > 0
    safe_z = np.where(positive, z, 1.0)
    u = intrinsics.fx * pts[:, 0] / safe_z + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / safe_z + intrinsics.cy
    pixels = np.stack([np.where(positive, u, 0.0), np.where(positive, v, 0.0)], axis=1)
    ui = np.rint(pixels[:, 0])
    vi = np.rint(pixels[:, 1])
    inside = (ui >= 0) & (ui < intrinsics.width) & (vi >= 0) & (vi < intrinsics.height)
    return pixels, z, positive & inside
