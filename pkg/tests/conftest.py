import numpy as np
import pytest

from rgbdreg.geometry import CameraIntrinsics, RGBDFrame, RigidTransform, rotation_about_axis


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=50.0, fy=48.0, cx=19.5, cy=14.5, width=40, height=30)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotation_about_axis(axis, rng.uniform(0.0, np.pi))


def random_transform(rng: np.random.Generator, trans_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-trans_scale, trans_scale, size=3))


def textured_frame(intrinsics: CameraIntrinsics, seed: int = 0, missing: float = 0.0) -> RGBDFrame:
    """A frame with smooth non-constant color and a sloped depth surface."""
    rng = np.random.default_rng(seed)
    h, w = intrinsics.shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    color = np.stack(
        [
            0.5 + 0.4 * np.sin(2 * np.pi * (u / w + rng.uniform())),
            0.5 + 0.4 * np.cos(2 * np.pi * (v / h + rng.uniform())),
            0.5 + 0.3 * np.sin(2 * np.pi * ((u + v) / (w + h) + rng.uniform())),
        ],
        axis=2,
    )
    depth = 1.5 + 0.5 * u / w + 0.3 * v / h + 0.05 * np.sin(u * 0.7) * np.cos(v * 0.9)
    if missing > 0:
        depth[rng.random(depth.shape) < missing] = 0.0
    return RGBDFrame(color=np.clip(color, 0.0, 1.0), depth=depth, intrinsics=intrinsics)
