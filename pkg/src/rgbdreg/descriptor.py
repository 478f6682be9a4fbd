"""Dense per-pixel descriptors and feature point cloud assembly.

The built-in descriptor is deterministic and training-free: each pixel's
5x5 color patch is mean-subtracted and projected by a fixed seeded random
orthogonal matrix, concatenated with an 8-bin gradient-orientation
histogram over the same patch, then L2-normalized. Learned feature maps
can be swapped in through the binary file format below without touching
the rest of the pipeline.

Feature file format: ``magic "FMAP" | H, W, F as little-endian uint32 |
normalization flag as uint8 (1 = rows already unit norm) | row-major
float32 features``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, LoadError
from .geometry import RGBDFrame, unproject

PATCH_RADIUS = 2  # 5x5 patches
ORIENTATION_BINS = 8
FEATURE_MAGIC = b"FMAP"
_HEADER = struct.Struct("<4sIIIB")


@dataclass(frozen=True)
class DescriptorConfig:
    """Descriptor settings. ``feature_dim`` is the full output dimension."""

    feature_dim: int = 32
    projection_seed: int = 1759

    def __post_init__(self):
        patch_len = 3 * (2 * PATCH_RADIUS + 1) ** 2
        low = ORIENTATION_BINS + 1
        high = ORIENTATION_BINS + patch_len
        if not low <= self.feature_dim <= high:
            raise ConfigError(
                f"feature_dim must be in [{low}, {high}] "
                f"(8 histogram bins + 1..{patch_len} patch projections), got {self.feature_dim}"
            )


@lru_cache(maxsize=8)
def _projection_matrix(patch_len: int, out_dim: int, seed: int) -> np.ndarray:
    """Rows of a seeded random orthogonal matrix, shape (out_dim, patch_len)."""
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((patch_len, patch_len))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))  # fix the QR sign ambiguity
    mat = q[:, :out_dim].T.copy()
    mat.setflags(write=False)
    return mat


def _shifted_patches(padded: np.ndarray, height: int, width: int) -> list[np.ndarray]:
    """All (2r+1)^2 clamped shifts of a padded image, each (H, W, ...)."""
    r = PATCH_RADIUS
    views = []
    for dv in range(2 * r + 1):
        for du in range(2 * r + 1):
            views.append(padded[dv : dv + height, du : du + width])
    return views


def extract_features(color_image: np.ndarray, config: DescriptorConfig) -> np.ndarray:
    """Compute the (H, W, F) float32 feature map for an RGB image in [0, 1].

    Output rows have unit L2 norm; featureless pixels (flat patch, zero
    gradients) fall back to a fixed unit basis vector so the norm
    invariant holds everywhere.
    """
    image = np.asarray(color_image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"expected an (H, W, 3) image, got shape {image.shape}")
    height, width = image.shape[:2]
    r = PATCH_RADIUS

    padded = np.pad(image, ((r, r), (r, r), (0, 0)), mode="edge")
    patches = np.stack(_shifted_patches(padded, height, width), axis=2)  # (H, W, 25, 3)
    patches = patches - patches.mean(axis=2, keepdims=True)
    patch_len = patches.shape[2] * 3
    flat = patches.reshape(height * width, patch_len)

    out_dim = config.feature_dim - ORIENTATION_BINS
    proj = _projection_matrix(patch_len, out_dim, config.projection_seed)
    projected = flat @ proj.T  # (H*W, F-8)

    # gradients over the r-padded extent so histogram pooling can reuse the shift trick
    gray = image.mean(axis=2)
    gpad = np.pad(gray, r + 1, mode="edge")
    gx = (gpad[1:-1, 2:] - gpad[1:-1, :-2]) * 0.5
    gy = (gpad[2:, 1:-1] - gpad[:-2, 1:-1]) * 0.5
    magnitude = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)
    bins = np.floor((theta + np.pi) / (2 * np.pi / ORIENTATION_BINS)).astype(np.int64)
    bins %= ORIENTATION_BINS
    one_hot = np.zeros(magnitude.shape + (ORIENTATION_BINS,), dtype=np.float64)
    rows, cols = np.indices(magnitude.shape)
    one_hot[rows, cols, bins] = magnitude
    # one_hot covers the r-padded extent; summing its shifts pools each 5x5 patch
    hist = np.zeros((height, width, ORIENTATION_BINS), dtype=np.float64)
    for view in _shifted_patches(one_hot, height, width):
        hist += view

    features = np.concatenate([projected, hist.reshape(height * width, ORIENTATION_BINS)], axis=1)
    norms = np.linalg.norm(features, axis=1)
    flat_pixels = norms < 1e-12
    if flat_pixels.any():
        features[flat_pixels] = 0.0
        features[flat_pixels, 0] = 1.0
        norms[flat_pixels] = 1.0
    features /= norms[:, None]
    return features.reshape(height, width, config.feature_dim).astype(np.float32)


def normalize_feature_map(features: np.ndarray) -> np.ndarray:
    """L2-normalize each pixel's feature vector, with the same flat-pixel fallback."""
    feats = features.astype(np.float32, copy=True)
    flat = feats.reshape(-1, feats.shape[-1])
    norms = np.linalg.norm(flat.astype(np.float64), axis=1)
    zero = norms < 1e-12
    if zero.any():
        flat[zero] = 0.0
        flat[zero, 0] = 1.0
        norms[zero] = 1.0
    flat /= norms[:, None].astype(np.float32)
    return feats


def save_feature_map(path: Path, features: np.ndarray, normalized: bool = True) -> None:
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 3:
        raise InputError(f"feature map must be (H, W, F), got shape {features.shape}")
    height, width, dim = features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, height, width, dim, 1 if normalized else 0))
        fh.write(np.ascontiguousarray(features).tobytes())


def load_feature_map(path: Path, expected_dims: tuple[int, ...] | None = None) -> np.ndarray:
    """Load a feature map, validating the header against ``expected_dims``.

    ``expected_dims`` is (H, W) or (H, W, F). Maps flagged unnormalized
    are L2-normalized on load.
    """
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"missing feature file: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise LoadError(f"{path}: truncated header")
    magic, height, width, dim, flag = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise LoadError(f"{path}: bad magic {magic!r}")
    expected_bytes = _HEADER.size + 4 * height * width * dim
    if len(raw) != expected_bytes:
        raise LoadError(f"{path}: expected {expected_bytes} bytes, found {len(raw)}")
    if expected_dims is not None:
        actual = (height, width, dim)[: len(expected_dims)]
        if tuple(expected_dims) != actual:
            raise LoadError(
                f"{path}: dimension mismatch, header says {actual}, expected {tuple(expected_dims)}"
            )
    features = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(height, width, dim)
    bad = ~np.isfinite(features)
    if bad.any():
        v, u = np.argwhere(bad.any(axis=2))[0]
        raise LoadError(f"{path}: non-finite feature value at pixel (row={v}, col={u})")
    features = features.astype(np.float32)
    if flag == 0:
        features = normalize_feature_map(features)
    return features


@dataclass(frozen=True)
class FeaturePointCloud:
    """Per-pixel point cloud: positions, colors, descriptors, validity.

    One entry per source pixel (N = H*W), row-major. Invalid entries
    (missing depth) are retained to keep indexing stable but must never
    be consumed by matching, fitting, or rendering.
    """

    positions: np.ndarray  # (N, 3) float64, meters
    colors: np.ndarray  # (N, 3) float64 in [0, 1]
    features: np.ndarray  # (N, F) float32, unit rows
    valid: np.ndarray  # (N,) bool
    pixel_index: np.ndarray  # (N,) int64, flat row-major pixel id

    def __post_init__(self):
        n = self.positions.shape[0]
        shapes = {
            "positions": (self.positions.shape, (n, 3)),
            "colors": (self.colors.shape, (n, 3)),
            "valid": (self.valid.shape, (n,)),
            "pixel_index": (self.pixel_index.shape, (n,)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise InputError(f"{name} shape {got}, expected {want}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise InputError(f"features shape {self.features.shape}, expected ({n}, F)")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def num_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    @property
    def valid_indices(self) -> np.ndarray:
        return np.flatnonzero(self.valid)


def build_feature_cloud(frame: RGBDFrame, features: np.ndarray) -> FeaturePointCloud:
    """Assemble the feature point cloud for a frame.

    Positions come from unprojection, colors from the image, descriptors
    from ``features``; validity follows the depth sentinel.
    """
    features = np.asarray(features)
    if features.shape[:2] != frame.intrinsics.shape:
        raise InputError(
            f"feature map {features.shape[:2]} does not match frame {frame.intrinsics.shape}"
        )
    positions, valid, pixel_index = unproject(frame)
    return FeaturePointCloud(
        positions=positions,
        colors=frame.color.reshape(-1, 3),
        features=features.reshape(-1, features.shape[2]).astype(np.float32),
        valid=valid,
        pixel_index=pixel_index,
    )
