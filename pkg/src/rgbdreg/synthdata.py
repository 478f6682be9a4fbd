"""Synthetic RGB-D pair generation with exact ground-truth poses.

Scenes are built from axis-aligned boxes and rectangles carrying
procedural value-noise textures, ray-cast analytically so the depth at
every pixel is the exact nearest-intersection distance. The second view
is the first perturbed by an exactly known rotation and translation, so
generated pairs double as registration oracles.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import frameio
from .descriptor import FeaturePointCloud
from .errors import GenerationError, InputError
from .geometry import (
    CameraIntrinsics,
    RGBDFrame,
    RigidTransform,
    compose,
    invert,
    pixel_grid,
    rotation_about_axis,
)

MIN_VALID_FRACTION = 0.3
RAY_EPS = 1e-9

# fixed per-channel salts for the texture hash
_CHANNEL_SALTS = (0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9)


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64."""
    x = (x + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    x ^= x >> np.uint64(30)
    x = (x * np.uint64(0xBF58476D1CE4E5B9)).astype(np.uint64)
    x ^= x >> np.uint64(27)
    x = (x * np.uint64(0x94D049BB133111EB)).astype(np.uint64)
    x ^= x >> np.uint64(31)
    return x


def _lattice_hash(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic uniform [0, 1) value at integer lattice points."""
    h = (
        ix.astype(np.uint64) * np.uint64(0x8DA6B343)
        ^ iy.astype(np.uint64) * np.uint64(0xD8163841)
        ^ iz.astype(np.uint64) * np.uint64(0xCB1AB31F)
        ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    )
    return _mix64(h).astype(np.float64) / 2.0**64


def _value_noise(points: np.ndarray, seed: int) -> np.ndarray:
    """Trilinearly interpolated lattice noise at (N, 3) points, in [0, 1)."""
    base = np.floor(points)
    frac = points - base
    frac = frac * frac * (3.0 - 2.0 * frac)  # smoothstep
    cell = base.astype(np.int64)
    out = np.zeros(points.shape[0])
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                corner = _lattice_hash(
                    cell[:, 0] + dx, cell[:, 1] + dy, cell[:, 2] + dz, seed
                )
                wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
                wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                out += corner * wx * wy * wz
    return out


def texture_color(
    points: np.ndarray, seed: int, scale: float = 0.5, octaves: int = 3
) -> np.ndarray:
    """Multi-octave value-noise color for (N, 3) world points, in [0.05, 0.95]."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    color = np.zeros((pts.shape[0], 3))
    for channel, salt in enumerate(_CHANNEL_SALTS):
        total = np.zeros(pts.shape[0])
        amplitude_sum = 0.0
        for octave in range(octaves):
            amplitude = 0.5**octave
            frequency = 2.0**octave / scale
            total += amplitude * _value_noise(pts * frequency, seed ^ (salt + octave))
            amplitude_sum += amplitude
        color[:, channel] = total / amplitude_sum
    return 0.05 + 0.9 * color


@dataclass(frozen=True)
class Box:
    """Axis-aligned box primitive."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    texture_seed: int = 0

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Nearest positive hit parameter per ray, +inf where the ray misses."""
        lo = np.asarray(self.center) - 0.5 * np.asarray(self.size)
        hi = np.asarray(self.center) + 0.5 * np.asarray(self.size)
        t_near = np.full(directions.shape[0], -np.inf)
        t_far = np.full(directions.shape[0], np.inf)
        for axis in range(3):
            d = directions[:, axis]
            o = origins[:, axis]
            parallel = np.abs(d) < 1e-300
            safe_d = np.where(parallel, 1.0, d)
            t1 = (lo[axis] - o) / safe_d
            t2 = (hi[axis] - o) / safe_d
            near = np.minimum(t1, t2)
            far = np.maximum(t1, t2)
            inside = (o >= lo[axis]) & (o <= hi[axis])
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
            t_near = np.maximum(t_near, near)
            t_far = np.minimum(t_far, far)
        hit = (t_near <= t_far) & (t_near > RAY_EPS)
        return np.where(hit, t_near, np.inf)


@dataclass(frozen=True)
class Rect:
    """Finite axis-aligned rectangle: the plane ``coordinate[axis] == offset``.

    ``bounds`` limits the two remaining coordinates, in ascending axis
    order, as ((min_a, max_a), (min_b, max_b)).
    """

    axis: int
    offset: float
    bounds: tuple[tuple[float, float], tuple[float, float]]
    texture_seed: int = 0

    def intersect(self, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
        d = directions[:, self.axis]
        o = origins[:, self.axis]
        parallel = np.abs(d) < 1e-300
        t = np.where(parallel, np.inf, (self.offset - o) / np.where(parallel, 1.0, d))
        hit = t > RAY_EPS
        other_axes = [a for a in range(3) if a != self.axis]
        point = origins + t[:, None] * directions
        for (low, high), axis in zip(self.bounds, other_axes):
            coord = point[:, axis]
            hit &= (coord >= low) & (coord <= high)
        return np.where(hit, t, np.inf)


Primitive = Box | Rect


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to generate one view pair deterministically."""

    primitives: tuple[Primitive, ...]
    width: int = 80
    height: int = 60
    fov_deg: float = 65.0
    base_pose: RigidTransform = field(default_factory=RigidTransform.identity)
    rotation_deg: float = 0.0
    translation_m: float = 0.0
    rotation_axis: tuple[float, float, float] | None = None
    translation_dir: tuple[float, float, float] | None = None
    texture_scale: float = 0.5
    texture_octaves: int = 3
    depth_noise_std: float = 0.0
    depth_dropout: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.primitives:
            raise InputError("scene needs at least one primitive")
        if not 0.0 < self.fov_deg < 180.0:
            raise InputError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if not 0.0 <= self.depth_dropout < 1.0:
            raise InputError("depth_dropout must be in [0, 1)")
        if self.texture_scale <= 0 or self.texture_octaves < 1:
            raise InputError("texture parameters must be positive")

    def intrinsics(self) -> CameraIntrinsics:
        focal = (self.width / 2.0) / np.tan(np.radians(self.fov_deg) / 2.0)
        return CameraIntrinsics(
            fx=focal,
            fy=focal,
            cx=(self.width - 1) / 2.0,
            cy=(self.height - 1) / 2.0,
            width=self.width,
            height=self.height,
        )


def default_scene(seed: int = 0, **overrides) -> SceneSpec:
    """A textured desk-scale room: back wall, floor, and three boxes."""
    primitives = (
        Rect(axis=2, offset=3.2, bounds=((-3.5, 3.5), (-2.2, 2.2)), texture_seed=11),
        Rect(axis=1, offset=1.0, bounds=((-3.5, 3.5), (0.0, 3.2)), texture_seed=23),
        Box(center=(-0.55, 0.55, 2.1), size=(0.55, 0.9, 0.5), texture_seed=37),
        Box(center=(0.45, 0.62, 1.8), size=(0.4, 0.76, 0.45), texture_seed=53),
        Box(center=(0.05, -0.35, 2.6), size=(0.7, 0.5, 0.4), texture_seed=71),
    )
    return SceneSpec(primitives=primitives, rng_seed=seed, **overrides)


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise InputError("direction vector must be nonzero")
    return vector / norm


def _raycast(spec: SceneSpec, pose_c2w: RigidTransform) -> tuple[np.ndarray, np.ndarray]:
    """Render color and z-depth for one camera pose by nearest intersection."""
    intr = spec.intrinsics()
    u, v = pixel_grid(intr)
    # rays with unit z in camera coordinates: the hit parameter IS the z-depth
    dirs_cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=1)
    dirs_world = dirs_cam @ pose_c2w.rotation.T
    origins = np.broadcast_to(pose_c2w.translation, dirs_world.shape)

    depth = np.full(u.shape[0], np.inf)
    nearest = np.full(u.shape[0], -1, dtype=np.int64)
    for index, primitive in enumerate(spec.primitives):
        t = primitive.intersect(origins, dirs_world)
        closer = t < depth
        depth = np.where(closer, t, depth)
        nearest = np.where(closer, index, nearest)

    color = np.zeros((u.shape[0], 3))
    for index, primitive in enumerate(spec.primitives):
        mask = nearest == index
        if not mask.any():
            continue
        hits = origins[mask] + depth[mask, None] * dirs_world[mask]
        color[mask] = texture_color(
            hits, primitive.texture_seed, spec.texture_scale, spec.texture_octaves
        )
    depth = np.where(np.isfinite(depth), depth, 0.0)
    return (
        color.reshape(intr.height, intr.width, 3),
        depth.reshape(intr.height, intr.width),
    )


def _degrade_depth(depth: np.ndarray, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    out = depth.copy()
    valid = out > 0
    if spec.depth_noise_std > 0:
        noise = rng.normal(0.0, spec.depth_noise_std, size=out.shape)
        out[valid] = np.maximum(out[valid] + noise[valid], 1e-4)
    if spec.depth_dropout > 0:
        drop = rng.random(out.shape) < spec.depth_dropout
        out[drop] = 0.0
    return out


def perturbation_transform(spec: SceneSpec, rng: np.random.Generator) -> RigidTransform:
    """Camera-frame pose delta with exactly the configured magnitudes."""
    if spec.rotation_axis is not None:
        axis = _unit(np.asarray(spec.rotation_axis, dtype=np.float64))
    else:
        axis = _unit(rng.normal(size=3))
    if spec.translation_dir is not None:
        direction = _unit(np.asarray(spec.translation_dir, dtype=np.float64))
    else:
        direction = _unit(rng.normal(size=3))
    rotation = rotation_about_axis(axis, np.radians(spec.rotation_deg))
    return RigidTransform(rotation, direction * spec.translation_m)


def generate_pair(spec: SceneSpec) -> tuple[RGBDFrame, RGBDFrame, RigidTransform]:
    """Ray-cast two views of the scene; returns the exact relative pose.

    The returned transform maps frame-0 camera coordinates into frame-1
    camera coordinates. Generation is deterministic per seed. Raises
    ``GenerationError`` when a frame's valid-depth coverage falls below
    30%.
    """
    seeds = np.random.SeedSequence(spec.rng_seed).spawn(3)
    rng_perturb = np.random.default_rng(seeds[0])
    delta = perturbation_transform(spec, rng_perturb)
    pose0 = spec.base_pose
    pose1 = compose(pose0, delta)
    relative = invert(delta)  # equals invert(pose1) o pose0

    intr = spec.intrinsics()
    frames = []
    for pose, seed in ((pose0, seeds[1]), (pose1, seeds[2])):
        color, depth = _raycast(spec, pose)
        depth = _degrade_depth(depth, spec, np.random.default_rng(seed))
        coverage = float((depth > 0).mean())
        if coverage < MIN_VALID_FRACTION:
            raise GenerationError(
                f"frame covers only {coverage:.0%} valid depth (< {MIN_VALID_FRACTION:.0%}); "
                "enlarge the primitives, reduce the perturbation, or lower depth_dropout"
            )
        frames.append(RGBDFrame(color=color, depth=depth, intrinsics=intr))
    return frames[0], frames[1], relative


def _overwrite_features(
    cloud: FeaturePointCloud, victims: np.ndarray, new_rows: np.ndarray
) -> FeaturePointCloud:
    rows = np.asarray(new_rows, dtype=np.float64)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    features = cloud.features.copy()
    features[victims] = rows.astype(np.float32)
    return replace(cloud, features=features)


def plant_feature_outliers(
    cloud: FeaturePointCloud, fraction: float, seed: int, jitter: float = 0.01
) -> FeaturePointCloud:
    """Corrupt a fraction of valid points with one-off impostor descriptors.

    Each victim copies a random other valid point's feature (plus a
    small jitter). The matches such a point attracts look unique, so
    they pass any per-match confidence test; only robust fitting can
    reject them.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError("fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    valid_idx = cloud.valid_indices
    count = int(round(fraction * valid_idx.size))
    if count == 0:
        return cloud
    victims = rng.choice(valid_idx, size=count, replace=False)
    donors = rng.choice(valid_idx, size=count, replace=True)
    stolen = cloud.features[donors].astype(np.float64)
    stolen += rng.normal(0.0, jitter, size=stolen.shape)
    return _overwrite_features(cloud, victims, stolen)


def plant_shifted_features(
    cloud: FeaturePointCloud,
    fraction: float,
    shift: np.ndarray,
    seed: int,
    jitter: float = 0.01,
) -> FeaturePointCloud:
    """Corrupt a fraction of valid points with descriptors stolen from a
    consistent spatial offset.

    Each victim copies the feature of the valid point nearest to
    ``victim_position + shift``, imitating periodic structure (brick,
    tiling): the wrong matches it attracts form a coherent alternative
    consensus displaced by the shift, which defeats a single weighted
    fit but not subset-based candidate selection.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError("fraction must be in [0, 1]")
    from scipy.spatial import cKDTree

    rng = np.random.default_rng(seed)
    valid_idx = cloud.valid_indices
    count = int(round(fraction * valid_idx.size))
    if count == 0:
        return cloud
    victims = rng.choice(valid_idx, size=count, replace=False)
    valid_positions = cloud.positions[valid_idx]
    _, nearest = cKDTree(valid_positions).query(cloud.positions[victims] + np.asarray(shift))
    donors = valid_idx[nearest]
    stolen = cloud.features[donors].astype(np.float64)
    stolen += rng.normal(0.0, jitter, size=stolen.shape)
    return _overwrite_features(cloud, victims, stolen)


def plant_repeated_features(
    cloud: FeaturePointCloud,
    fraction: float,
    pool: np.ndarray,
    seed: int,
    jitter: float = 0.01,
) -> FeaturePointCloud:
    """Corrupt a fraction of valid points with shared 'repeated texture' vectors.

    Victims draw from a small pool of descriptors (use the same pool in
    both clouds of a pair), so every match they attract is ambiguous:
    near-identical alternatives exist, and the nearest one is
    position-random. A ratio test collapses these weights; ranking by
    plain feature distance keeps them confidently wrong.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError("fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    valid_idx = cloud.valid_indices
    count = int(round(fraction * valid_idx.size))
    if count == 0:
        return cloud
    victims = rng.choice(valid_idx, size=count, replace=False)
    picks = rng.integers(0, pool.shape[0], size=count)
    rows = np.asarray(pool, dtype=np.float64)[picks]
    rows = rows + rng.normal(0.0, jitter, size=rows.shape)
    return _overwrite_features(cloud, victims, rows)


def descriptor_pool(count: int, feature_dim: int, seed: int) -> np.ndarray:
    """Random unit descriptors for ``plant_repeated_features``."""
    rng = np.random.default_rng(seed)
    pool = rng.normal(size=(count, feature_dim))
    return pool / np.linalg.norm(pool, axis=1, keepdims=True)


def save_pair_with_meta(
    pair_dir: Path,
    spec: SceneSpec,
    frame0: RGBDFrame,
    frame1: RGBDFrame,
    relative: RigidTransform,
) -> None:
    """Write the standard pair directory plus a meta.json of the scene settings."""
    pose0 = spec.base_pose
    pose1 = compose(pose0, invert(relative))
    frameio.save_pair(Path(pair_dir), frame0, frame1, pose0, pose1)
    meta = asdict(spec)
    meta["base_pose"] = spec.base_pose.as_matrix().tolist()
    meta["primitives"] = [
        {"kind": type(p).__name__.lower(), **asdict(p)} for p in spec.primitives
    ]
    (Path(pair_dir) / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_pair(pair_dir: Path) -> tuple[RGBDFrame, RGBDFrame, RigidTransform | None]:
    """Load a pair directory; see ``frameio.load_pair`` for the format."""
    return frameio.load_pair(pair_dir)
