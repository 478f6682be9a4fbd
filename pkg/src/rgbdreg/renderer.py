"""Z-buffered point splatting and the masked consistency losses.

Points are projected into a view and splat onto the pixel containing
the projection (optionally a square neighborhood); the nearest point
wins each pixel. Pixels no point reaches are invalid and excluded from
every loss, so misalignment cannot be rewarded through unobserved
regions. Cross-view rendering draws each view exclusively from the
*other* frame's points; joint mode (both clouds everywhere) exists as a
deliberately degenerate baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .descriptor import FeaturePointCloud
from .errors import ConfigError
from .geometry import CameraIntrinsics, RGBDFrame, RigidTransform, invert, project, transform_points

logger = logging.getLogger(__name__)

DEPTH_TIE_EPS = 1e-9
RENDER_MODES = ("cross", "joint")


@dataclass(frozen=True)
class RenderOutput:
    """Rendered color/depth plus the per-pixel validity mask.

    Invalid pixels carry color (0, 0, 0) and depth 0 by contract.
    """

    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W)
    valid: np.ndarray  # (H, W) bool


@dataclass(frozen=True)
class LossReport:
    """Masked consistency losses and their weighted total."""

    photometric: float
    depth: float
    correspondence: float
    total: float
    valid_pixel_counts: tuple[int, ...]
    zero_photometric_coverage: bool = False
    zero_depth_coverage: bool = False


def _empty_render(intrinsics: CameraIntrinsics) -> RenderOutput:
    shape = intrinsics.shape
    return RenderOutput(
        color=np.zeros(shape + (3,)),
        depth=np.zeros(shape),
        valid=np.zeros(shape, dtype=bool),
    )


def _splat_arrays(
    positions: np.ndarray,
    colors: np.ndarray,
    point_ids: np.ndarray,
    intrinsics: CameraIntrinsics,
    splat_radius: int,
) -> RenderOutput:
    """Core z-buffer splat over pre-transformed camera-frame positions."""
    height, width = intrinsics.shape
    npx = height * width
    pixels, z, _ = project(positions, intrinsics)
    in_front = z > 0
    ui = np.rint(pixels[:, 0]).astype(np.int64)
    vi = np.rint(pixels[:, 1]).astype(np.int64)

    zbuf = np.full(npx, np.inf)
    cand_pix: list[np.ndarray] = []
    cand_z: list[np.ndarray] = []
    cand_id: list[np.ndarray] = []
    for dv in range(-splat_radius, splat_radius + 1):
        for du in range(-splat_radius, splat_radius + 1):
            uu = ui + du
            vv = vi + dv
            keep = in_front & (uu >= 0) & (uu < width) & (vv >= 0) & (vv < height)
            if not keep.any():
                continue
            flat = vv[keep] * width + uu[keep]
            cand_pix.append(flat)
            cand_z.append(z[keep])
            cand_id.append(point_ids[keep])
            np.minimum.at(zbuf, flat, z[keep])

    out = _empty_render(intrinsics)
    if not cand_pix:
        return out
    pix = np.concatenate(cand_pix)
    zc = np.concatenate(cand_z)
    ids = np.concatenate(cand_id)

    # among all points within the tie window of the pixel minimum, the
    # lowest point index wins; this is order-independent and stable
    near = zc <= zbuf[pix] + DEPTH_TIE_EPS
    winner = np.full(npx, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(winner, pix[near], ids[near])
    valid_flat = winner != np.iinfo(np.int64).max

    id_to_z = np.zeros(int(point_ids.max()) + 1 if point_ids.size else 1)
    id_to_color = np.zeros((id_to_z.size, 3))
    id_to_z[point_ids] = z
    id_to_color[point_ids] = colors

    color = np.zeros((npx, 3))
    depth = np.zeros(npx)
    winners = winner[valid_flat]
    color[valid_flat] = id_to_color[winners]
    depth[valid_flat] = id_to_z[winners]
    return RenderOutput(
        color=color.reshape(height, width, 3),
        depth=depth.reshape(height, width),
        valid=valid_flat.reshape(height, width),
    )


def splat_render(
    cloud: FeaturePointCloud,
    view: RigidTransform,
    intrinsics: CameraIntrinsics,
    splat_radius: int = 0,
) -> RenderOutput:
    """Render a cloud's valid points after mapping them through ``view``.

    ``view`` takes cloud coordinates into the render camera's frame;
    use the identity to re-render a cloud from its own capture pose.
    """
    if splat_radius < 0:
        raise ConfigError(f"splat_radius must be >= 0, got {splat_radius}")
    idx = cloud.valid_indices
    if idx.size == 0:
        return _empty_render(intrinsics)
    positions = transform_points(view, cloud.positions[idx])
    return _splat_arrays(positions, cloud.colors[idx], idx, intrinsics, splat_radius)


def cross_render(
    cloud_p: FeaturePointCloud,
    cloud_q: FeaturePointCloud,
    transform_p_to_q: RigidTransform,
    intrinsics: CameraIntrinsics,
    mode: str = "cross",
    splat_radius: int = 0,
) -> tuple[RenderOutput, RenderOutput]:
    """Render both views under the estimated relative transform.

    Cross mode (the default) renders view 1 from Q's points only and
    view 2 from P's points only. Joint mode renders both views from the
    union of the clouds, which stays photo-consistent even under a wrong
    transform; it is kept for ablation experiments.
    """
    if mode not in RENDER_MODES:
        raise ConfigError(f"render mode must be one of {RENDER_MODES}, got {mode!r}")
    t_q_to_p = invert(transform_p_to_q)
    if mode == "cross":
        render1 = splat_render(cloud_q, t_q_to_p, intrinsics, splat_radius)
        render2 = splat_render(cloud_p, transform_p_to_q, intrinsics, splat_radius)
        return render1, render2

    renders = []
    for own, other, view_other in (
        (cloud_p, cloud_q, t_q_to_p),
        (cloud_q, cloud_p, transform_p_to_q),
    ):
        own_idx = own.valid_indices
        other_idx = other.valid_indices
        positions = np.concatenate(
            [own.positions[own_idx], transform_points(view_other, other.positions[other_idx])]
        )
        colors = np.concatenate([own.colors[own_idx], other.colors[other_idx]])
        # own points keep their ids, the other cloud's follow after, so
        # depth ties inside one cloud resolve exactly as in cross mode
        ids = np.concatenate([own_idx, other_idx + len(own)])
        renders.append(_splat_arrays(positions, colors, ids, intrinsics, splat_radius))
    return renders[0], renders[1]


def consistency_losses(
    renders: Sequence[RenderOutput],
    inputs: Sequence[RGBDFrame],
    correspondence_error: float,
    photometric_weight: float = 1.0,
    depth_weight: float = 1.0,
    correspondence_weight: float = 0.1,
) -> LossReport:
    """Masked L1 photometric and depth losses plus the correspondence error.

    Photometric terms pool every channel of every render-valid pixel
    across all views; depth terms additionally require the input depth
    to be present. A term with zero coverage contributes 0 and sets its
    warning flag rather than failing.
    """
    if len(renders) != len(inputs) or not renders:
        raise ConfigError("renders and inputs must be non-empty and parallel")
    photo_sum = 0.0
    photo_count = 0
    depth_sum = 0.0
    depth_count = 0
    counts = []
    for render, frame in zip(renders, inputs):
        if render.color.shape != frame.color.shape:
            raise ConfigError("render and input dimensions disagree")
        mask = render.valid
        counts.append(int(mask.sum()))
        photo_sum += float(np.abs(render.color[mask] - frame.color[mask]).sum())
        photo_count += 3 * int(mask.sum())
        dmask = mask & (frame.depth > 0)
        depth_sum += float(np.abs(render.depth[dmask] - frame.depth[dmask]).sum())
        depth_count += int(dmask.sum())

    zero_photo = photo_count == 0
    zero_depth = depth_count == 0
    if zero_photo:
        logger.warning("photometric loss has zero valid coverage")
    if zero_depth:
        logger.warning("depth loss has zero valid coverage")
    photometric = 0.0 if zero_photo else photo_sum / photo_count
    depth = 0.0 if zero_depth else depth_sum / depth_count
    total = (
        photometric_weight * photometric
        + depth_weight * depth
        + correspondence_weight * correspondence_error
    )
    return LossReport(
        photometric=photometric,
        depth=depth,
        correspondence=correspondence_error,
        total=total,
        valid_pixel_counts=tuple(counts),
        zero_photometric_coverage=zero_photo,
        zero_depth_coverage=zero_depth,
    )
