"""Registration metrics and threshold-accuracy aggregation.

Rotation error is the angle of the relative rotation in degrees,
translation error the Euclidean gap in centimeters, and the chamfer
error the symmetric mean nearest-neighbor distance (in centimeters)
between the reference and reconstructed scene clouds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, InsufficientPointsError
from .geometry import RigidTransform, transform_points

ROTATION_THRESHOLDS_DEG = (5.0, 10.0, 45.0)
TRANSLATION_THRESHOLDS_CM = (5.0, 10.0, 25.0)
CHAMFER_THRESHOLDS_CM = (1.0, 5.0, 10.0)

ARCCOS_CLAMP_WARN = 1e-9
METERS_TO_CM = 100.0


def rotation_error(rotation_pred: np.ndarray, rotation_gt: np.ndarray) -> float:
    """Angle in degrees of the rotation taking ``rotation_gt`` to ``rotation_pred``."""
    r_pred = np.asarray(rotation_pred, dtype=np.float64)
    r_gt = np.asarray(rotation_gt, dtype=np.float64)
    cos_angle = (np.trace(r_pred @ r_gt.T) - 1.0) / 2.0
    if abs(cos_angle) > 1.0 + ARCCOS_CLAMP_WARN:
        warnings.warn(
            f"rotation_error arccos argument {cos_angle!r} is far outside [-1, 1]; "
            "inputs may not be rotations",
            stacklevel=2,
        )
    return float(np.degrees(np.arccos(np.clip(cos_angle, -1.0, 1.0))))


def translation_error(translation_pred: np.ndarray, translation_gt: np.ndarray) -> float:
    """Euclidean distance between the translations, in centimeters."""
    diff = np.asarray(translation_pred, dtype=np.float64) - np.asarray(
        translation_gt, dtype=np.float64
    )
    return float(np.linalg.norm(diff) * METERS_TO_CM)


def chamfer_error(points_a: np.ndarray, points_b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between two clouds, in cm.

    Exact nearest neighbors via a k-d tree; the test suite pins this
    against the O(N^2) brute force.
    """
    a = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InsufficientPointsError("chamfer_error requires two non-empty clouds")
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return float((d_ab.mean() + d_ba.mean()) * METERS_TO_CM)


def registration_chamfer(
    points0: np.ndarray,
    points1: np.ndarray,
    transform_pred: RigidTransform,
    transform_gt: RigidTransform,
    max_points: int = 20000,
    seed: int = 0,
) -> float:
    """Chamfer error between the true and the estimated scene assembly.

    Both assemblies union frame 1's points with frame 0's points mapped
    into frame 1's coordinates, once by the ground-truth transform and
    once by the prediction. Clouds larger than ``max_points`` are
    subsampled uniformly with the given seed, identically on both sides.
    """
    rng = np.random.default_rng(seed)
    sampled = []
    for pts in (np.asarray(points0), np.asarray(points1)):
        if pts.shape[0] > max_points:
            pick = np.sort(rng.choice(pts.shape[0], size=max_points, replace=False))
            pts = pts[pick]
        sampled.append(pts)
    p0, p1 = sampled
    reference = np.concatenate([transform_points(transform_gt, p0), p1])
    reconstruction = np.concatenate([transform_points(transform_pred, p0), p1])
    return chamfer_error(reference, reconstruction)


def threshold_accuracy(
    rotation_deg: float, translation_cm: float, chamfer_cm: float | None
) -> dict[str, bool]:
    acc = {}
    for t in ROTATION_THRESHOLDS_DEG:
        acc[f"rot_{t:g}deg"] = bool(rotation_deg < t)
    for t in TRANSLATION_THRESHOLDS_CM:
        acc[f"trans_{t:g}cm"] = bool(translation_cm < t)
    if chamfer_cm is not None:
        for t in CHAMFER_THRESHOLDS_CM:
            acc[f"chamfer_{t:g}cm"] = bool(chamfer_cm < t)
    return acc


@dataclass(frozen=True)
class RegistrationReport:
    """Per-pair metric bundle plus stage timings."""

    rotation_error_deg: float
    translation_error_cm: float
    chamfer_error_cm: float | None
    accuracy: dict[str, bool]
    time_ms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.rotation_error_deg <= 180.0:
            raise InputError(f"rotation error {self.rotation_error_deg} outside [0, 180]")
        if self.translation_error_cm < 0:
            raise InputError("translation error must be non-negative")
        if self.chamfer_error_cm is not None and self.chamfer_error_cm < 0:
            raise InputError("chamfer error must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "rot_err_deg": self.rotation_error_deg,
            "trans_err_cm": self.translation_error_cm,
            "chamfer_cm": self.chamfer_error_cm,
            "acc": dict(self.accuracy),
            "time_ms": dict(self.time_ms),
        }


def evaluate_registration(
    transform_pred: RigidTransform,
    transform_gt: RigidTransform,
    points0: np.ndarray | None = None,
    points1: np.ndarray | None = None,
    chamfer_max_points: int = 20000,
    chamfer_seed: int = 0,
    time_ms: dict[str, float] | None = None,
) -> RegistrationReport:
    """Build the full per-pair report; chamfer is skipped without clouds."""
    rot = rotation_error(transform_pred.rotation, transform_gt.rotation)
    trans = translation_error(transform_pred.translation, transform_gt.translation)
    cham = None
    if points0 is not None and points1 is not None:
        cham = registration_chamfer(
            points0, points1, transform_pred, transform_gt, chamfer_max_points, chamfer_seed
        )
    return RegistrationReport(
        rotation_error_deg=rot,
        translation_error_cm=trans,
        chamfer_error_cm=cham,
        accuracy=threshold_accuracy(rot, trans, cham),
        time_ms=dict(time_ms or {}),
    )


def aggregate(reports: list[RegistrationReport]) -> dict:
    """Mean, median, and fraction-below-threshold per metric.

    Key names mirror the per-pair JSON report (``rot_err_deg``,
    ``trans_err_cm``, ``chamfer_cm``, ``acc``, ``time_ms``).
    """
    if not reports:
        raise InputError("aggregate requires at least one report")
    rot = np.array([r.rotation_error_deg for r in reports])
    trans = np.array([r.translation_error_cm for r in reports])
    cham = np.array([r.chamfer_error_cm for r in reports if r.chamfer_error_cm is not None])

    summary: dict = {"count": len(reports)}
    summary["rot_err_deg"] = {"mean": float(rot.mean()), "median": float(np.median(rot))}
    summary["trans_err_cm"] = {"mean": float(trans.mean()), "median": float(np.median(trans))}
    if cham.size:
        summary["chamfer_cm"] = {"mean": float(cham.mean()), "median": float(np.median(cham))}
    acc: dict[str, float] = {}
    for t in ROTATION_THRESHOLDS_DEG:
        acc[f"rot_{t:g}deg"] = float((rot < t).mean())
    for t in TRANSLATION_THRESHOLDS_CM:
        acc[f"trans_{t:g}cm"] = float((trans < t).mean())
    if cham.size:
        for t in CHAMFER_THRESHOLDS_CM:
            acc[f"chamfer_{t:g}cm"] = float((cham < t).mean())
    summary["acc"] = acc
    stages: dict[str, list[float]] = {}
    for report in reports:
        for stage, ms in report.time_ms.items():
            stages.setdefault(stage, []).append(ms)
    summary["time_ms"] = {stage: float(np.mean(values)) for stage, values in stages.items()}
    return summary
