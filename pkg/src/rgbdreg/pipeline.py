"""End-to-end wiring: descriptor -> matching -> fitting -> rendering -> metrics.

The estimated quantity is always the relative pose mapping frame-0
coordinates into frame-1 (the same convention as ground-truth pose
files). The fitting stage itself solves for the inverse direction
(q-side onto p-side, with P = frame 0's cloud), so its result is
inverted once at this boundary.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import frameio
from .alignment import FitConfig, FitResult, randomized_fit
from .correspondence import CorrespondenceSet, extract_correspondences
from .descriptor import (
    DescriptorConfig,
    FeaturePointCloud,
    build_feature_cloud,
    extract_features,
    load_feature_map,
)
from .errors import ConfigError, InputError, RegistrationError
from .evaluation import RegistrationReport, aggregate, evaluate_registration
from .geometry import RGBDFrame, RigidTransform, invert
from .renderer import LossReport, RenderOutput, consistency_losses, cross_render

logger = logging.getLogger(__name__)

DEFAULT_SUBSET_SWEEP = (5, 10, 20, 50, 100, 200)


@dataclass(frozen=True)
class PipelineConfig:
    """Full-pipeline settings; the defaults are the reference configuration
    (400 correspondences, 100 subsets of 20, cross rendering, ratio test on,
    loss weights 1/1/0.1)."""

    descriptor: str = "patch"
    feature_dim: int = 32
    k: int = 400
    subsets: int = 100
    subset_size: int = 20
    seed: int = 0
    randomized: bool = True
    ratio_test: bool = True
    render_mode: str = "cross"
    splat_radius: int = 0
    photometric_weight: float = 1.0
    depth_weight: float = 1.0
    correspondence_weight: float = 0.1
    chamfer_max_points: int = 20000

    def __post_init__(self):
        if not (self.descriptor == "patch" or self.descriptor.startswith("file:")):
            raise ConfigError(
                f"descriptor must be 'patch' or 'file:<dir>', got {self.descriptor!r}"
            )
        if self.render_mode not in ("cross", "joint"):
            raise ConfigError(f"render_mode must be cross or joint, got {self.render_mode!r}")

    def descriptor_config(self) -> DescriptorConfig:
        return DescriptorConfig(feature_dim=self.feature_dim)

    def fit_config(self, available: int) -> FitConfig:
        size = self.subset_size
        if size > available:
            logger.warning(
                "subset size %d exceeds the %d correspondences; clamping", size, available
            )
            size = available
        return FitConfig(
            num_subsets=self.subsets,
            subset_size=size,
            rng_seed=self.seed,
            use_randomization=self.randomized,
        )


@dataclass
class PipelineOutput:
    """Everything a single registration produced."""

    transform: RigidTransform  # maps frame-0 coordinates into frame-1
    fit: FitResult
    losses: LossReport
    matches: CorrespondenceSet
    clouds: tuple[FeaturePointCloud, FeaturePointCloud]
    renders: tuple[RenderOutput, RenderOutput]
    report: RegistrationReport | None
    time_ms: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "pose_0_to_1": self.transform.as_matrix().tolist(),
            "losses": {
                "photometric": self.losses.photometric,
                "depth": self.losses.depth,
                "correspondence": self.losses.correspondence,
                "total": self.losses.total,
            },
            "num_correspondences": len(self.matches),
            "time_ms": dict(self.time_ms),
        }
        if self.report is not None:
            out["metrics"] = self.report.to_json_dict()
        return out


class _StageTimer:
    def __init__(self):
        self.ms: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def mark(self, stage: str):
        now = time.perf_counter()
        self.ms[stage] = (now - self._t0) * 1000.0
        self._t0 = now


def _stage(name: str):
    """Decorator tagging pipeline-stage failures with the stage name."""

    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except RegistrationError as e:
                raise type(e)(f"{name} stage: {e}") from e

        return inner

    return wrap


@_stage("descriptor")
def _build_clouds(
    frame0: RGBDFrame, frame1: RGBDFrame, config: PipelineConfig
) -> tuple[FeaturePointCloud, FeaturePointCloud]:
    if config.descriptor == "patch":
        dconf = config.descriptor_config()
        features = [extract_features(f.color, dconf) for f in (frame0, frame1)]
    else:
        feature_dir = Path(config.descriptor[len("file:") :])
        features = [
            load_feature_map(feature_dir / f"{i}.feat", frame.intrinsics.shape)
            for i, frame in enumerate((frame0, frame1))
        ]
    return (
        build_feature_cloud(frame0, features[0]),
        build_feature_cloud(frame1, features[1]),
    )


@_stage("correspondence")
def _match(clouds, config: PipelineConfig) -> CorrespondenceSet:
    weighting = "ratio" if config.ratio_test else "distance"
    return extract_correspondences(clouds[0], clouds[1], k=config.k, weighting=weighting)


@_stage("alignment")
def _fit(matches: CorrespondenceSet, config: PipelineConfig) -> FitResult:
    return randomized_fit(matches, config.fit_config(len(matches)))


@_stage("render")
def _render_and_score(clouds, frames, fit: FitResult, transform, config: PipelineConfig):
    renders = cross_render(
        clouds[0],
        clouds[1],
        transform,
        frames[0].intrinsics,
        mode=config.render_mode,
        splat_radius=config.splat_radius,
    )
    losses = consistency_losses(
        renders,
        frames,
        fit.full_set_weighted_error,
        photometric_weight=config.photometric_weight,
        depth_weight=config.depth_weight,
        correspondence_weight=config.correspondence_weight,
    )
    return renders, losses


def run_pipeline(
    frame0: RGBDFrame,
    frame1: RGBDFrame,
    transform_gt: RigidTransform | None = None,
    config: PipelineConfig = PipelineConfig(),
) -> PipelineOutput:
    """Register frame 0 onto frame 1 entirely in memory."""
    timer = _StageTimer()
    clouds = _build_clouds(frame0, frame1, config)
    timer.mark("descriptor")

    matches = _match(clouds, config)
    timer.mark("correspondence")

    fit = _fit(matches, config)
    transform = invert(fit.transform)  # fit maps cloud1 -> cloud0; report 0 -> 1
    timer.mark("alignment")

    renders, losses = _render_and_score(clouds, (frame0, frame1), fit, transform, config)
    timer.mark("render")

    report = None
    if transform_gt is not None:
        report = evaluate_registration(
            transform,
            transform_gt,
            points0=clouds[0].positions[clouds[0].valid],
            points1=clouds[1].positions[clouds[1].valid],
            chamfer_max_points=config.chamfer_max_points,
            chamfer_seed=config.seed,
        )
        timer.mark("evaluate")
        report = replace(report, time_ms=dict(timer.ms))

    return PipelineOutput(
        transform=transform,
        fit=fit,
        losses=losses,
        matches=matches,
        clouds=clouds,
        renders=renders,
        report=report,
        time_ms=dict(timer.ms),
    )


def register(
    pair_dir: Path, config: PipelineConfig = PipelineConfig(), out_dir: Path | None = None
) -> PipelineOutput:
    """Register an on-disk pair and write the pose and JSON report.

    Writes ``pose_pred.txt`` (row-major 3x4, frame-0 to frame-1) and
    ``report.json`` into ``out_dir`` (default ``<pair_dir>/registration``).
    """
    pair_dir = Path(pair_dir)
    frame0, frame1, transform_gt = frameio.load_pair(pair_dir)
    output = run_pipeline(frame0, frame1, transform_gt, config)

    out_dir = Path(out_dir) if out_dir is not None else pair_dir / "registration"
    out_dir.mkdir(parents=True, exist_ok=True)
    frameio.write_pose(out_dir / "pose_pred.txt", output.transform)
    (out_dir / "report.json").write_text(
        json.dumps(output.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    return output


def discover_pairs(dataset_dir: Path) -> list[Path]:
    """Pair subdirectories of a dataset, ordered by name."""
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise InputError(f"dataset directory not found: {dataset_dir}")
    pairs = sorted(
        p for p in dataset_dir.iterdir() if (p / "0").is_dir() and (p / "1").is_dir()
    )
    if not pairs:
        raise InputError(f"no pair directories under {dataset_dir}")
    return pairs


def evaluate_dataset(
    dataset_dir: Path, config: PipelineConfig = PipelineConfig()
) -> tuple[list[tuple[str, PipelineOutput]], dict]:
    """Register every pair of a dataset; returns per-pair outputs and the aggregate."""
    results = []
    for pair_dir in discover_pairs(dataset_dir):
        frame0, frame1, transform_gt = frameio.load_pair(pair_dir)
        output = run_pipeline(frame0, frame1, transform_gt, config)
        results.append((pair_dir.name, output))
        logger.info("registered %s", pair_dir.name)
    reports = [out.report for _, out in results if out.report is not None]
    summary = aggregate(reports) if reports else {"count": 0}
    return results, summary


def benchmark(
    dataset_dir: Path,
    subset_counts: tuple[int, ...] = DEFAULT_SUBSET_SWEEP,
    config: PipelineConfig = PipelineConfig(),
    repeats: int = 3,
    min_pairs: int = 10,
) -> list[dict]:
    """Sweep the subset count over a dataset with ground truth.

    Descriptors and correspondences are computed once per pair and
    shared across the sweep; the reported ``time_ms`` is the wall time
    of the fitting stage alone, which is the only stage the sweep
    varies (file I/O and the shared stages are excluded). Each fit is
    repeated ``repeats`` times for stable timing.
    """
    pair_dirs = discover_pairs(dataset_dir)
    if len(pair_dirs) < min_pairs:
        raise InputError(f"benchmark needs >= {min_pairs} pairs, found {len(pair_dirs)}")

    prepared = []
    for pair_dir in pair_dirs:
        frame0, frame1, transform_gt = frameio.load_pair(pair_dir)
        if transform_gt is None:
            raise InputError(f"benchmark requires ground-truth poses; {pair_dir} has none")
        clouds = _build_clouds(frame0, frame1, config)
        matches = _match(clouds, config)
        prepared.append((pair_dir.name, clouds, matches, transform_gt))
        logger.info("prepared %s (%d correspondences)", pair_dir.name, len(matches))
    return benchmark_prepared(prepared, subset_counts, config, repeats)


def benchmark_prepared(
    prepared: list,
    subset_counts: tuple[int, ...] = DEFAULT_SUBSET_SWEEP,
    config: PipelineConfig = PipelineConfig(),
    repeats: int = 3,
) -> list[dict]:
    """Core of ``benchmark`` over pre-matched pairs.

    ``prepared`` entries are ``(name, clouds, matches, transform_gt)``.
    """
    rows = []
    for count in subset_counts:
        sweep_config = replace(config, subsets=count)
        reports = []
        times_ms = []
        for name, clouds, matches, transform_gt in prepared:
            fit_config = sweep_config.fit_config(len(matches))
            elapsed = []
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                fit = randomized_fit(matches, fit_config)
                elapsed.append((time.perf_counter() - t0) * 1000.0)
            times_ms.append(float(np.mean(elapsed)))
            transform = invert(fit.transform)
            reports.append(
                evaluate_registration(
                    transform,
                    transform_gt,
                    points0=clouds[0].positions[clouds[0].valid],
                    points1=clouds[1].positions[clouds[1].valid],
                    chamfer_max_points=config.chamfer_max_points,
                    chamfer_seed=config.seed,
                )
            )
        summary = aggregate(reports)
        rows.append(
            {
                "subsets": count,
                "rot_mean_deg": summary["rot_err_deg"]["mean"],
                "rot_median_deg": summary["rot_err_deg"]["median"],
                "trans_mean_cm": summary["trans_err_cm"]["mean"],
                "trans_median_cm": summary["trans_err_cm"]["median"],
                "chamfer_mean_cm": summary["chamfer_cm"]["mean"],
                "chamfer_median_cm": summary["chamfer_cm"]["median"],
                "time_ms_mean": float(np.mean(times_ms)),
                "time_ms_std": float(np.std(times_ms)),
            }
        )
        logger.info("subset count %d: %.2f ms mean fit time", count, rows[-1]["time_ms_mean"])
    return rows
