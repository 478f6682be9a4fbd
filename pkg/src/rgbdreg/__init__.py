"""RGB-D pair registration via feature point clouds, ratio-test matching,
and randomized weighted Procrustes fitting, verified through cross-view
splat rendering."""

from .alignment import (
    FitConfig,
    FitResult,
    error_weight_gradient,
    randomized_fit,
    weighted_error,
    weighted_kabsch,
)
from .correspondence import (
    CorrespondenceSet,
    extract_correspondences,
    ratio_weight,
    two_nearest,
)
from .descriptor import (
    DescriptorConfig,
    FeaturePointCloud,
    build_feature_cloud,
    extract_features,
    load_feature_map,
    save_feature_map,
)
from .errors import (
    ConfigError,
    DegenerateFitError,
    GenerationError,
    InputError,
    InsufficientPointsError,
    LoadError,
    NoCorrespondencesError,
    NumericalError,
    RegistrationError,
)
from .evaluation import (
    RegistrationReport,
    aggregate,
    chamfer_error,
    evaluate_registration,
    rotation_error,
    translation_error,
)
from .geometry import (
    CameraIntrinsics,
    RGBDFrame,
    RigidTransform,
    compose,
    invert,
    project,
    transform_points,
    unproject,
)
from .pipeline import PipelineConfig, PipelineOutput, benchmark, evaluate_dataset, register, run_pipeline
from .renderer import LossReport, RenderOutput, consistency_losses, cross_render, splat_render
from .synthdata import SceneSpec, default_scene, generate_pair, load_pair

__version__ = "0.1.0"
