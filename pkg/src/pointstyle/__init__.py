"""Feed-forward 3D scene stylization in point-cloud space.

Pipeline: back-project calibrated RGB-D views into a single feature point
cloud, fit one covariance-matching linear transform against a style
reference, modulate every point once, then splat the shared stylized cloud
into arbitrary novel cameras. Cross-view consistency follows by
construction and is measured with depth-based warping error.
"""

from .aggregation import (
    AggregationPipelineConfig,
    AggregationStageConfig,
    aggregate_pipeline,
    aggregate_stage,
    ball_query,
    farthest_point_sample,
)
from .errors import (
    FormatError,
    ManifestError,
    MetricUndefinedError,
    PointStyleError,
    ValidationError,
)
from .evaluation import (
    ConsistencyReport,
    ProtocolConfig,
    SyntheticSceneSpec,
    WarpResult,
    gram_distance,
    make_synthetic_scene,
    run_protocol,
    warp_view,
    warping_error,
)
from .point_cloud import (
    FeaturePointCloud,
    back_project,
    back_project_view,
    load_cloud,
    merge,
    save_cloud,
    uniform_downsample,
)
from .renderer import (
    RenderedView,
    SplatConfig,
    composite_over,
    project_point,
    project_points,
    render_view,
)
from .scene_io import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    FeatureMap,
    SceneManifest,
    SceneView,
    load_depth_map,
    load_feature_map,
    load_image,
    load_manifest,
    load_view_data,
    save_depth_map,
    save_feature_map,
    save_image,
    save_manifest,
)
from .style_transform import (
    CompressionBasis,
    StyleStats,
    StyleTransform,
    apply_transform,
    build_transform,
    coloring_matrix,
    compute_stats,
    fit_compression,
    load_transform,
    save_transform,
    whitening_matrix,
)

__version__ = "0.1.0"
