"""3D Ken Burns synthesis from one image plus depth.

The package turns a single image and a depth map into a parallax scan-and-zoom
video: depth is adjusted and refined, unprojected into a point cloud, rendered
with a crack-filtered z-buffer along a crop-window-parameterized camera path,
and the cloud is extended by geometrically consistent inpainting at the
extreme views so every frame is complete and temporally consistent.  A metrics
suite evaluates arbitrary depth sources, and a local service drives the
browser authoring UI.
"""

from .core import (
    CameraPath,
    CameraPose,
    CropWindow,
    DegenerateInputError,
    DepthMap,
    ImageBuffer,
    Intrinsics,
    InverseDepthMap,
    KenBurnsError,
    SegMaskSet,
    ValidationError,
    depth_to_inverse,
    inverse_to_depth,
    resize_max_dim,
)
from .losses import (
    GradientField,
    IdentityFeatureExtractor,
    PyramidFeatureExtractor,
    ZeroFeatureExtractor,
    grad_loss_depth,
    loss_color,
    loss_depth,
    loss_grad,
    loss_inpaint,
    loss_ord,
    loss_percep,
    scale_invariant_gradient,
)
from .evaluation import (
    MetricReport,
    PlaneRegion,
    align_scale_shift,
    compute_metric_report,
    depth_boundary_error,
    depth_directed_error,
    planarity_error,
    standard_metrics,
)
from .pipeline import (
    DefaultRefiner,
    FileDepthProvider,
    SyntheticDepthProvider,
    adjust_depth,
    load_depth,
    load_masks,
    refine_default,
)
from .render import (
    PointCloud,
    RenderConfig,
    RenderFrame,
    build_point_cloud,
    render,
    render_path,
    zfilter,
)
from .extend import (
    DefaultContextExtractor,
    FileInpainter,
    LaplaceInpainter,
    extend_cloud,
    extend_for_interactive,
    extend_for_path,
    extract_context_default,
)
from .effect import (
    EffectSpec,
    auto_end_view,
    crop_to_pose,
    foreground_depth,
    interactive_bounds,
    prepare_scene,
    synthesize,
)

__version__ = "0.1.0"
