"""Multi-layer depth maps with exact overhead feature transfer.

Pipeline: synthesize or load a scene, trace five depth layers per pixel,
pick an overhead orthographic view, transfer per-pixel features into it
with depth-interval gating, mesh the layers back into surfaces, and score
them with surface precision/recall and voxel IoU.
"""

from .bvh import FlatBVH, build_bvh
from .camera import (
    OrthographicCamera,
    PerspectiveCamera,
    make_tilted_camera,
    rot_x,
    vec3,
)
from .clip import clip_to_frustum
from .eft import (
    FeatureMap,
    GatingSpec,
    best_guess_height,
    convert_row_to_height,
    finite_diff_check,
    forward_map,
    frustum_mask,
    gating_surface,
    pixel_row_feature,
    resolve_z_step,
    transfer_features,
    z_max_from_depths,
)
from .errors import (
    DegenerateConfigError,
    DimensionMismatchError,
    FormatError,
    GenerationError,
    InvalidCameraError,
    NoSupportError,
    UnsupportedConfigError,
    ValidationError,
)
from .metrics import (
    GridSpec,
    SurfacePointSet,
    VoxelGrid,
    coverage,
    pr_curve,
    sample_surface,
    surface_distances,
    voxel_iou,
    voxelize_mesh_parity,
    voxelize_prediction,
)
from .overhead import (
    OverheadParams,
    blend,
    build_overhead_camera,
    heuristic_bbox,
    heuristic_pointcloud,
    heuristic_principal_plane,
    select_overhead,
)
from .recon import (
    assemble_scene_mesh,
    depth_layer_to_mesh,
    floor_mesh_to_camera,
    heightmap_to_mesh,
)
from .scene import Scene, SceneObject, scene_soup, transform_to_camera
from .synth import SynthSpec, box_mesh, generate_synthetic_scene, synth_camera
from .tracing import (
    MultiLayerDepthMap,
    SemanticLayerMap,
    first_hit_depth,
    huber,
    interval_count_raster,
    multilayer_depth_loss,
    ray_object_intervals,
    trace_envelope,
    trace_multilayer,
    warmup_kernels,
)
from .visibility import remove_hidden_objects

__version__ = "0.1.0"
