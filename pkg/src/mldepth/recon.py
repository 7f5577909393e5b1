"""Meshes from layered depth rasters and overhead height maps.

Each supported raster cell becomes a vertex; every 2x2 block contributes up
to two triangles, split along the diagonal with the smaller value disparity.
An edge is dropped when its endpoint values differ by more than a times the
local pixel footprint, which separates surfaces across depth steps instead
of bridging them.
"""

from __future__ import annotations

import numpy as np

from .camera import OrthographicCamera, PerspectiveCamera
from .eft import FeatureMap
from .errors import DimensionMismatchError
from .scene import SceneObject
from .tracing import MultiLayerDepthMap, SemanticLayerMap

DEFAULT_EDGE_FACTOR = 7.0
DEFAULT_FLOOR_CUTOFF = 0.05


def _grid_triangles(values: np.ndarray, valid: np.ndarray, edge_ok):
    """Triangle index triples over a raster grid.

    values drives the diagonal-disparity choice; edge_ok(va, vb) is an
    elementwise edge acceptance test (False wherever an endpoint is
    missing). Returns (m, 3) int32 of raster-linear vertex indices, blocks
    in row-major order, at most two triangles per block.
    """
    h, w = values.shape
    if h < 2 or w < 2:
        return np.zeros((0, 3), dtype=np.int32)
    lin = np.arange(h * w, dtype=np.int32).reshape(h, w)
    i00, i01 = lin[:-1, :-1], lin[:-1, 1:]
    i10, i11 = lin[1:, :-1], lin[1:, 1:]
    z00, z01 = values[:-1, :-1], values[:-1, 1:]
    z10, z11 = values[1:, :-1], values[1:, 1:]
    v00, v01 = valid[:-1, :-1], valid[:-1, 1:]
    v10, v11 = valid[1:, :-1], valid[1:, 1:]

    e_top = v00 & v01 & edge_ok(z00, z01)
    e_bot = v10 & v11 & edge_ok(z10, z11)
    e_left = v00 & v10 & edge_ok(z00, z10)
    e_right = v01 & v11 & edge_ok(z01, z11)
    e_da = v00 & v11 & edge_ok(z00, z11)
    e_db = v01 & v10 & edge_ok(z01, z10)

    all4 = v00 & v01 & v10 & v11
    with np.errstate(invalid="ignore"):
        use_a = np.abs(z00 - z11) <= np.abs(z01 - z10)
    use_a = all4 & use_a
    use_b = all4 & ~use_a

    nb = i00.shape
    tri0 = np.zeros(nb + (3,), dtype=np.int32)
    tri1 = np.zeros(nb + (3,), dtype=np.int32)
    ok0 = np.zeros(nb, bool)
    ok1 = np.zeros(nb, bool)

    def put(sel, slot_ids, slot_ok, a_ids, cond):
        for k in range(3):
            slot_ids[..., k] = np.where(sel, a_ids[k], slot_ids[..., k])
        slot_ok[sel] = cond[sel]

    # four vertices: diagonal choice picks the split
    put(use_a, tri0, ok0, (i00, i11, i01), e_da & e_right & e_top)
    put(use_a, tri1, ok1, (i00, i10, i11), e_left & e_bot & e_da)
    put(use_b, tri0, ok0, (i00, i10, i01), e_left & e_db & e_top)
    put(use_b, tri1, ok1, (i01, i10, i11), e_db & e_bot & e_right)

    # exactly three vertices: the one possible triangle
    m = v00 & v01 & v10 & ~v11
    put(m, tri0, ok0, (i00, i10, i01), e_left & e_db & e_top)
    m = v00 & v01 & ~v10 & v11
    put(m, tri0, ok0, (i00, i11, i01), e_da & e_right & e_top)
    m = v00 & ~v01 & v10 & v11
    put(m, tri0, ok0, (i00, i10, i11), e_left & e_bot & e_da)
    m = ~v00 & v01 & v10 & v11
    put(m, tri0, ok0, (i01, i10, i11), e_db & e_bot & e_right)

    pair = np.stack([tri0, tri1], axis=2).reshape(-1, 3)
    keep = np.stack([ok0, ok1], axis=2).reshape(-1)
    return pair[keep]


def _compact(vertices: np.ndarray, triangles: np.ndarray):
    """Drop vertices no triangle references."""
    if len(triangles) == 0:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32)
    used = np.unique(triangles)
    remap = np.zeros(len(vertices), dtype=np.int32)
    remap[used] = np.arange(len(used), dtype=np.int32)
    return vertices[used], remap[triangles]


def depth_layer_to_mesh(
    layer: np.ndarray,
    mask: np.ndarray,
    cam: PerspectiveCamera,
    a: float = DEFAULT_EDGE_FACTOR,
    instance_id: int = 1,
    category_id: int = 1,
    is_envelope: bool = False,
) -> SceneObject:
    """Camera-frame mesh of one depth layer. Pixels unproject to vertices;
    edges whose depth gap exceeds a times the nearer endpoint's metric
    pixel footprint are dropped."""
    layer = np.asarray(layer, dtype=np.float64)
    if layer.shape != (cam.height, cam.width):
        raise DimensionMismatchError("depth layer does not match camera raster")
    mask = np.asarray(mask, bool)
    if mask.shape != layer.shape:
        raise DimensionMismatchError("mask does not match depth layer")
    valid = mask & np.isfinite(layer)
    pxl = max(1.0 / cam.fx, 1.0 / cam.fy)

    def edge_ok(za, zb):
        with np.errstate(invalid="ignore"):
            return np.abs(za - zb) <= a * (np.minimum(za, zb) * pxl)

    tris = _grid_triangles(layer, valid, edge_ok)
    h, w = layer.shape
    s = np.broadcast_to(np.arange(w, dtype=np.float64), (h, w)).reshape(-1)
    t = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None], (h, w)).reshape(-1)
    z = np.where(valid, layer, 1.0).reshape(-1)
    verts = cam.unproject(s, t, z)
    verts, tris = _compact(verts, tris)
    return SceneObject(
        vertices=verts,
        triangles=tris,
        instance_id=instance_id,
        category_id=category_id,
        is_envelope=is_envelope,
    )


def heightmap_to_mesh(
    height: FeatureMap,
    vcam: OrthographicCamera,
    floor_cutoff: float = DEFAULT_FLOOR_CUTOFF,
    a: float = DEFAULT_EDGE_FACTOR,
    instance_id: int = 1,
    category_id: int = 1,
) -> SceneObject:
    """Floor-frame mesh (x right, height up, z forward, relative to the
    input camera's ground point) of cells higher than floor_cutoff."""
    if height.channels != 1:
        raise DimensionMismatchError("height map must be single channel")
    res = vcam.resolution
    if (height.height, height.width) != (res, res):
        raise DimensionMismatchError("height raster does not match virtual camera")
    hmap = height.data[:, :, 0]
    with np.errstate(invalid="ignore"):
        valid = height.valid & np.isfinite(hmap) & (hmap > floor_cutoff)
    delta = vcam.footprint()

    def edge_ok(ha, hb):
        with np.errstate(invalid="ignore"):
            return np.abs(ha - hb) <= a * delta

    tris = _grid_triangles(hmap, valid, edge_ok)
    u = np.broadcast_to(np.arange(res, dtype=np.float64), (res, res)).reshape(-1)
    v = np.broadcast_to(np.arange(res, dtype=np.float64)[:, None], (res, res)).reshape(-1)
    x_g, z_g = vcam.cell_ground_xz(u, v)
    hv = np.where(valid, hmap, 0.0).reshape(-1)
    verts = np.stack([x_g, hv, z_g], axis=1)
    verts, tris = _compact(verts, tris)
    return SceneObject(
        vertices=verts,
        triangles=tris,
        instance_id=instance_id,
        category_id=category_id,
    )


def floor_mesh_to_camera(mesh: SceneObject, cam: PerspectiveCamera) -> SceneObject:
    """Map a floor-frame mesh into the input camera frame using the camera's
    height and tilt."""
    if len(mesh.vertices) == 0:
        return mesh
    x = mesh.vertices[:, 0]
    h = mesh.vertices[:, 1]
    z = mesh.vertices[:, 2]
    y_g = cam.height_above_floor() - h
    p_g = np.stack([x, y_g, z], axis=1)
    verts = cam.from_gravity(p_g)
    return SceneObject(
        vertices=verts,
        triangles=mesh.triangles.copy(),
        instance_id=mesh.instance_id,
        category_id=mesh.category_id,
        is_envelope=mesh.is_envelope,
    )


LAYER_MESH_IDS = {1: "d1", 2: "d2", 3: "d3", 4: "d4", 5: "envelope", 6: "overhead"}


def assemble_scene_mesh(
    depths: MultiLayerDepthMap,
    sem: SemanticLayerMap | None,
    height: FeatureMap | None,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera | None = None,
    a: float = DEFAULT_EDGE_FACTOR,
    floor_cutoff: float = DEFAULT_FLOOR_CUTOFF,
) -> list[SceneObject]:
    """Camera-frame meshes for the five depth layers plus, when a height
    map and virtual camera are given, the overhead height mesh. Instance
    ids follow LAYER_MESH_IDS; empty meshes are omitted."""
    masks = [depths.mask1, depths.mask1, depths.mask3, depths.mask3]
    out = []
    for i, m in enumerate(masks):
        cat = 1
        if sem is not None:
            labels = (sem.sem1 if i < 2 else sem.sem3)[m]
            labels = labels[labels > 0]
            if len(labels):
                cat = int(np.bincount(labels).argmax())
        mesh = depth_layer_to_mesh(
            depths.layers[i], m, cam, a=a, instance_id=i + 1, category_id=cat
        )
        if len(mesh.triangles):
            out.append(mesh)
    env = depth_layer_to_mesh(
        depths.layers[4],
        depths.envelope_mask,
        cam,
        a=a,
        instance_id=5,
        category_id=0,
        is_envelope=True,
    )
    if len(env.triangles):
        out.append(env)
    if height is not None:
        if vcam is None:
            raise DimensionMismatchError("height mesh needs the virtual camera")
        hm = heightmap_to_mesh(
            height, vcam, floor_cutoff=floor_cutoff, a=a, instance_id=6
        )
        hm = floor_mesh_to_camera(hm, cam)
        if len(hm.triangles):
            out.append(hm)
    return out
