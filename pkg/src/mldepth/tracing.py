"""Multi-hit ray tracing of scenes into layered depth rasters.

Pixel rays are parameterized so the ray parameter equals camera-frame z;
every reported depth is therefore a z coordinate, not an arc length. Per
ray, all triangle hits are collected, sorted by (t, instance, triangle),
and collapsed to one [first-entry, last-exit] interval per instance. The
five stored layers are:

  1/2  entry and last exit of the nearest object instance
  3/4  entry and last exit of the next instance entered strictly behind
       layer 2 (intervals starting inside the first instance are skipped)
  5    first hit of the room envelope, ignoring objects

Unsupported pixels hold NaN. Grazing intersections (|dir . normal| below
GRAZE_EPS for unit vectors) are discarded everywhere, so tangent rays do
not produce zero-thickness intervals.

The BVH path and the all-triangles path share one intersection routine and
one canonical hit ordering, so their outputs are identical bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit, prange

from .bvh import FlatBVH, build_bvh
from .camera import PerspectiveCamera
from .errors import DimensionMismatchError, ValidationError
from .scene import Scene, scene_soup

GRAZE_EPS = 1e-9
MAX_HITS = 512
MAX_INSTANCES = 64
N_LAYERS = 5


# ---------------------------------------------------------------------------
# data types


@dataclass
class MultiLayerDepthMap:
    """Five depth planes plus their support masks.

    ``layers`` is (5, height, width) float64 with NaN outside support.
    ``mask1`` supports layers 1 and 2, ``mask3`` layers 3 and 4,
    ``envelope_mask`` layer 5.
    """

    layers: np.ndarray
    mask1: np.ndarray
    mask3: np.ndarray
    envelope_mask: np.ndarray

    @property
    def height(self) -> int:
        return self.layers.shape[1]

    @property
    def width(self) -> int:
        return self.layers.shape[2]

    @property
    def d1(self) -> np.ndarray:
        return self.layers[0]

    @property
    def d2(self) -> np.ndarray:
        return self.layers[1]

    @property
    def d3(self) -> np.ndarray:
        return self.layers[2]

    @property
    def d4(self) -> np.ndarray:
        return self.layers[3]

    @property
    def d5(self) -> np.ndarray:
        return self.layers[4]

    def validate(self) -> None:
        if self.layers.ndim != 3 or self.layers.shape[0] != N_LAYERS:
            raise DimensionMismatchError("layers must be (5, height, width)")
        shape = self.layers.shape[1:]
        for name, m in (
            ("mask1", self.mask1),
            ("mask3", self.mask3),
            ("envelope_mask", self.envelope_mask),
        ):
            if m.shape != shape or m.dtype != np.bool_:
                raise DimensionMismatchError(f"{name} must be bool {shape}")
        for idx, mask in ((0, self.mask1), (1, self.mask1), (2, self.mask3), (3, self.mask3), (4, self.envelope_mask)):
            lay = self.layers[idx]
            if not np.array_equal(np.isfinite(lay), mask):
                raise ValidationError(f"layer {idx + 1} support differs from its mask")
            if mask.any() and not np.all(lay[mask] > 0):
                raise ValidationError(f"layer {idx + 1} has non-positive depths")
        if np.any(self.mask3 & ~self.mask1):
            raise ValidationError("mask3 must be contained in mask1")
        if self.mask1.any() and not np.all(self.d1[self.mask1] <= self.d2[self.mask1]):
            raise ValidationError("layer 1 must not exceed layer 2")
        if self.mask3.any():
            if not np.all(self.d2[self.mask3] < self.d3[self.mask3]):
                raise ValidationError("layer 3 must lie strictly behind layer 2")
            if not np.all(self.d3[self.mask3] <= self.d4[self.mask3]):
                raise ValidationError("layer 3 must not exceed layer 4")

    @classmethod
    def from_layers(cls, layers: np.ndarray) -> "MultiLayerDepthMap":
        layers = np.asarray(layers, dtype=np.float64)
        return cls(
            layers=layers,
            mask1=np.isfinite(layers[0]),
            mask3=np.isfinite(layers[2]),
            envelope_mask=np.isfinite(layers[4]),
        )


@dataclass
class SemanticLayerMap:
    """Per-pixel category of the first and second traced instances.

    Categories are 0 (none) outside the corresponding depth support and
    1..40 inside it.
    """

    sem1: np.ndarray
    sem3: np.ndarray

    def validate(self, depths: MultiLayerDepthMap | None = None) -> None:
        if self.sem1.shape != self.sem3.shape:
            raise DimensionMismatchError("sem1/sem3 shapes differ")
        for arr in (self.sem1, self.sem3):
            if arr.min(initial=0) < 0 or arr.max(initial=0) > 40:
                raise ValidationError("semantic ids must lie in [0, 40]")
        if depths is not None:
            if not np.array_equal(self.sem1 > 0, depths.mask1):
                raise ValidationError("sem1 support differs from mask1")
            if not np.array_equal(self.sem3 > 0, depths.mask3):
                raise ValidationError("sem3 support differs from mask3")


class RayInterval(NamedTuple):
    instance_id: int
    t_enter: float
    t_exit: float
    category_id: int


@dataclass
class PreparedScene:
    """Flattened scene plus its BVH, reusable across many trace calls."""

    vertices: np.ndarray
    triangles: np.ndarray
    normal_len: np.ndarray  # per-triangle |e1 x e2| for the graze test
    tri_instance: np.ndarray
    tri_category: np.ndarray
    tri_envelope: np.ndarray
    bvh: FlatBVH


def prepare_scene(scene_or_objects) -> PreparedScene:
    objects = scene_or_objects.objects if isinstance(scene_or_objects, Scene) else scene_or_objects
    verts, tris, inst, cat, env = scene_soup(objects)
    if len(tris):
        e1 = verts[tris[:, 1]] - verts[tris[:, 0]]
        e2 = verts[tris[:, 2]] - verts[tris[:, 0]]
        nlen = np.linalg.norm(np.cross(e1, e2), axis=1)
    else:
        nlen = np.zeros(0, dtype=np.float64)
    return PreparedScene(
        vertices=verts,
        triangles=tris,
        normal_len=nlen,
        tri_instance=inst,
        tri_category=cat,
        tri_envelope=env,
        bvh=build_bvh(verts, tris),
    )


# ---------------------------------------------------------------------------
# jit kernels


@njit(cache=True, inline="always")
def _ray_tri_t(ox, oy, oz, dx, dy, dz, dnorm, verts, tris, nlen, k):
    """Hit parameter of ray against triangle k, or NaN."""
    ia, ib, ic = tris[k, 0], tris[k, 1], tris[k, 2]
    ax, ay, az = verts[ia, 0], verts[ia, 1], verts[ia, 2]
    e1x = verts[ib, 0] - ax
    e1y = verts[ib, 1] - ay
    e1z = verts[ib, 2] - az
    e2x = verts[ic, 0] - ax
    e2y = verts[ic, 1] - ay
    e2z = verts[ic, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < GRAZE_EPS * dnorm * nlen[k]:
        return np.nan
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.nan
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.nan
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t < 0.0:
        return np.nan
    return t


@njit(cache=True)
def _collect_hits(
    ox, oy, oz, dx, dy, dz,
    verts, tris, nlen,
    bmin, bmax, left, start, count, tri_order,
    use_bvh,
    ts, hit_tri,
):
    """All hits of one ray; returns the count (capped at len(ts))."""
    dnorm = math.sqrt(dx * dx + dy * dy + dz * dz)
    n = 0
    cap = ts.shape[0]
    if not use_bvh:
        for k in range(tris.shape[0]):
            t = _ray_tri_t(ox, oy, oz, dx, dy, dz, dnorm, verts, tris, nlen, k)
            if not np.isnan(t):
                if n < cap:
                    ts[n] = t
                    hit_tri[n] = k
                n += 1
        return n

    stack = np.empty(64, dtype=np.int32)
    top = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        # slab test over [0, inf)
        tmin = 0.0
        tmax = np.inf
        ok = True
        for ax in range(3):
            if ax == 0:
                o, d = ox, dx
            elif ax == 1:
                o, d = oy, dy
            else:
                o, d = oz, dz
            lo = bmin[node, ax]
            hi = bmax[node, ax]
            if abs(d) < 1e-300:
                if o < lo or o > hi:
                    ok = False
                    break
            else:
                inv = 1.0 / d
                t1 = (lo - o) * inv
                t2 = (hi - o) * inv
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tmin:
                    tmin = t1
                if t2 < tmax:
                    tmax = t2
                if tmin > tmax:
                    ok = False
                    break
        if not ok:
            continue
        if count[node] > 0 or left[node] < 0:
            for i in range(start[node], start[node] + count[node]):
                k = tri_order[i]
                t = _ray_tri_t(ox, oy, oz, dx, dy, dz, dnorm, verts, tris, nlen, k)
                if not np.isnan(t):
                    if n < cap:
                        ts[n] = t
                        hit_tri[n] = k
                    n += 1
        else:
            stack[top] = left[node]
            stack[top + 1] = left[node] + 1
            top += 2
    return n


@njit(cache=True)
def _sort_hits(n, ts, hit_tri, tri_inst):
    """Insertion sort by (t, instance, triangle) -> canonical hit order."""
    for i in range(1, n):
        tv = ts[i]
        kv = hit_tri[i]
        iv = tri_inst[kv]
        j = i - 1
        while j >= 0:
            tj = ts[j]
            kj = hit_tri[j]
            ij = tri_inst[kj]
            if tj > tv or (tj == tv and (ij > iv or (ij == iv and kj > kv))):
                ts[j + 1] = tj
                hit_tri[j + 1] = kj
                j -= 1
            else:
                break
        ts[j + 1] = tv
        hit_tri[j + 1] = kv


@njit(cache=True, parallel=True)
def _trace_multilayer_kernel(
    width, height, fx, fy, cx, cy,
    verts, tris, nlen, tri_inst, tri_cat, tri_env,
    bmin, bmax, left, start, count, tri_order,
    use_bvh,
    layers, sem1, sem3, n_intervals, overflow,
):
    for row in prange(height):
        ts = np.empty(MAX_HITS, dtype=np.float64)
        hit_tri = np.empty(MAX_HITS, dtype=np.int32)
        inst_ids = np.empty(MAX_INSTANCES, dtype=np.int32)
        inst_enter = np.empty(MAX_INSTANCES, dtype=np.float64)
        inst_exit = np.empty(MAX_INSTANCES, dtype=np.float64)
        inst_cat = np.empty(MAX_INSTANCES, dtype=np.int32)
        for col in range(width):
            dx = (col - cx) / fx
            dy = (row - cy) / fy
            dz = 1.0
            n = _collect_hits(
                0.0, 0.0, 0.0, dx, dy, dz,
                verts, tris, nlen,
                bmin, bmax, left, start, count, tri_order,
                use_bvh, ts, hit_tri,
            )
            if n > MAX_HITS:
                overflow[0] = 1
                n = MAX_HITS
            _sort_hits(n, ts, hit_tri, tri_inst)

            d5 = np.nan
            m = 0
            over_inst = False
            for k in range(n):
                tri_k = hit_tri[k]
                if tri_env[tri_k] == 1:
                    if np.isnan(d5):
                        d5 = ts[k]
                    continue
                iid = tri_inst[tri_k]
                found = -1
                for q in range(m):
                    if inst_ids[q] == iid:
                        found = q
                        break
                if found >= 0:
                    inst_exit[found] = ts[k]
                elif m < MAX_INSTANCES:
                    inst_ids[m] = iid
                    inst_enter[m] = ts[k]
                    inst_exit[m] = ts[k]
                    inst_cat[m] = tri_cat[tri_k]
                    m += 1
                else:
                    over_inst = True
            if over_inst:
                overflow[0] = 1

            n_intervals[row, col] = m
            if m > 0:
                layers[0, row, col] = inst_enter[0]
                layers[1, row, col] = inst_exit[0]
                sem1[row, col] = inst_cat[0]
                for q in range(1, m):
                    if inst_enter[q] > inst_exit[0]:
                        layers[2, row, col] = inst_enter[q]
                        layers[3, row, col] = inst_exit[q]
                        sem3[row, col] = inst_cat[q]
                        break
            layers[4, row, col] = d5


@njit(cache=True)
def _first_hit_ray(
    ox, oy, oz, dx, dy, dz,
    verts, tris, nlen,
    bmin, bmax, left, start, count, tri_order,
    use_bvh, select_env, env_value,
):
    """Smallest hit parameter along one ray, restricted to envelope
    triangles when ``select_env`` is set. No hit cap involved."""
    dnorm = math.sqrt(dx * dx + dy * dy + dz * dz)
    best = np.inf
    if not use_bvh:
        for k in range(tris.shape[0]):
            if select_env and env_value[k] == 0:
                continue
            t = _ray_tri_t(ox, oy, oz, dx, dy, dz, dnorm, verts, tris, nlen, k)
            if not np.isnan(t) and t < best:
                best = t
        return best
    stack = np.empty(64, dtype=np.int32)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        tmin = 0.0
        tmax = best
        ok = True
        for ax in range(3):
            if ax == 0:
                o, d = ox, dx
            elif ax == 1:
                o, d = oy, dy
            else:
                o, d = oz, dz
            lo = bmin[node, ax]
            hi = bmax[node, ax]
            if abs(d) < 1e-300:
                if o < lo or o > hi:
                    ok = False
                    break
            else:
                inv = 1.0 / d
                t1 = (lo - o) * inv
                t2 = (hi - o) * inv
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tmin:
                    tmin = t1
                if t2 < tmax:
                    tmax = t2
                if tmin > tmax:
                    ok = False
                    break
        if not ok:
            continue
        if count[node] > 0 or left[node] < 0:
            for i in range(start[node], start[node] + count[node]):
                k = tri_order[i]
                if select_env and env_value[k] == 0:
                    continue
                t = _ray_tri_t(ox, oy, oz, dx, dy, dz, dnorm, verts, tris, nlen, k)
                if not np.isnan(t) and t < best:
                    best = t
        else:
            stack[top] = left[node]
            stack[top + 1] = left[node] + 1
            top += 2
    return best


@njit(cache=True, parallel=True)
def _first_hit_kernel(
    width, height, fx, fy, cx, cy,
    verts, tris, nlen,
    bmin, bmax, left, start, count, tri_order,
    use_bvh, select_env, env_value,
    out,
):
    for row in prange(height):
        for col in range(width):
            dx = (col - cx) / fx
            dy = (row - cy) / fy
            best = _first_hit_ray(
                0.0, 0.0, 0.0, dx, dy, 1.0,
                verts, tris, nlen,
                bmin, bmax, left, start, count, tri_order,
                use_bvh, select_env, env_value,
            )
            out[row, col] = best if np.isfinite(best) else np.nan


@njit(cache=True)
def _single_ray_hits(
    ox, oy, oz, dx, dy, dz,
    verts, tris, nlen, tri_inst,
    bmin, bmax, left, start, count, tri_order,
    use_bvh,
):
    ts = np.empty(MAX_HITS, dtype=np.float64)
    hit_tri = np.empty(MAX_HITS, dtype=np.int32)
    n_raw = _collect_hits(
        ox, oy, oz, dx, dy, dz,
        verts, tris, nlen,
        bmin, bmax, left, start, count, tri_order,
        use_bvh, ts, hit_tri,
    )
    n = min(n_raw, MAX_HITS)
    _sort_hits(n, ts, hit_tri, tri_inst)
    return n_raw, ts, hit_tri


# ---------------------------------------------------------------------------
# public operations


def _check_camera_frame(scene: Scene, cam: PerspectiveCamera, require_clipped: bool):
    if scene.frame != "camera":
        raise ValidationError("tracing expects a camera-frame scene")
    if require_clipped:
        for obj in scene.objects:
            if obj.vertices.size and obj.vertices[:, 2].min() < cam.near - 1e-9:
                raise ValidationError(
                    "scene has geometry in front of the near plane; clip it first"
                )


def _bvh_args(prep: PreparedScene):
    b = prep.bvh
    return b.bounds_min, b.bounds_max, b.left, b.start, b.count, b.tri_order


def trace_multilayer(
    scene: Scene,
    cam: PerspectiveCamera,
    use_bvh: bool = True,
    prepared: PreparedScene | None = None,
) -> tuple[MultiLayerDepthMap, SemanticLayerMap]:
    """Trace the five depth layers and the two semantic layers."""
    _check_camera_frame(scene, cam, require_clipped=True)
    prep = prepared if prepared is not None else prepare_scene(scene)
    h, w = cam.height, cam.width
    layers = np.full((N_LAYERS, h, w), np.nan, dtype=np.float64)
    sem1 = np.zeros((h, w), dtype=np.int32)
    sem3 = np.zeros((h, w), dtype=np.int32)
    n_int = np.zeros((h, w), dtype=np.int32)
    overflow = np.zeros(1, dtype=np.int32)
    _trace_multilayer_kernel(
        w, h, cam.fx, cam.fy, cam.cx, cam.cy,
        prep.vertices, prep.triangles, prep.normal_len,
        prep.tri_instance, prep.tri_category, prep.tri_envelope,
        *_bvh_args(prep), use_bvh,
        layers, sem1, sem3, n_int, overflow,
    )
    if overflow[0]:
        raise ValidationError(
            f"a ray exceeded {MAX_HITS} hits or {MAX_INSTANCES} instances"
        )
    depths = MultiLayerDepthMap(
        layers=layers,
        mask1=np.isfinite(layers[0]),
        mask3=np.isfinite(layers[2]),
        envelope_mask=np.isfinite(layers[4]),
    )
    return depths, SemanticLayerMap(sem1=sem1, sem3=sem3)


def interval_count_raster(
    scene: Scene, cam: PerspectiveCamera, use_bvh: bool = True
) -> np.ndarray:
    """Number of distinct object instances each pixel ray passes through."""
    _check_camera_frame(scene, cam, require_clipped=True)
    prep = prepare_scene(scene)
    h, w = cam.height, cam.width
    layers = np.full((N_LAYERS, h, w), np.nan, dtype=np.float64)
    sem1 = np.zeros((h, w), dtype=np.int32)
    sem3 = np.zeros((h, w), dtype=np.int32)
    n_int = np.zeros((h, w), dtype=np.int32)
    overflow = np.zeros(1, dtype=np.int32)
    _trace_multilayer_kernel(
        w, h, cam.fx, cam.fy, cam.cx, cam.cy,
        prep.vertices, prep.triangles, prep.normal_len,
        prep.tri_instance, prep.tri_category, prep.tri_envelope,
        *_bvh_args(prep), use_bvh,
        layers, sem1, sem3, n_int, overflow,
    )
    if overflow[0]:
        raise ValidationError("ray hit-count overflow while counting intervals")
    return n_int


def trace_envelope(
    scene: Scene, cam: PerspectiveCamera, use_bvh: bool = True
) -> np.ndarray:
    """First-hit depth of the room envelope alone; objects are ignored."""
    _check_camera_frame(scene, cam, require_clipped=True)
    prep = prepare_scene(scene)
    out = np.full((cam.height, cam.width), np.nan, dtype=np.float64)
    if not len(prep.triangles):
        return out
    _first_hit_kernel(
        cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
        prep.vertices, prep.triangles, prep.normal_len,
        *_bvh_args(prep), use_bvh, True, prep.tri_envelope,
        out,
    )
    return out


def first_hit_depth(
    objects, cam: PerspectiveCamera, use_bvh: bool = True
) -> np.ndarray:
    """Nearest-hit depth raster of an object list (no envelope filtering)."""
    prep = prepare_scene(list(objects))
    out = np.full((cam.height, cam.width), np.nan, dtype=np.float64)
    if not len(prep.triangles):
        return out
    _first_hit_kernel(
        cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
        prep.vertices, prep.triangles, prep.normal_len,
        *_bvh_args(prep), use_bvh, False, prep.tri_envelope,
        out,
    )
    return out


def ray_object_intervals(
    scene: Scene,
    origin,
    direction,
    use_bvh: bool = True,
    prepared: PreparedScene | None = None,
) -> list[RayInterval]:
    """Entry/exit interval per non-envelope instance along one ray.

    ``direction`` is normalized internally, so interval parameters are
    metric distances along the ray. Intervals come back sorted by
    (t_enter, instance_id); grazing hits are discarded by the same rule the
    raster tracer uses.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    direction = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(direction))
    if not (norm > 0 and np.all(np.isfinite(direction)) and np.all(np.isfinite(origin))):
        raise ValidationError("ray needs a finite origin and a nonzero direction")
    direction = direction / norm
    prep = prepared if prepared is not None else prepare_scene(scene)
    if not len(prep.triangles):
        return []
    n_raw, ts, hit_tri = _single_ray_hits(
        origin[0], origin[1], origin[2],
        direction[0], direction[1], direction[2],
        prep.vertices, prep.triangles, prep.normal_len, prep.tri_instance,
        *_bvh_args(prep), use_bvh,
    )
    if n_raw > MAX_HITS:
        raise ValidationError(f"ray exceeded {MAX_HITS} hits")
    n = n_raw
    out: list[RayInterval] = []
    index: dict[int, int] = {}
    for k in range(n):
        tri_k = int(hit_tri[k])
        if prep.tri_envelope[tri_k]:
            continue
        iid = int(prep.tri_instance[tri_k])
        t = float(ts[k])
        if iid in index:
            old = out[index[iid]]
            out[index[iid]] = old._replace(t_exit=t)
        else:
            index[iid] = len(out)
            out.append(
                RayInterval(
                    instance_id=iid,
                    t_enter=t,
                    t_exit=t,
                    category_id=int(prep.tri_category[tri_k]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# loss


def huber(residual: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(residual)
    return np.where(a <= delta, 0.5 * residual * residual, delta * (a - 0.5 * delta))


def multilayer_depth_loss(
    pred: MultiLayerDepthMap, gt: MultiLayerDepthMap, delta: float = 1.0
) -> float:
    """Sum over layers of the mask-normalized Huber penalty.

    Each layer contributes mean(huber(pred - gt)) over its ground-truth
    support; empty layers contribute zero.
    """
    if not (delta > 0):
        raise ValidationError("delta must be positive")
    if pred.layers.shape != gt.layers.shape:
        raise DimensionMismatchError(
            f"shape mismatch {pred.layers.shape} vs {gt.layers.shape}"
        )
    total = 0.0
    layer_masks = (gt.mask1, gt.mask1, gt.mask3, gt.mask3, gt.envelope_mask)
    for idx, mask in enumerate(layer_masks):
        if not mask.any():
            continue
        r = pred.layers[idx][mask] - gt.layers[idx][mask]
        total += float(np.mean(huber(r, delta)))
    return total


def warmup_kernels() -> None:
    """Force-compile the jit kernels on a tiny scene (timing helpers)."""
    from .camera import make_tilted_camera
    from .scene import SceneObject

    verts = np.array(
        [[-1.0, -1.0, 2.0], [1.0, -1.0, 2.0], [0.0, 1.0, 2.0]], dtype=np.float64
    )
    tris = np.array([[0, 1, 2]], dtype=np.int32)
    obj = SceneObject(verts, tris, instance_id=1, category_id=1)
    wall = SceneObject(verts * 2 + np.array([0, 0, 1.0]), tris, instance_id=2, category_id=0, is_envelope=True)
    cam = make_tilted_camera(4, 4, position=np.array([0.0, 0.0, 0.0]), tilt_deg=0.0)
    scene = Scene(objects=[obj, wall], gravity_axis=cam.rotation @ np.array([0.0, 1.0, 0.0]), frame="camera")
    for flag in (True, False):
        trace_multilayer(scene, cam, use_bvh=flag)
        trace_envelope(scene, cam, use_bvh=flag)
        ray_object_intervals(scene, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], use_bvh=flag)
    first_hit_depth(scene.objects, cam)
