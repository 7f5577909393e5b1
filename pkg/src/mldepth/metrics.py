"""Surface precision/recall and voxel-IoU evaluation.

Coverage works on exact point-to-triangle distances. Large workloads go
through a best-first BVH traversal that prunes whole subtrees by box
distance, so acceleration never changes a distance; small ones (few
triangles and few point-triangle pairs) take the vectorized brute-force
route. Both evaluate the same closest-point test.

Voxel occupancy comes from two independent routes: reading layered depth
intervals at projected voxel centers, and parity-counting ray crossings of
a closed mesh per grid column with a 3-axis majority vote.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bvh import build_bvh
from .camera import PerspectiveCamera, vec3
from .errors import DimensionMismatchError, ValidationError
from .scene import Scene, SceneObject, triangle_areas
from .tracing import MultiLayerDepthMap

DEFAULT_RHO = 10000.0
DEFAULT_THRESHOLDS = (0.05, 0.10)
BRUTE_FORCE_TRIANGLE_LIMIT = 4096

# columns are nudged off exact lattice alignment before parity casting
_PARITY_JITTER = (1.2345e-4, 2.6181e-4)


def _as_mesh(mesh) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangles from a SceneObject, Scene, list of objects,
    or a plain (vertices, triangles) pair."""
    if isinstance(mesh, SceneObject):
        return mesh.vertices, mesh.triangles
    if isinstance(mesh, Scene):
        mesh = mesh.objects
    if isinstance(mesh, (list, tuple)) and len(mesh) == 2 and isinstance(
        mesh[0], np.ndarray
    ):
        return np.asarray(mesh[0], np.float64), np.asarray(mesh[1], np.int32)
    if isinstance(mesh, (list, tuple)):
        verts = []
        tris = []
        base = 0
        for obj in mesh:
            verts.append(obj.vertices)
            tris.append(obj.triangles + base)
            base += len(obj.vertices)
        if not verts:
            return np.zeros((0, 3)), np.zeros((0, 3), np.int32)
        return np.concatenate(verts), np.concatenate(tris)
    raise ValidationError(f"cannot interpret {type(mesh).__name__} as a mesh")


@dataclass
class SurfacePointSet:
    points: np.ndarray
    source_area: float
    seed: int


def sample_surface(mesh, rho: float = DEFAULT_RHO, seed: int = 0) -> SurfacePointSet:
    """Uniform surface samples: area-weighted triangle choice, uniform
    barycentric placement. Deterministic in seed."""
    verts, tris = _as_mesh(mesh)
    if not rho > 0:
        raise ValidationError("sampling density must be positive")
    areas = triangle_areas(verts, tris)
    total = float(areas.sum())
    if not total > 0:
        raise ValidationError("cannot sample a zero-area mesh")
    n = int(round(rho * total))
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(tris), size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    flip = r1 + r2 > 1.0
    r1 = np.where(flip, 1.0 - r1, r1)
    r2 = np.where(flip, 1.0 - r2, r2)
    a = verts[tris[pick, 0]]
    b = verts[tris[pick, 1]]
    c = verts[tris[pick, 2]]
    pts = a + r1[:, None] * (b - a) + r2[:, None] * (c - a)
    return SurfacePointSet(points=pts, source_area=total, seed=seed)


# -- exact point-to-triangle distances --------------------------------------


def _tri_frames(verts, tris):
    a = verts[tris[:, 0]]
    b = verts[tris[:, 1]]
    c = verts[tris[:, 2]]
    return a, b - a, c - a


def _dist_to_tris(points: np.ndarray, a, ab, ac) -> np.ndarray:
    """(n_points, n_tris) exact distances, branchless closest-point tests."""
    p = points[:, None, :]
    ap = p - a[None, :, :]
    d1 = np.einsum("tk,ptk->pt", ab, ap)
    d2 = np.einsum("tk,ptk->pt", ac, ap)
    bp = ap - ab[None, :, :]
    d3 = np.einsum("tk,ptk->pt", ab, bp)
    d4 = np.einsum("tk,ptk->pt", ac, bp)
    cp = ap - ac[None, :, :]
    d5 = np.einsum("tk,ptk->pt", ab, cp)
    d6 = np.einsum("tk,ptk->pt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        # interior
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        # edge ab
        t_ab = np.clip(np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0), 0.0, 1.0)
        # edge ac
        t_ac = np.clip(np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0), 0.0, 1.0)
        # edge bc
        num = d4 - d3
        den = (d4 - d3) + (d5 - d6)
        t_bc = np.clip(np.where(den != 0, num / den, 0.0), 0.0, 1.0)

    reg_a = (d1 <= 0) & (d2 <= 0)
    reg_b = (d3 >= 0) & (d4 <= d3)
    reg_c = (d6 >= 0) & (d5 <= d6)
    reg_ab = ~reg_a & ~reg_b & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    reg_ac = ~reg_a & ~reg_c & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    reg_bc = ~reg_b & ~reg_c & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    v = np.where(reg_ab, t_ab, v)
    w = np.where(reg_ab, 0.0, w)
    v = np.where(reg_ac, 0.0, v)
    w = np.where(reg_ac, t_ac, w)
    v = np.where(reg_bc, 1.0 - t_bc, v)
    w = np.where(reg_bc, t_bc, w)
    v = np.where(reg_a | reg_b | reg_c, np.where(reg_b, 1.0, 0.0), v)
    w = np.where(reg_a | reg_b | reg_c, np.where(reg_c, 1.0, 0.0), w)

    closest = a[None] + v[:, :, None] * ab[None] + w[:, :, None] * ac[None]
    diff = p - closest
    return np.sqrt(np.einsum("ptk,ptk->pt", diff, diff))


def _min_dist_brute(points, a, ab, ac, block: int = 256) -> np.ndarray:
    out = np.empty(len(points))
    for i in range(0, len(points), block):
        out[i : i + block] = _dist_to_tris(points[i : i + block], a, ab, ac).min(axis=1)
    return out


@njit(cache=True)
def _tri_d2(px, py, pz, ax, ay, az, abx, aby, abz, acx, acy, acz):
    """Squared distance to one triangle; same region tests and closest-point
    arithmetic as _dist_to_tris, with the same override precedence."""
    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    bpx = apx - abx
    bpy = apy - aby
    bpz = apz - abz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    cpx = apx - acx
    cpy = apy - acy
    cpz = apz - acz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    reg_a = d1 <= 0.0 and d2 <= 0.0
    reg_b = d3 >= 0.0 and d4 <= d3
    reg_c = d6 >= 0.0 and d5 <= d6
    if reg_a or reg_b or reg_c:
        v = 1.0 if reg_b else 0.0
        w = 1.0 if reg_c else 0.0
    elif va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        den = (d4 - d3) + (d5 - d6)
        t = (d4 - d3) / den if den != 0.0 else 0.0
        t = min(max(t, 0.0), 1.0)
        v = 1.0 - t
        w = t
    elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6) if d2 - d6 != 0.0 else 0.0
        w = min(max(t, 0.0), 1.0)
        v = 0.0
    elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3) if d1 - d3 != 0.0 else 0.0
        v = min(max(t, 0.0), 1.0)
        w = 0.0
    else:
        denom = va + vb + vc
        if denom != 0.0:
            v = vb / denom
            w = vc / denom
        else:
            v = 0.0
            w = 0.0
    cx = ax + v * abx + w * acx
    cy = ay + v * aby + w * acy
    cz = az + v * abz + w * acz
    dx = px - cx
    dy = py - cy
    dz = pz - cz
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def _box_d2(px, py, pz, bmin, bmax, node):
    d2 = 0.0
    for axis in range(3):
        p = px if axis == 0 else (py if axis == 1 else pz)
        lo = bmin[node, axis]
        hi = bmax[node, axis]
        if p < lo:
            d = lo - p
        elif p > hi:
            d = p - hi
        else:
            d = 0.0
        d2 += d * d
    return d2


@njit(cache=True)
def _closest_dist_kernel(
    points, a, ab, ac, bmin, bmax, left, start, count, tri_order, out
):
    stack = np.empty(128, np.int32)
    for i in range(points.shape[0]):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        best = np.inf
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_d2(px, py, pz, bmin, bmax, node) >= best:
                continue
            child = left[node]
            if child < 0:
                for j in range(start[node], start[node] + count[node]):
                    t = tri_order[j]
                    d2 = _tri_d2(
                        px, py, pz,
                        a[t, 0], a[t, 1], a[t, 2],
                        ab[t, 0], ab[t, 1], ab[t, 2],
                        ac[t, 0], ac[t, 1], ac[t, 2],
                    )
                    if d2 < best:
                        best = d2
            else:
                bd_l = _box_d2(px, py, pz, bmin, bmax, child)
                bd_r = _box_d2(px, py, pz, bmin, bmax, child + 1)
                # farther child pushed first so the nearer is popped first
                if bd_l <= bd_r:
                    if bd_r < best:
                        stack[top] = child + 1
                        top += 1
                    if bd_l < best:
                        stack[top] = child
                        top += 1
                else:
                    if bd_l < best:
                        stack[top] = child
                        top += 1
                    if bd_r < best:
                        stack[top] = child + 1
                        top += 1
        out[i] = np.sqrt(best)


def surface_distances(points: np.ndarray, mesh) -> np.ndarray:
    """Exact distance from each point to the nearest mesh surface point.
    Infinite when the mesh has no triangles."""
    points = np.asarray(points, np.float64).reshape(-1, 3)
    verts, tris = _as_mesh(mesh)
    if len(tris) == 0:
        return np.full(len(points), np.inf)
    a, ab, ac = _tri_frames(verts, tris)
    # brute cost scales with point*triangle pairs, so a small mesh still
    # goes through the tree when the query set is large
    if len(tris) <= BRUTE_FORCE_TRIANGLE_LIMIT and (
        len(tris) <= 64 or len(points) * len(tris) <= 4_000_000
    ):
        return _min_dist_brute(points, a, ab, ac)
    bvh = build_bvh(verts, tris)
    out = np.empty(len(points))
    _closest_dist_kernel(
        np.ascontiguousarray(points),
        np.ascontiguousarray(a),
        np.ascontiguousarray(ab),
        np.ascontiguousarray(ac),
        bvh.bounds_min, bvh.bounds_max, bvh.left, bvh.start, bvh.count,
        bvh.tri_order, out,
    )
    return out


def coverage(samples: SurfacePointSet, target_mesh, threshold: float) -> float:
    """Fraction of sample points within threshold of the target surface."""
    if not threshold > 0:
        raise ValidationError("threshold must be positive")
    d = surface_distances(samples.points, target_mesh)
    if len(d) == 0:
        return 0.0
    return float((d <= threshold).mean())


def pr_curve(
    pred_mesh,
    gt_mesh,
    thresholds=DEFAULT_THRESHOLDS,
    rho: float = DEFAULT_RHO,
    seed: int = 0,
):
    """(threshold, precision, recall) rows. Both directions reuse the same
    seed, so precision(a, b) equals recall(b, a) exactly."""
    gt_samples = sample_surface(gt_mesh, rho=rho, seed=seed)
    pred_samples = sample_surface(pred_mesh, rho=rho, seed=seed)
    d_recall = surface_distances(gt_samples.points, pred_mesh)
    d_prec = surface_distances(pred_samples.points, gt_mesh)
    rows = []
    for thr in thresholds:
        if not thr > 0:
            raise ValidationError("threshold must be positive")
        rows.append(
            (
                float(thr),
                float((d_prec <= thr).mean()) if len(d_prec) else 0.0,
                float((d_recall <= thr).mean()) if len(d_recall) else 0.0,
            )
        )
    return rows


# -- voxel grids ------------------------------------------------------------


@dataclass
class GridSpec:
    """Axis-aligned voxel lattice: cubic cells of size edge starting at
    origin, shape cells per axis."""

    origin: np.ndarray
    edge: float
    shape: tuple[int, int, int]

    def __post_init__(self):
        self.origin = np.asarray(self.origin, np.float64).reshape(3)
        if not self.edge > 0:
            raise ValidationError("cell edge must be positive")
        self.shape = tuple(int(v) for v in self.shape)
        if any(v <= 0 for v in self.shape):
            raise ValidationError("grid shape must be positive per axis")

    @classmethod
    def default(cls) -> "GridSpec":
        return cls(origin=vec3(-5.0, -5.0, 0.0), edge=0.025, shape=(400, 400, 400))

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.edge


@dataclass
class VoxelGrid:
    spec: GridSpec
    occupancy: np.ndarray

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, bool)
        if self.occupancy.shape != self.spec.shape:
            raise DimensionMismatchError("occupancy does not match grid shape")

    @classmethod
    def empty(cls, spec: GridSpec) -> "VoxelGrid":
        return cls(spec=spec, occupancy=np.zeros(spec.shape, bool))

    def count(self) -> int:
        return int(self.occupancy.sum())


def _specs_match(a: GridSpec, b: GridSpec) -> bool:
    return (
        a.shape == b.shape
        and abs(a.edge - b.edge) <= 1e-9
        and np.allclose(a.origin, b.origin, atol=1e-9)
    )


def voxelize_prediction(
    depths: MultiLayerDepthMap, cam: PerspectiveCamera, spec: GridSpec
) -> VoxelGrid:
    """Mark voxels whose center projects into the view with a depth inside
    the visible (D1, D2) or occluded (D3, D4) object interval at the
    nearest pixel. The grid lives in the camera frame."""
    nx, ny, nz = spec.shape
    occ = np.zeros(spec.shape, bool)
    xs = spec.axis_centers(0)
    ys = spec.axis_centers(1)
    d1, d2, d3, d4 = (depths.layers[i] for i in range(4))
    h, w = d1.shape
    x2, y2 = np.meshgrid(xs, ys, indexing="ij")
    for iz, z in enumerate(spec.axis_centers(2)):
        if z <= 1e-9:
            continue
        s = cam.fx * x2 / z + cam.cx
        t = cam.fy * y2 / z + cam.cy
        si = np.floor(s + 0.5).astype(np.int64)
        ti = np.floor(t + 0.5).astype(np.int64)
        inside = (si >= 0) & (si < w) & (ti >= 0) & (ti < h)
        si_c = np.clip(si, 0, w - 1)
        ti_c = np.clip(ti, 0, h - 1)
        with np.errstate(invalid="ignore"):
            occ_slab = (d1[ti_c, si_c] < z) & (z < d2[ti_c, si_c])
            occ_slab |= (d3[ti_c, si_c] < z) & (z < d4[ti_c, si_c])
        occ[:, :, iz] = inside & occ_slab
    return VoxelGrid(spec=spec, occupancy=occ)


def _parity_fill_axis(verts, tris, spec: GridSpec, axis: int):
    """Occupancy votes from casting grid columns along one axis.

    Returns (fill, marks): fill votes from even crossing counts, and
    surface marks from odd columns where the mesh is open along this axis.
    """
    occ = np.zeros(spec.shape, bool)
    axes = [0, 1, 2]
    axes.remove(axis)
    b_ax, c_ax = axes
    nb, nc = spec.shape[b_ax], spec.shape[c_ax]
    na = spec.shape[axis]
    ob = spec.origin[b_ax]
    oc = spec.origin[c_ax]
    oa = spec.origin[axis]
    e = spec.edge
    jb = e * _PARITY_JITTER[0] * (axis + 1)
    jc = e * _PARITY_JITTER[1] * (axis + 1)

    a_pts = verts[tris[:, 0]]
    b_pts = verts[tris[:, 1]]
    c_pts = verts[tris[:, 2]]
    n_vec = np.cross(b_pts - a_pts, c_pts - a_pts)
    n_norm = np.sqrt((n_vec**2).sum(axis=1))
    col_idx_parts = []
    t_parts = []
    for k in range(len(tris)):
        if n_norm[k] <= 0 or abs(n_vec[k, axis]) <= 1e-12 * n_norm[k]:
            continue
        tri2 = np.array(
            [
                [a_pts[k, b_ax], a_pts[k, c_ax]],
                [b_pts[k, b_ax], b_pts[k, c_ax]],
                [c_pts[k, b_ax], c_pts[k, c_ax]],
            ]
        )
        lob = (tri2[:, 0].min() - ob - jb) / e - 0.5
        hib = (tri2[:, 0].max() - ob - jb) / e - 0.5
        loc = (tri2[:, 1].min() - oc - jc) / e - 0.5
        hic = (tri2[:, 1].max() - oc - jc) / e - 0.5
        ib0 = max(0, int(np.ceil(lob)))
        ib1 = min(nb - 1, int(np.floor(hib)))
        ic0 = max(0, int(np.ceil(loc)))
        ic1 = min(nc - 1, int(np.floor(hic)))
        if ib0 > ib1 or ic0 > ic1:
            continue
        bb = ob + (np.arange(ib0, ib1 + 1) + 0.5) * e + jb
        cc = oc + (np.arange(ic0, ic1 + 1) + 0.5) * e + jc
        bg, cg = np.meshgrid(bb, cc, indexing="ij")
        # 2D edge functions
        x0, y0 = tri2[0]
        x1, y1 = tri2[1]
        x2, y2 = tri2[2]
        w0 = (x1 - x0) * (cg - y0) - (y1 - y0) * (bg - x0)
        w1 = (x2 - x1) * (cg - y1) - (y2 - y1) * (bg - x1)
        w2 = (x0 - x2) * (cg - y2) - (y0 - y2) * (bg - x2)
        inside = ((w0 >= 0) & (w1 >= 0) & (w2 >= 0)) | (
            (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
        )
        if not inside.any():
            continue
        ibg = np.arange(ib0, ib1 + 1)[:, None] + np.zeros((1, ic1 - ic0 + 1), np.int64)
        icg = np.arange(ic0, ic1 + 1)[None, :] + np.zeros((ib1 - ib0 + 1, 1), np.int64)
        sel = inside.reshape(-1)
        bsel = bg.reshape(-1)[sel]
        csel = cg.reshape(-1)[sel]
        t_val = a_pts[k, axis] + (
            n_vec[k, b_ax] * (a_pts[k, b_ax] - bsel)
            + n_vec[k, c_ax] * (a_pts[k, c_ax] - csel)
        ) / n_vec[k, axis]
        col_idx_parts.append((ibg.reshape(-1)[sel] * nc + icg.reshape(-1)[sel]))
        t_parts.append(t_val)

    if not col_idx_parts:
        return occ, occ.copy()
    cols = np.concatenate(col_idx_parts)
    ts = np.concatenate(t_parts)
    order = np.lexsort((ts, cols))
    cols = cols[order]
    ts = ts[order]
    starts = np.flatnonzero(np.r_[True, cols[1:] != cols[:-1]])
    ends = np.r_[starts[1:], len(cols)]

    flat = np.zeros((nb * nc, na), bool)
    flat_marks = np.zeros((nb * nc, na), bool)
    for s0, s1 in zip(starts, ends):
        col = cols[s0]
        tcol = ts[s0:s1]
        if (s1 - s0) % 2 == 0:
            for j in range(0, s1 - s0, 2):
                t_lo, t_hi = tcol[j], tcol[j + 1]
                i0 = int(np.ceil((t_lo - oa) / e - 0.5))
                i1 = int(np.floor((t_hi - oa) / e - 0.5))
                while i0 <= i1 and oa + (i0 + 0.5) * e <= t_lo:
                    i0 += 1
                while i1 >= i0 and oa + (i1 + 0.5) * e >= t_hi:
                    i1 -= 1
                i0 = max(i0, 0)
                i1 = min(i1, na - 1)
                if i0 <= i1:
                    flat[col, i0 : i1 + 1] = True
        else:
            # open along this axis: mark crossing cells only
            ci = np.floor((tcol - oa) / e).astype(np.int64)
            ci = ci[(ci >= 0) & (ci < na)]
            flat_marks[col, ci] = True

    occ = np.moveaxis(flat.reshape(nb, nc, na), 2, axis)
    marks = np.moveaxis(flat_marks.reshape(nb, nc, na), 2, axis)
    return occ, marks


def voxelize_mesh_parity(mesh, spec: GridSpec) -> VoxelGrid:
    """Fill between odd/even surface crossings per grid column, cast along
    each axis in turn, with 2-of-3 majority voting.

    Columns with an odd crossing count cannot be filled by parity; the cells
    containing those crossings are kept as surface regardless of the vote, so
    open sheets still register where they actually are.
    """
    verts, tris = _as_mesh(mesh)
    if len(tris) == 0:
        return VoxelGrid.empty(spec)
    votes = np.zeros(spec.shape, np.int8)
    marked = np.zeros(spec.shape, bool)
    for axis in range(3):
        fill, marks = _parity_fill_axis(verts, tris, spec, axis)
        votes += fill
        marked |= marks
    return VoxelGrid(spec=spec, occupancy=(votes >= 2) | marked)


def voxel_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    """Intersection over union; 1.0 when both grids are empty."""
    if not _specs_match(a.spec, b.spec):
        raise DimensionMismatchError("voxel grids have different lattices")
    inter = int((a.occupancy & b.occupancy).sum())
    union = int((a.occupancy | b.occupancy).sum())
    if union == 0:
        return 1.0
    return inter / union
