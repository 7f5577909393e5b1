"""Slow, literal reference implementations used to cross-check fast paths.

The overhead-transfer reference here walks pixels, depth samples, and splat
corners in explicit scalar loops. It deliberately shares the coordinate
kernel and the sample-set definitions with the fast implementation (those
define the operator), while accumulation, z-buffering, normalization, and
infill are re-expressed as plain loops and dictionaries. Agreement is
expected bit for bit.

The geometric oracles (matrix-composition projection, single-ray tracing,
point-to-triangle distance) use independent arithmetic and agree with the
production code only to floating-point tolerance.
"""

from __future__ import annotations

import math

import numpy as np

from .camera import OrthographicCamera, PerspectiveCamera
from .eft import (
    FeatureMap,
    GatingSpec,
    _stz_projector,
    resolve_z_step,
    z_max_from_depths,
)
from .scene import Scene, scene_soup
from .tracing import GRAZE_EPS, MultiLayerDepthMap

# -- naive overhead transfer ------------------------------------------------

# accumulators are nested lists of plain floats: same IEEE adds in the same
# order as array accumulation, without per-splat numpy dispatch


def _splat_scalar(num, den, res, u, v, fvec):
    iu = math.floor(u)
    iv = math.floor(v)
    fu = u - iu
    fv = v - iv
    corners = (
        (iu, iv, (1.0 - fu) * (1.0 - fv)),
        (iu + 1, iv, fu * (1.0 - fv)),
        (iu, iv + 1, (1.0 - fu) * fv),
        (iu + 1, iv + 1, fu * fv),
    )
    for cu, cv, wgt in corners:
        if 0 <= cu < res and 0 <= cv < res:
            row = num[cv][cu]
            for ch in range(len(fvec)):
                row[ch] += wgt * fvec[ch]
            den[cv][cu] += wgt


def _constant_z_list(near: float, z_max: float, z_step: float):
    span = z_max - near
    if span <= 0:
        return []
    n = math.ceil(span / z_step)
    return [near + float(k) * (span / n) for k in range(n + 1)]


def _volume_z_list(lo_raw: float, hi_raw: float, z_step: float):
    lo = lo_raw + z_step * 0.25
    hi = hi_raw - z_step * 0.25
    out = []
    k = 0
    while lo + float(k) * z_step <= hi:
        out.append(lo + float(k) * z_step)
        k += 1
    return out


def _surface_survivor_set(depths, cam, vcam):
    """{(layer, t, s)} of samples that win their overhead cell, one z-buffer
    per layer, winner = smallest (z_v, t, s)."""
    res = vcam.resolution
    h, w = depths.layers.shape[1:]
    project = _stz_projector(cam, vcam)
    layer_rows = depths.layers.tolist()
    best: dict[tuple, tuple] = {}
    for layer in range(4):
        rows = layer_rows[layer]
        for t in range(h):
            for s in range(w):
                z = rows[t][s]
                if not math.isfinite(z):
                    continue
                u, v, zv = project(float(s), float(t), z)
                cu = math.floor(u + 0.5)
                cv = math.floor(v + 0.5)
                if not (0 <= cu < res and 0 <= cv < res):
                    continue
                key = (layer, cv * res + cu)
                cand = (zv, t, s)
                if key not in best or cand < best[key]:
                    best[key] = cand
    return {(layer, t, s) for (layer, _), (_, t, s) in best.items()}


def _infill_scalar(data, filled, region, rounds: int = 8):
    res = data.shape[0]
    data = data.copy()
    filled = filled.copy()
    for _ in range(rounds):
        empty = [
            (r, c)
            for r in range(res)
            for c in range(res)
            if region[r, c] and not filled[r, c]
        ]
        if not empty:
            break
        zero = np.zeros(data.shape[2])
        updates = {}
        for r, c in empty:
            vu = data[r - 1, c] if r > 0 and filled[r - 1, c] else zero
            vd = data[r + 1, c] if r + 1 < res and filled[r + 1, c] else zero
            vl = data[r, c - 1] if c > 0 and filled[r, c - 1] else zero
            vr = data[r, c + 1] if c + 1 < res and filled[r, c + 1] else zero
            mu = 1.0 if r > 0 and filled[r - 1, c] else 0.0
            md = 1.0 if r + 1 < res and filled[r + 1, c] else 0.0
            ml = 1.0 if c > 0 and filled[r, c - 1] else 0.0
            mr = 1.0 if c + 1 < res and filled[r, c + 1] else 0.0
            cnt = ((mu + md) + ml) + mr
            if cnt > 0:
                nb = ((vu + vd) + vl) + vr
                updates[(r, c)] = nb / cnt
        if not updates:
            break
        for (r, c), val in updates.items():
            data[r, c] = val
            filled[r, c] = True
    return data, filled


def transfer_features_reference(
    F: FeatureMap,
    gating: GatingSpec,
    depths: MultiLayerDepthMap,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
    fill_holes: bool = True,
) -> FeatureMap:
    """Triple-loop form of the overhead transfer: for each input pixel, for
    each gated depth sample, for each splat corner, accumulate."""
    res = vcam.resolution
    h, w = cam.height, cam.width
    nch = F.channels
    project = _stz_projector(cam, vcam)
    fdata = F.data.tolist()
    fvalid = F.valid.tolist()
    layer_rows = depths.layers.tolist()

    if gating.kind == "best_guess":
        best: dict[int, tuple] = {}
        front_rows = layer_rows[0]
        for t in range(h):
            for s in range(w):
                z = front_rows[t][s]
                if not math.isfinite(z) or not fvalid[t][s]:
                    continue
                u, v, zv = project(float(s), float(t), z)
                cu = math.floor(u + 0.5)
                cv = math.floor(v + 0.5)
                if not (0 <= cu < res and 0 <= cv < res):
                    continue
                cell = cv * res + cu
                cand = (zv, t, s)
                if cell not in best or cand < best[cell]:
                    best[cell] = cand
        data = np.zeros((res, res, nch))
        valid = np.zeros((res, res), bool)
        for cell, (_, t, s) in best.items():
            data[cell // res, cell % res] = F.data[t, s]
            valid[cell // res, cell % res] = True
        return FeatureMap(data=data, valid=valid)

    z_step = resolve_z_step(gating, vcam)
    num = [[[0.0] * nch for _ in range(res)] for _ in range(res)]
    den = [[0.0] * res for _ in range(res)]
    z_max = z_max_from_depths(depths)

    if gating.kind == "surface":
        survivors = _surface_survivor_set(depths, cam, vcam)
        for t in range(h):
            for s in range(w):
                if not fvalid[t][s]:
                    continue
                fvec = fdata[t][s]
                seen: list[float] = []
                for layer in range(4):
                    z = layer_rows[layer][t][s]
                    if not math.isfinite(z) or (layer, t, s) not in survivors:
                        continue
                    if any(z == prev for prev in seen):
                        continue
                    seen.append(z)
                    u, v, _ = project(float(s), float(t), z)
                    _splat_scalar(num, den, res, u, v, fvec)
    elif gating.kind == "constant":
        zs = _constant_z_list(cam.near, z_max, z_step)
        for t in range(h):
            for s in range(w):
                if not fvalid[t][s]:
                    continue
                fvec = fdata[t][s]
                for z in zs:
                    u, v, _ = project(float(s), float(t), z)
                    _splat_scalar(num, den, res, u, v, fvec)
    elif gating.kind == "volume":
        front = layer_rows[gating.front_layer]
        back = layer_rows[gating.front_layer + 1]
        for t in range(h):
            for s in range(w):
                d0 = front[t][s]
                d1 = back[t][s]
                if not (math.isfinite(d0) and math.isfinite(d1)):
                    continue
                if not fvalid[t][s]:
                    continue
                fvec = fdata[t][s]
                for z in _volume_z_list(d0, d1, z_step):
                    u, v, _ = project(float(s), float(t), z)
                    _splat_scalar(num, den, res, u, v, fvec)
    else:
        raise ValueError(f"no reference path for gating {gating.kind!r}")

    num_arr = np.array(num)
    den_arr = np.array(den)
    covered = den_arr > 0
    data = np.zeros((res, res, nch))
    for r in range(res):
        for c in range(res):
            if covered[r, c]:
                data[r, c] = num_arr[r, c] / den_arr[r, c]
    if not fill_holes:
        return FeatureMap(data=data, valid=covered.copy())

    reg_num = [[[0.0] for _ in range(res)] for _ in range(res)]
    reg_den = [[0.0] * res for _ in range(res)]
    one = (1.0,)
    zs_reg = _constant_z_list(cam.near, z_max, z_step)
    for t in range(h):
        for s in range(w):
            for z in zs_reg:
                u, v, _ = project(float(s), float(t), z)
                _splat_scalar(reg_num, reg_den, res, u, v, one)
    region = (np.array(reg_den) > 0) | covered
    data, filled = _infill_scalar(data, covered, region)
    return FeatureMap(data=data, valid=filled)


# -- matrix-composition projection oracle -----------------------------------


def forward_map_matrix(cam: PerspectiveCamera, vcam: OrthographicCamera, s, t, z):
    """Overhead coordinates by explicit matrix composition; agrees with the
    production mapping to floating-point tolerance, not bitwise."""
    k_inv = np.array(
        [
            [1.0 / cam.fx, 0.0, -cam.cx / cam.fx],
            [0.0, 1.0 / cam.fy, -cam.cy / cam.fy],
            [0.0, 0.0, 1.0],
        ]
    )
    p = z * (k_inv @ np.array([s, t, 1.0]))
    pv = vcam.rotation @ p + vcam.translation
    sc = vcam.scale()
    off = vcam.offset()
    return sc * pv[0] + off, sc * pv[1] + off


# -- independent single-ray tracer ------------------------------------------


def ray_hits_reference(scene: Scene, origin, direction):
    """All ray-triangle intersections, cross-product formulation, sorted by
    (t, instance_id, triangle_index). Grazing hits are discarded under the
    same relative-determinant rule as the production tracer."""
    vertices, triangles, tri_inst, tri_cat, tri_env = scene_soup(scene.objects)
    origin = np.asarray(origin, float)
    d = np.asarray(direction, float)
    dnorm = math.sqrt(float(d @ d))
    hits = []
    for k in range(len(triangles)):
        a, b, c = vertices[triangles[k]]
        e1 = b - a
        e2 = c - a
        n = np.cross(e1, e2)
        nlen = math.sqrt(float(n @ n))
        det = -float(d @ n)
        if abs(det) < GRAZE_EPS * dnorm * nlen:
            continue
        ao = origin - a
        dao = np.cross(ao, d)
        uu = float(e2 @ dao) / det
        vv = -float(e1 @ dao) / det
        th = float(ao @ n) / det
        if th >= 0.0 and uu >= 0.0 and vv >= 0.0 and uu + vv <= 1.0:
            hits.append((th, int(tri_inst[k]), k, int(tri_cat[k]), bool(tri_env[k])))
    hits.sort(key=lambda rec: (rec[0], rec[1], rec[2]))
    return hits


def trace_pixel_reference(scene: Scene, cam: PerspectiveCamera, s: int, t: int):
    """Five-layer depths, categories, and interval count for one pixel,
    derived from an independently computed sorted hit list. Depth values
    are z coordinates (the ray direction has unit z)."""
    direction = np.array(
        [(s - cam.cx) / cam.fx, (t - cam.cy) / cam.fy, 1.0], dtype=np.float64
    )
    hits = ray_hits_reference(scene, np.zeros(3), direction)
    d5 = math.nan
    for th, inst, k, cat, env in hits:
        if env:
            d5 = th
            break
    intervals = {}
    order = []
    for th, inst, k, cat, env in hits:
        if env:
            continue
        if inst not in intervals:
            intervals[inst] = [th, th, cat]
            order.append(inst)
        else:
            intervals[inst][1] = th
    layers = [math.nan] * 5
    layers[4] = d5
    sem1 = 0
    sem3 = 0
    if order:
        first = intervals[order[0]]
        layers[0], layers[1] = first[0], first[1]
        sem1 = first[2]
        for inst in order[1:]:
            cand = intervals[inst]
            if cand[0] > first[1]:
                layers[2], layers[3] = cand[0], cand[1]
                sem3 = cand[2]
                break
    return layers, sem1, sem3, len(order)


# -- exact point-to-triangle distance ---------------------------------------


def point_triangle_distance(p, a, b, c) -> float:
    """Distance from p to triangle abc via closest-point region tests."""
    p = np.asarray(p, float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = float(ab @ ap)
    d2 = float(ac @ ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return float(np.linalg.norm(p - a))
    bp = p - b
    d3 = float(ab @ bp)
    d4 = float(ac @ bp)
    if d3 >= 0.0 and d4 <= d3:
        return float(np.linalg.norm(p - b))
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        w = d1 / (d1 - d3)
        return float(np.linalg.norm(p - (a + w * ab)))
    cp = p - c
    d5 = float(ab @ cp)
    d6 = float(ac @ cp)
    if d6 >= 0.0 and d5 <= d6:
        return float(np.linalg.norm(p - c))
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return float(np.linalg.norm(p - (a + w * ac)))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return float(np.linalg.norm(p - (a + ab * v + ac * w)))


def min_distances_reference(points, vertices, triangles) -> np.ndarray:
    """All-pairs minimum point-to-surface distances."""
    points = np.asarray(points, float).reshape(-1, 3)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        best = math.inf
        for tri in triangles:
            d = point_triangle_distance(p, *vertices[tri])
            if d < best:
                best = d
        out[i] = best
    return out
