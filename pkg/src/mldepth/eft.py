"""Feature transfer from a perspective input view to a virtual orthographic
overhead view.

Each input pixel (s, t) and depth sample z maps to a 3D point on its ray,
which the virtual camera projects to continuous overhead coordinates (u, v).
Gating rules pick the depth samples; surviving samples scatter their feature
vectors with bilinear weights into an accumulator that is normalized per
cell. Overhead cells that receive nothing but sit inside the input frustum
are filled from neighbors; cells outside the frustum stay zero and invalid.

Exactness contract: the vectorized implementation here and the scalar
triple-loop reference implementation enumerate samples in the same order
(pixels row-major, depth samples inner, splat corners innermost) and use
the same scalar formulas, so their outputs agree bit for bit. Keep the
arithmetic expression order in this module stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import OrthographicCamera, PerspectiveCamera
from .errors import (
    DegenerateConfigError,
    DimensionMismatchError,
    UnsupportedConfigError,
    ValidationError,
)
from .tracing import MultiLayerDepthMap

INFILL_ROUNDS = 8
Z_MAX_FALLBACK = 10.0
GATING_KINDS = ("surface", "volume", "constant", "best_guess")
FD_PARAMS = ("t_x", "t_y", "sigma")

# samples whose splat work would exceed this are processed in slices
_CHUNK = 1 << 19


@dataclass
class FeatureMap:
    """Real-valued raster with a per-pixel validity flag.

    data is (H, W, C); valid is (H, W). Values on valid pixels are finite.
    """

    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim == 2:
            self.data = self.data[:, :, None]
        if self.data.ndim != 3:
            raise DimensionMismatchError("feature data must be (H, W, C)")
        self.valid = np.asarray(self.valid, bool)
        if self.valid.shape != self.data.shape[:2]:
            raise DimensionMismatchError("validity plane must match data raster")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def validate(self):
        if not np.isfinite(self.data[self.valid]).all():
            raise ValidationError("non-finite feature values on valid pixels")

    @classmethod
    def full(cls, height: int, width: int, channels: int = 1, value: float = 1.0):
        return cls(
            data=np.full((height, width, channels), value, dtype=np.float64),
            valid=np.ones((height, width), bool),
        )


def pixel_row_feature(cam: PerspectiveCamera) -> FeatureMap:
    """Single-channel map whose value at (s, t) is the row coordinate t."""
    t = np.arange(cam.height, dtype=np.float64)[:, None]
    data = np.broadcast_to(t, (cam.height, cam.width)).copy()
    return FeatureMap(data=data, valid=np.ones((cam.height, cam.width), bool))


@dataclass(frozen=True)
class GatingSpec:
    """Which depth samples along each input ray contribute.

    kind "surface": the four depth layers, z-buffered per overhead cell so
    only the top surface in each cell survives (per layer independently,
    combined by max). kind "volume": z sweep across one (entry, exit) layer
    pair, front_layer 0 or 2. kind "constant": z sweep from the near plane
    to z_max regardless of depth content. kind "best_guess": first-layer
    points only, nearest-cell assignment, highest point wins the cell.

    z_step defaults to half the overhead pixel footprint when unset.
    """

    kind: str
    front_layer: int = 0
    z_step: float | None = None

    def __post_init__(self):
        if self.kind not in GATING_KINDS:
            raise ValidationError(f"unknown gating kind {self.kind!r}")
        if self.kind == "volume" and self.front_layer not in (0, 2):
            raise ValidationError("volume gating needs front_layer 0 or 2")
        if self.z_step is not None and not self.z_step > 0:
            raise ValidationError("z_step must be positive")

    @staticmethod
    def surface() -> "GatingSpec":
        return GatingSpec(kind="surface")

    @staticmethod
    def volume12(z_step: float | None = None) -> "GatingSpec":
        return GatingSpec(kind="volume", front_layer=0, z_step=z_step)

    @staticmethod
    def volume34(z_step: float | None = None) -> "GatingSpec":
        return GatingSpec(kind="volume", front_layer=2, z_step=z_step)

    @staticmethod
    def constant(z_step: float | None = None) -> "GatingSpec":
        return GatingSpec(kind="constant", z_step=z_step)

    @staticmethod
    def best_guess() -> "GatingSpec":
        return GatingSpec(kind="best_guess")


def resolve_z_step(gating: GatingSpec, vcam: OrthographicCamera) -> float:
    step = gating.z_step if gating.z_step is not None else vcam.footprint() * 0.5
    if step > vcam.footprint() * (1.0 + 1e-9):
        raise ValidationError(
            f"z_step {step} exceeds overhead pixel footprint {vcam.footprint()}"
        )
    return float(step)


# -- the shared mapping kernel ----------------------------------------------


def _stz_projector(cam: PerspectiveCamera, vcam: OrthographicCamera):
    """Closure over the camera pair evaluating (s, t, z) -> (u, v, z_v).

    Coefficients are pulled out once as plain floats; the expression order
    inside is fixed, so every caller (scalar loops, vectorized blocks) gets
    bit-identical results."""
    cx, cy = float(cam.cx), float(cam.cy)
    fx, fy = float(cam.fx), float(cam.fy)
    R = vcam.rotation
    r00, r01, r02 = float(R[0, 0]), float(R[0, 1]), float(R[0, 2])
    r10, r11, r12 = float(R[1, 0]), float(R[1, 1]), float(R[1, 2])
    r20, r21, r22 = float(R[2, 0]), float(R[2, 1]), float(R[2, 2])
    t0, t1, t2 = (float(c) for c in vcam.translation)
    sc = float(vcam.scale())
    off = float(vcam.offset())

    def project(s, t, z):
        x = (s - cx) * z / fx
        y = (t - cy) * z / fy
        xv = r00 * x + r01 * y + r02 * z + t0
        yv = r10 * x + r11 * y + r12 * z + t1
        zv = r20 * x + r21 * y + r22 * z + t2
        return sc * xv + off, sc * yv + off, zv

    return project


def _project_stz(cam: PerspectiveCamera, vcam: OrthographicCamera, s, t, z):
    """(s, t, z) -> (u, v, z_v). One-shot form of the shared projector."""
    return _stz_projector(cam, vcam)(s, t, z)


def forward_map(cam: PerspectiveCamera, vcam: OrthographicCamera, s, t, z):
    """Continuous overhead coordinates of the point at depth z on the ray
    through input pixel (s, t)."""
    u, v, _ = _project_stz(cam, vcam, s, t, z)
    return u, v


# -- sample enumeration -----------------------------------------------------


def _step_counts(lo: np.ndarray, hi: np.ndarray, step: float) -> np.ndarray:
    """Number of samples z_k = lo + k*step with z_k <= hi, elementwise.

    Defined by the scalar loop `while lo + k*step <= hi`; the closed form
    floor((hi-lo)/step)+1 is corrected at float boundaries to match it.
    """
    ok = lo <= hi
    n = np.zeros(lo.shape, dtype=np.int64)
    if not ok.any():
        return n
    n[ok] = np.floor((hi[ok] - lo[ok]) / step).astype(np.int64) + 1
    for _ in range(2):
        over = ok & (n > 0) & (lo + (n - 1) * step > hi)
        if not over.any():
            break
        n[over] -= 1
    for _ in range(2):
        under = ok & (lo + n * step <= hi)
        if not under.any():
            break
        n[under] += 1
    return n


def constant_z_values(near: float, z_max: float, z_step: float) -> np.ndarray:
    """Shared z list for constant gating: n = ceil(span / z_step) even
    subdivisions, both endpoints included."""
    span = z_max - near
    if span <= 0:
        return np.zeros(0, dtype=np.float64)
    n = int(np.ceil(span / z_step))
    k = np.arange(n + 1, dtype=np.float64)
    return near + k * (span / n)


def _pixel_coords(height: int, width: int):
    s = np.broadcast_to(np.arange(width, dtype=np.float64), (height, width))
    t = np.broadcast_to(
        np.arange(height, dtype=np.float64)[:, None], (height, width)
    )
    return s, t


def z_max_from_depths(depths: MultiLayerDepthMap) -> float:
    """Farthest supported depth over all layers; fallback when nothing is."""
    finite = depths.layers[np.isfinite(depths.layers)]
    if finite.size == 0:
        return Z_MAX_FALLBACK
    return float(finite.max())


def _volume_samples(depths: MultiLayerDepthMap, front: int, z_step: float):
    """(pixel_index, z) arrays in canonical order: pixels row-major, z
    ascending within a pixel."""
    h, w = depths.layers.shape[1:]
    d0 = depths.layers[front].reshape(-1)
    d1 = depths.layers[front + 1].reshape(-1)
    m = np.isfinite(d0) & np.isfinite(d1)
    lo = d0[m] + z_step * 0.25
    hi = d1[m] - z_step * 0.25
    counts = _step_counts(lo, hi, z_step)
    pix_all = np.flatnonzero(m)
    keep = counts > 0
    pix_all = pix_all[keep]
    lo = lo[keep]
    counts = counts[keep]
    pix = np.repeat(pix_all, counts)
    ends = np.cumsum(counts)
    k = np.arange(ends[-1] if len(ends) else 0, dtype=np.int64)
    k = k - np.repeat(ends - counts, counts)
    z = np.repeat(lo, counts) + k.astype(np.float64) * z_step
    return pix, z


def _constant_samples(height: int, width: int, near: float, z_max: float, z_step: float):
    zs = constant_z_values(near, z_max, z_step)
    npx = height * width
    pix = np.repeat(np.arange(npx, dtype=np.int64), len(zs))
    z = np.tile(zs, npx)
    return pix, z


# -- z-buffered surface selection -------------------------------------------


def _claim_cells(u: np.ndarray, v: np.ndarray, res: int):
    cu = np.floor(u + 0.5).astype(np.int64)
    cv = np.floor(v + 0.5).astype(np.int64)
    inside = (cu >= 0) & (cu < res) & (cv >= 0) & (cv < res)
    return cu, cv, inside


def surface_survivors(
    depths: MultiLayerDepthMap,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
) -> np.ndarray:
    """(4, H, W) boolean: whether each depth-layer sample wins its overhead
    cell. Per layer independently; the winner in a cell is the sample
    nearest the overhead camera, ties broken by (t, s)."""
    if not vcam.theta_deg < 90.0:
        raise UnsupportedConfigError("overhead axis must pitch below horizontal")
    h, w = depths.layers.shape[1:]
    if (cam.height, cam.width) != (h, w):
        raise DimensionMismatchError("depth raster does not match camera size")
    res = vcam.resolution
    sg, tg = _pixel_coords(h, w)
    sflat = sg.reshape(-1)
    tflat = tg.reshape(-1)
    out = np.zeros((4, h, w), bool)
    for layer in range(4):
        d = depths.layers[layer].reshape(-1)
        m = np.isfinite(d)
        if not m.any():
            continue
        idx = np.flatnonzero(m)
        u, v, zv = _project_stz(cam, vcam, sflat[idx], tflat[idx], d[idx])
        cu, cv, inside = _claim_cells(u, v, res)
        idx = idx[inside]
        if idx.size == 0:
            continue
        cell = cv[inside] * res + cu[inside]
        zv = zv[inside]
        order = np.lexsort((idx % w, idx // w, zv, cell))
        cell_sorted = cell[order]
        first = np.ones(len(order), bool)
        first[1:] = cell_sorted[1:] != cell_sorted[:-1]
        winners = idx[order[first]]
        out[layer].reshape(-1)[winners] = True
    return out


def gating_surface(depths, cam, vcam, s: int, t: int, layer: int):
    """Depth samples contributed by one pixel of one layer: [(z, weight)].

    weight 1 when the sample wins its overhead cell, 0 when a higher
    surface claimed the cell, empty when the layer is unsupported there.
    """
    if not 1 <= layer <= 4:
        raise ValidationError("layer index must be 1..4")
    z = depths.layers[layer - 1, t, s]
    if not np.isfinite(z):
        return []
    surv = surface_survivors(depths, cam, vcam)
    return [(float(z), 1.0 if surv[layer - 1, t, s] else 0.0)]


def _surface_samples(depths, cam, vcam):
    """Surviving surface samples over all four layers in canonical splat
    order (pixel row-major, then layer). Exactly-equal depths at one pixel
    collapse to a single sample (max over layer weights)."""
    surv = surface_survivors(depths, cam, vcam)
    h, w = depths.layers.shape[1:]
    pix_l = []
    lay_l = []
    z_l = []
    for layer in range(4):
        m = surv[layer].reshape(-1)
        idx = np.flatnonzero(m)
        pix_l.append(idx)
        lay_l.append(np.full(len(idx), layer, dtype=np.int64))
        z_l.append(depths.layers[layer].reshape(-1)[idx])
    pix = np.concatenate(pix_l)
    lay = np.concatenate(lay_l)
    z = np.concatenate(z_l)
    if len(pix):
        order = np.lexsort((lay, z, pix))
        pix, lay, z = pix[order], lay[order], z[order]
        dup = np.zeros(len(pix), bool)
        dup[1:] = (pix[1:] == pix[:-1]) & (z[1:] == z[:-1])
        pix, lay, z = pix[~dup], lay[~dup], z[~dup]
        order = np.lexsort((lay, pix))
        pix, z = pix[order], z[order]
    return pix, z


# -- scatter accumulation ---------------------------------------------------


def _splat(
    num: np.ndarray,
    den: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    values: np.ndarray,
    dnum: np.ndarray | None = None,
    dden: np.ndarray | None = None,
    du: np.ndarray | None = None,
    dv: np.ndarray | None = None,
):
    """Bilinear scatter of unit-weight samples, corner order (u0,v0),
    (u0+1,v0), (u0,v0+1), (u0+1,v0+1), sample-major. Optionally also
    accumulates the weight derivative stream for finite-diff checks."""
    res = den.shape[0]
    deriv = dnum is not None
    for start in range(0, len(u), _CHUNK):
        sl = slice(start, start + _CHUNK)
        uu, vv, val = u[sl], v[sl], values[sl]
        iu = np.floor(uu)
        iv = np.floor(vv)
        fu = uu - iu
        fv = vv - iv
        iu = iu.astype(np.int64)
        iv = iv.astype(np.int64)
        n = len(uu)
        cu = np.empty((n, 4), dtype=np.int64)
        cvr = np.empty((n, 4), dtype=np.int64)
        wgt = np.empty((n, 4), dtype=np.float64)
        cu[:, 0] = iu
        cvr[:, 0] = iv
        wgt[:, 0] = (1.0 - fu) * (1.0 - fv)
        cu[:, 1] = iu + 1
        cvr[:, 1] = iv
        wgt[:, 1] = fu * (1.0 - fv)
        cu[:, 2] = iu
        cvr[:, 2] = iv + 1
        wgt[:, 2] = (1.0 - fu) * fv
        cu[:, 3] = iu + 1
        cvr[:, 3] = iv + 1
        wgt[:, 3] = fu * fv
        if deriv:
            dwu = du[sl]
            dwv = dv[sl]
            dw = np.empty((n, 4), dtype=np.float64)
            dw[:, 0] = -(1.0 - fv) * dwu - (1.0 - fu) * dwv
            dw[:, 1] = (1.0 - fv) * dwu - fu * dwv
            dw[:, 2] = -fv * dwu + (1.0 - fu) * dwv
            dw[:, 3] = fv * dwu + fu * dwv
        keep = (cu >= 0) & (cu < res) & (cvr >= 0) & (cvr < res)
        keep_f = keep.reshape(-1)
        lin = (cvr * res + cu).reshape(-1)[keep_f]
        wf = wgt.reshape(-1)[keep_f]
        vrep = np.repeat(val, 4, axis=0)[keep_f]
        np.add.at(num.reshape(-1, num.shape[-1]), lin, wf[:, None] * vrep)
        np.add.at(den.reshape(-1), lin, wf)
        if deriv:
            dwf = dw.reshape(-1)[keep_f]
            np.add.at(dnum.reshape(-1, dnum.shape[-1]), lin, dwf[:, None] * vrep)
            np.add.at(dden.reshape(-1), lin, dwf)


def _gather_samples(gating, depths, cam, vcam, z_step):
    """Canonical (pixel_index, z) streams for splatting gatings."""
    if gating.kind == "volume":
        return _volume_samples(depths, gating.front_layer, z_step)
    if gating.kind == "constant":
        z_max = z_max_from_depths(depths)
        return _constant_samples(cam.height, cam.width, cam.near, z_max, z_step)
    if gating.kind == "surface":
        return _surface_samples(depths, cam, vcam)
    raise ValidationError(f"no sample stream for gating {gating.kind!r}")


def _region_den(cam, vcam, z_max, z_step):
    """Accumulated constant-gating weight per overhead cell; its support is
    the in-frustum region used for infill decisions."""
    res = vcam.resolution
    num = np.zeros((res, res, 1), dtype=np.float64)
    den = np.zeros((res, res), dtype=np.float64)
    zs = constant_z_values(cam.near, z_max, z_step)
    if len(zs) == 0:
        return den
    sg, tg = _pixel_coords(cam.height, cam.width)
    npx = cam.height * cam.width
    # row blocks keep peak memory flat at large sizes
    rows_per = max(1, _CHUNK // max(1, cam.width * len(zs)))
    ones = None
    for r0 in range(0, cam.height, rows_per):
        r1 = min(cam.height, r0 + rows_per)
        s_blk = np.repeat(sg[r0:r1].reshape(-1), len(zs))
        t_blk = np.repeat(tg[r0:r1].reshape(-1), len(zs))
        z_blk = np.tile(zs, (r1 - r0) * cam.width)
        u, v, _ = _project_stz(cam, vcam, s_blk, t_blk, z_blk)
        if ones is None or len(ones) != len(u):
            ones = np.ones((len(u), 1), dtype=np.float64)
        _splat(num, den, u, v, ones[: len(u)])
    return den


def _infill(data, filled, region, rounds: int = INFILL_ROUNDS):
    """Synchronous neighbor-average fill of empty in-region cells. Neighbor
    sum order is up, down, left, right; missing neighbors contribute 0."""
    data = data.copy()
    filled = filled.copy()
    for _ in range(rounds):
        empty = region & ~filled
        if not empty.any():
            break
        vals = np.where(filled[:, :, None], data, 0.0)
        fl = filled.astype(np.float64)
        vu = np.zeros_like(vals)
        vd = np.zeros_like(vals)
        vl = np.zeros_like(vals)
        vr = np.zeros_like(vals)
        mu = np.zeros_like(fl)
        md = np.zeros_like(fl)
        ml = np.zeros_like(fl)
        mr = np.zeros_like(fl)
        vu[1:] = vals[:-1]
        mu[1:] = fl[:-1]
        vd[:-1] = vals[1:]
        md[:-1] = fl[1:]
        vl[:, 1:] = vals[:, :-1]
        ml[:, 1:] = fl[:, :-1]
        vr[:, :-1] = vals[:, 1:]
        mr[:, :-1] = fl[:, 1:]
        nb = ((vu + vd) + vl) + vr
        cnt = ((mu + md) + ml) + mr
        newly = empty & (cnt > 0)
        if not newly.any():
            break
        data[newly] = nb[newly] / cnt[newly][:, None]
        filled = filled | newly
    return data, filled


def _best_guess_transfer(F, depths, cam, vcam):
    """Nearest-cell winner-takes-cell over first-layer points; the winner
    in each cell is the point nearest the overhead camera."""
    res = vcam.resolution
    h, w = cam.height, cam.width
    d1 = depths.layers[0].reshape(-1)
    m = np.isfinite(d1) & F.valid.reshape(-1)
    data = np.zeros((res, res, F.channels), dtype=np.float64)
    valid = np.zeros((res, res), bool)
    idx = np.flatnonzero(m)
    if idx.size == 0:
        return FeatureMap(data=data, valid=valid)
    sg, tg = _pixel_coords(h, w)
    u, v, zv = _project_stz(
        cam, vcam, sg.reshape(-1)[idx], tg.reshape(-1)[idx], d1[idx]
    )
    cu, cv, inside = _claim_cells(u, v, res)
    idx = idx[inside]
    if idx.size == 0:
        return FeatureMap(data=data, valid=valid)
    cell = cv[inside] * res + cu[inside]
    zv = zv[inside]
    order = np.lexsort((idx % w, idx // w, zv, cell))
    cell_sorted = cell[order]
    first = np.ones(len(order), bool)
    first[1:] = cell_sorted[1:] != cell_sorted[:-1]
    win_cell = cell_sorted[first]
    win_pix = idx[order[first]]
    data.reshape(-1, F.channels)[win_cell] = F.data.reshape(-1, F.channels)[win_pix]
    valid.reshape(-1)[win_cell] = True
    return FeatureMap(data=data, valid=valid)


def transfer_features(
    F: FeatureMap,
    gating: GatingSpec,
    depths: MultiLayerDepthMap,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
    fill_holes: bool = True,
) -> FeatureMap:
    """Overhead feature raster G = (sum F*w) / (sum w) over gated samples.

    Cells with no samples: inside the input frustum they are filled from
    neighbors (when fill_holes, up to 8 averaging rounds), outside they are
    zero and invalid. best_guess gating assigns whole cells instead of
    splatting and never infills.
    """
    if (F.height, F.width) != (cam.height, cam.width):
        raise DimensionMismatchError("feature map does not match camera raster")
    if depths.layers.shape[1:] != (cam.height, cam.width):
        raise DimensionMismatchError("depth map does not match camera raster")
    F.validate()
    if gating.kind == "best_guess":
        return _best_guess_transfer(F, depths, cam, vcam)
    z_step = resolve_z_step(gating, vcam)
    res = vcam.resolution
    pix, z = _gather_samples(gating, depths, cam, vcam, z_step)
    fvalid = F.valid.reshape(-1)
    m = fvalid[pix]
    pix, z = pix[m], z[m]
    num = np.zeros((res, res, F.channels), dtype=np.float64)
    den = np.zeros((res, res), dtype=np.float64)
    w = cam.width
    s = (pix % w).astype(np.float64)
    t = (pix // w).astype(np.float64)
    u, v, _ = _project_stz(cam, vcam, s, t, z)
    _splat(num, den, u, v, F.data.reshape(-1, F.channels)[pix])
    covered = den > 0
    data = np.zeros_like(num)
    data[covered] = num[covered] / den[covered][:, None]
    if not fill_holes:
        return FeatureMap(data=data, valid=covered.copy())
    region = _region_den(cam, vcam, z_max_from_depths(depths), z_step) > 0
    region = region | covered
    data, filled = _infill(data, covered, region)
    return FeatureMap(data=data, valid=filled)


def frustum_mask(
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
    z_max: float | None = None,
    z_step: float | None = None,
    depths: MultiLayerDepthMap | None = None,
) -> FeatureMap:
    """Overhead indicator of cells reached by any point of the input viewing
    volume, z swept from the near plane to z_max (from depths when given,
    else 10 m)."""
    if z_max is None:
        z_max = z_max_from_depths(depths) if depths is not None else Z_MAX_FALLBACK
    if z_step is None:
        z_step = vcam.footprint() * 0.5
    den = _region_den(cam, vcam, z_max, z_step)
    support = den > 0
    return FeatureMap(data=support.astype(np.float64), valid=support)


# -- best-guess height ------------------------------------------------------


def _heights_from_points(cam: PerspectiveCamera, x, y, z):
    """Height above the floor of camera-frame points, using the camera's
    known tilt and height."""
    g = cam.gravity_from_camera()
    y_g = g[1, 0] * x + g[1, 1] * y + g[1, 2] * z
    return cam.height_above_floor() - y_g


def best_guess_height(
    depths: MultiLayerDepthMap,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
) -> FeatureMap:
    """Overhead raster of the height of the highest visible first-layer
    surface point in each cell; NaN where no point lands."""
    res = vcam.resolution
    h, w = cam.height, cam.width
    d1 = depths.layers[0].reshape(-1)
    m = np.isfinite(d1)
    data = np.full((res, res, 1), np.nan)
    valid = np.zeros((res, res), bool)
    idx = np.flatnonzero(m)
    if idx.size == 0:
        return FeatureMap(data=data, valid=valid)
    sg, tg = _pixel_coords(h, w)
    s = sg.reshape(-1)[idx]
    t = tg.reshape(-1)[idx]
    z = d1[idx]
    u, v, zv = _project_stz(cam, vcam, s, t, z)
    cu, cv, inside = _claim_cells(u, v, res)
    if not inside.any():
        return FeatureMap(data=data, valid=valid)
    idx, s, t, z, zv = idx[inside], s[inside], t[inside], z[inside], zv[inside]
    cell = cv[inside] * res + cu[inside]
    order = np.lexsort((idx % w, idx // w, zv, cell))
    cell_sorted = cell[order]
    first = np.ones(len(order), bool)
    first[1:] = cell_sorted[1:] != cell_sorted[:-1]
    win = order[first]
    x = (s[win] - cam.cx) * z[win] / cam.fx
    y = (t[win] - cam.cy) * z[win] / cam.fy
    heights = _heights_from_points(cam, x, y, z[win])
    data.reshape(-1)[cell_sorted[first]] = heights
    valid.reshape(-1)[cell_sorted[first]] = True
    return FeatureMap(data=data, valid=valid)


def convert_row_to_height(
    rows: FeatureMap,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
) -> FeatureMap:
    """Metric height raster from a best-guess transfer of the row feature.

    Solves, per valid cell, for the camera-frame point whose input row is
    the stored t and whose overhead projection is the cell center, then
    reads off its height. Cell-center quantization bounds the error by
    half a footprint times the local epipolar slope.
    """
    if rows.channels != 1:
        raise DimensionMismatchError("row map must be single channel")
    res = vcam.resolution
    data = np.full((res, res, 1), np.nan)
    out_valid = np.zeros((res, res), bool)
    cells = np.flatnonzero(rows.valid.reshape(-1))
    if cells.size == 0:
        return FeatureMap(data=data, valid=out_valid)
    cv, cu = np.divmod(cells, res)
    sc = vcam.scale()
    off = vcam.offset()
    xv = (cu.astype(np.float64) - off) / sc
    yv = (cv.astype(np.float64) - off) / sc
    t = rows.data.reshape(-1)[cells]
    ky = (t - cam.cy) / cam.fy
    R = vcam.rotation
    tr = vcam.translation
    # [xv - t0; yv - t1] = [[R00, R01*ky + R02]; [R10, R11*ky + R12]] [x; z]
    a = np.full(len(cells), R[0, 0])
    b = R[0, 1] * ky + R[0, 2]
    c = np.full(len(cells), R[1, 0])
    d = R[1, 1] * ky + R[1, 2]
    rhs0 = xv - tr[0]
    rhs1 = yv - tr[1]
    det = a * d - b * c
    ok = np.abs(det) > 1e-12
    x = np.where(ok, (rhs0 * d - b * rhs1) / np.where(ok, det, 1.0), np.nan)
    z = np.where(ok, (a * rhs1 - c * rhs0) / np.where(ok, det, 1.0), np.nan)
    heights = _heights_from_points(cam, x, ky * z, z)
    good = ok & np.isfinite(heights)
    data.reshape(-1)[cells[good]] = heights[good]
    out_valid.reshape(-1)[cells[good]] = True
    return FeatureMap(data=data, valid=out_valid)


# -- differentiability check ------------------------------------------------


def _param_derivatives(param: str, u, v, vcam: OrthographicCamera):
    """du/dp and dv/dp per sample for the supported parameters."""
    if param == "t_x":
        return np.full_like(u, vcam.scale()), np.zeros_like(v)
    if param == "t_y":
        return np.zeros_like(u), np.full_like(v, vcam.scale())
    if param == "sigma":
        off = vcam.offset()
        sig = vcam.radius_sigma
        return -(u - off) / sig, -(v - off) / sig
    raise ValidationError(f"parameter must be one of {FD_PARAMS}")


def _perturbed(vcam: OrthographicCamera, param: str, delta: float):
    if param == "t_x":
        tr = vcam.translation.copy()
        tr[0] += delta
        return replace(vcam, translation=tr)
    if param == "t_y":
        tr = vcam.translation.copy()
        tr[1] += delta
        return replace(vcam, translation=tr)
    return replace(vcam, radius_sigma=vcam.radius_sigma + delta)


def finite_diff_check(
    F: FeatureMap,
    gating: GatingSpec,
    depths: MultiLayerDepthMap,
    cam: PerspectiveCamera,
    vcam: OrthographicCamera,
    param: str,
    h: float = 1e-4,
) -> float:
    """Max relative gap between the analytic derivative of the transfer
    w.r.t. one virtual-camera parameter and a central finite difference.

    Supported for the splatting sweeps (constant and volume gating), whose
    sample sets do not depend on the perturbed parameter. Configurations
    with a sample too close to a pixel-grid line are rejected with a retry
    hint, since the bilinear splat is not differentiable there.
    """
    if param == "σ":
        param = "sigma"
    if param not in FD_PARAMS:
        raise ValidationError(f"parameter must be one of {FD_PARAMS}")
    if not h > 0:
        raise ValidationError("step h must be positive")
    if gating.kind not in ("constant", "volume"):
        raise UnsupportedConfigError(
            "finite-diff check supports constant and volume gating only"
        )
    z_step = resolve_z_step(gating, vcam)
    fixed = replace(gating, z_step=z_step)
    res = vcam.resolution

    pix, z = _gather_samples(fixed, depths, cam, vcam, z_step)
    m = F.valid.reshape(-1)[pix]
    pix, z = pix[m], z[m]
    w = cam.width
    s = (pix % w).astype(np.float64)
    t = (pix // w).astype(np.float64)
    u, v, _ = _project_stz(cam, vcam, s, t, z)
    du, dv = _param_derivatives(param, u, v, vcam)

    margin_u = 2.0 * h * np.abs(du) + 1e-9
    margin_v = 2.0 * h * np.abs(dv) + 1e-9
    near_u = np.abs(u - np.round(u)) < margin_u
    near_v = np.abs(v - np.round(v)) < margin_v
    if near_u.any() or near_v.any():
        raise DegenerateConfigError(
            "a sample sits on a pixel-grid line; retry with a jittered "
            "virtual camera or different seed"
        )

    vals = F.data.reshape(-1, F.channels)[pix]
    num = np.zeros((res, res, F.channels), dtype=np.float64)
    den = np.zeros((res, res), dtype=np.float64)
    dnum = np.zeros_like(num)
    dden = np.zeros_like(den)
    _splat(num, den, u, v, vals, dnum=dnum, dden=dden, du=du, dv=dv)
    covered = den > 0
    analytic = np.zeros_like(num)
    analytic[covered] = (
        dnum[covered] * den[covered][:, None] - num[covered] * dden[covered][:, None]
    ) / (den[covered] ** 2)[:, None]

    plus = transfer_features(F, fixed, depths, cam, _perturbed(vcam, param, h), fill_holes=False)
    minus = transfer_features(F, fixed, depths, cam, _perturbed(vcam, param, -h), fill_holes=False)
    if not (
        np.array_equal(plus.valid, covered) and np.array_equal(minus.valid, covered)
    ):
        raise DegenerateConfigError(
            "cell coverage changed under perturbation; retry with a "
            "different configuration"
        )
    fd = (plus.data - minus.data) / (2.0 * h)
    err = np.abs(analytic - fd) / (np.abs(fd) + 1e-6)
    return float(err[covered].max(initial=0.0))
