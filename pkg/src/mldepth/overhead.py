"""Choosing the virtual overhead camera from depth data.

Overhead placement is expressed in the gravity-aligned input frame: origin
at the input camera center, x right, y straight down along gravity, z the
horizontal forward direction (the ground projection of the optical axis).
(t_x, t_y, t_z) is the overhead camera center in that frame, so t_y = 0
keeps it at the input camera's height. theta_deg is the pitch between the
input optical axis and the overhead view axis; the heuristics use
90 - tilt, which points the overhead axis straight down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import OrthographicCamera, PerspectiveCamera, rot_x, vec3
from .errors import NoSupportError, ValidationError
from .tracing import MultiLayerDepthMap

SIGMA_MIN = 0.5
BBOX_MARGIN = 0.05


@dataclass
class OverheadParams:
    t_x: float
    t_y: float
    t_z: float
    theta_deg: float
    radius_sigma: float

    def __post_init__(self):
        if not self.radius_sigma > 0:
            raise ValidationError("radius_sigma must be positive")
        if not 0.0 < self.theta_deg < 90.0:
            raise ValidationError("theta_deg must lie in (0, 90)")

    def center(self) -> np.ndarray:
        return vec3(self.t_x, self.t_y, self.t_z)

    def to_dict(self) -> dict:
        return {
            "t_x": self.t_x,
            "t_y": self.t_y,
            "t_z": self.t_z,
            "theta_deg": self.theta_deg,
            "radius_sigma": self.radius_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OverheadParams":
        return cls(
            t_x=float(d["t_x"]),
            t_y=float(d["t_y"]),
            t_z=float(d["t_z"]),
            theta_deg=float(d["theta_deg"]),
            radius_sigma=float(d["radius_sigma"]),
        )


def _gravity_points(depths: MultiLayerDepthMap, cam: PerspectiveCamera, layer_ids):
    """Gravity-frame coordinates of supported pixels of the given layers."""
    h, w = depths.layers.shape[1:]
    g = cam.gravity_from_camera()
    pts = []
    s = np.broadcast_to(np.arange(w, dtype=np.float64), (h, w))
    t = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None], (h, w))
    for layer in layer_ids:
        z = depths.layers[layer]
        m = np.isfinite(z)
        if not m.any():
            continue
        p = cam.unproject(s[m], t[m], z[m])
        pts.append(p @ g.T)
    if not pts:
        return np.zeros((0, 3))
    return np.concatenate(pts)


def _first_visible_points(depths: MultiLayerDepthMap, cam: PerspectiveCamera):
    """Gravity-frame points of the nearest visible surface per pixel: the
    first object layer where present, the envelope otherwise."""
    h, w = depths.layers.shape[1:]
    z = np.where(np.isfinite(depths.layers[0]), depths.layers[0], depths.layers[4])
    m = np.isfinite(z)
    if not m.any():
        return np.zeros((0, 3))
    s = np.broadcast_to(np.arange(w, dtype=np.float64), (h, w))
    t = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None], (h, w))
    p = cam.unproject(s[m], t[m], z[m])
    return p @ cam.gravity_from_camera().T


def _theta(cam: PerspectiveCamera) -> float:
    return 90.0 - cam.tilt_deg


def heuristic_pointcloud(
    depths: MultiLayerDepthMap, cam: PerspectiveCamera
) -> OverheadParams:
    """Center at the ground mean of the visible-surface point cloud; radius
    1.5 times its isotropic ground-plane standard deviation."""
    pts = _first_visible_points(depths, cam)
    if len(pts) == 0:
        raise NoSupportError("no supported depth for the point-cloud heuristic")
    cx = float(pts[:, 0].mean())
    cz = float(pts[:, 2].mean())
    var = float(((pts[:, 0] - cx) ** 2 + (pts[:, 2] - cz) ** 2).mean())
    sigma = max(1.5 * np.sqrt(var), SIGMA_MIN)
    return OverheadParams(
        t_x=cx, t_y=0.0, t_z=cz, theta_deg=_theta(cam), radius_sigma=float(sigma)
    )


def heuristic_principal_plane(
    depths: MultiLayerDepthMap, cam: PerspectiveCamera
) -> OverheadParams:
    """Center on the ground-projected principal axis, pushed forward by the
    mean envelope depth; radius from the envelope points' spread about it."""
    d5 = depths.layers[4]
    m = np.isfinite(d5)
    if not m.any():
        raise NoSupportError("no envelope depth for the principal-plane heuristic")
    offset = float(d5[m].mean())
    pts = _gravity_points(depths, cam, [4])
    r2 = (pts[:, 0] - 0.0) ** 2 + (pts[:, 2] - offset) ** 2
    sigma = max(1.5 * float(np.sqrt(r2.mean())), SIGMA_MIN)
    return OverheadParams(
        t_x=0.0, t_y=0.0, t_z=offset, theta_deg=_theta(cam), radius_sigma=sigma
    )


def heuristic_bbox(
    depths: MultiLayerDepthMap, cam: PerspectiveCamera
) -> OverheadParams:
    """Tightest square over ground-projected object points (all four object
    layers), with a 5 percent side margin on the radius."""
    pts = _gravity_points(depths, cam, [0, 1, 2, 3])
    if len(pts) == 0:
        raise NoSupportError("no object pixels for the bounding-box heuristic")
    x0, x1 = float(pts[:, 0].min()), float(pts[:, 0].max())
    z0, z1 = float(pts[:, 2].min()), float(pts[:, 2].max())
    side = max(x1 - x0, z1 - z0)
    sigma = max(side / 2.0 + BBOX_MARGIN * side, SIGMA_MIN)
    return OverheadParams(
        t_x=(x0 + x1) / 2.0,
        t_y=0.0,
        t_z=(z0 + z1) / 2.0,
        theta_deg=_theta(cam),
        radius_sigma=sigma,
    )


def blend(candidates, weights) -> OverheadParams:
    """Component-wise convex combination after weight normalization."""
    candidates = list(candidates)
    weights = np.asarray(list(weights), dtype=np.float64)
    if len(candidates) != len(weights):
        raise ValidationError("one weight per candidate required")
    if (weights < 0).any():
        raise ValidationError("weights must be non-negative")
    total = float(weights.sum())
    if not total > 0:
        raise ValidationError("weights must not all be zero")
    weights = weights / total
    fields = ["t_x", "t_y", "t_z", "theta_deg", "radius_sigma"]
    vals = {
        f: float(sum(w * getattr(c, f) for c, w in zip(candidates, weights)))
        for f in fields
    }
    return OverheadParams(**vals)


def select_overhead(
    depths: MultiLayerDepthMap,
    cam: PerspectiveCamera,
    weights=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
) -> OverheadParams:
    """Blend of the three placement heuristics. A heuristic without support
    in this view is dropped together with its weight."""
    heuristics = (heuristic_pointcloud, heuristic_principal_plane, heuristic_bbox)
    if len(tuple(weights)) != 3:
        raise ValidationError("expected three blend weights")
    cands = []
    used_w = []
    for fn, w in zip(heuristics, weights):
        try:
            cands.append(fn(depths, cam))
            used_w.append(w)
        except NoSupportError:
            continue
    if not cands:
        raise NoSupportError("no heuristic has support in this view")
    return blend(cands, used_w)


def build_overhead_camera(
    params: OverheadParams, cam: PerspectiveCamera, resolution: int = 256
) -> OrthographicCamera:
    """Orthographic camera realizing the chosen placement, posed relative
    to the input camera frame."""
    rot = rot_x(params.theta_deg)
    c_cam = rot_x(cam.tilt_deg) @ params.center()
    return OrthographicCamera(
        radius_sigma=params.radius_sigma,
        resolution=resolution,
        rotation=rot,
        translation=-(rot @ c_cam),
        theta_deg=params.theta_deg,
    )
