"""Camera models and frame conventions.

Conventions used throughout the package:

* Camera frame: +x right, +y down (image row direction), +z forward.
  Depth rasters store the camera-frame z coordinate, not ray arc length.
* Pixel (s, t) at integer coordinates is the pixel center; the image
  occupies the continuous rectangle [-0.5, width-0.5] x [-0.5, height-0.5].
* Poses map world points into the camera: p_cam = R @ p_world + t.
* World frame: +y up with the floor plane at y = 0, so a camera's height
  above the floor is the y component of its world position.
* ``tilt_deg`` is the camera's downward pitch about its x axis relative to
  gravity-horizontal; rotating camera coordinates by R_x(-tilt) yields the
  gravity-aligned frame (y exactly down, z horizontal forward).
* The orthographic camera is a top-down view: its pose (rotation,
  translation) maps input-camera coordinates into its own frame, where z is
  depth below the camera plane and (u, v) = scale * (x, y) + (res - 1) / 2
  with scale = resolution / (2 * radius_sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidCameraError

Vec3 = np.ndarray

ROTATION_TOL = 1e-9


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=np.float64)


def rot_x(angle_deg: float) -> np.ndarray:
    """Right-handed rotation about the x axis."""
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]], dtype=np.float64)


def check_rotation(rotation: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise InvalidCameraError(f"rotation must be 3x3, got {rotation.shape}")
    if not np.all(np.isfinite(rotation)):
        raise InvalidCameraError("rotation contains non-finite entries")
    err = np.abs(rotation @ rotation.T - np.eye(3)).max()
    if err > tol:
        raise InvalidCameraError(f"rotation not orthonormal: |R R^T - I| = {err:.3e}")
    if np.linalg.det(rotation) < 0.0:
        raise InvalidCameraError("rotation has negative determinant (reflection)")
    return rotation


def _check_vec3(v, name: str) -> Vec3:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise InvalidCameraError(f"{name} contains non-finite entries")
    return v


@dataclass
class PerspectiveCamera:
    """Pinhole camera with a known downward tilt.

    fx, fy, cx, cy are in pixels; width/height give the raster size the
    intrinsics refer to; ``near`` is the near-plane depth in meters.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: Vec3 = field(default_factory=lambda: np.zeros(3))
    near: float = 0.1
    tilt_deg: float = 11.0

    def __post_init__(self):
        self.rotation = check_rotation(self.rotation)
        self.translation = _check_vec3(self.translation, "translation")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidCameraError("focal lengths must be positive")
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise InvalidCameraError("principal point must be finite")
        if self.width < 1 or self.height < 1:
            raise InvalidCameraError("raster size must be at least 1x1")
        if not (self.near > 0):
            raise InvalidCameraError("near plane must be positive")
        if not (0.0 <= self.tilt_deg < 90.0):
            raise InvalidCameraError("tilt_deg must lie in [0, 90)")

    # -- pose helpers -------------------------------------------------------

    def position(self) -> Vec3:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def height_above_floor(self) -> float:
        # world floor is the y=0 plane, +y up
        return float(self.position()[1])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    # -- projection ---------------------------------------------------------

    def project(self, points: np.ndarray):
        """Camera-frame points (..., 3) -> pixel coords (s, t) and depth z."""
        points = np.asarray(points, dtype=np.float64)
        x, y, z = points[..., 0], points[..., 1], points[..., 2]
        s = self.fx * x / z + self.cx
        t = self.fy * y / z + self.cy
        return s, t, z

    def unproject(self, s, t, z):
        """Pixel coords + depth -> camera-frame points (..., 3)."""
        s = np.asarray(s, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        x = (s - self.cx) * z / self.fx
        y = (t - self.cy) * z / self.fy
        return np.stack(np.broadcast_arrays(x, y, z), axis=-1)

    def pixel_ray_dirs(self) -> np.ndarray:
        """(height, width, 3) ray directions scaled so dir_z == 1.

        With this parameterization the ray parameter equals camera-frame
        depth, so traced hit parameters are depths directly.
        """
        s = np.arange(self.width, dtype=np.float64)
        t = np.arange(self.height, dtype=np.float64)
        x = (s[None, :] - self.cx) / self.fx
        y = (t[:, None] - self.cy) / self.fy
        d = np.empty((self.height, self.width, 3), dtype=np.float64)
        d[..., 0] = x
        d[..., 1] = y
        d[..., 2] = 1.0
        return d

    # -- gravity-aligned frame ---------------------------------------------

    def gravity_from_camera(self) -> np.ndarray:
        """Matrix taking camera coords to the gravity-aligned frame."""
        return rot_x(-self.tilt_deg)

    def to_gravity(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.gravity_from_camera().T

    def from_gravity(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ rot_x(self.tilt_deg).T

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": {
                "x": float(self.translation[0]),
                "y": float(self.translation[1]),
                "z": float(self.translation[2]),
            },
            "near": self.near,
            "tilt_deg": self.tilt_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerspectiveCamera":
        try:
            tr = d["translation"]
            return cls(
                fx=float(d["fx"]),
                fy=float(d["fy"]),
                cx=float(d["cx"]),
                cy=float(d["cy"]),
                width=int(d["width"]),
                height=int(d["height"]),
                rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
                translation=vec3(float(tr["x"]), float(tr["y"]), float(tr["z"])),
                near=float(d.get("near", 0.1)),
                tilt_deg=float(d.get("tilt_deg", 11.0)),
            )
        except (KeyError, TypeError) as e:
            raise InvalidCameraError(f"bad perspective camera record: {e}") from e

    def scaled(self, width: int, height: int) -> "PerspectiveCamera":
        """Same view at a different raster resolution."""
        sx = width / self.width
        sy = height / self.height
        return replace(
            self,
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=width,
            height=height,
        )


def make_tilted_camera(
    width: int,
    height: int,
    fov_deg: float = 60.0,
    position: Vec3 | None = None,
    tilt_deg: float = 11.0,
    near: float = 0.1,
) -> PerspectiveCamera:
    """Camera at ``position`` (world, +y up) looking toward world -z,
    pitched down by ``tilt_deg``. ``fov_deg`` is the horizontal edge-to-edge
    field of view: tan(fov/2) = (width/2) / fx.
    """
    if position is None:
        position = vec3(0.0, 1.5, 2.5)
    position = _check_vec3(position, "position")
    fx = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    # look toward -z with +y_world up: camera axes (rows) in world coords
    base = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    rotation = rot_x(tilt_deg) @ base
    translation = -rotation @ position
    return PerspectiveCamera(
        fx=fx,
        fy=fx,
        cx=(width - 1) / 2.0,
        cy=(height - 1) / 2.0,
        width=width,
        height=height,
        rotation=rotation,
        translation=translation,
        near=near,
        tilt_deg=tilt_deg,
    )


@dataclass
class OrthographicCamera:
    """Square top-down orthographic view of the scene.

    ``radius_sigma`` is the half-extent of the square footprint in meters,
    ``resolution`` the raster size per side. The pose maps input-camera
    coordinates into this camera's frame; ``theta_deg`` records the rotation
    about x relative to the (tilted) input view and must stay below 90 so
    that lower image rows land at larger top-down depths.
    """

    radius_sigma: float
    resolution: int
    rotation: np.ndarray
    translation: Vec3
    theta_deg: float

    def __post_init__(self):
        self.rotation = check_rotation(self.rotation)
        self.translation = _check_vec3(self.translation, "translation")
        if not (self.radius_sigma > 0):
            raise InvalidCameraError("radius_sigma must be positive")
        if self.resolution < 1:
            raise InvalidCameraError("resolution must be at least 1")
        if not (0.0 < self.theta_deg < 90.0):
            raise InvalidCameraError("theta_deg must lie strictly inside (0, 90)")

    def scale(self) -> float:
        """Pixels per meter in the top-down raster."""
        return self.resolution / (2.0 * self.radius_sigma)

    def footprint(self) -> float:
        """Meters per top-down pixel."""
        return 2.0 * self.radius_sigma / self.resolution

    def offset(self) -> float:
        return (self.resolution - 1) / 2.0

    def from_input_frame(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def project_uv(self, points_v: np.ndarray):
        """Own-frame points -> continuous (u, v) plus top-down depth."""
        points_v = np.asarray(points_v, dtype=np.float64)
        k = self.scale()
        off = self.offset()
        u = k * points_v[..., 0] + off
        v = k * points_v[..., 1] + off
        return u, v, points_v[..., 2]

    def center_in_input_frame(self) -> Vec3:
        return -self.rotation.T @ self.translation

    def ground_center(self) -> Vec3:
        """Camera center in the gravity-aligned input frame (y down)."""
        tilt = 90.0 - self.theta_deg
        return rot_x(-tilt) @ self.center_in_input_frame()

    def cell_ground_xz(self, u, v):
        """Cell coords -> ground-plane (x, z) in the gravity-aligned frame."""
        k = self.scale()
        off = self.offset()
        xv = (np.asarray(u, dtype=np.float64) - off) / k
        yv = (np.asarray(v, dtype=np.float64) - off) / k
        c = self.ground_center()
        return c[0] + xv, c[2] - yv

    def to_dict(self) -> dict:
        return {
            "radius_sigma": self.radius_sigma,
            "resolution": self.resolution,
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": {
                "x": float(self.translation[0]),
                "y": float(self.translation[1]),
                "z": float(self.translation[2]),
            },
            "theta_deg": self.theta_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrthographicCamera":
        try:
            tr = d["translation"]
            return cls(
                radius_sigma=float(d["radius_sigma"]),
                resolution=int(d["resolution"]),
                rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
                translation=vec3(float(tr["x"]), float(tr["y"]), float(tr["z"])),
                theta_deg=float(d["theta_deg"]),
            )
        except (KeyError, TypeError) as e:
            raise InvalidCameraError(f"bad orthographic camera record: {e}") from e
