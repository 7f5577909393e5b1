"""Triangle-mesh scenes: instances with categories plus a room envelope.

A scene is a flat list of objects; each object owns its vertices and
triangles. The envelope (walls/floor/ceiling) is marked ``is_envelope`` and
carries category 0; every other instance carries a category in [1, 40].
Scenes are tagged with the frame their vertices live in ("world" or
"camera") so downstream stages can refuse wrong-frame input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .camera import PerspectiveCamera, Vec3, vec3
from .errors import ValidationError

MIN_TRIANGLE_AREA = 1e-12
N_CATEGORIES = 40


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass
class SceneObject:
    vertices: np.ndarray
    triangles: np.ndarray
    instance_id: int
    category_id: int
    is_envelope: bool = False

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must be (n, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValidationError("triangles must be (m, 3)")
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("vertices contain non-finite values")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValidationError("triangle indices out of range")
        if self.instance_id < 1:
            raise ValidationError("instance_id must be >= 1")
        if not (0 <= self.category_id <= N_CATEGORIES):
            raise ValidationError(f"category_id must lie in [0, {N_CATEGORIES}]")
        if self.is_envelope != (self.category_id == 0):
            raise ValidationError("envelope objects carry category 0, others do not")
        if self.triangles.size:
            areas = triangle_areas(self.vertices, self.triangles)
            if np.any(areas <= MIN_TRIANGLE_AREA):
                raise ValidationError(
                    f"degenerate triangle (area <= {MIN_TRIANGLE_AREA:g})"
                )

    def area(self) -> float:
        if not self.triangles.size:
            return 0.0
        return float(triangle_areas(self.vertices, self.triangles).sum())

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, rotation: np.ndarray, translation: Vec3) -> "SceneObject":
        return replace(self, vertices=self.vertices @ rotation.T + translation)


@dataclass
class Scene:
    objects: list[SceneObject] = field(default_factory=list)
    gravity_axis: Vec3 = field(default_factory=lambda: vec3(0.0, 1.0, 0.0))
    frame: str = "world"

    def __post_init__(self):
        self.gravity_axis = np.asarray(self.gravity_axis, dtype=np.float64).reshape(3)
        n = np.linalg.norm(self.gravity_axis)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValidationError("gravity_axis must be a unit vector")
        if self.frame not in ("world", "camera"):
            raise ValidationError("frame must be 'world' or 'camera'")
        ids = [o.instance_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValidationError("instance ids must be unique within a scene")

    def envelope_objects(self) -> list[SceneObject]:
        return [o for o in self.objects if o.is_envelope]

    def non_envelope_objects(self) -> list[SceneObject]:
        return [o for o in self.objects if not o.is_envelope]

    def total_area(self) -> float:
        return float(sum(o.area() for o in self.objects))

    def aabb(self):
        if not any(o.triangles.size for o in self.objects):
            raise ValidationError("empty scene has no bounding box")
        lo = np.min([o.aabb()[0] for o in self.objects if o.triangles.size], axis=0)
        hi = np.max([o.aabb()[1] for o in self.objects if o.triangles.size], axis=0)
        return lo, hi


def transform_to_camera(scene: Scene, cam: PerspectiveCamera) -> Scene:
    """Rigidly map a world-frame scene into the camera frame."""
    if scene.frame != "world":
        raise ValidationError("transform_to_camera expects a world-frame scene")
    objects = [o.transformed(cam.rotation, cam.translation) for o in scene.objects]
    gravity = cam.rotation @ scene.gravity_axis
    return Scene(objects=objects, gravity_axis=gravity, frame="camera")


def scene_soup(objects: list[SceneObject]):
    """Concatenate objects into flat arrays for the tracer.

    Returns (vertices (V,3), triangles (T,3), tri_instance (T,),
    tri_category (T,), tri_envelope (T,) uint8).
    """
    verts, tris, inst, cat, env = [], [], [], [], []
    base = 0
    for o in objects:
        if not o.triangles.size:
            continue
        verts.append(o.vertices)
        tris.append(o.triangles + base)
        inst.append(np.full(len(o.triangles), o.instance_id, dtype=np.int32))
        cat.append(np.full(len(o.triangles), o.category_id, dtype=np.int32))
        env.append(np.full(len(o.triangles), 1 if o.is_envelope else 0, dtype=np.uint8))
        base += len(o.vertices)
    if not verts:
        return (
            np.zeros((0, 3), dtype=np.float64),
            np.zeros((0, 3), dtype=np.int32),
            np.zeros(0, dtype=np.int32),
            np.zeros(0, dtype=np.int32),
            np.zeros(0, dtype=np.uint8),
        )
    return (
        np.ascontiguousarray(np.concatenate(verts), dtype=np.float64),
        np.ascontiguousarray(np.concatenate(tris), dtype=np.int32),
        np.concatenate(inst),
        np.concatenate(cat),
        np.concatenate(env),
    )
