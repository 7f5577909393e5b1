"""Frustum clipping of camera-frame scenes.

Five half-spaces bound the visible volume: left/top/right/bottom planes
through the camera center aligned with the continuous image boundary
(pixel centers at integers, so the image edge sits half a pixel beyond the
outermost centers) and the near plane. There is deliberately no far plane.
Each triangle is clipped polygon-against-plane and re-triangulated as a fan
from the polygon's first vertex; slivers below the degenerate-area cutoff
are dropped.
"""

from __future__ import annotations

import numpy as np

from .camera import PerspectiveCamera
from .errors import ValidationError
from .scene import MIN_TRIANGLE_AREA, Scene, SceneObject, triangle_areas


def frustum_planes(cam: PerspectiveCamera) -> list[tuple[np.ndarray, float]]:
    """Inside test is n . p >= d for each (n, d)."""
    left = (-0.5 - cam.cx) / cam.fx
    right = (cam.width - 0.5 - cam.cx) / cam.fx
    top = (-0.5 - cam.cy) / cam.fy
    bottom = (cam.height - 0.5 - cam.cy) / cam.fy
    return [
        (np.array([0.0, 0.0, 1.0]), cam.near),
        (np.array([1.0, 0.0, -left]), 0.0),
        (np.array([-1.0, 0.0, right]), 0.0),
        (np.array([0.0, 1.0, -top]), 0.0),
        (np.array([0.0, -1.0, bottom]), 0.0),
    ]


def clip_polygon(polygon: list[np.ndarray], normal: np.ndarray, d: float):
    """Sutherland-Hodgman step: keep the part of ``polygon`` with n.p >= d."""
    if not polygon:
        return []
    out: list[np.ndarray] = []
    f = [float(normal @ p) - d for p in polygon]
    n = len(polygon)
    for i in range(n):
        j = (i + 1) % n
        cur_in = f[i] >= 0.0
        nxt_in = f[j] >= 0.0
        if cur_in:
            out.append(polygon[i])
        if cur_in != nxt_in:
            s = f[i] / (f[i] - f[j])
            out.append(polygon[i] + s * (polygon[j] - polygon[i]))
    return out


def _clip_triangles(vertices: np.ndarray, triangles: np.ndarray, planes):
    new_tris: list[np.ndarray] = []
    for tri in triangles:
        poly = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]
        for normal, d in planes:
            poly = clip_polygon(poly, normal, d)
            if len(poly) < 3:
                break
        if len(poly) < 3:
            continue
        for k in range(1, len(poly) - 1):
            new_tris.append(np.stack([poly[0], poly[k], poly[k + 1]]))
    return new_tris


def clip_to_frustum(scene: Scene, cam: PerspectiveCamera) -> Scene:
    """Clip every object to the camera's 5-plane viewing volume.

    Objects left with no triangles are removed; surviving geometry keeps
    instance and category tags.
    """
    if scene.frame != "camera":
        raise ValidationError("clip_to_frustum expects a camera-frame scene")
    planes = frustum_planes(cam)
    objects = []
    for obj in scene.objects:
        tris = _clip_triangles(obj.vertices, obj.triangles, planes)
        if not tris:
            continue
        verts = np.concatenate(tris)
        faces = np.arange(len(verts), dtype=np.int32).reshape(-1, 3)
        areas = triangle_areas(verts, faces)
        faces = faces[areas > MIN_TRIANGLE_AREA]
        if not len(faces):
            continue
        # compact to the used vertices so serialization stays tight
        used = np.unique(faces)
        remap = np.zeros(len(verts), dtype=np.int32)
        remap[used] = np.arange(len(used), dtype=np.int32)
        objects.append(
            SceneObject(
                vertices=verts[used],
                triangles=remap[faces],
                instance_id=obj.instance_id,
                category_id=obj.category_id,
                is_envelope=obj.is_envelope,
            )
        )
    return Scene(objects=objects, gravity_axis=scene.gravity_axis, frame="camera")
