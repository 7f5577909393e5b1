"""Removal of objects the camera can never see in front of the envelope."""

from __future__ import annotations

import numpy as np

from .camera import PerspectiveCamera
from .errors import DimensionMismatchError, ValidationError
from .scene import Scene
from .tracing import first_hit_depth

HIDDEN_EPS = 0.01  # meters


def remove_hidden_objects(
    scene: Scene,
    cam: PerspectiveCamera,
    envelope_depth: np.ndarray,
    eps: float = HIDDEN_EPS,
) -> Scene:
    """Drop objects that sit entirely behind the envelope depth raster.

    An object stays iff some pixel of its own silhouette sees it no deeper
    than envelope + eps (pixels without envelope support count as seen).
    Objects whose silhouette covers no pixel center are dropped. Whole
    objects only; geometry is never trimmed. Idempotent by construction.
    """
    if scene.frame != "camera":
        raise ValidationError("remove_hidden_objects expects a camera-frame scene")
    if envelope_depth.shape != (cam.height, cam.width):
        raise DimensionMismatchError(
            f"envelope raster {envelope_depth.shape} does not match camera "
            f"{(cam.height, cam.width)}"
        )
    keep = []
    for obj in scene.objects:
        if obj.is_envelope:
            keep.append(obj)
            continue
        depth = first_hit_depth([obj], cam)
        covered = np.isfinite(depth)
        if not covered.any():
            continue
        env = envelope_depth[covered]
        visible = ~np.isfinite(env) | (depth[covered] <= env + eps)
        if visible.any():
            keep.append(obj)
    return Scene(objects=keep, gravity_axis=scene.gravity_axis, frame=scene.frame)
