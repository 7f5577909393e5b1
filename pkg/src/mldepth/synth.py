"""Deterministic synthetic room scenes for tests and the CLI.

A scene is a rectangular room shell (floor, ceiling, back/left/right walls;
the side behind the camera stays open) plus axis-aligned furniture-scale
objects resting on the floor or on each other. Everything derives from a
single seeded generator, so equal (seed, spec) pairs produce identical
scenes down to the serialized bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import PerspectiveCamera, make_tilted_camera, vec3
from .clip import clip_to_frustum
from .errors import GenerationError, ValidationError
from .scene import Scene, SceneObject, transform_to_camera

# quad faces of an axis-aligned box, outward winding
_BOX_FACES = (
    (0, 4, 5, 1),  # bottom
    (3, 2, 6, 7),  # top
    (0, 1, 2, 3),  # z back
    (5, 4, 7, 6),  # z front
    (4, 0, 3, 7),  # x low
    (1, 5, 6, 2),  # x high
)


def box_mesh(x0, x1, y0, y1, z0, z1):
    """Vertices and triangles of a closed axis-aligned box."""
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ],
        dtype=np.float64,
    )
    tris = []
    for a, b, c, d in _BOX_FACES:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return v, np.array(tris, dtype=np.int32)


def rect_mesh(corners: np.ndarray):
    """Two triangles spanning a quad given as 4 corner points."""
    corners = np.asarray(corners, dtype=np.float64)
    return corners, np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)


def _merge(parts):
    verts = []
    tris = []
    base = 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + base)
        base += len(v)
    return np.concatenate(verts), np.concatenate(tris)


@dataclass
class SynthSpec:
    """Knobs for the generator; defaults give a mid-size furnished room."""

    room_width: float = 6.0
    room_height: float = 2.5
    room_depth: float = 6.0
    camera_height: float = 1.5
    camera_fov_deg: float = 60.0
    n_objects: int = 8
    families: tuple[str, ...] = ("box", "lshape", "stack")
    size_min: float = 0.3
    size_max: float = 1.0
    clearance: float = 0.08
    allow_overlap: bool = False
    max_instances_per_ray: int | None = None
    ray_check_size: int = 256
    force_occluder_pair: bool = False
    force_table: bool = False
    keep_inside_frustum: bool = False
    max_retries: int = 40

    def __post_init__(self):
        if min(self.room_width, self.room_height, self.room_depth) <= 0.5:
            raise ValidationError("room dimensions must exceed 0.5 m")
        if self.n_objects < 0:
            raise ValidationError("n_objects must be non-negative")
        if not (0 < self.size_min <= self.size_max):
            raise ValidationError("need 0 < size_min <= size_max")
        unknown = set(self.families) - {"box", "lshape", "stack", "table"}
        if unknown:
            raise ValidationError(f"unknown families: {sorted(unknown)}")
        if self.n_objects > 0 and not self.families:
            raise ValidationError("need at least one family to place objects")


def synth_camera(
    spec: SynthSpec, width: int = 256, height: int = 256
) -> PerspectiveCamera:
    """The default input view for a generated room: inside the open side,
    looking toward the back wall, pitched down 11 degrees."""
    z_cam = spec.room_depth / 2.0 - 0.3
    return make_tilted_camera(
        width,
        height,
        fov_deg=spec.camera_fov_deg,
        position=vec3(0.0, spec.camera_height, z_cam),
        tilt_deg=11.0,
    )


def _envelope_objects(spec: SynthSpec) -> list[SceneObject]:
    hw = spec.room_width / 2.0
    hd = spec.room_depth / 2.0
    h = spec.room_height
    quads = [
        # floor, normal up
        [[-hw, 0, -hd], [hw, 0, -hd], [hw, 0, hd], [-hw, 0, hd]],
        # ceiling
        [[-hw, h, hd], [hw, h, hd], [hw, h, -hd], [-hw, h, -hd]],
        # back wall (z = -hd)
        [[-hw, 0, -hd], [-hw, h, -hd], [hw, h, -hd], [hw, 0, -hd]],
        # left wall (x = -hw)
        [[-hw, 0, hd], [-hw, h, hd], [-hw, h, -hd], [-hw, 0, -hd]],
        # right wall (x = +hw)
        [[hw, 0, -hd], [hw, h, -hd], [hw, h, hd], [hw, 0, hd]],
    ]
    out = []
    for i, q in enumerate(quads):
        v, t = rect_mesh(np.array(q, dtype=np.float64))
        out.append(
            SceneObject(v, t, instance_id=i + 1, category_id=0, is_envelope=True)
        )
    return out


def _family_mesh(family: str, rng: np.random.Generator, spec: SynthSpec, cx, cz):
    """Mesh parts for one placement; may yield one or two instances."""
    s = lambda: rng.uniform(spec.size_min, spec.size_max)
    if family == "box":
        w, d, h = s(), s(), s()
        v, t = box_mesh(cx - w / 2, cx + w / 2, 0.0, h, cz - d / 2, cz + d / 2)
        return [(v, t)], (w, d, h)
    if family == "lshape":
        w, d, h = s(), s(), s()
        w2 = w * rng.uniform(0.4, 0.7)
        d2 = d * rng.uniform(0.6, 1.4)
        h2 = h * rng.uniform(0.4, 0.8)
        a = box_mesh(cx - w / 2, cx + w / 2, 0.0, h, cz - d / 2, cz + d / 2)
        b = box_mesh(cx + w / 2, cx + w / 2 + w2, 0.0, h2, cz - d2 / 2, cz + d2 / 2)
        v, t = _merge([a, b])
        return [(v, t)], (w + w2, max(d, d2), h)
    if family == "table":
        w = rng.uniform(1.1, 1.6)
        d = rng.uniform(0.75, 1.0)
        top = rng.uniform(1.15, 1.35)
        thick = rng.uniform(0.04, 0.07)
        leg = rng.uniform(0.05, 0.08)
        slab = box_mesh(cx - w / 2, cx + w / 2, top - thick, top, cz - d / 2, cz + d / 2)
        parts = [slab]
        for sx in (-1, 1):
            for sz in (-1, 1):
                lx = cx + sx * (w / 2 - leg)
                lz = cz + sz * (d / 2 - leg)
                parts.append(
                    box_mesh(lx - leg / 2, lx + leg / 2, 0.0, top - thick,
                             lz - leg / 2, lz + leg / 2)
                )
        v, t = _merge(parts)
        return [(v, t)], (w, d, top)
    raise ValidationError(f"unknown family {family!r}")


def _aabb_overlap(a, b, clearance: float) -> bool:
    (alo, ahi), (blo, bhi) = a, b
    return bool(np.all(ahi + clearance > blo) and np.all(bhi + clearance > alo))


def _object_from_mesh(v, t, instance_id, category):
    return SceneObject(v, t, instance_id=instance_id, category_id=category)


def _inside_frustum(cam: PerspectiveCamera, verts: np.ndarray, margin_px: float = 2.0) -> bool:
    pc = cam.world_to_camera(verts)
    if pc[:, 2].min() < cam.near + 0.2:
        return False
    s, t, _ = cam.project(pc)
    return bool(
        s.min() >= margin_px
        and s.max() <= cam.width - 1 - margin_px
        and t.min() >= margin_px
        and t.max() <= cam.height - 1 - margin_px
    )


def generate_synthetic_scene(seed: int, spec: SynthSpec | None = None) -> Scene:
    """Seeded world-frame scene; equal inputs give identical output."""
    spec = spec if spec is not None else SynthSpec()
    check_cam = synth_camera(spec, spec.ray_check_size, spec.ray_check_size)
    for scene_try in range(spec.max_retries):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), scene_try]))
        scene = _generate_once(rng, spec, check_cam)
        if scene is None:
            continue
        if spec.max_instances_per_ray is not None:
            from .tracing import interval_count_raster

            cam_scene = clip_to_frustum(transform_to_camera(scene, check_cam), check_cam)
            counts = interval_count_raster(cam_scene, check_cam)
            if counts.max(initial=0) > spec.max_instances_per_ray:
                continue
        return scene
    raise GenerationError(
        f"could not satisfy scene constraints in {spec.max_retries} attempts"
    )


def _generate_once(rng: np.random.Generator, spec: SynthSpec, cam: PerspectiveCamera):
    objects = _envelope_objects(spec)
    aabbs: list[tuple[np.ndarray, np.ndarray]] = []
    next_id = len(objects) + 1
    z_cam = spec.room_depth / 2.0 - 0.3
    x_lim = spec.room_width / 2.0 - spec.size_max
    z_lo = -spec.room_depth / 2.0 + spec.size_max
    z_hi = z_cam - 1.2

    def try_place(build):
        nonlocal next_id
        for _ in range(40):
            made = build()
            if made is None:
                continue
            metas = []
            ok = True
            for v, t in made:
                lo, hi = v.min(axis=0), v.max(axis=0)
                if abs(lo[0]) > spec.room_width / 2 or abs(hi[0]) > spec.room_width / 2:
                    ok = False
                    break
                if lo[2] < -spec.room_depth / 2 or hi[2] > spec.room_depth / 2:
                    ok = False
                    break
                if hi[1] > spec.room_height:
                    ok = False
                    break
                if spec.keep_inside_frustum and not _inside_frustum(cam, v):
                    ok = False
                    break
                metas.append((lo, hi))
            if not ok:
                continue
            if not spec.allow_overlap:
                clash = False
                for m in metas:
                    for other in aabbs:
                        if _aabb_overlap(m, other, spec.clearance):
                            clash = True
                            break
                    if clash:
                        break
                if clash:
                    continue
            for (v, t), m in zip(made, metas):
                cat = int(rng.integers(1, 41))
                objects.append(_object_from_mesh(v, t, next_id, cat))
                aabbs.append(m)
                next_id += 1
            return len(made)
        return 0

    placed = 0
    budget = spec.n_objects

    if spec.force_table and budget > 0:

        def build_table():
            cx = rng.uniform(-0.8, 0.8)
            cz = rng.uniform(z_cam - 3.2, z_cam - 2.0)
            parts, _ = _family_mesh("table", rng, spec, cx, cz)
            return parts

        got = try_place(build_table)
        if not got:
            return None
        placed += got

    if spec.force_occluder_pair and budget - placed >= 2:

        def build_front():
            cx = rng.uniform(-0.8, 0.8)
            cz = rng.uniform(z_cam - 3.0, z_cam - 2.1)
            w = rng.uniform(0.45, 0.8)
            d = rng.uniform(0.35, 0.6)
            h = rng.uniform(0.5, 0.9)
            return [box_mesh(cx - w / 2, cx + w / 2, 0.0, h, cz - d / 2, cz + d / 2)], cx, cz, w, h

        for _ in range(40):
            made, cx, cz, w_f, h_f = build_front()
            v, t = made[0]
            lo, hi = v.min(axis=0), v.max(axis=0)
            if spec.keep_inside_frustum and not _inside_frustum(cam, v):
                continue
            if not spec.allow_overlap and any(
                _aabb_overlap((lo, hi), o, spec.clearance) for o in aabbs
            ):
                continue
            # partner strictly behind, wider and taller so it peeks out
            gap = rng.uniform(0.35, 0.8)
            w_b = w_f * rng.uniform(1.2, 1.6)
            d_b = rng.uniform(0.35, 0.6)
            h_b = min(h_f * rng.uniform(1.15, 1.45), spec.room_height - 0.3)
            cz_b = cz - gap - d_b / 2 - 0.3
            vb, tb = box_mesh(
                cx - w_b / 2, cx + w_b / 2, 0.0, h_b, cz_b - d_b / 2, cz_b + d_b / 2
            )
            lob, hib = vb.min(axis=0), vb.max(axis=0)
            if lob[2] < -spec.room_depth / 2 + 0.1:
                continue
            if spec.keep_inside_frustum and not _inside_frustum(cam, vb):
                continue
            if not spec.allow_overlap and any(
                _aabb_overlap((lob, hib), o, spec.clearance) for o in aabbs
            ):
                continue
            for vv, tt in ((v, t), (vb, tb)):
                cat = int(rng.integers(1, 41))
                objects.append(_object_from_mesh(vv, tt, next_id, cat))
                aabbs.append((vv.min(axis=0), vv.max(axis=0)))
                next_id += 1
            placed += 2
            break
        else:
            return None

    while placed < budget:
        remaining = budget - placed
        fams = [
            f
            for f in spec.families
            if not (f == "stack" and remaining < 2)
        ]
        if not fams:
            fams = ["box"]
        family = fams[int(rng.integers(0, len(fams)))]

        def build_family():
            cx = rng.uniform(-x_lim, x_lim)
            cz = rng.uniform(z_lo, z_hi)
            if family == "stack":
                w, d, h = (
                    rng.uniform(spec.size_min, spec.size_max),
                    rng.uniform(spec.size_min, spec.size_max),
                    rng.uniform(spec.size_min, spec.size_max),
                )
                w2 = w * rng.uniform(0.5, 0.9)
                d2 = d * rng.uniform(0.5, 0.9)
                h2 = rng.uniform(spec.size_min, spec.size_max) * 0.7
                jx = rng.uniform(-0.08, 0.08) * w
                jz = rng.uniform(-0.08, 0.08) * d
                if h + h2 > spec.room_height - 0.2:
                    return None
                lower = box_mesh(cx - w / 2, cx + w / 2, 0.0, h, cz - d / 2, cz + d / 2)
                upper = box_mesh(
                    cx + jx - w2 / 2, cx + jx + w2 / 2, h, h + h2,
                    cz + jz - d2 / 2, cz + jz + d2 / 2,
                )
                return [lower, upper]
            parts, _ = _family_mesh(family, rng, spec, cx, cz)
            return parts

        got = try_place(build_family)
        if not got:
            return None
        placed += got

    return Scene(objects=objects, gravity_axis=vec3(0.0, 1.0, 0.0), frame="world")
