"""File formats: layered depth (MLD1), feature rasters (FMP1), voxel grids
(VOX1), PFM depth export, OBJ meshes with a JSON tag sidecar, camera JSON,
and metric reports.

All binary formats are little-endian with fixed headers; planes are stored
row-major (top row first). PFM follows the usual convention instead: rows
bottom-up, scale -1.0 marking little-endian floats.
"""

from __future__ import annotations

import csv
import json
import struct

import numpy as np

from .camera import OrthographicCamera, PerspectiveCamera
from .errors import FormatError
from .scene import Scene, SceneObject
from .tracing import N_LAYERS, MultiLayerDepthMap, SemanticLayerMap

MLD_MAGIC = b"MLD1"
FMP_MAGIC = b"FMP1"
VOX_MAGIC = b"VOX1"


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _expect_magic(f, magic: bytes):
    got = f.read(len(magic))
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")


# -- layered depth maps -----------------------------------------------------


def save_mld(path, depth: MultiLayerDepthMap, sem: SemanticLayerMap):
    depth.validate()
    sem.validate(depth)
    h, w = depth.layers.shape[1:]
    planes = depth.layers.astype(np.float32)
    # float32 rounding is monotone, so only strict orderings can collapse;
    # abutting surfaces (a box resting on another) make the layer-2/3 gap
    # arbitrarily small, so restore strictness by at most one ulp
    tight = depth.mask3 & (planes[2] <= planes[1])
    if tight.any():
        planes[2][tight] = np.nextafter(
            planes[1][tight], np.float32(np.inf), dtype=np.float32
        )
        planes[3] = np.maximum(planes[3], planes[2], where=depth.mask3, out=planes[3])
    with open(path, "wb") as f:
        f.write(MLD_MAGIC)
        f.write(struct.pack("<III", w, h, N_LAYERS))
        f.write(np.ascontiguousarray(planes, dtype="<f4").tobytes())
        f.write(depth.mask1.astype(np.uint8).tobytes())
        f.write(depth.mask3.astype(np.uint8).tobytes())
        f.write(np.ascontiguousarray(sem.sem1, dtype="<u2").tobytes())
        f.write(np.ascontiguousarray(sem.sem3, dtype="<u2").tobytes())


def load_mld(path):
    with open(path, "rb") as f:
        _expect_magic(f, MLD_MAGIC)
        w, h, n = struct.unpack("<III", _read_exact(f, 12))
        if n != N_LAYERS:
            raise FormatError(f"expected {N_LAYERS} layers, file has {n}")
        npx = w * h
        layers = (
            np.frombuffer(_read_exact(f, 4 * n * npx), dtype="<f4")
            .reshape(n, h, w)
            .astype(np.float64)
        )
        mask1 = np.frombuffer(_read_exact(f, npx), dtype=np.uint8).reshape(h, w) != 0
        mask3 = np.frombuffer(_read_exact(f, npx), dtype=np.uint8).reshape(h, w) != 0
        sem1 = (
            np.frombuffer(_read_exact(f, 2 * npx), dtype="<u2")
            .reshape(h, w)
            .astype(np.int32)
        )
        sem3 = (
            np.frombuffer(_read_exact(f, 2 * npx), dtype="<u2")
            .reshape(h, w)
            .astype(np.int32)
        )
    envelope = np.isfinite(layers[4])
    depth = MultiLayerDepthMap(
        layers=layers, mask1=mask1, mask3=mask3, envelope_mask=envelope
    )
    depth.validate()
    sem = SemanticLayerMap(sem1=sem1, sem3=sem3)
    sem.validate(depth)
    return depth, sem


# -- single-plane PFM -------------------------------------------------------


def save_pfm(path, plane: np.ndarray):
    """Grayscale PFM, bottom-up rows, little-endian (scale -1.0)."""
    plane = np.asarray(plane, dtype=np.float32)
    if plane.ndim != 2:
        raise FormatError("PFM export needs a single 2D plane")
    h, w = plane.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(plane[::-1], dtype="<f4").tobytes())


def load_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise FormatError("not a grayscale PFM file")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError("bad PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        dt = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(_read_exact(f, 4 * w * h), dtype=dt).reshape(h, w)
    return data[::-1].astype(np.float64)


# -- feature map rasters ----------------------------------------------------


def save_fmp(path, data: np.ndarray, valid: np.ndarray):
    """data is (H, W, C); valid is (H, W) boolean."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[:, :, None]
    h, w, c = data.shape
    valid = np.asarray(valid, bool)
    if valid.shape != (h, w):
        raise FormatError("validity plane shape must match the raster")
    with open(path, "wb") as f:
        f.write(FMP_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        planes = np.ascontiguousarray(np.moveaxis(data, 2, 0), dtype="<f4")
        f.write(planes.tobytes())
        f.write(valid.astype(np.uint8).tobytes())


def load_fmp(path):
    with open(path, "rb") as f:
        _expect_magic(f, FMP_MAGIC)
        w, h, c = struct.unpack("<III", _read_exact(f, 12))
        npx = w * h
        planes = (
            np.frombuffer(_read_exact(f, 4 * c * npx), dtype="<f4")
            .reshape(c, h, w)
            .astype(np.float64)
        )
        valid = np.frombuffer(_read_exact(f, npx), dtype=np.uint8).reshape(h, w) != 0
    return np.moveaxis(planes, 0, 2), valid


# -- voxel grids ------------------------------------------------------------


def save_vox(path, origin: np.ndarray, edge: float, occupancy: np.ndarray):
    """occupancy is a 3D boolean array indexed [ix, iy, iz]."""
    occupancy = np.asarray(occupancy, bool)
    if occupancy.ndim != 3:
        raise FormatError("occupancy must be a 3D array")
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    with open(path, "wb") as f:
        f.write(VOX_MAGIC)
        f.write(np.asarray(origin, dtype="<f4").tobytes())
        f.write(struct.pack("<f", float(edge)))
        f.write(struct.pack("<III", *occupancy.shape))
        f.write(np.packbits(occupancy.reshape(-1)).tobytes())


def load_vox(path):
    with open(path, "rb") as f:
        _expect_magic(f, VOX_MAGIC)
        origin = np.frombuffer(_read_exact(f, 12), dtype="<f4").astype(np.float64)
        (edge,) = struct.unpack("<f", _read_exact(f, 4))
        res = struct.unpack("<III", _read_exact(f, 12))
        nbits = res[0] * res[1] * res[2]
        nbytes = (nbits + 7) // 8
        bits = np.unpackbits(
            np.frombuffer(_read_exact(f, nbytes), dtype=np.uint8), count=nbits
        )
    return origin, float(edge), bits.reshape(res).astype(bool)


# -- OBJ meshes with tag sidecar --------------------------------------------


def _group_name(obj: SceneObject) -> str:
    return f"object_{obj.instance_id:03d}"


def sidecar_path(obj_path) -> str:
    return str(obj_path) + ".json"


def save_obj(path, scene: Scene, sidecar=None):
    """ASCII OBJ, one `g` group per object, plus a JSON sidecar mapping
    group name to its instance/category/envelope tags."""
    sidecar = sidecar_path(path) if sidecar is None else sidecar
    tags = {}
    lines = []
    base = 1
    for obj in scene.objects:
        name = _group_name(obj)
        tags[name] = {
            "instance_id": obj.instance_id,
            "category_id": obj.category_id,
            "is_envelope": obj.is_envelope,
        }
        lines.append(f"g {name}")
        for v in obj.vertices:
            lines.append("v %.9g %.9g %.9g" % (v[0], v[1], v[2]))
        for t in obj.triangles:
            lines.append(f"f {base + t[0]} {base + t[1]} {base + t[2]}")
        base += len(obj.vertices)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    with open(sidecar, "w") as f:
        json.dump(tags, f, indent=1, sort_keys=True)
        f.write("\n")


def load_obj(path, sidecar=None, frame: str = "world") -> Scene:
    """Reads an OBJ with `g` groups; the sidecar restores tags when present,
    otherwise groups get sequential ids and category 1."""
    sidecar = sidecar_path(path) if sidecar is None else sidecar
    tags = {}
    try:
        with open(sidecar) as f:
            tags = json.load(f)
    except FileNotFoundError:
        pass
    except json.JSONDecodeError as e:
        raise FormatError(f"bad sidecar {sidecar}: {e}") from e

    verts: list[list[float]] = []
    groups: list[tuple[str, list[list[int]]]] = [("default", [])]
    with open(path) as f:
        for ln, raw in enumerate(f, 1):
            parts = raw.split()
            if not parts or parts[0] == "#":
                continue
            kind = parts[0]
            if kind == "v":
                if len(parts) < 4:
                    raise FormatError(f"{path}:{ln}: short vertex line")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif kind == "g":
                groups.append((parts[1] if len(parts) > 1 else "default", []))
            elif kind == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) < 3:
                    raise FormatError(f"{path}:{ln}: face needs 3+ vertices")
                nvert = len(verts)
                idx = [i - 1 if i > 0 else nvert + i for i in idx]
                for k in range(1, len(idx) - 1):
                    groups[-1][1].append([idx[0], idx[k], idx[k + 1]])
            # vn/vt/usemtl etc. are ignored

    vall = np.array(verts, dtype=np.float64).reshape(-1, 3)
    objects = []
    next_id = 1
    for name, faces in groups:
        if not faces:
            continue
        tri = np.array(faces, dtype=np.int32)
        used = np.unique(tri)
        remap = np.zeros(vall.shape[0], dtype=np.int32)
        remap[used] = np.arange(len(used), dtype=np.int32)
        meta = tags.get(name, {})
        inst = int(meta.get("instance_id", next_id))
        objects.append(
            SceneObject(
                vertices=vall[used],
                triangles=remap[tri],
                instance_id=inst,
                category_id=int(meta.get("category_id", 1)),
                is_envelope=bool(meta.get("is_envelope", False)),
            )
        )
        next_id = max(next_id, inst) + 1
    return Scene(objects=objects, frame=frame)


# -- cameras ----------------------------------------------------------------


def save_camera(path, cam):
    if isinstance(cam, PerspectiveCamera):
        rec = {"type": "perspective", **cam.to_dict()}
    elif isinstance(cam, OrthographicCamera):
        rec = {"type": "orthographic", **cam.to_dict()}
    else:
        raise FormatError(f"not a camera: {type(cam).__name__}")
    with open(path, "w") as f:
        json.dump(rec, f, indent=1, sort_keys=True)
        f.write("\n")


def load_camera(path):
    with open(path) as f:
        try:
            rec = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"bad camera file {path}: {e}") from e
    kind = rec.get("type", "perspective")
    if kind == "perspective":
        return PerspectiveCamera.from_dict(rec)
    if kind == "orthographic":
        return OrthographicCamera.from_dict(rec)
    raise FormatError(f"unknown camera type {kind!r}")


# -- metric reports ---------------------------------------------------------


def save_metrics_json(path, metrics: dict):
    with open(path, "w") as f:
        json.dump(metrics, f, indent=1, sort_keys=True)
        f.write("\n")


def save_pr_csv(path, rows):
    """rows: iterable of (threshold, precision, recall)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "precision", "recall"])
        for thr, p, r in rows:
            writer.writerow([f"{thr:.6g}", f"{p:.9g}", f"{r:.9g}"])
