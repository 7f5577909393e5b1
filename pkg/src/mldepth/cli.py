"""Batch command line for the layered-depth pipeline.

Every subcommand takes --seed, --threads, and --config (a JSON file whose
keys mirror the long flag names; explicit flags win). Output is
machine-parsable key=value lines. Exit codes: 0 success, 2 validation or
usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .camera import OrthographicCamera, PerspectiveCamera
from .clip import clip_to_frustum
from .eft import (
    FeatureMap,
    GatingSpec,
    convert_row_to_height,
    pixel_row_feature,
    transfer_features,
)
from .errors import ValidationError
from .formats import (
    load_camera,
    load_fmp,
    load_mld,
    load_obj,
    load_vox,
    save_camera,
    save_fmp,
    save_mld,
    save_metrics_json,
    save_obj,
    save_pfm,
    save_pr_csv,
    save_vox,
)
from .metrics import (
    DEFAULT_RHO,
    GridSpec,
    VoxelGrid,
    pr_curve,
    voxel_iou,
    voxelize_mesh_parity,
    voxelize_prediction,
)
from .overhead import build_overhead_camera, select_overhead
from .recon import (
    DEFAULT_EDGE_FACTOR,
    DEFAULT_FLOOR_CUTOFF,
    assemble_scene_mesh,
)
from .scene import Scene, transform_to_camera
from .synth import SynthSpec, generate_synthetic_scene, synth_camera
from .tracing import (
    multilayer_depth_loss,
    trace_envelope,
    trace_multilayer,
)
from .visibility import remove_hidden_objects

GATING_FLAGS = ("surface", "volume12", "volume34", "const", "bestguess")


def _emit(**kv):
    for k, v in kv.items():
        if isinstance(v, float):
            v = format(v, ".9g")
        print(f"{k}={v}")


def _apply_threads(n: int) -> int:
    if n < 1:
        raise ValidationError("--threads must be at least 1")
    import numba

    eff = max(1, min(int(n), int(numba.config.NUMBA_NUM_THREADS)))
    numba.set_num_threads(eff)
    return eff


def _need_perspective(cam) -> PerspectiveCamera:
    if not isinstance(cam, PerspectiveCamera):
        raise ValidationError("expected a perspective camera file")
    return cam


def _need_orthographic(cam) -> OrthographicCamera:
    if not isinstance(cam, OrthographicCamera):
        raise ValidationError("expected an orthographic camera file")
    return cam


def _parse_grid(text: str) -> GridSpec:
    parts = text.split(",")
    if len(parts) != 7:
        raise ValidationError("--grid expects x0,y0,z0,edge,nx,ny,nz")
    vals = [float(p) for p in parts[:4]]
    shape = tuple(int(p) for p in parts[4:])
    return GridSpec(origin=np.array(vals[:3]), edge=vals[3], shape=shape)


def _parse_floats(text, n: int | None = None):
    if isinstance(text, (int, float)):
        vals = (float(text),)
    elif isinstance(text, (list, tuple)):
        vals = tuple(float(p) for p in text)
    else:
        vals = tuple(float(p) for p in str(text).split(","))
    if n is not None and len(vals) != n:
        raise ValidationError(f"expected {n} comma-separated values, got {len(vals)}")
    return vals


def _gating_from_flag(name: str, z_step) -> GatingSpec:
    if name == "surface":
        return GatingSpec.surface()
    if name == "volume12":
        return GatingSpec.volume12(z_step)
    if name == "volume34":
        return GatingSpec.volume34(z_step)
    if name == "const":
        return GatingSpec.constant(z_step)
    if name == "bestguess":
        return GatingSpec.best_guess()
    raise ValidationError(f"unknown gating {name!r}")


# -- flag registration with config-file merge -------------------------------


class _Sub:
    """Subparser wrapper that records flag defaults so a JSON config can
    fill any flag the command line left unset."""

    def __init__(self, subparsers, name: str, help_text: str):
        self.parser = subparsers.add_parser(name, help=help_text)
        self.defaults: dict[str, object] = {}
        self.flag("--seed", type=int, default=0, help="master random seed")
        self.flag("--threads", type=int, default=1, help="worker cap")
        self.parser.add_argument(
            "--config", default=None, help="JSON file of flag defaults"
        )

    def flag(self, name: str, **kw):
        dest = kw.pop("dest", name.lstrip("-").replace("-", "_"))
        if kw.get("action") in ("store_true",):
            self.defaults[dest] = False
        else:
            self.defaults[dest] = kw.pop("default", None)
        kw["default"] = argparse.SUPPRESS
        self.parser.add_argument(name, dest=dest, **kw)

    def pos(self, name: str, **kw):
        self.parser.add_argument(name, **kw)


def _merge_config(sub: _Sub, ns: argparse.Namespace) -> argparse.Namespace:
    vals = dict(sub.defaults)
    raw = vars(ns)
    cfg_path = raw.get("config")
    if cfg_path:
        with open(cfg_path, "r", encoding="utf-8") as f:
            try:
                cfg = json.load(f)
            except json.JSONDecodeError as e:
                raise ValidationError(f"bad config JSON: {e}") from e
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if dest not in vals:
                raise ValidationError(f"config key {key!r} matches no flag")
            vals[dest] = value
    for key, value in raw.items():
        if key not in ("command", "config"):
            vals[key] = value
    return argparse.Namespace(**vals)


# -- subcommands ------------------------------------------------------------


def cmd_synth(a) -> int:
    families = tuple(a.families.split(",")) if a.families else None
    spec_kw = dict(
        n_objects=a.objects,
        allow_overlap=a.allow_overlap,
        force_occluder_pair=a.force_occluder,
        force_table=a.force_table,
        keep_inside_frustum=a.keep_inside_frustum,
    )
    if families:
        spec_kw["families"] = families
    if a.max_per_ray is not None:
        spec_kw["max_instances_per_ray"] = a.max_per_ray
    spec = SynthSpec(**spec_kw)
    scene = generate_synthetic_scene(a.seed, spec)
    save_obj(a.output, scene)
    if a.camera_out:
        save_camera(a.camera_out, synth_camera(spec, a.width, a.height))
    _emit(
        objects=len(scene.objects),
        triangles=sum(len(o.triangles) for o in scene.objects),
        path=a.output,
    )
    return 0


def cmd_trace(a) -> int:
    scene = load_obj(a.scene)
    cam = _need_perspective(load_camera(a.camera))
    clipped = clip_to_frustum(transform_to_camera(scene, cam), cam)
    if not a.keep_hidden:
        env_depth = trace_envelope(clipped, cam, use_bvh=not a.brute)
        clipped = remove_hidden_objects(clipped, cam, env_depth)
    depths, sem = trace_multilayer(clipped, cam, use_bvh=not a.brute)
    if a.save_scene:
        save_obj(a.save_scene, clipped)
    if a.format == "mld":
        save_mld(a.output, depths, sem)
    elif a.format == "pfm":
        save_pfm(a.output, depths.layers[0])
    else:
        raise ValidationError(f"unknown format {a.format!r}")
    npix = float(cam.width * cam.height)
    _emit(
        width=cam.width,
        height=cam.height,
        mask1_frac=float(depths.mask1.sum()) / npix,
        mask3_frac=float(depths.mask3.sum()) / npix,
        envelope_frac=float(depths.envelope_mask.sum()) / npix,
        path=a.output,
    )
    return 0


def cmd_transfer(a) -> int:
    depths, _sem = load_mld(a.mld)
    cam = _need_perspective(load_camera(a.camera))
    vcam = _need_orthographic(load_camera(a.vcam))
    if a.feature:
        data, valid = load_fmp(a.feature)
        feat = FeatureMap(data=data, valid=valid)
        custom = True
    else:
        feat = pixel_row_feature(cam)
        custom = False
    gating = _gating_from_flag(a.gating, a.z_step)
    out = transfer_features(
        feat, gating, depths, cam, vcam, fill_holes=not a.no_fill
    )
    if a.gating == "bestguess" and not custom:
        out = convert_row_to_height(out, cam, vcam)
    save_fmp(a.output, out.data, out.valid)
    _emit(
        gating=a.gating,
        covered_frac=float(out.valid.mean()),
        channels=out.data.shape[2],
        path=a.output,
    )
    return 0


def cmd_overhead(a) -> int:
    depths, _sem = load_mld(a.mld)
    cam = _need_perspective(load_camera(a.camera))
    weights = _parse_floats(a.weights, 3)
    params = select_overhead(depths, cam, weights=weights)
    vcam = build_overhead_camera(params, cam, resolution=a.resolution)
    save_camera(a.output, vcam)
    if a.params_out:
        with open(a.params_out, "w", encoding="utf-8") as f:
            json.dump(params.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    _emit(
        t_x=params.t_x,
        t_y=params.t_y,
        t_z=params.t_z,
        theta_deg=params.theta_deg,
        radius_sigma=params.radius_sigma,
        path=a.output,
    )
    return 0


def cmd_recon(a) -> int:
    depths, sem = load_mld(a.mld)
    cam = _need_perspective(load_camera(a.camera))
    height = None
    vcam = None
    if a.height_map or a.vcam:
        if not (a.height_map and a.vcam):
            raise ValidationError("--height-map and --vcam go together")
        data, valid = load_fmp(a.height_map)
        height = FeatureMap(data=data, valid=valid)
        vcam = _need_orthographic(load_camera(a.vcam))
    meshes = assemble_scene_mesh(
        depths, sem, height, cam, vcam, a=a.a, floor_cutoff=a.floor_cutoff
    )
    os.makedirs(a.output, exist_ok=True)
    out_path = os.path.join(a.output, "scene.obj")
    save_obj(out_path, Scene(objects=meshes, frame="camera"))
    save_camera(os.path.join(a.output, "cam.json"), cam)
    _emit(
        meshes=len(meshes),
        vertices=sum(len(m.vertices) for m in meshes),
        triangles=sum(len(m.triangles) for m in meshes),
        path=out_path,
    )
    return 0


def _load_pred_for_eval(path, camera_flag):
    """A recon output directory (scene.obj + cam.json) or a direct OBJ."""
    if os.path.isdir(path):
        obj_path = os.path.join(path, "scene.obj")
        cam_path = camera_flag or os.path.join(path, "cam.json")
    else:
        obj_path = path
        cam_path = camera_flag
    pred = load_obj(obj_path, frame="camera")
    if cam_path is None or not os.path.exists(cam_path):
        raise ValidationError(
            "no camera available; pass --camera or evaluate a recon directory"
        )
    cam = _need_perspective(load_camera(cam_path))
    return pred, cam


def cmd_eval(a) -> int:
    pred, cam = _load_pred_for_eval(a.pred, a.camera)
    gt = load_obj(a.gt_scene)
    gt_cam = clip_to_frustum(transform_to_camera(gt, cam), cam)
    if a.object_only:
        gt_objs = gt_cam.non_envelope_objects()
        pred_objs = pred.non_envelope_objects()
    else:
        gt_objs = gt_cam.objects
        pred_objs = pred.objects
    if not any(len(o.triangles) for o in gt_objs):
        raise ValidationError("ground-truth selection has no triangles")
    thresholds = _parse_floats(a.threshold)
    rows = pr_curve(pred_objs, gt_objs, thresholds=thresholds, rho=a.rho, seed=a.seed)
    thr, precision, recall = rows[0]
    _emit(threshold=thr, precision=precision, recall=recall)
    if a.output:
        save_metrics_json(
            a.output,
            {
                "rows": [
                    {"threshold": t, "precision": p, "recall": r}
                    for t, p, r in rows
                ],
                "rho": a.rho,
                "seed": a.seed,
            },
        )
    if a.pr_csv:
        save_pr_csv(a.pr_csv, rows)
    return 0


def cmd_voxel(a) -> int:
    spec = _parse_grid(a.grid) if a.grid else GridSpec.default()
    if a.mode == "iou":
        if a.input_b is None:
            raise ValidationError("voxel iou compares two .vox files")
        o1, e1, occ1 = load_vox(a.input_a)
        o2, e2, occ2 = load_vox(a.input_b)
        g1 = VoxelGrid(GridSpec(o1, e1, occ1.shape), occ1)
        g2 = VoxelGrid(GridSpec(o2, e2, occ2.shape), occ2)
        _emit(iou=voxel_iou(g1, g2))
        return 0
    if a.output is None:
        raise ValidationError("-o is required for voxel pred/mesh")
    if a.mode == "pred":
        if a.input_b is None:
            raise ValidationError("voxel pred needs a camera JSON argument")
        depths, _sem = load_mld(a.input_a)
        cam = _need_perspective(load_camera(a.input_b))
        grid = voxelize_prediction(depths, cam, spec)
    elif a.mode == "mesh":
        scene = load_obj(a.input_a, frame=a.frame)
        if a.frame == "world":
            if a.input_b is None:
                raise ValidationError("voxel mesh in world frame needs a camera JSON")
            cam = _need_perspective(load_camera(a.input_b))
            scene = transform_to_camera(scene, cam)
        objs = scene.objects if a.include_envelope else scene.non_envelope_objects()
        grid = voxelize_mesh_parity(objs, spec)
    else:
        raise ValidationError(f"unknown voxel mode {a.mode!r}")
    save_vox(a.output, spec.origin, spec.edge, grid.occupancy)
    _emit(occupied=grid.count(), path=a.output)
    return 0


def cmd_loss(a) -> int:
    pred, _ = load_mld(a.pred)
    gt, _ = load_mld(a.gt)
    _emit(loss=multilayer_depth_loss(pred, gt, delta=a.delta))
    return 0


# -- parser -----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mldepth",
        description="Layered depth maps, overhead feature transfer, and "
        "surface/voxel evaluation.",
    )
    sp = parser.add_subparsers(dest="command")
    subs: dict[str, tuple[_Sub, object]] = {}

    s = _Sub(sp, "synth", "generate a seeded synthetic room scene")
    s.flag("-o", dest="output", default="scene.obj", help="output OBJ path")
    s.flag("--objects", type=int, default=8, help="object count")
    s.flag("--families", default=None, help="comma list: box,lshape,stack,table")
    s.flag("--allow-overlap", action="store_true", help="skip clearance checks")
    s.flag("--force-occluder", action="store_true", help="guarantee an occluded pair")
    s.flag("--force-table", action="store_true", help="guarantee a table")
    s.flag("--keep-inside-frustum", action="store_true", help="reject out-of-view objects")
    s.flag("--max-per-ray", type=int, default=None, help="instance-per-ray cap")
    s.flag("--camera-out", default=None, help="also write the default camera JSON")
    s.flag("--width", type=int, default=256, help="camera raster width")
    s.flag("--height", type=int, default=256, help="camera raster height")
    subs["synth"] = (s, cmd_synth)

    s = _Sub(sp, "trace", "trace layered depth maps from a scene")
    s.pos("scene", help="world-frame OBJ scene")
    s.pos("camera", help="perspective camera JSON")
    s.flag("-o", dest="output", default="gt.mld", help="output depth path")
    s.flag("--format", default="mld", help="mld (all layers) or pfm (first layer)")
    s.flag("--save-scene", default=None, help="write the clipped camera-frame OBJ")
    s.flag("--keep-hidden", action="store_true", help="skip hidden-object removal")
    s.flag("--brute", action="store_true", help="trace without the BVH")
    subs["trace"] = (s, cmd_trace)

    s = _Sub(sp, "transfer", "project features into the overhead view")
    s.pos("mld", help="layered depth file")
    s.pos("camera", help="perspective camera JSON")
    s.pos("vcam", help="orthographic camera JSON")
    s.flag("-o", dest="output", default="transfer.fmp", help="output feature path")
    s.flag("--gating", default="const", help="|".join(GATING_FLAGS))
    s.flag("--z-step", type=float, default=None, help="depth sample spacing")
    s.flag("--feature", default=None, help="input feature map (.fmp); default row index")
    s.flag("--no-fill", action="store_true", help="skip hole infill")
    subs["transfer"] = (s, cmd_transfer)

    s = _Sub(sp, "overhead", "pick overhead camera parameters")
    s.pos("mld", help="layered depth file")
    s.pos("camera", help="perspective camera JSON")
    s.flag("-o", dest="output", default="vcam.json", help="output camera path")
    s.flag("--weights", default="0.3333,0.3333,0.3334", help="heuristic blend a,b,c")
    s.flag("--resolution", type=int, default=256, help="overhead raster size")
    s.flag("--params-out", default=None, help="also write raw parameter JSON")
    subs["overhead"] = (s, cmd_overhead)

    s = _Sub(sp, "recon", "mesh the depth layers (and overhead height map)")
    s.pos("mld", help="layered depth file")
    s.pos("camera", help="perspective camera JSON")
    s.flag("-o", dest="output", default="rec", help="output directory")
    s.flag("--a", type=float, default=DEFAULT_EDGE_FACTOR, help="edge-length factor")
    s.flag(
        "--floor-cutoff",
        type=float,
        default=DEFAULT_FLOOR_CUTOFF,
        help="overhead height cutoff in meters",
    )
    s.flag("--height-map", default=None, help="overhead height .fmp")
    s.flag("--vcam", default=None, help="orthographic camera JSON")
    subs["recon"] = (s, cmd_recon)

    s = _Sub(sp, "eval", "surface precision/recall of a reconstruction")
    s.pos("pred", help="recon directory or camera-frame OBJ")
    s.pos("gt_scene", help="world-frame ground-truth OBJ")
    s.flag("--threshold", default="0.05", help="meters; comma list allowed")
    s.flag("--rho", type=float, default=DEFAULT_RHO, help="samples per square meter")
    s.flag("--camera", default=None, help="camera JSON when pred is a bare OBJ")
    s.flag("--object-only", action="store_true", help="ignore envelope surfaces")
    s.flag("-o", dest="output", default=None, help="metrics JSON path")
    s.flag("--pr-csv", default=None, help="precision/recall CSV path")
    subs["eval"] = (s, cmd_eval)

    s = _Sub(sp, "voxel", "voxel occupancy from depths or meshes, and IoU")
    s.pos("mode", choices=("pred", "mesh", "iou"), help="occupancy source")
    s.pos("input_a", help="pred: .mld | mesh: .obj | iou: first .vox")
    s.pos("input_b", nargs="?", default=None, help="camera JSON or second .vox")
    s.flag("-o", dest="output", default=None, help="output .vox path")
    s.flag("--grid", default=None, help="x0,y0,z0,edge,nx,ny,nz")
    s.flag("--frame", default="world", help="mesh frame: world or camera")
    s.flag("--include-envelope", action="store_true", help="voxelize envelope too")
    subs["voxel"] = (s, cmd_voxel)

    s = _Sub(sp, "loss", "layered Huber loss between two depth files")
    s.pos("pred", help="predicted .mld")
    s.pos("gt", help="ground-truth .mld")
    s.flag("--delta", type=float, default=1.0, help="Huber corner")
    subs["loss"] = (s, cmd_loss)

    return parser, subs


def main(argv=None) -> int:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    sub, func = subs[args.command]
    try:
        ns = _merge_config(sub, args)
        _apply_threads(ns.threads)
        return func(ns)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
