import json

import numpy as np
import pytest

from mldepth.camera import OrthographicCamera, PerspectiveCamera, make_tilted_camera, rot_x
from mldepth.errors import FormatError
from mldepth.formats import (
    load_camera,
    load_fmp,
    load_mld,
    load_obj,
    load_pfm,
    load_vox,
    save_camera,
    save_fmp,
    save_metrics_json,
    save_mld,
    save_obj,
    save_pfm,
    save_pr_csv,
    save_vox,
    sidecar_path,
)
from mldepth.scene import Scene, SceneObject
from mldepth.synth import box_mesh
from mldepth.tracing import SemanticLayerMap

from conftest import random_depths, random_sem


class TestMld:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        depth = random_depths(rng, 6, 5)
        sem = random_sem(rng, depth)
        p = tmp_path / "d.mld"
        save_mld(p, depth, sem)
        d2, s2 = load_mld(p)
        want = depth.layers.astype(np.float32).astype(np.float64)
        assert np.array_equal(d2.layers, want, equal_nan=True)
        assert np.array_equal(d2.mask1, depth.mask1)
        assert np.array_equal(d2.mask3, depth.mask3)
        assert np.array_equal(d2.envelope_mask, depth.envelope_mask)
        assert np.array_equal(s2.sem1, sem.sem1)
        assert np.array_equal(s2.sem3, sem.sem3)

    def test_round_trip_idempotent_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        depth = random_depths(rng, 4, 7)
        sem = random_sem(rng, depth)
        p1, p2 = tmp_path / "a.mld", tmp_path / "b.mld"
        save_mld(p1, depth, sem)
        save_mld(p2, *load_mld(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_tight_gap_survives_storage(self, tmp_path):
        # a layer-2/3 gap far below float32 resolution must still load as
        # strictly ordered
        h = w = 2
        layers = np.full((5, h, w), np.nan)
        m1 = np.ones((h, w), bool)
        m3 = np.ones((h, w), bool)
        layers[0] = 1.0
        layers[1] = 2.0
        layers[2] = 2.0 + 1e-12
        layers[3] = 2.5
        layers[4] = 4.0
        from mldepth.tracing import MultiLayerDepthMap

        depth = MultiLayerDepthMap(
            layers=layers, mask1=m1, mask3=m3, envelope_mask=np.ones((h, w), bool)
        )
        depth.validate()
        sem = SemanticLayerMap(
            sem1=np.full((h, w), 3, np.int32), sem3=np.full((h, w), 5, np.int32)
        )
        p = tmp_path / "tight.mld"
        save_mld(p, depth, sem)
        d2, _ = load_mld(p)
        d2.validate()
        assert np.all(d2.d3 > d2.d2)
        assert np.all(d2.d3 - d2.d2 <= np.spacing(np.float32(2.0)) + 1e-12)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.mld"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_mld(p)

    def test_truncated(self, tmp_path):
        rng = np.random.default_rng(2)
        depth = random_depths(rng, 4, 4)
        sem = random_sem(rng, depth)
        p = tmp_path / "full.mld"
        save_mld(p, depth, sem)
        data = p.read_bytes()
        q = tmp_path / "cut.mld"
        q.write_bytes(data[: len(data) // 2])
        with pytest.raises(FormatError):
            load_mld(q)


class TestPfm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        plane = rng.uniform(0.5, 9.0, size=(5, 8)).astype(np.float32).astype(np.float64)
        plane[0, 0] = np.nan
        p = tmp_path / "d.pfm"
        save_pfm(p, plane)
        out = load_pfm(p)
        assert out.shape == (5, 8)
        assert np.array_equal(out, plane, equal_nan=True)

    def test_header(self, tmp_path):
        p = tmp_path / "d.pfm"
        save_pfm(p, np.ones((2, 3)))
        head = p.read_bytes()[:16]
        assert head.startswith(b"Pf\n3 2\n-1.0\n")

    def test_rejects_color(self, tmp_path):
        with pytest.raises(FormatError):
            save_pfm(tmp_path / "c.pfm", np.ones((2, 3, 3)))

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.pfm"
        p.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
        with pytest.raises(FormatError):
            load_pfm(p)


class TestFmp:
    def test_round_trip_multichannel(self, tmp_path):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(4, 6, 3)).astype(np.float32).astype(np.float64)
        valid = rng.uniform(size=(4, 6)) < 0.6
        p = tmp_path / "f.fmp"
        save_fmp(p, data, valid)
        d2, v2 = load_fmp(p)
        assert np.array_equal(d2, data) and np.array_equal(v2, valid)

    def test_single_channel_promoted(self, tmp_path):
        p = tmp_path / "f.fmp"
        save_fmp(p, np.ones((3, 3)), np.ones((3, 3), bool))
        d2, v2 = load_fmp(p)
        assert d2.shape == (3, 3, 1)

    def test_valid_shape_checked(self, tmp_path):
        with pytest.raises(FormatError):
            save_fmp(tmp_path / "f.fmp", np.ones((3, 3, 2)), np.ones((2, 3), bool))


class TestVox:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        occ = rng.uniform(size=(5, 7, 3)) < 0.4
        p = tmp_path / "g.vox"
        save_vox(p, np.array([-1.0, 0.25, 2.0]), 0.025, occ)
        origin, edge, occ2 = load_vox(p)
        assert np.allclose(origin, [-1.0, 0.25, 2.0], atol=1e-7)
        assert edge == pytest.approx(0.025, abs=1e-9)
        assert np.array_equal(occ, occ2)

    def test_non_multiple_of_eight(self, tmp_path):
        occ = np.zeros((3, 3, 3), bool)
        occ[1, 1, 1] = True
        p = tmp_path / "g.vox"
        save_vox(p, np.zeros(3), 0.1, occ)
        _, _, occ2 = load_vox(p)
        assert np.array_equal(occ, occ2)

    def test_bad_ndim(self, tmp_path):
        with pytest.raises(FormatError):
            save_vox(tmp_path / "g.vox", np.zeros(3), 0.1, np.zeros((2, 2), bool))


class TestObj:
    def make_scene(self):
        v1, t1 = box_mesh(0, 1, 0, 1, 2, 3)
        v2, t2 = box_mesh(-50, 50, -2, 0, 4.99999999, 5.0)
        return Scene(
            objects=[
                SceneObject(v1, t1, instance_id=4, category_id=17),
                SceneObject(v2, t2, instance_id=9, category_id=0, is_envelope=True),
            ]
        )

    def test_round_trip_exact(self, tmp_path):
        scene = self.make_scene()
        p = tmp_path / "s.obj"
        save_obj(p, scene)
        back = load_obj(p)
        assert back.frame == "world"
        assert len(back.objects) == 2
        for a, b in zip(scene.objects, back.objects):
            assert a.instance_id == b.instance_id
            assert a.category_id == b.category_id
            assert a.is_envelope == b.is_envelope
            # %.9g round-trips these double coordinates exactly
            assert np.array_equal(b.vertices[b.triangles], a.vertices[a.triangles])

    def test_sidecar_contents(self, tmp_path):
        scene = self.make_scene()
        p = tmp_path / "s.obj"
        save_obj(p, scene)
        tags = json.loads((tmp_path / "s.obj.json").read_text())
        assert tags["object_004"] == {
            "instance_id": 4, "category_id": 17, "is_envelope": False
        }
        assert sidecar_path(p) == str(p) + ".json"

    def test_missing_sidecar_defaults(self, tmp_path):
        p = tmp_path / "bare.obj"
        p.write_text("g a\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
                     "g b\nv 0 0 1\nv 1 0 1\nv 0 1 1\nf 4 5 6\n")
        scene = load_obj(p)
        assert [o.instance_id for o in scene.objects] == [1, 2]
        assert all(o.category_id == 1 and not o.is_envelope for o in scene.objects)

    def test_quad_fan_and_negative_indices(self, tmp_path):
        p = tmp_path / "q.obj"
        p.write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
            "f 1 2 3 4\n"
            "f -4 -3 -2\n"
        )
        scene = load_obj(p)
        tris = scene.objects[0].triangles
        assert len(tris) == 3  # quad fans into 2 + 1 explicit

    def test_slash_fields_ignored(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")
        scene = load_obj(p)
        assert len(scene.objects[0].triangles) == 1

    def test_short_face_rejected(self, tmp_path):
        p = tmp_path / "bad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nf 1 2\n")
        with pytest.raises(FormatError):
            load_obj(p)

    def test_bad_sidecar_json(self, tmp_path):
        p = tmp_path / "s.obj"
        save_obj(p, self.make_scene())
        (tmp_path / "s.obj.json").write_text("{not json")
        with pytest.raises(FormatError):
            load_obj(p)

    def test_frame_passthrough(self, tmp_path):
        p = tmp_path / "s.obj"
        save_obj(p, self.make_scene())
        assert load_obj(p, frame="camera").frame == "camera"


class TestCameraJson:
    def test_perspective_round_trip(self, tmp_path):
        cam = make_tilted_camera(64, 48, fov_deg=55.0, position=np.array([0.3, 1.4, 2.0]),
                                 tilt_deg=11.0)
        p = tmp_path / "cam.json"
        save_camera(p, cam)
        back = load_camera(p)
        assert isinstance(back, PerspectiveCamera)
        assert back.fx == cam.fx and back.fy == cam.fy
        assert np.array_equal(back.rotation, cam.rotation)
        assert np.array_equal(back.translation, cam.translation)
        assert back.tilt_deg == cam.tilt_deg

    def test_orthographic_round_trip(self, tmp_path):
        vcam = OrthographicCamera(
            radius_sigma=2.5, resolution=32, rotation=rot_x(79.0),
            translation=np.array([0.1, -0.2, 3.0]), theta_deg=79.0,
        )
        p = tmp_path / "vcam.json"
        save_camera(p, vcam)
        back = load_camera(p)
        assert isinstance(back, OrthographicCamera)
        assert back.resolution == 32 and back.radius_sigma == vcam.radius_sigma
        assert back.theta_deg == vcam.theta_deg
        assert np.array_equal(back.rotation, vcam.rotation)
        assert np.array_equal(back.translation, vcam.translation)

    def test_unknown_type(self, tmp_path):
        p = tmp_path / "cam.json"
        p.write_text('{"type": "fisheye"}\n')
        with pytest.raises(FormatError):
            load_camera(p)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "cam.json"
        p.write_text("{")
        with pytest.raises(FormatError):
            load_camera(p)

    def test_not_a_camera(self, tmp_path):
        with pytest.raises(FormatError):
            save_camera(tmp_path / "cam.json", object())


class TestReports:
    def test_metrics_json_text(self, tmp_path):
        p = tmp_path / "m.json"
        save_metrics_json(p, {"recall": 0.5, "precision": 1.0})
        text = p.read_text()
        assert text == '{\n "precision": 1.0,\n "recall": 0.5\n}\n'

    def test_pr_csv_text(self, tmp_path):
        p = tmp_path / "pr.csv"
        save_pr_csv(p, [(0.05, 1.0, 0.25)])
        rows = p.read_text().splitlines()
        assert rows[0] == "threshold,precision,recall"
        assert rows[1] == "0.05,1,0.25"
