import numpy as np
import pytest

from mldepth.camera import OrthographicCamera, rot_x, vec3
from mldepth.clip import clip_to_frustum
from mldepth.errors import NoSupportError, ValidationError
from mldepth.overhead import (
    BBOX_MARGIN,
    SIGMA_MIN,
    OverheadParams,
    blend,
    build_overhead_camera,
    heuristic_bbox,
    heuristic_pointcloud,
    heuristic_principal_plane,
    select_overhead,
)
from mldepth.scene import Scene, SceneObject, transform_to_camera
from mldepth.synth import box_mesh
from mldepth.tracing import MultiLayerDepthMap, trace_multilayer

from conftest import random_depths, small_cam


def planes_to_depths(layers):
    layers = np.asarray(layers, dtype=np.float64)
    d = MultiLayerDepthMap(
        layers=layers,
        mask1=np.isfinite(layers[0]),
        mask3=np.isfinite(layers[2]),
        envelope_mask=np.isfinite(layers[4]),
    )
    d.validate()
    return d


def empty_layers(h=8, w=8):
    return np.full((5, h, w), np.nan)


def traced_box(dx=0.0, dz=0.0, res=64, half=0.3):
    """Depths of a single floating-free box shifted on the ground plane."""
    v, t = box_mesh(dx - half, dx + half, 0.0, 0.8, dz - half, dz + half)
    scene = Scene(objects=[SceneObject(v, t, instance_id=1, category_id=3)])
    cam = small_cam(res, res)
    cs = clip_to_frustum(transform_to_camera(scene, cam), cam)
    depths, _ = trace_multilayer(cs, cam)
    return depths, cam


def ground_points_oracle(depths, cam, layer_ids):
    """Gravity-frame coordinates of the supported pixels of given layers."""
    h, w = depths.layers.shape[1:]
    s = np.broadcast_to(np.arange(w, dtype=float), (h, w))
    t = np.broadcast_to(np.arange(h, dtype=float)[:, None], (h, w))
    g = cam.gravity_from_camera()
    pts = []
    for layer in layer_ids:
        z = depths.layers[layer]
        m = np.isfinite(z)
        if m.any():
            pts.append(cam.unproject(s[m], t[m], z[m]) @ g.T)
    return np.concatenate(pts) if pts else np.zeros((0, 3))


class TestParams:
    def test_validation(self):
        with pytest.raises(ValidationError):
            OverheadParams(t_x=0, t_y=0, t_z=2, theta_deg=79, radius_sigma=0.0)
        with pytest.raises(ValidationError):
            OverheadParams(t_x=0, t_y=0, t_z=2, theta_deg=90.0, radius_sigma=1.0)
        with pytest.raises(ValidationError):
            OverheadParams(t_x=0, t_y=0, t_z=2, theta_deg=0.0, radius_sigma=1.0)

    def test_dict_round_trip(self):
        p = OverheadParams(t_x=0.25, t_y=-0.125, t_z=2.75, theta_deg=79.0,
                           radius_sigma=1.625)
        q = OverheadParams.from_dict(p.to_dict())
        assert q == p


class TestPointcloud:
    def test_degenerate_cloud_clamped(self):
        layers = empty_layers()
        layers[0, 4, 4] = 2.0
        layers[1, 4, 4] = 2.1
        cam = small_cam(8, 8)
        p = heuristic_pointcloud(planes_to_depths(layers), cam)
        pt = ground_points_oracle(planes_to_depths(layers), cam, [0])[0]
        assert p.radius_sigma == SIGMA_MIN
        assert p.t_x == pytest.approx(pt[0], abs=1e-12)
        assert p.t_z == pytest.approx(pt[2], abs=1e-12)
        assert p.t_y == 0.0
        assert p.theta_deg == 90.0 - cam.tilt_deg

    def test_symmetric_pair_centers_on_axis(self):
        layers = empty_layers(8, 8)
        layers[0, 3, 2] = 2.5   # cx = 3.5: s = 2 and s = 5 mirror each other
        layers[1, 3, 2] = 2.6
        layers[0, 3, 5] = 2.5
        layers[1, 3, 5] = 2.6
        cam = small_cam(8, 8)
        p = heuristic_pointcloud(planes_to_depths(layers), cam)
        assert p.t_x == pytest.approx(0.0, abs=1e-12)

    def test_matches_statistics_oracle(self):
        rng = np.random.default_rng(77)
        cam = small_cam(32, 32)
        depths = random_depths(rng, 32, 32)
        p = heuristic_pointcloud(depths, cam)
        h, w = 32, 32
        s = np.broadcast_to(np.arange(w, dtype=float), (h, w))
        t = np.broadcast_to(np.arange(h, dtype=float)[:, None], (h, w))
        z = np.where(np.isfinite(depths.layers[0]), depths.layers[0],
                     depths.layers[4])
        m = np.isfinite(z)
        pts = cam.unproject(s[m], t[m], z[m]) @ cam.gravity_from_camera().T
        cx, cz = pts[:, 0].mean(), pts[:, 2].mean()
        sigma = 1.5 * np.sqrt(
            ((pts[:, 0] - cx) ** 2 + (pts[:, 2] - cz) ** 2).mean()
        )
        assert p.t_x == pytest.approx(cx, abs=1e-9)
        assert p.t_z == pytest.approx(cz, abs=1e-9)
        assert p.radius_sigma == pytest.approx(max(sigma, SIGMA_MIN), abs=1e-9)

    def test_no_support(self):
        with pytest.raises(NoSupportError):
            heuristic_pointcloud(planes_to_depths(empty_layers()), small_cam(8, 8))


class TestPrincipalPlane:
    def test_constant_wall(self):
        layers = empty_layers()
        layers[4][:] = 5.0
        p = heuristic_principal_plane(planes_to_depths(layers), small_cam(8, 8))
        assert p.t_z == 5.0
        assert p.t_x == 0.0 and p.t_y == 0.0

    def test_two_walls_average(self):
        layers = empty_layers()
        layers[4][:, :4] = 4.0
        layers[4][:, 4:] = 6.0
        p = heuristic_principal_plane(planes_to_depths(layers), small_cam(8, 8))
        assert p.t_z == pytest.approx(5.0, abs=1e-12)

    def test_masked_mean_oracle(self):
        rng = np.random.default_rng(5)
        layers = empty_layers(16, 16)
        m = rng.uniform(size=(16, 16)) < 0.6
        vals = rng.uniform(3.0, 7.0, size=(16, 16))
        layers[4][m] = vals[m]
        cam = small_cam()
        depths = planes_to_depths(layers)
        p = heuristic_principal_plane(depths, cam)
        assert p.t_z == pytest.approx(vals[m].mean(), abs=1e-12)
        pts = ground_points_oracle(depths, cam, [4])
        r2 = pts[:, 0] ** 2 + (pts[:, 2] - vals[m].mean()) ** 2
        want = max(1.5 * np.sqrt(r2.mean()), SIGMA_MIN)
        assert p.radius_sigma == pytest.approx(want, abs=1e-9)

    def test_no_envelope(self):
        layers = empty_layers()
        layers[0, 0, 0] = 2.0
        layers[1, 0, 0] = 2.5
        with pytest.raises(NoSupportError):
            heuristic_principal_plane(planes_to_depths(layers), small_cam(8, 8))


class TestBBox:
    def test_unit_footprint(self, warmed):
        # gravity frame is anchored at the camera (z = horizontal forward),
        # so a box at the world origin sits 2.7 m ahead of this camera
        depths, cam = traced_box(half=0.5, res=128)
        p = heuristic_bbox(depths, cam)
        assert p.radius_sigma == pytest.approx(0.5 + BBOX_MARGIN * 1.0, abs=0.03)
        assert p.t_x == pytest.approx(0.0, abs=0.03)
        assert p.t_z == pytest.approx(2.7, abs=0.03)

    def test_point_object_clamped(self):
        layers = empty_layers()
        layers[0, 4, 4] = 2.0
        layers[1, 4, 4] = 2.0
        p = heuristic_bbox(planes_to_depths(layers), small_cam(8, 8))
        assert p.radius_sigma == SIGMA_MIN

    def test_matches_analytic_oracle(self):
        rng = np.random.default_rng(6)
        cam = small_cam(24, 24)
        depths = random_depths(rng, 24, 24)
        p = heuristic_bbox(depths, cam)
        pts = ground_points_oracle(depths, cam, [0, 1, 2, 3])
        x0, x1 = pts[:, 0].min(), pts[:, 0].max()
        z0, z1 = pts[:, 2].min(), pts[:, 2].max()
        side = max(x1 - x0, z1 - z0)
        assert p.t_x == pytest.approx((x0 + x1) / 2, abs=1e-12)
        assert p.t_z == pytest.approx((z0 + z1) / 2, abs=1e-12)
        assert p.radius_sigma == pytest.approx(
            max(side / 2 + BBOX_MARGIN * side, SIGMA_MIN), abs=1e-12
        )

    def test_no_objects(self):
        layers = empty_layers()
        layers[4][:] = 4.0
        with pytest.raises(NoSupportError):
            heuristic_bbox(planes_to_depths(layers), small_cam(8, 8))


class TestEquivariance:
    def test_shifted_scene_shifts_centers(self, warmed):
        base_pc, base_bb = None, None
        d0, cam = traced_box(0.0, 0.0)
        base_pc = heuristic_pointcloud(d0, cam)
        base_bb = heuristic_bbox(d0, cam)
        d1, _ = traced_box(0.4, -0.3)
        # world +x keeps its sign in the gravity frame; world z is flipped
        # because the camera looks down the negative world z axis
        for fn, base in ((heuristic_pointcloud, base_pc), (heuristic_bbox, base_bb)):
            p = fn(d1, cam)
            assert p.t_x - base.t_x == pytest.approx(0.4, abs=0.05)
            assert p.t_z - base.t_z == pytest.approx(0.3, abs=0.05)


class TestBlend:
    def candidates(self):
        a = OverheadParams(t_x=1.0, t_y=0.0, t_z=2.0, theta_deg=70.0,
                           radius_sigma=1.0)
        b = OverheadParams(t_x=-1.0, t_y=0.5, t_z=4.0, theta_deg=80.0,
                           radius_sigma=2.0)
        c = OverheadParams(t_x=3.0, t_y=-0.5, t_z=6.0, theta_deg=60.0,
                           radius_sigma=3.0)
        return a, b, c

    def test_single_weight_selects(self):
        a, b, c = self.candidates()
        assert blend([a, b, c], [1.0, 0.0, 0.0]) == a

    def test_equal_candidates_fixed_point(self):
        a, _, _ = self.candidates()
        for w in ([1, 1, 1], [0.2, 0.5, 0.3], [5, 0, 1]):
            got = blend([a, a, a], w)
            assert got.t_x == pytest.approx(a.t_x, abs=1e-12)
            assert got.radius_sigma == pytest.approx(a.radius_sigma, abs=1e-12)

    def test_hand_computed_average(self):
        a, b, c = self.candidates()
        got = blend([a, b, c], [1.0, 1.0, 2.0])
        assert got.t_x == pytest.approx((1.0 - 1.0 + 2 * 3.0) / 4.0, abs=1e-12)
        assert got.t_y == pytest.approx((0.0 + 0.5 - 2 * 0.5) / 4.0, abs=1e-12)
        assert got.t_z == pytest.approx((2.0 + 4.0 + 2 * 6.0) / 4.0, abs=1e-12)
        assert got.theta_deg == pytest.approx((70 + 80 + 2 * 60) / 4.0, abs=1e-12)
        assert got.radius_sigma == pytest.approx((1 + 2 + 2 * 3) / 4.0, abs=1e-12)

    def test_permutation_consistent(self):
        a, b, c = self.candidates()
        x = blend([a, b, c], [0.2, 0.3, 0.5])
        y = blend([c, a, b], [0.5, 0.2, 0.3])
        for f in ("t_x", "t_y", "t_z", "theta_deg", "radius_sigma"):
            assert getattr(x, f) == pytest.approx(getattr(y, f), abs=1e-12)

    def test_bad_weights(self):
        a, b, c = self.candidates()
        with pytest.raises(ValidationError):
            blend([a, b, c], [0.0, 0.0, 0.0])
        with pytest.raises(ValidationError):
            blend([a, b, c], [1.0, -0.5, 0.5])
        with pytest.raises(ValidationError):
            blend([a, b], [1.0, 1.0, 1.0])


class TestSelect:
    def test_all_failing(self):
        with pytest.raises(NoSupportError):
            select_overhead(planes_to_depths(empty_layers()), small_cam(8, 8))

    def test_partial_failure_renormalizes(self):
        layers = empty_layers()
        layers[4][:] = 5.0
        depths = planes_to_depths(layers)
        cam = small_cam(8, 8)
        got = select_overhead(depths, cam)
        want = blend(
            [heuristic_pointcloud(depths, cam),
             heuristic_principal_plane(depths, cam)],
            [1.0, 1.0],
        )
        for f in ("t_x", "t_y", "t_z", "theta_deg", "radius_sigma"):
            assert getattr(got, f) == pytest.approx(getattr(want, f), abs=1e-12)

    def test_full_blend(self):
        rng = np.random.default_rng(9)
        depths = random_depths(rng)
        cam = small_cam()
        got = select_overhead(depths, cam, weights=(0.5, 0.25, 0.25))
        want = blend(
            [heuristic_pointcloud(depths, cam),
             heuristic_principal_plane(depths, cam),
             heuristic_bbox(depths, cam)],
            [0.5, 0.25, 0.25],
        )
        assert got.t_x == pytest.approx(want.t_x, abs=1e-12)
        assert got.radius_sigma == pytest.approx(want.radius_sigma, abs=1e-12)

    def test_weight_count_checked(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ValidationError):
            select_overhead(random_depths(rng), small_cam(), weights=(1.0, 1.0))


class TestBuildCamera:
    def test_vertical_axis_through_center(self):
        cam = small_cam()
        params = OverheadParams(t_x=0.4, t_y=0.0, t_z=2.5, theta_deg=79.0,
                                radius_sigma=2.0)
        vcam = build_overhead_camera(params, cam, resolution=32)
        assert vcam.resolution == 32
        assert vcam.radius_sigma == 2.0
        assert np.allclose(vcam.rotation, rot_x(79.0))
        # points straight below the chosen center project to the raster
        # center; dropping further increases top-down depth
        c_cam = rot_x(cam.tilt_deg) @ params.center()
        down = rot_x(cam.tilt_deg) @ np.array([0.0, 1.0, 0.0])
        zs = []
        for lam in (0.0, 0.5, 1.5):
            u, v, zv = vcam.project_uv(vcam.from_input_frame(c_cam + lam * down))
            assert u == pytest.approx(vcam.offset(), abs=1e-9)
            assert v == pytest.approx(vcam.offset(), abs=1e-9)
            zs.append(zv)
        assert zs[0] < zs[1] < zs[2]

    def test_ground_center_round_trip(self):
        cam = small_cam()
        params = OverheadParams(t_x=-0.3, t_y=0.0, t_z=3.1, theta_deg=79.0,
                                radius_sigma=1.5)
        vcam = build_overhead_camera(params, cam)
        assert vcam.resolution == 256
        c = vcam.ground_center()
        assert c[0] == pytest.approx(params.t_x, abs=1e-9)
        assert c[2] == pytest.approx(params.t_z, abs=1e-9)

    def test_default_resolution_and_validation(self):
        cam = small_cam()
        p = OverheadParams(t_x=0, t_y=0, t_z=2, theta_deg=45.0, radius_sigma=0.7)
        vcam = build_overhead_camera(p, cam)
        assert vcam.theta_deg == 45.0
        assert vcam.footprint() == pytest.approx(2 * 0.7 / 256)
