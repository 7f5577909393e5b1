import numpy as np
import pytest

from mldepth.camera import (
    OrthographicCamera,
    PerspectiveCamera,
    make_tilted_camera,
    rot_x,
    vec3,
)
from mldepth.tracing import MultiLayerDepthMap, SemanticLayerMap, warmup_kernels


@pytest.fixture(scope="session")
def warmed():
    """Compile the jit kernels once so timed tests measure the algorithms."""
    warmup_kernels()
    # the closest-point kernel only compiles on an over-the-limit mesh
    from mldepth.metrics import BRUTE_FORCE_TRIANGLE_LIMIT, surface_distances

    n = int(np.ceil(np.sqrt(BRUTE_FORCE_TRIANGLE_LIMIT / 2))) + 2
    xs, ys = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n))
    verts = np.stack([xs.ravel(), ys.ravel(), np.zeros(n * n)], axis=1)
    lin = np.arange(n * n).reshape(n, n)
    t0 = np.stack([lin[:-1, :-1], lin[1:, :-1], lin[:-1, 1:]], axis=2)
    t1 = np.stack([lin[:-1, 1:], lin[1:, :-1], lin[1:, 1:]], axis=2)
    tris = np.concatenate([t0.reshape(-1, 3), t1.reshape(-1, 3)]).astype(np.int32)
    surface_distances(np.array([[0.5, 0.5, 0.3]]), (verts, tris))
    return True


def small_cam(w=16, h=16, fov=60.0, tilt=11.0):
    return make_tilted_camera(
        w, h, fov_deg=fov, position=vec3(0.0, 1.5, 2.7), tilt_deg=tilt
    )


def small_vcam(rng, res=16, theta=79.0):
    sigma = float(rng.uniform(2.0, 4.0))
    t = np.array(
        [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 4.0)]
    )
    return OrthographicCamera(
        radius_sigma=sigma,
        resolution=res,
        rotation=rot_x(theta),
        translation=t,
        theta_deg=theta,
    )


def random_depths(rng, h=16, w=16, p1=0.8, p3=0.4, d1_range=(1.0, 3.0)):
    """A structurally valid random depth map: nested supports, ordered
    layers, gaps comfortably above float32 resolution."""
    layers = np.full((5, h, w), np.nan)
    mask1 = rng.random((h, w)) < p1
    mask3 = mask1 & (rng.random((h, w)) < p3)
    env = rng.random((h, w)) < 0.95
    d1 = rng.uniform(*d1_range, size=(h, w))
    d2 = d1 + rng.uniform(0.05, 0.7, size=(h, w))
    d3 = d2 + rng.uniform(0.01, 0.5, size=(h, w))
    d4 = d3 + rng.uniform(0.0, 0.6, size=(h, w))
    d5 = d4 + rng.uniform(0.05, 0.8, size=(h, w))
    layers[0][mask1] = d1[mask1]
    layers[1][mask1] = d2[mask1]
    layers[2][mask3] = d3[mask3]
    layers[3][mask3] = d4[mask3]
    layers[4][env] = d5[env]
    depths = MultiLayerDepthMap(
        layers=layers, mask1=mask1, mask3=mask3, envelope_mask=env
    )
    depths.validate()
    return depths


def random_sem(rng, depths):
    h, w = depths.mask1.shape
    sem1 = np.where(depths.mask1, rng.integers(1, 41, size=(h, w)), 0).astype(np.int32)
    sem3 = np.where(depths.mask3, rng.integers(1, 41, size=(h, w)), 0).astype(np.int32)
    return SemanticLayerMap(sem1=sem1, sem3=sem3)


def identity_cam(w=8, h=8, fx=1.0, fy=1.0, cx=0.0, cy=0.0, near=1e-6):
    return PerspectiveCamera(
        fx=fx,
        fy=fy,
        cx=cx,
        cy=cy,
        width=w,
        height=h,
        rotation=np.eye(3),
        translation=vec3(0.0, 0.0, 0.0),
        near=near,
        tilt_deg=0.0,
    )
