"""Shared helpers: random polygon generation and independent oracles."""

import numpy as np
import pytest

from polyservo import (
    AreaBounds,
    CameraIntrinsics,
    InputLimits,
    OcpConfig,
    PolygonFeatures,
    VisibilityParams,
)


def random_polygon(rng, n, scale=0.25, center_spread=0.15, min_e1=0.05):
    """Star-shaped (hence simple) polygon with a safe reference angle.

    Sorted angles with random radii guarantee simplicity; candidates whose
    reference-angle denominator is too small are rerolled so gradient and
    dynamics checks stay away from the tangent singularity.
    """
    for _ in range(200):
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, n))
        if np.min(np.diff(ang, append=ang[0] + 2.0 * np.pi)) < 1e-3:
            continue
        rad = rng.uniform(0.4, 1.0, n) * scale
        ctr = rng.uniform(-center_spread, center_spread, 2)
        pts = ctr + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        e1 = pts[0, 0] + pts[1, 0] - 2.0 * pts[:, 0].mean()
        e2 = pts[0, 1] + pts[1, 1] - 2.0 * pts[:, 1].mean()
        if abs(e1) < min_e1 or abs(e2 / e1) > 4.0:
            continue
        return PolygonFeatures(pts)
    raise RuntimeError("failed to draw a usable polygon")


def central_diff_vertices(fn, pts, h=1e-6):
    """Central-difference gradient of a scalar polygon function, (N, 2)."""
    grad = np.zeros_like(pts)
    for j in range(pts.shape[0]):
        for c in range(2):
            up = pts.copy()
            dn = pts.copy()
            up[j, c] += h
            dn[j, c] -= h
            grad[j, c] = (fn(up) - fn(dn)) / (2.0 * h)
    return grad


def move_point_under_twist(p0, v, w, dt, substeps=400):
    """Independent oracle: integrate dP/dt = -v - w x P with RK4.

    This is the exact camera-frame motion of a fixed world point while the
    camera moves with twist (v, w); it shares no code with the model path.
    """
    p = np.asarray(p0, dtype=float).copy()
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    h = dt / substeps

    def f(x):
        return -v - np.cross(w, x)

    for _ in range(substeps):
        k1 = f(p)
        k2 = f(p + 0.5 * h * k1)
        k3 = f(p + 0.5 * h * k2)
        k4 = f(p + h * k3)
        p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return p


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


@pytest.fixture
def small_ocp(intrinsics):
    """Compact OCP configuration used across solver tests."""
    return OcpConfig(
        n=6,
        dt=0.1,
        q=np.array([50.0, 50.0, 60.0, 20.0]),
        r=np.array([0.1, 0.1, 0.05, 0.5, 0.5, 0.1]),
        p=np.array([500.0, 500.0, 600.0, 200.0]),
        visibility=VisibilityParams.from_intrinsics(intrinsics, gamma=0.15),
        area_bounds=AreaBounds(sigma_min=0.01, sigma_max=0.7, delta=0.02),
        limits=InputLimits(nu_max=(0.6, 0.6, 0.6), omega_max=(0.6, 0.6, 0.8)),
    )


@pytest.fixture
def pentagon():
    ang = np.deg2rad(90 + 72 * np.arange(5))
    return PolygonFeatures(0.17 * np.column_stack([np.cos(ang), np.sin(ang)]))
