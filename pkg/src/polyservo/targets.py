"""Deformable planar targets and the camera-compensated flow estimator.

Targets live on the world ground plane (z = 0) and are described by base
vertices plus a stack of deformation modes. Sampling is a pure function of
(configuration, time); randomized mode phases are drawn once from the seed,
so replays are bit-identical.

Mode composition order: breathing scale about the base centroid, then the
traveling-wave displacement, then rigid spin about the base centroid, then
rigid drift. Velocities are the analytic time derivatives of that chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTarget

__all__ = [
    "RigidDrift",
    "RigidSpin",
    "Breathing",
    "TravelingWave",
    "DeformableTarget",
    "FlowEstimate",
    "estimate_centroid_flow",
    "CentroidFlowEstimator",
    "image_flow_from_world",
]


@dataclass(frozen=True)
class RigidDrift:
    velocity: tuple  # (vx, vy) m/s in world plane coordinates


@dataclass(frozen=True)
class RigidSpin:
    rate: float  # rad/s, counterclockwise about the base centroid


@dataclass(frozen=True)
class Breathing:
    amplitude: float  # fractional scale swing, |amplitude| < 1
    frequency: float  # Hz


@dataclass(frozen=True)
class TravelingWave:
    amplitude: float  # meters, displacement normal to the propagation axis
    wavelength: float  # meters
    speed: float  # m/s along the axis
    axis: tuple = (1.0, 0.0)  # propagation direction in the plane


def _segments_intersect(p1, p2, q1, q2):
    """Proper or touching intersection of segments p1p2 and q1q2."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    if d1 == 0 and on_seg(q1, q2, p1):
        return True
    if d2 == 0 and on_seg(q1, q2, p2):
        return True
    if d3 == 0 and on_seg(p1, p2, q1):
        return True
    if d4 == 0 and on_seg(p1, p2, q2):
        return True
    return False


def polygon_is_simple(pts) -> bool:
    """True when no two non-adjacent edges of the closed polygon intersect."""
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[0]
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


class DeformableTarget:
    """Ground-truth generator for a deforming planar polygon."""

    def __init__(self, base_vertices, modes=(), seed: int = 0):
        base = np.asarray(base_vertices, dtype=float)
        if base.ndim != 2 or base.shape[1] != 2 or base.shape[0] < 3:
            raise ValueError("base_vertices must be an (N, 2) array with N >= 3")
        self.base = base
        self.center = base.mean(axis=0)
        self.modes = list(modes)
        self.seed = int(seed)

        rng = np.random.default_rng(self.seed)
        self._breath_phase = {}
        self._wave_phase = {}
        for idx, mode in enumerate(self.modes):
            if isinstance(mode, Breathing):
                self._breath_phase[idx] = rng.uniform(0.0, 2.0 * np.pi)
            elif isinstance(mode, TravelingWave):
                self._wave_phase[idx] = rng.uniform(0.0, 2.0 * np.pi)

    @property
    def n_vertices(self) -> int:
        return self.base.shape[0]

    def sample(self, t: float):
        """World vertices and their analytic velocities at time ``t``.

        Returns ``(vertices (N, 2), velocities (N, 2))`` in meters and m/s.
        """
        if t < 0:
            raise ValueError("t must be nonnegative")
        pts = self.base - self.center
        vel = np.zeros_like(pts)

        for idx, mode in enumerate(self.modes):
            if isinstance(mode, Breathing):
                w = 2.0 * np.pi * mode.frequency
                ph = self._breath_phase[idx]
                scale = 1.0 + mode.amplitude * np.sin(w * t + ph)
                dscale = mode.amplitude * w * np.cos(w * t + ph)
                vel = scale * vel + dscale * pts
                pts = scale * pts

        for idx, mode in enumerate(self.modes):
            if isinstance(mode, TravelingWave):
                axis = np.asarray(mode.axis, dtype=float)
                axis = axis / np.linalg.norm(axis)
                normal = np.array([-axis[1], axis[0]])
                k = 2.0 * np.pi / mode.wavelength
                ph = self._wave_phase[idx]
                # Phase rides on the undeformed geometry so the derivative
                # stays closed-form.
                arg = k * ((self.base - self.center) @ axis - mode.speed * t) + ph
                pts = pts + mode.amplitude * np.sin(arg)[:, None] * normal
                vel = vel - mode.amplitude * k * mode.speed * np.cos(arg)[:, None] * normal

        for mode in self.modes:
            if isinstance(mode, RigidSpin):
                th = mode.rate * t
                c, s = np.cos(th), np.sin(th)
                rot = np.array([[c, -s], [s, c]])
                drot = mode.rate * np.array([[-s, -c], [c, -s]])
                vel = vel @ rot.T + pts @ drot.T
                pts = pts @ rot.T

        pts = pts + self.center
        for mode in self.modes:
            if isinstance(mode, RigidDrift):
                v = np.asarray(mode.velocity, dtype=float)
                pts = pts + v * t
                vel = vel + v

        return pts, vel

    def validate(self, duration: float, samples: int = 64):
        """Check simplicity and non-degeneracy over the scenario duration."""
        for t in np.linspace(0.0, duration, samples):
            pts, _ = self.sample(float(t))
            d = np.abs(
                (pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]).sum()
            )
            if d < 1e-12:
                raise DegenerateTarget(f"target degenerate at t={t:.3f}")
            if not polygon_is_simple(pts):
                raise DegenerateTarget(f"target self-intersects at t={t:.3f}")


@dataclass(frozen=True)
class FlowEstimate:
    """Estimated target-induced image flow: one centroid velocity, broadcast."""

    centroid_flow: np.ndarray  # (2,) normalized units / s

    def per_vertex(self, n: int):
        return np.broadcast_to(self.centroid_flow, (n, 2)).copy()


def estimate_centroid_flow(prev, curr, L_hat, nu_hat) -> FlowEstimate:
    """Finite-difference centroid flow with camera motion removed.

    ``prev`` and ``curr`` are ``(centroid (2,), time)`` samples; ``L_hat`` is
    the 2x6 centroid interaction matrix approximation and ``nu_hat`` the
    camera velocity believed active over the interval.
    """
    (s_prev, t_prev), (s_curr, t_curr) = prev, curr
    dt = t_curr - t_prev
    if dt <= 0:
        raise ValueError("samples must be time-ordered")
    ds = (np.asarray(s_curr, dtype=float) - np.asarray(s_prev, dtype=float)) / dt
    flow = ds - np.asarray(L_hat, dtype=float) @ np.asarray(nu_hat, dtype=float)
    return FlowEstimate(centroid_flow=flow)


class CentroidFlowEstimator:
    """Stateful wrapper holding the previous centroid sample.

    The first update has nothing to difference against and returns zero flow
    (the target is treated as static for the first control step).
    """

    def __init__(self):
        self._prev = None

    def reset(self):
        self._prev = None

    def update(self, sbar, t: float, L_hat, nu_hat) -> FlowEstimate:
        sbar = np.asarray(sbar, dtype=float).copy()
        if self._prev is None:
            self._prev = (sbar, t)
            return FlowEstimate(centroid_flow=np.zeros(2))
        est = estimate_centroid_flow(self._prev, (sbar, t), L_hat, nu_hat)
        self._prev = (sbar, t)
        return est


def image_flow_from_world(world_pts, world_vels, cam_pos, cam_rot):
    """Exact image-plane velocity of world points under a static camera.

    ``cam_rot`` is the world-from-camera rotation. Differentiates the
    pinhole projection: s = (X/Z, Y/Z) in camera coordinates.
    """
    world_pts = np.asarray(world_pts, dtype=float)
    world_vels = np.asarray(world_vels, dtype=float)
    r_cw = np.asarray(cam_rot, dtype=float).T
    p_c = (world_pts - np.asarray(cam_pos, dtype=float)) @ r_cw.T
    v_c = world_vels @ r_cw.T
    X, Y, Z = p_c[:, 0], p_c[:, 1], p_c[:, 2]
    dX, dY, dZ = v_c[:, 0], v_c[:, 1], v_c[:, 2]
    flow = np.empty((world_pts.shape[0], 2))
    flow[:, 0] = (dX * Z - X * dZ) / (Z * Z)
    flow[:, 1] = (dY * Z - Y * dZ) / (Z * Z)
    return flow
