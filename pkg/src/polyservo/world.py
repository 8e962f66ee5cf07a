"""Deterministic closed-loop world: pose integration, projection, logging.

The world is a flat ground plane at z = 0 observed by a camera above it.
The camera pose integrates applied velocity commands through the SE(3)
exponential; the target evolves on the plane; vertices project through the
true pinhole model every step. The additive measurement disturbance enters
the extracted moment state, matching the disturbed discrete-time system the
controller is analysed against.

Runs are bit-reproducible: all randomness flows from the configured seeds
and log serialization uses shortest round-trip float formatting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .barriers import constraint_L1, constraint_L2
from .camera import CameraIntrinsics, interaction_matrices, normalized_to_pixel
from .errors import TargetLost
from .nmpc import RecedingHorizonController, compute_diagnostics
from .polygon import PolygonFeatures, centroid, extract_state
from .targets import CentroidFlowEstimator, DeformableTarget

__all__ = [
    "CameraPose",
    "SimLog",
    "CSV_HEADER",
    "step_pose",
    "project_target",
    "step_world",
    "inject_disturbance",
    "run_scenario",
]

# World-from-camera base rotation for a nadir camera: camera x stays along
# world x, optical axis points down.
R_NADIR = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])

CSV_HEADER = (
    "t,sx,sy,sigbar,abar,ex,ey,esig,eang,L1,L2,"
    "vx,vy,vz,wx,wy,wz,cost,iters,feasible"
)


@dataclass
class CameraPose:
    position: np.ndarray  # (3,) meters, world frame
    rotation: np.ndarray  # (3, 3) world-from-camera

    @classmethod
    def level(cls, position, yaw: float):
        c, s = np.cos(yaw), np.sin(yaw)
        r_z = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(np.asarray(position, dtype=float).copy(), r_z @ R_NADIR)

    @property
    def height(self) -> float:
        return float(self.position[2])


def _hat(w):
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def _se3_exp(v, w, dt: float):
    """Rotation increment and translation of the SE(3) exponential."""
    phi = np.asarray(w, dtype=float) * dt
    rho = np.asarray(v, dtype=float) * dt
    th = np.linalg.norm(phi)
    K = _hat(phi)
    if th < 1e-10:
        R = np.eye(3) + K + 0.5 * (K @ K)
        V = np.eye(3) + 0.5 * K + (K @ K) / 6.0
    else:
        Kn = K / th
        R = np.eye(3) + np.sin(th) * Kn + (1.0 - np.cos(th)) * (Kn @ Kn)
        V = (
            np.eye(3)
            + ((1.0 - np.cos(th)) / th) * Kn
            + ((th - np.sin(th)) / th) * (Kn @ Kn)
        )
    return R, V @ rho


def step_pose(pose: CameraPose, nu6, dt: float) -> CameraPose:
    """Integrate a camera-frame twist over one control period."""
    nu6 = np.asarray(nu6, dtype=float)
    dR, dp = _se3_exp(nu6[:3], nu6[3:], dt)
    return CameraPose(
        position=pose.position + pose.rotation @ dp,
        rotation=pose.rotation @ dR,
    )


def project_target(pose: CameraPose, world_pts):
    """Project planar world points; returns normalized (N, 2) and depths."""
    world_pts = np.asarray(world_pts, dtype=float)
    if world_pts.shape[1] == 2:
        world_pts = np.column_stack([world_pts, np.zeros(len(world_pts))])
    p_c = (world_pts - pose.position) @ pose.rotation
    Z = p_c[:, 2]
    if (Z <= 1e-9).any():
        raise TargetLost("target vertex at or behind the camera plane")
    s = np.column_stack([p_c[:, 0] / Z, p_c[:, 1] / Z])
    return s, Z


def step_world(pose: CameraPose, target: DeformableTarget, t_next: float, nu6, dt: float, k: CameraIntrinsics):
    """Advance the pose by the applied command and reproject the target.

    Returns ``(pose', normalized vertices, depths)``. Raises
    :class:`TargetLost` when a vertex leaves the pixel image.
    """
    new_pose = step_pose(pose, nu6, dt)
    world_pts, _ = target.sample(t_next)
    s, depths = project_target(new_pose, world_pts)
    px = normalized_to_pixel(s, k)
    if (
        (px[:, 0] < 0).any()
        or (px[:, 0] > k.width).any()
        or (px[:, 1] < 0).any()
        or (px[:, 1] > k.height).any()
    ):
        raise TargetLost("target vertex left the image")
    return new_pose, s, depths


def inject_disturbance(rng, bound: float):
    """Uniform per-component state disturbance in [-bound, bound]."""
    if bound < 0:
        raise ValueError("bound must be nonnegative")
    return rng.uniform(-1.0, 1.0, 4) * bound


@dataclass
class SimLog:
    """Per-step closed-loop record plus the run's diagnostic header.

    ``truth`` carries the undisturbed moment state per step (in-memory only;
    the CSV holds the measured state the controller saw).
    """

    columns: dict  # name -> np.ndarray, keys follow CSV_HEADER order
    meta: dict
    aborted: str | None = None
    predictions: list = field(default_factory=list)  # per-step predicted states
    truth: np.ndarray | None = None  # (steps, 4) undisturbed states

    @property
    def n_steps(self) -> int:
        return len(self.columns["t"])

    def to_csv(self, path):
        names = CSV_HEADER.split(",")
        with open(path, "w", newline="") as f:
            f.write(CSV_HEADER + "\n")
            cols = [self.columns[n] for n in names]
            for i in range(self.n_steps):
                f.write(",".join(_fmt(c[i]) for c in cols) + "\n")

    def write_sidecar(self, path):
        with open(path, "w") as f:
            json.dump(self.meta, f, indent=2, sort_keys=True)
            f.write("\n")


def _fmt(v):
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def _depth_for_controller(depth_cfg, pose: CameraPose) -> float:
    if depth_cfg == "altimeter":
        return pose.height
    return float(depth_cfg)


def run_scenario(cfg, collect_predictions: bool = False) -> SimLog:
    """Deterministic closed-loop run of one scenario.

    ``cfg`` is a :class:`polyservo.config.ScenarioConfig`. Measurement,
    flow estimation, control, world stepping, and logging happen in that
    order every control period. Aborts (lost target, persistent
    infeasibility) produce a log with the ``aborted`` reason set instead of
    raising.
    """
    target = DeformableTarget(cfg.target_base, cfg.target_modes, seed=cfg.target_seed)
    target.validate(cfg.duration)

    pose = CameraPose.level(cfg.initial_position, cfg.initial_yaw)
    rng = np.random.default_rng(cfg.disturbance_seed)
    dt = cfg.ocp.dt
    n_steps = int(round(cfg.duration / dt))

    world_pts, _ = target.sample(0.0)
    s_true, _ = project_target(pose, world_pts)
    x_true = extract_state(PolygonFeatures(s_true, cfg.reference_pair))
    x_meas = x_true + inject_disturbance(rng, cfg.disturbance_bound)

    controller = RecedingHorizonController(cfg.ocp, cfg.x_des)
    estimator = CentroidFlowEstimator() if cfg.estimator == "centroid_fd" else None
    prev_nu = np.zeros(6)

    names = CSV_HEADER.split(",")
    rows = {name: [] for name in names}
    predictions = []
    truth_rows = []
    aborted = None
    consecutive_recoveries = 0

    ref_poly0 = PolygonFeatures(s_true, cfg.reference_pair)
    diag = compute_diagnostics(
        cfg.ocp,
        _depth_for_controller(cfg.depth, pose),
        cfg.x_des,
        ref_polys=[ref_poly0],
        rng=np.random.default_rng(cfg.disturbance_seed + 1),
    )

    for k_step in range(n_steps):
        t = k_step * dt
        poly = PolygonFeatures(s_true, cfg.reference_pair)
        z_ctrl = _depth_for_controller(cfg.depth, pose)

        if estimator is not None:
            l_bar = interaction_matrices(poly.vertices, z_ctrl).mean(axis=0)
            flow = estimator.update(x_meas[:2], t, l_bar, prev_nu).per_vertex(
                poly.n_vertices
            )
        else:
            flow = np.zeros((poly.n_vertices, 2))

        res = controller.step(poly, x_meas, flow, z_ctrl)
        if res.recovered:
            consecutive_recoveries += 1
        else:
            consecutive_recoveries = 0
        if collect_predictions and res.solution is not None:
            predictions.append((k_step, res.solution.predicted_states.copy()))

        err = x_meas - cfg.x_des
        truth_rows.append(x_true.copy())
        rows["t"].append(t)
        rows["sx"].append(x_meas[0])
        rows["sy"].append(x_meas[1])
        rows["sigbar"].append(x_meas[2])
        rows["abar"].append(x_meas[3])
        rows["ex"].append(err[0])
        rows["ey"].append(err[1])
        rows["esig"].append(err[2])
        rows["eang"].append(
            np.degrees(np.arctan(x_meas[3]) - np.arctan(cfg.x_des[3]))
        )
        rows["L1"].append(constraint_L1(x_meas[:2], cfg.ocp.visibility))
        rows["L2"].append(constraint_L2(x_meas[2], cfg.ocp.area_bounds))
        for name, val in zip(("vx", "vy", "vz", "wx", "wy", "wz"), res.nu):
            rows[name].append(val)
        rows["cost"].append(res.solution.cost if res.solution else float("nan"))
        rows["iters"].append(res.solution.iterations if res.solution else 0)
        rows["feasible"].append(0 if res.recovered else 1)

        if consecutive_recoveries > cfg.max_recovery_steps:
            aborted = f"unrecoverable infeasibility at t={t:.3f}"
            break

        try:
            pose, s_true, _ = step_world(
                pose, target, (k_step + 1) * dt, res.nu, dt, cfg.intrinsics
            )
        except TargetLost as exc:
            aborted = f"{exc} at t={t:.3f}"
            break
        x_true = extract_state(PolygonFeatures(s_true, cfg.reference_pair))
        x_meas = x_true + inject_disturbance(rng, cfg.disturbance_bound)
        prev_nu = res.nu

    columns = {
        name: np.array(vals, dtype=(int if name in ("iters", "feasible") else float))
        for name, vals in rows.items()
    }
    meta = {
        "config_hash": cfg.config_hash,
        "name": cfg.name,
        "diagnostics": diag.to_dict(),
        "aborted": aborted,
        "steps": int(len(columns["t"])),
        "dt": dt,
        "alpha_x": cfg.intrinsics.alpha_x,
        "alpha_y": cfg.intrinsics.alpha_y,
    }
    return SimLog(
        columns=columns,
        meta=meta,
        aborted=aborted,
        predictions=predictions,
        truth=np.array(truth_rows),
    )
