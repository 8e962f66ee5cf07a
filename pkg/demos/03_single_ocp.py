"""Pose and solve one finite-horizon problem, then inspect the solution.

A pentagon sits displaced from the setpoint; the solver returns a velocity
sequence whose rollout walks the predicted state toward the goal while both
constraint functions stay strictly positive.
"""

import numpy as np

from polyservo import (
    AreaBounds,
    CameraIntrinsics,
    InputLimits,
    OcpConfig,
    PolygonFeatures,
    VisibilityParams,
    extract_state,
    solve_ocp,
)
from polyservo.barriers import constraint_L1, constraint_L2

k = CameraIntrinsics(500, 500, 320, 240, 640, 480)
cfg = OcpConfig(
    n=10,
    dt=0.1,
    q=np.array([50.0, 50.0, 60.0, 20.0]),
    r=np.array([0.1, 0.1, 0.05, 0.5, 0.5, 0.1]),
    p=np.array([500.0, 500.0, 600.0, 200.0]),
    visibility=VisibilityParams.from_intrinsics(k, gamma=0.15),
    area_bounds=AreaBounds(sigma_min=0.02, sigma_max=0.6, delta=0.04),
    limits=InputLimits(nu_max=(0.6, 0.6, 0.6), omega_max=(0.6, 0.6, 0.8)),
)

ang = np.deg2rad(90 + 72 * np.arange(5))
poly = PolygonFeatures(0.17 * np.column_stack([np.cos(ang), np.sin(ang)]) + [0.22, -0.12])
x0 = extract_state(poly)
x_des = np.array([0.0, 0.0, x0[2] + 0.25, x0[3] - 0.3])

sol = solve_ocp(poly, x0, None, cfg, x_des, z=2.0)
print(f"status={sol.status} iterations={sol.iterations} cost={sol.cost:.4f}")
print("first command [vx vy vz wx wy wz]:", np.round(sol.controls[0], 4))

print("\npredicted state error norm and constraint values along the horizon:")
for i, xs in enumerate(sol.predicted_states):
    e = np.linalg.norm(xs - x_des)
    l1 = constraint_L1(xs[:2], cfg.visibility)
    l2 = constraint_L2(xs[2], cfg.area_bounds)
    print(f"  step {i:2d}  |err|={e:7.4f}  L1={l1:.3f}  L2={l2:.3f}")
