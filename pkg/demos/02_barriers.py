"""Show the constraint functions and barriers that keep the task safe.

The visibility constraint maps centroid clearance to [0, 1]; its reciprocal
blows up at the image border. Recentering removes the value and slope at
the setpoint so a converged controller pays nothing for safety.
"""

import numpy as np

from polyservo import (
    AreaBounds,
    CameraIntrinsics,
    RecenteringAnchor,
    VisibilityParams,
    barrier_Bnu,
    barrier_Bx,
    constraint_L1,
    constraint_L2,
    InputLimits,
)

k = CameraIntrinsics(500, 500, 320, 240, 640, 480)
vis = VisibilityParams.from_intrinsics(k, gamma=0.15)
bounds = AreaBounds(sigma_min=0.02, sigma_max=0.6, delta=0.04)

print("visibility constraint vs centroid x (y = 0):")
for sx in (0.0, 0.3, 0.4, 0.45, 0.55, 0.6, 0.63):
    print(f"  sx={sx:5.2f}  L1={constraint_L1(np.array([sx, 0.0]), vis):.6f}")

print("\narea constraint vs log-area:")
for sig in (-3.5, -3.0, -2.5, -1.0, -0.6, -0.52):
    print(f"  sigbar={sig:5.2f}  L2={constraint_L2(sig, bounds):.6f}")

x_des = np.array([0.0, 0.0, -2.5, 0.5])
anchor = RecenteringAnchor(x_des, vis, bounds)
print("\nrecentered state barrier along a ray toward the right image edge:")
for lam in (0.0, 0.4, 0.7, 0.9, 0.97):
    x = x_des + lam * np.array([0.62, 0.0, 0.0, 0.0])
    print(f"  lam={lam:4.2f}  B_x={barrier_Bx(x, anchor):10.4f}")

lim = InputLimits(nu_max=(0.6, 0.6, 0.6), omega_max=(0.6, 0.6, 0.8))
print("\ninput barrier vs forward speed (limit 0.6 m/s):")
for v in (0.0, 0.3, 0.5, 0.57, 0.599):
    nu = np.zeros(6)
    nu[0] = v
    print(f"  v={v:5.3f}  B_nu={barrier_Bnu(nu, lim):10.4f}")
