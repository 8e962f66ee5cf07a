"""Barrier-augmented receding-horizon optimal control.

The decision variable is the stacked sequence of masked velocity commands
over the horizon. The cost is the quadratic tracking/effort sum plus the
recentered state barrier and the input saturation barrier at every stage,
with a quadratic terminal term. Minimization uses damped BFGS descent with
an Armijo backtracking line search; gradients are central finite
differences of the total cost, evaluated as one batched rollout so a solve
stays cheap. Barrier blowup makes the cost +inf outside the safe set, which
the line search treats as an automatic rejection, so accepted iterates are
always strictly interior.

The module also computes the Lipschitz/feasibility diagnostics attached to
every run: the model and cost Lipschitz constants, the disturbance bound
that keeps the terminal set recursively reachable, and the optimal-cost
difference constants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .barriers import (
    EPS_L,
    AreaBounds,
    InputLimits,
    RecenteringAnchor,
    VisibilityParams,
    _Bnu_values,
    _L_values,
    _margin_curve,
    barrier_Bnu,
    barrier_Bx,
    fov_distance,
)

_margin_curve_fast = _margin_curve
from .camera import FULL_MASK, interaction_matrices
from .errors import InfeasibleRollout, InfeasibleStart, PolyServoError
from .polygon import (
    EPS_AREA,
    PolygonFeatures,
    _dynamics_batch,
    _shoelace_sum,
    dynamics_matrix,
    propagate_discrete,
)

__all__ = [
    "SolverParams",
    "OcpConfig",
    "OcpSolution",
    "StepResult",
    "DiagnosticsBundle",
    "stage_cost",
    "terminal_cost",
    "rollout",
    "total_cost",
    "solve_ocp",
    "local_controller_h",
    "RecedingHorizonController",
    "lipschitz_Lf",
    "lipschitz_LF",
    "prediction_error_bound",
    "disturbance_feasibility_bound",
    "cost_difference_bound",
    "empirical_lipschitz_f",
    "empirical_lipschitz_FV",
    "compute_diagnostics",
]


@dataclass
class SolverParams:
    max_iters: int = 30
    grad_tol: float = 1e-5
    fd_step: float = 1e-6
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_ls_steps: int = 30


@dataclass
class OcpConfig:
    """Horizon, weights, constraint parameters, and solver knobs."""

    n: int
    dt: float
    q: np.ndarray  # (4,) state-error weights
    r: np.ndarray  # (6,) input weights, masked components unused
    p: np.ndarray  # (4,) terminal weights
    visibility: VisibilityParams
    area_bounds: AreaBounds
    limits: InputLimits
    mask: np.ndarray = None
    solver: SolverParams = field(default_factory=SolverParams)
    local_gain: float = 1.2
    local_damping: float = 0.05
    local_clamp: float = 0.95
    abar_limit: float = 2.0  # half-width of the angle-state box (diagnostics)
    eps0: float | None = None  # terminal ball radius; None = auto-fit

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("horizon must be at least 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.q = np.asarray(self.q, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != (4,) or self.p.shape != (4,) or self.r.shape != (6,):
            raise ValueError("q, p must be 4-vectors and r a 6-vector")
        if (self.q <= 0).any() or (self.r <= 0).any() or (self.p <= 0).any():
            raise ValueError("weights must be strictly positive")
        mask = FULL_MASK if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != (6,) or not mask.any():
            raise ValueError("mask must be a 6-vector with at least one True")
        self.mask = mask

    @property
    def mask_idx(self):
        return np.flatnonzero(self.mask)

    @property
    def n_inputs(self) -> int:
        return int(self.mask.sum())

    @property
    def masked_r(self):
        return self.r[self.mask]

    @property
    def masked_limits(self):
        return self.limits.as_vector()[self.mask]


@dataclass
class OcpSolution:
    controls: np.ndarray  # (n, M) masked commands
    predicted_states: np.ndarray  # (n+1, 4)
    predicted_vertices: np.ndarray  # (n+1, N, 2)
    cost: float
    iterations: int
    converged: bool
    status: str
    grad_norm: float


@dataclass
class StepResult:
    nu: np.ndarray  # (6,) applied velocity, disabled components zero
    solution: OcpSolution | None
    recovered: bool


# ---------------------------------------------------------------------------
# cost pieces
# ---------------------------------------------------------------------------


def stage_cost(x_err, nu, cfg: OcpConfig, anchor: RecenteringAnchor) -> float:
    """Quadratic stage terms plus both barriers. ``nu`` is masked."""
    x_err = np.asarray(x_err, dtype=float)
    nu = np.asarray(nu, dtype=float)
    quad = float(x_err @ (cfg.q * x_err) + nu @ (cfg.masked_r * nu))
    x = anchor.x_des + x_err
    return quad + barrier_Bx(x, anchor) + barrier_Bnu(nu, cfg.limits, cfg.mask)


def terminal_cost(x_err, cfg: OcpConfig) -> float:
    x_err = np.asarray(x_err, dtype=float)
    return float(x_err @ (cfg.p * x_err))


def rollout(poly: PolygonFeatures, x0, nu_F, flow, cfg: OcpConfig, z: float):
    """Iterate the coupled Euler model over the horizon.

    Returns ``(states (n+1, 4), vertices (n+1, N, 2))``. The latest flow
    estimate is held constant across the horizon. Raises
    :class:`InfeasibleRollout` (with the step index) as soon as a predicted
    state leaves the safe set.
    """
    nu_F = np.asarray(nu_F, dtype=float)
    if nu_F.shape != (cfg.n, cfg.n_inputs):
        raise ValueError("control sequence shape mismatch")
    x0 = np.asarray(x0, dtype=float)
    flow = _flow_array(flow, poly.n_vertices)

    l1, l2 = _L_values(x0, cfg.visibility, cfg.area_bounds)
    if l1 <= EPS_L or l2 <= EPS_L:
        raise InfeasibleRollout("initial state outside safe set", step_index=0)

    states = np.empty((cfg.n + 1, 4))
    verts = np.empty((cfg.n + 1, poly.n_vertices, 2))
    states[0] = x0
    verts[0] = poly.vertices
    cur = poly
    x = x0
    for i in range(cfg.n):
        nu6 = np.zeros(6)
        nu6[cfg.mask_idx] = nu_F[i]
        cur, x = propagate_discrete(cur, x, nu6, flow, cfg.dt, z)
        l1, l2 = _L_values(x, cfg.visibility, cfg.area_bounds)
        if l1 <= EPS_L or l2 <= EPS_L:
            raise InfeasibleRollout(
                f"predicted state leaves safe set at step {i + 1}", step_index=i + 1
            )
        states[i + 1] = x
        verts[i + 1] = cur.vertices
    return states, verts


def total_cost(
    poly: PolygonFeatures,
    x0,
    nu_F,
    flow,
    cfg: OcpConfig,
    x_des,
    z: float,
    anchor: RecenteringAnchor | None = None,
) -> float:
    """Stage sum plus terminal cost along the rollout of ``nu_F``."""
    if anchor is None:
        anchor = RecenteringAnchor(x_des, cfg.visibility, cfg.area_bounds)
    states, _ = rollout(poly, x0, nu_F, flow, cfg, z)
    nu_F = np.asarray(nu_F, dtype=float)
    x_des = np.asarray(x_des, dtype=float)
    j = 0.0
    for i in range(cfg.n):
        j += stage_cost(states[i] - x_des, nu_F[i], cfg, anchor)
    return j + terminal_cost(states[cfg.n] - x_des, cfg)


def _flow_array(flow, n):
    if flow is None:
        return np.zeros((n, 2))
    flow = np.asarray(flow, dtype=float)
    if flow.shape == (2,):
        return np.broadcast_to(flow, (n, 2)).copy()
    return flow.reshape(n, 2)


class _OcpKernel:
    """Batched cost evaluator bound to one OCP instance.

    The rollout is fused: image flows and moment-state derivatives are
    formed componentwise from the vertex coordinates, so no per-vertex
    interaction matrices are materialized. Within floating-point noise the
    result matches the public :func:`rollout`/:func:`stage_cost` path.
    """

    def __init__(self, poly, x0, flow, cfg, x_des, anchor, z):
        self.cfg = cfg
        self.x0 = np.asarray(x0, dtype=float)
        self.x_des = np.asarray(x_des, dtype=float)
        self.anchor = anchor
        self.inv_z = 1.0 / z
        self.px0 = poly.vertices[:, 0].copy()
        self.py0 = poly.vertices[:, 1].copy()
        n_v = poly.n_vertices
        self.i_next = np.roll(np.arange(n_v), -1)
        self.i_prev = np.roll(np.arange(n_v), 1)
        ri, rj = poly.reference_pair
        w = np.full(n_v, -2.0 / n_v)
        w[ri] += 1.0
        w[rj] += 1.0
        self.w = w
        self.ri, self.rj = ri, rj

        flow = _flow_array(flow, n_v)
        self.fx = flow[:, 0].copy()
        self.fy = flow[:, 1].copy()
        self.flow_c = flow.mean(axis=0)

        self.mask_idx = cfg.mask_idx
        self.limits_m = cfg.masked_limits
        self.r_m = cfg.masked_r
        vis, ab = cfg.visibility, cfg.area_bounds
        self.vis_lo = np.array([vis.x_min, vis.y_min])
        self.vis_hi = np.array([vis.x_max, vis.y_max])
        self.gamma = vis.gamma
        self.sig_lo, self.sig_hi, self.delta = ab.sigma_min, ab.sigma_max, ab.delta
        # Recentring constants collapse to one offset and one linear term.
        self.b_sum = float(anchor.b_des.sum())
        self.grad_sum = anchor.grad_b_des.sum(axis=0)

    def _barrier_state(self, xs, bad):
        """Stage state barrier for xs (B, 4); updates the bad mask in place."""
        d_vis = np.minimum(
            np.min(xs[:, :2] - self.vis_lo, axis=1),
            np.min(self.vis_hi - xs[:, :2], axis=1),
        )
        sigma = np.exp(xs[:, 2])
        d_sig = np.minimum(sigma - self.sig_lo, self.sig_hi - sigma)
        l1 = _margin_curve_fast(d_vis, self.gamma)
        l2 = _margin_curve_fast(d_sig, self.delta)
        bad |= (l1 <= EPS_L) | (l2 <= EPS_L)
        dx = xs - self.x_des
        return 1.0 / l1 + 1.0 / l2 - self.b_sum - dx @ self.grad_sum

    def cost(self, controls):
        """Total cost for a batch of control sequences (B, n, M) -> (B,)."""
        cfg = self.cfg
        B, n = controls.shape[0], cfg.n
        dt = cfg.dt
        px = np.broadcast_to(self.px0, (B, self.px0.size)).copy()
        py = np.broadcast_to(self.py0, (B, self.py0.size)).copy()
        xs = np.broadcast_to(self.x0, (B, 4)).copy()
        bad = np.zeros(B, dtype=bool)

        with np.errstate(all="ignore"):
            cost = _Bnu_values(controls, self.limits_m).sum(axis=-1)
            cost += ((controls * controls) * self.r_m).sum(axis=(-1, -2))

            nu6 = np.zeros((B, n, 6))
            nu6[..., self.mask_idx] = controls

            for i in range(n):
                dx = xs - self.x_des
                cost += ((dx * dx) * cfg.q).sum(axis=-1)
                cost += self._barrier_state(xs, bad)

                u = nu6[:, i, :]
                u0, u1, u2 = u[:, 0:1], u[:, 1:2], u[:, 2:3]
                u3, u4, u5 = u[:, 3:4], u[:, 4:5], u[:, 5:6]
                xy = px * py
                dsx = (px * u2 - u0) * self.inv_z + xy * u3 - (1.0 + px * px) * u4 + py * u5
                dsy = (py * u2 - u1) * self.inv_z + (1.0 + py * py) * u3 - xy * u4 - px * u5

                xn, yn = px[:, self.i_next], py[:, self.i_next]
                xp, yp = px[:, self.i_prev], py[:, self.i_prev]
                dsum = (px * yn - xn * py).sum(axis=1)
                sigma = 0.5 * np.abs(dsum)
                bad |= sigma <= EPS_AREA
                half_sgn = 0.5 * np.sign(dsum)[:, None]
                agx = half_sgn * (yn - yp)
                agy = half_sgn * (xp - xn)
                e1 = px[:, self.ri] + px[:, self.rj] - 2.0 * px.mean(axis=1)
                e2 = py[:, self.ri] + py[:, self.rj] - 2.0 * py.mean(axis=1)
                inv_e1 = 1.0 / e1
                anx = (-e2 * inv_e1 * inv_e1)[:, None] * self.w
                any_ = inv_e1[:, None] * self.w

                xs = xs + dt * np.stack(
                    [
                        dsx.mean(axis=1) + self.flow_c[0],
                        dsy.mean(axis=1) + self.flow_c[1],
                        (agx * (dsx + self.fx) + agy * (dsy + self.fy)).sum(axis=1) / sigma,
                        (anx * (dsx + self.fx) + any_ * (dsy + self.fy)).sum(axis=1),
                    ],
                    axis=1,
                )
                px = px + dt * (dsx + self.fx)
                py = py + dt * (dsy + self.fy)

            dx = xs - self.x_des
            cost += ((dx * dx) * cfg.p).sum(axis=-1)
            # Terminal state must also sit inside the safe set.
            self._barrier_state(xs, bad)
            cost = np.where(bad, np.inf, cost)
        return np.where(np.isfinite(cost), cost, np.inf)

    def cost_one(self, controls):
        return float(self.cost(controls[None])[0])

    def gradient(self, theta, f0):
        """Central-difference gradient of the flattened control vector."""
        cfg = self.cfg
        d = theta.size
        h = cfg.solver.fd_step
        pert = np.repeat(theta[None], 2 * d, axis=0)
        idx = np.arange(d)
        pert[idx, idx] += h
        pert[d + idx, idx] -= h
        c = self.cost(pert.reshape(2 * d, cfg.n, cfg.n_inputs))
        cp, cm = c[:d], c[d:]
        grad = (cp - cm) / (2.0 * h)
        bad_p = ~np.isfinite(cp)
        bad_m = ~np.isfinite(cm)
        one_sided_m = bad_p & ~bad_m
        one_sided_p = bad_m & ~bad_p
        if one_sided_m.any():
            grad[one_sided_m] = (f0 - cm[one_sided_m]) / h
        if one_sided_p.any():
            grad[one_sided_p] = (cp[one_sided_p] - f0) / h
        grad[bad_p & bad_m] = 0.0
        return grad


def solve_ocp(
    poly: PolygonFeatures,
    x0,
    flow,
    cfg: OcpConfig,
    x_des,
    z: float,
    warm_start=None,
    anchor: RecenteringAnchor | None = None,
) -> OcpSolution:
    """Minimize the horizon cost from a strictly feasible measured state.

    The returned cost never exceeds the warm start's; iterates stay strictly
    inside the barriers because infeasible candidates evaluate to +inf and
    the backtracking line search rejects them.
    """
    x0 = np.asarray(x0, dtype=float)
    x_des = np.asarray(x_des, dtype=float)
    l1, l2 = _L_values(x0, cfg.visibility, cfg.area_bounds)
    if l1 <= EPS_L or l2 <= EPS_L:
        raise InfeasibleStart(
            f"measured state violates safe set (L1={float(l1):.3e}, L2={float(l2):.3e})"
        )
    if anchor is None:
        anchor = RecenteringAnchor(x_des, cfg.visibility, cfg.area_bounds)

    kern = _OcpKernel(poly, x0, flow, cfg, x_des, anchor, z)
    n, m = cfg.n, cfg.n_inputs

    if warm_start is None:
        theta = np.zeros(n * m)
    else:
        theta = np.asarray(warm_start, dtype=float).reshape(n, m).ravel().copy()
    f = kern.cost_one(theta.reshape(n, m))
    if not np.isfinite(f):
        theta = np.zeros(n * m)
        f = kern.cost_one(theta.reshape(n, m))

    sp = cfg.solver
    dim = theta.size
    H = None  # lazily scaled on the first curvature pair
    h_scale = 1.0
    status = "max_iters"
    iterations = 0
    grad = kern.gradient(theta, f) if np.isfinite(f) else np.zeros(dim)
    gnorm = float(np.abs(grad).max()) if np.isfinite(f) else np.inf

    if not np.isfinite(f):
        status = "no_descent"
    elif gnorm <= sp.grad_tol:
        status = "converged"
    else:
        for it in range(1, sp.max_iters + 1):
            iterations = it
            d = -h_scale * grad if H is None else -(H @ grad)
            slope = float(grad @ d)
            if slope >= 0.0:
                H = None
                d = -h_scale * grad
                slope = float(grad @ d)

            # Armijo backtracking, whole ladder of step lengths per batch.
            t, fc = None, None
            ladder = sp.backtrack ** np.arange(sp.max_ls_steps, dtype=float)
            for start in range(0, sp.max_ls_steps, 8):
                ts = ladder[start : start + 8]
                cands = theta[None] + ts[:, None] * d[None]
                fs = kern.cost(cands.reshape(-1, n, m))
                ok = np.isfinite(fs) & (fs <= f + sp.armijo_c1 * ts * slope)
                if ok.any():
                    j = int(np.argmax(ok))  # largest passing step
                    t, fc = float(ts[j]), float(fs[j])
                    break
            if t is None:
                status = "no_descent"
                break
            cand = theta + t * d

            grad_new = kern.gradient(cand, fc)
            s = t * d
            y = grad_new - grad
            sy = float(s @ y)
            if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
                if H is None:
                    # Barzilai-Borwein initial metric, then standard BFGS.
                    h_scale = sy / float(y @ y)
                    H = h_scale * np.eye(dim)
                rho = 1.0 / sy
                Hy = H @ y
                H = (
                    H
                    - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                    + rho * rho * float(y @ Hy) * np.outer(s, s)
                    + rho * np.outer(s, s)
                )
            else:
                H = None

            theta, f, grad = cand, fc, grad_new
            gnorm = float(np.abs(grad).max())
            if gnorm <= sp.grad_tol:
                status = "converged"
                break

    controls = theta.reshape(n, m)
    if np.isfinite(f):
        states, verts = rollout(poly, x0, controls, flow, cfg, z)
    else:
        states = np.repeat(x0[None], n + 1, axis=0)
        verts = np.repeat(poly.vertices[None], n + 1, axis=0)
    return OcpSolution(
        controls=controls,
        predicted_states=states,
        predicted_vertices=verts,
        cost=float(f),
        iterations=iterations,
        converged=status == "converged",
        status=status,
        grad_norm=gnorm,
    )


# ---------------------------------------------------------------------------
# local tail controller and receding-horizon loop
# ---------------------------------------------------------------------------


def local_controller_h(x_err, poly: PolygonFeatures, cfg: OcpConfig, z: float, x=None):
    """Damped pseudo-inverse feedback, clamped strictly inside the limits.

    Returns the masked command vector. Falls back to zero input when the
    masked input map loses rank.
    """
    x_err = np.asarray(x_err, dtype=float)
    if x is None:
        x = np.zeros(4)
    g = dynamics_matrix(poly, x, z)[:, cfg.mask]
    if np.linalg.matrix_rank(g, tol=1e-10) < 4:
        return np.zeros(cfg.n_inputs)
    lam = cfg.local_damping
    ggt = g @ g.T + (lam * lam) * np.eye(4)
    nu = -cfg.local_gain * (g.T @ np.linalg.solve(ggt, x_err))
    bound = cfg.local_clamp * cfg.masked_limits
    return np.clip(nu, -bound, bound)


class RecedingHorizonController:
    """Stateful receding-horizon wrapper: warm start, solve, apply first input.

    The warm start shifts the previous optimal sequence one step and appends
    the local controller's action at the predicted horizon end. When the
    measured state is outside the safe set the OCP cannot be posed and the
    step falls back to the local controller alone (recovery mode).
    """

    def __init__(self, cfg: OcpConfig, x_des, z: float | None = None):
        self.cfg = cfg
        self.x_des = np.asarray(x_des, dtype=float)
        self.anchor = RecenteringAnchor(self.x_des, cfg.visibility, cfg.area_bounds)
        self.z = z
        self._prev_controls = None

    def reset(self):
        self._prev_controls = None

    def warm_start(self, poly: PolygonFeatures, x0, flow, z: float):
        """Shift-by-one warm start with a local-controller tail action."""
        cfg = self.cfg
        if self._prev_controls is None:
            return np.zeros((cfg.n, cfg.n_inputs))
        shifted = self._prev_controls[1:]
        try:
            states, verts = rollout(
                poly, x0, np.vstack([shifted, np.zeros((1, cfg.n_inputs))]), flow, cfg, z
            )
            tail_poly = PolygonFeatures(verts[cfg.n - 1], poly.reference_pair)
            tail = local_controller_h(
                states[cfg.n - 1] - self.x_des, tail_poly, cfg, z, x=states[cfg.n - 1]
            )
        except (PolyServoError, ValueError):
            tail = np.zeros(cfg.n_inputs)
        return np.vstack([shifted, tail[None]])

    def step(self, poly: PolygonFeatures, x_meas, flow, z: float | None = None) -> StepResult:
        cfg = self.cfg
        z = self.z if z is None else z
        x_meas = np.asarray(x_meas, dtype=float)
        try:
            warm = self.warm_start(poly, x_meas, flow, z)
            sol = solve_ocp(
                poly, x_meas, flow, cfg, self.x_des, z, warm_start=warm, anchor=self.anchor
            )
        except InfeasibleStart:
            self._prev_controls = None
            nu_m = local_controller_h(x_meas - self.x_des, poly, cfg, z, x=x_meas)
            return StepResult(nu=self._expand(nu_m), solution=None, recovered=True)
        if not np.isfinite(sol.cost):
            self._prev_controls = None
            nu_m = local_controller_h(x_meas - self.x_des, poly, cfg, z, x=x_meas)
            return StepResult(nu=self._expand(nu_m), solution=sol, recovered=True)
        self._prev_controls = sol.controls
        return StepResult(nu=self._expand(sol.controls[0]), solution=sol, recovered=False)

    def _expand(self, nu_masked):
        nu = np.zeros(6)
        nu[self.cfg.mask_idx] = nu_masked
        return nu


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def lipschitz_Lf(limits: InputLimits, z: float, dt: float) -> float:
    """Model Lipschitz constant from the climb and yaw rate bounds."""
    if z <= 0 or dt <= 0:
        raise ValueError("z and dt must be positive")
    nu_z = limits.nu_max[2]
    om_z = limits.omega_max[2]
    inner = max(4.0 * (1.0 + nu_z * dt / z) ** 2, 4.0 * (om_z * dt) ** 2)
    return float(np.sqrt(2.0 * inner))


def lipschitz_LF(state_box, q) -> float:
    """Stage-cost Lipschitz constant over the boxed state set."""
    state_box = np.asarray(state_box, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(2.0 * np.sqrt((state_box * state_box).sum()) * q.max())


def prediction_error_bound(i: int, xi: float, L_f: float) -> float:
    """Accumulated prediction-error bound after ``i`` disturbed steps."""
    if i < 0:
        raise ValueError("i must be nonnegative")
    if abs(L_f - 1.0) < 1e-9:
        return i * xi
    return xi * (L_f**i - 1.0) / (L_f - 1.0)


def disturbance_feasibility_bound(a_eps, a_eps_f, L_E, L_f, n):
    """Largest disturbance keeping the terminal set recursively reachable.

    Returns ``(xi_max, per_m)`` where ``per_m[m]`` is the bound assuming the
    last successful solve happened ``m`` steps ago.
    """
    if not (a_eps > a_eps_f > 0):
        raise ValueError("need a_eps > a_eps_f > 0")
    if L_f <= 0 or L_E <= 0:
        raise ValueError("constants must be positive")
    per_m = np.empty(n)
    for m in range(n):
        if abs(L_f - 1.0) < 1e-9:
            geo = m + 1.0
        else:
            geo = (L_f ** (m + 1) - 1.0) / (L_f - 1.0)
        per_m[m] = (a_eps - a_eps_f) / (L_E * L_f ** ((n - 1) - m) * geo)
    return float(per_m.min()), per_m


def cost_difference_bound(m: int, e: float, cfg: OcpConfig, diag, state_norms=(), L_f=None):
    """Lemma-style optimal-cost difference bound and its constant.

    ``state_norms`` are the closed-loop state-error norms entering the
    stage-cost lower-bound sum. Returns ``(bound, L_zm)``.
    """
    L_f = diag.L_f if L_f is None else L_f
    k = (cfg.n - 1) - m
    if abs(L_f - 1.0) < 1e-9:
        geo = float(k)
    else:
        geo = (L_f**k - 1.0) / (L_f - 1.0)
    L_zm = diag.L_E * L_f**k + diag.L_F * geo
    lower_sum = diag.F_lower * float(sum(v * v for v in state_norms))
    return float(L_zm * e - lower_sum), float(L_zm)


def empirical_lipschitz_FV(
    cfg: OcpConfig, anchor: RecenteringAnchor, rng, n_samples: int = 400
) -> float:
    """Sampled Lipschitz constant of the stage cost w.r.t. the input.

    No closed form is published for this constant; it is estimated over the
    inner 90% of the admissible input box (the barrier is unbounded at the
    limits themselves, so the constant only exists on a compact subset).
    """
    limits = cfg.masked_limits
    x_des = anchor.x_des
    worst = 0.0
    for _ in range(n_samples):
        x_err = rng.uniform(-0.1, 0.1, 4)
        nu_a = rng.uniform(-0.9, 0.9, limits.size) * limits
        nu_b = rng.uniform(-0.9, 0.9, limits.size) * limits
        try:
            fa = stage_cost(x_err, nu_a, cfg, anchor)
            fb = stage_cost(x_err, nu_b, cfg, anchor)
        except PolyServoError:
            continue
        denom = np.linalg.norm(nu_a - nu_b)
        if denom > 1e-9:
            worst = max(worst, abs(fa - fb) / denom)
    return float(worst)


def empirical_lipschitz_f(
    cfg: OcpConfig, z: float, polys, rng, n_samples: int = 200, radius: float = 1e-3
) -> float:
    """Sampled Lipschitz estimate of the one-step stacked vertex/state map.

    Perturbs the stacked (vertices, state) vector, steps both copies under a
    random admissible input, and takes the worst ratio of output to input
    distance.
    """
    limits = cfg.limits.as_vector()
    worst = 0.0
    for _ in range(n_samples):
        poly = polys[rng.integers(len(polys))]
        pts = poly.vertices
        n_v = pts.shape[0]
        x = np.asarray(
            [pts[:, 0].mean(), pts[:, 1].mean(), np.log(0.5 * abs(_shoelace_sum(pts))), 0.0]
        )
        nu = rng.uniform(-1.0, 1.0, 6) * limits * cfg.mask
        delta = rng.normal(size=2 * n_v + 4)
        delta *= radius / np.linalg.norm(delta)
        pts_b = pts + delta[: 2 * n_v].reshape(n_v, 2)
        x_b = x + delta[2 * n_v :]

        def _step(p, s):
            g, L, _, _, _ = _dynamics_batch(p, z, poly.reference_pair)
            return p + (L @ nu) * cfg.dt, s + (g @ nu) * cfg.dt

        pa, xa = _step(pts, x)
        pb, xb = _step(pts_b, x_b)
        num = np.sqrt(np.linalg.norm(pa - pb) ** 2 + np.linalg.norm(xa - xb) ** 2)
        worst = max(worst, num / radius)
    return float(worst)


@dataclass
class DiagnosticsBundle:
    """Computable constants behind the feasibility/stability argument."""

    L_f: float
    L_F: float
    L_E: float
    F_lower: float
    eps0: float
    a_eps: float
    a_eps_f: float
    xi_max: float
    xi_max_per_m: np.ndarray
    state_box: np.ndarray
    p_weights: np.ndarray
    L_zm: np.ndarray
    L_f_emp: float | None = None
    xi_max_emp: float | None = None
    L_FV_emp: float | None = None

    def in_terminal_set(self, x_err) -> bool:
        x_err = np.asarray(x_err, dtype=float)
        return float(x_err @ (self.p_weights * x_err)) <= self.a_eps

    def to_dict(self):
        return {
            "L_f": self.L_f,
            "L_f_emp": self.L_f_emp,
            "L_F": self.L_F,
            "L_E": self.L_E,
            "F_lower": self.F_lower,
            "eps0": self.eps0,
            "a_eps": self.a_eps,
            "a_eps_f": self.a_eps_f,
            "xi_max": self.xi_max,
            "xi_max_emp": self.xi_max_emp,
            "L_FV_emp": self.L_FV_emp,
            "xi_max_per_m": [float(v) for v in self.xi_max_per_m],
            "L_zm": [float(v) for v in self.L_zm],
            "state_box": [float(v) for v in self.state_box],
        }


def _auto_eps0(cfg: OcpConfig, x_des):
    """Largest terminal-ellipsoid scale whose box fits the safe set."""
    p = cfg.p
    pmax = p.max()
    d_vis = float(fov_distance(x_des[:2], cfg.visibility))
    sig_des = float(x_des[2])
    room_sig = min(
        sig_des - np.log(cfg.area_bounds.sigma_min),
        np.log(cfg.area_bounds.sigma_max) - sig_des,
    )
    if d_vis <= 0 or room_sig <= 0:
        raise ValueError("x_des must be strictly inside the safe set")
    lim_vis = d_vis / np.sqrt(pmax / p[0] + pmax / p[1])
    lim_sig = room_sig / np.sqrt(pmax / p[2])
    return 0.9 * min(lim_vis, lim_sig)


def compute_diagnostics(
    cfg: OcpConfig,
    z: float,
    x_des,
    ref_polys=None,
    rng=None,
    lf_samples: int = 200,
) -> DiagnosticsBundle:
    """Evaluate every diagnostic constant for one controller configuration.

    When reference polygons are supplied, an empirical Lipschitz estimate of
    the one-step map is sampled around them and used for the empirical
    disturbance bound as well.
    """
    x_des = np.asarray(x_des, dtype=float)
    vis = cfg.visibility
    box = np.array(
        [
            max(abs(vis.x_min), abs(vis.x_max)),
            max(abs(vis.y_min), abs(vis.y_max)),
            max(abs(np.log(cfg.area_bounds.sigma_min)), abs(np.log(cfg.area_bounds.sigma_max))),
            cfg.abar_limit,
        ]
    )
    eps0_max = _auto_eps0(cfg, x_des)
    eps0 = cfg.eps0 if cfg.eps0 is not None else eps0_max
    if eps0 > eps0_max + 1e-12:
        raise ValueError(
            f"eps0={eps0:.4g} puts the terminal set outside the safe set (max {eps0_max:.4g})"
        )
    pmax = float(cfg.p.max())
    a_eps = pmax * eps0 * eps0
    a_eps_f = 0.5 * a_eps
    L_E = 2.0 * eps0 * pmax
    L_f = lipschitz_Lf(cfg.limits, z, cfg.dt)
    L_F = lipschitz_LF(box, cfg.q)
    F_lower = float(min(cfg.q.min(), cfg.masked_r.min()))
    xi_max, per_m = disturbance_feasibility_bound(a_eps, a_eps_f, L_E, L_f, cfg.n)

    L_f_emp = None
    xi_max_emp = None
    L_FV_emp = None
    if ref_polys:
        rng = np.random.default_rng(0) if rng is None else rng
        L_f_emp = empirical_lipschitz_f(cfg, z, list(ref_polys), rng, lf_samples)
        xi_max_emp, _ = disturbance_feasibility_bound(a_eps, a_eps_f, L_E, L_f_emp, cfg.n)
        anchor = RecenteringAnchor(x_des, cfg.visibility, cfg.area_bounds)
        L_FV_emp = empirical_lipschitz_FV(cfg, anchor, rng)

    L_zm = np.empty(cfg.n)
    for m in range(cfg.n):
        k = (cfg.n - 1) - m
        geo = float(k) if abs(L_f - 1.0) < 1e-9 else (L_f**k - 1.0) / (L_f - 1.0)
        L_zm[m] = L_E * L_f**k + L_F * geo

    return DiagnosticsBundle(
        L_f=L_f,
        L_F=L_F,
        L_E=L_E,
        F_lower=F_lower,
        eps0=float(eps0),
        a_eps=float(a_eps),
        a_eps_f=float(a_eps_f),
        xi_max=float(xi_max),
        xi_max_per_m=per_m,
        state_box=box,
        p_weights=cfg.p.copy(),
        L_zm=L_zm,
        L_f_emp=L_f_emp,
        xi_max_emp=xi_max_emp,
        L_FV_emp=L_FV_emp,
    )
