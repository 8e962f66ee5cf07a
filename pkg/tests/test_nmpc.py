import numpy as np
import pytest

from polyservo import (
    PolygonFeatures,
    RecedingHorizonController,
    extract_state,
    local_controller_h,
    propagate_discrete,
    rollout,
    solve_ocp,
    stage_cost,
    terminal_cost,
    total_cost,
)
from polyservo.barriers import EPS_L, InputLimits, RecenteringAnchor
from polyservo.errors import InfeasibleRollout, InfeasibleStart
from polyservo.nmpc import (
    _OcpKernel,
    compute_diagnostics,
    cost_difference_bound,
    disturbance_feasibility_bound,
    empirical_lipschitz_f,
    lipschitz_LF,
    lipschitz_Lf,
    prediction_error_bound,
)
from conftest import random_polygon

Z = 2.0


def anchor_for(cfg, x_des):
    return RecenteringAnchor(x_des, cfg.visibility, cfg.area_bounds)


def setpoint_instance(small_ocp, pentagon):
    x0 = extract_state(pentagon)
    return pentagon, x0, x0.copy()


class TestCosts:
    def test_stage_cost_zero_at_setpoint(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        a = anchor_for(small_ocp, x0)
        assert stage_cost(np.zeros(4), np.zeros(6), small_ocp, a) == 0.0

    def test_stage_cost_quadratic_term(self, small_ocp, pentagon):
        # Setpoint deep inside the margins: both barriers are identically
        # zero nearby, leaving the pure quadratic form.
        x0 = extract_state(pentagon)
        a = anchor_for(small_ocp, x0)
        cfg = small_ocp
        cfg.q = np.array([2.0, 1.0, 1.0, 1.0])
        x_err = np.array([1e-2, 0.0, 0.0, 0.0])
        val = stage_cost(x_err, np.zeros(6), cfg, a)
        assert val == pytest.approx(2.0 * 1e-4, rel=1e-12)

    def test_stage_cost_lower_bound(self, small_ocp, pentagon):
        # K-infinity lower bound: quadratics dominate the declared
        # coefficient because both barrier terms are nonnegative.
        x0 = extract_state(pentagon)
        a = anchor_for(small_ocp, x0)
        cmin = min(small_ocp.q.min(), small_ocp.masked_r.min())
        rng = np.random.default_rng(0)
        for _ in range(500):
            x_err = rng.uniform(-0.15, 0.15, 4)
            nu = rng.uniform(-0.4, 0.4, 6)
            val = stage_cost(x_err, nu, small_ocp, a)
            bound = cmin * (x_err @ x_err + nu @ nu)
            assert val >= bound - 1e-12

    def test_terminal_examples(self, small_ocp):
        assert terminal_cost(np.zeros(4), small_ocp) == 0.0
        small_ocp.p = np.ones(4)
        assert terminal_cost(np.ones(4), small_ocp) == pytest.approx(4.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            e = rng.normal(size=4)
            assert terminal_cost(e, small_ocp) <= small_ocp.p.max() * (e @ e) + 1e-12


class TestRollout:
    def test_zero_input_zero_flow_constant(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        nu_F = np.zeros((small_ocp.n, 6))
        states, verts = rollout(pentagon, x0, nu_F, None, small_ocp, Z)
        for i in range(small_ocp.n + 1):
            np.testing.assert_array_equal(states[i], x0)
            np.testing.assert_array_equal(verts[i], pentagon.vertices)

    def test_matches_manual_propagation_bitexact(self, small_ocp, pentagon):
        rng = np.random.default_rng(2)
        x0 = extract_state(pentagon)
        nu_F = rng.uniform(-0.2, 0.2, size=(small_ocp.n, 6))
        flow = rng.uniform(-0.01, 0.01, 2)
        states, verts = rollout(pentagon, x0, nu_F, flow, small_ocp, Z)
        poly, x = pentagon, x0
        fl = np.broadcast_to(flow, (pentagon.n_vertices, 2)).copy()
        for i in range(small_ocp.n):
            poly, x = propagate_discrete(poly, x, nu_F[i], fl, small_ocp.dt, Z)
            assert np.array_equal(states[i + 1], x)
            assert np.array_equal(verts[i + 1], poly.vertices)

    def test_infeasible_rollout_error(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        # Slam the camera sideways at the limit: the centroid runs off the
        # visible region within the horizon.
        nu_F = np.zeros((small_ocp.n, 6))
        nu_F[:, 0] = -0.59
        small_ocp.dt = 1.0
        with pytest.raises(InfeasibleRollout) as exc:
            rollout(pentagon, x0, nu_F, None, small_ocp, Z)
        assert exc.value.step_index is not None and exc.value.step_index >= 1

    def test_total_cost_recomposition(self, small_ocp, pentagon):
        rng = np.random.default_rng(3)
        x0 = extract_state(pentagon)
        x_des = x0 + np.array([0.05, -0.04, 0.1, 0.1])
        a = anchor_for(small_ocp, x_des)
        nu_F = rng.uniform(-0.1, 0.1, size=(small_ocp.n, 6))
        j = total_cost(pentagon, x0, nu_F, None, small_ocp, x_des, Z, anchor=a)
        states, _ = rollout(pentagon, x0, nu_F, None, small_ocp, Z)
        j_manual = sum(
            stage_cost(states[i] - x_des, nu_F[i], small_ocp, a) for i in range(small_ocp.n)
        ) + terminal_cost(states[small_ocp.n] - x_des, small_ocp)
        assert j == pytest.approx(j_manual, rel=1e-15)

    def test_total_cost_zero_at_setpoint(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        assert total_cost(pentagon, x0, np.zeros((small_ocp.n, 6)), None, small_ocp, x0, Z) == 0.0

    def test_beneficial_control_beats_rest(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        x_des = x0 + np.array([0.1, 0.0, 0.0, 0.0])
        zero = total_cost(pentagon, x0, np.zeros((small_ocp.n, 6)), None, small_ocp, x_des, Z)
        nu_F = np.zeros((small_ocp.n, 6))
        nu_F[:, 0] = -0.2  # moves the centroid toward +x
        better = total_cost(pentagon, x0, nu_F, None, small_ocp, x_des, Z)
        assert better < zero

    def test_kernel_matches_public_cost(self, small_ocp, pentagon):
        rng = np.random.default_rng(4)
        x0 = extract_state(pentagon)
        x_des = x0 + np.array([0.04, 0.02, -0.08, 0.05])
        a = anchor_for(small_ocp, x_des)
        kern = _OcpKernel(pentagon, x0, None, small_ocp, x_des, a, Z)
        for _ in range(10):
            nu_F = rng.uniform(-0.15, 0.15, size=(small_ocp.n, 6))
            jk = kern.cost_one(nu_F)
            jp = total_cost(pentagon, x0, nu_F, None, small_ocp, x_des, Z, anchor=a)
            assert jk == pytest.approx(jp, rel=1e-12)


class TestSolver:
    def test_setpoint_fixed_point(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        sol = solve_ocp(pentagon, x0, None, small_ocp, x0, Z)
        assert sol.cost <= 1e-9
        assert np.abs(sol.controls).max() <= 1e-6
        assert sol.converged

    def test_first_move_reduces_centroid_error(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        x_des = x0 + np.array([0.12, -0.08, 0.0, 0.0])
        sol = solve_ocp(pentagon, x0, None, small_ocp, x_des, Z)
        step = sol.predicted_states[1][:2] - x0[:2]
        err = x0[:2] - x_des[:2]
        assert step @ err < 0.0

    def test_descent_vs_warm_start_randomized(self, small_ocp):
        rng = np.random.default_rng(5)
        small_ocp.solver.max_iters = 6
        n_ok = 0
        while n_ok < 100:
            poly = random_polygon(rng, int(rng.integers(4, 8)), scale=0.25)
            x0 = extract_state(poly)
            x_des = x0 + rng.uniform(-0.06, 0.06, 4)
            try:
                a = anchor_for(small_ocp, x_des)
            except ValueError:
                continue  # drew a setpoint outside the safe set
            warm = rng.uniform(-0.1, 0.1, size=(small_ocp.n, 6))
            kern_cost = _OcpKernel(poly, x0, None, small_ocp, x_des, a, Z).cost_one(warm)
            sol = solve_ocp(poly, x0, None, small_ocp, x_des, Z, warm_start=warm, anchor=a)
            assert sol.cost <= kern_cost + 1e-12
            n_ok += 1

    def test_iterates_strictly_feasible(self, small_ocp, pentagon):
        # The returned plan satisfies every constraint strictly: its public
        # rollout succeeds and all commands are interior.
        x0 = extract_state(pentagon)
        x_des = x0 + np.array([0.15, -0.1, 0.2, 0.2])
        sol = solve_ocp(pentagon, x0, None, small_ocp, x_des, Z)
        states, _ = rollout(pentagon, x0, sol.controls, None, small_ocp, Z)  # no raise
        assert (np.abs(sol.controls) < small_ocp.masked_limits).all()
        assert np.isfinite(sol.cost)

    def test_infeasible_start_raises(self, small_ocp, pentagon):
        x_bad = extract_state(pentagon)
        x_bad[0] = small_ocp.visibility.x_max + 0.05
        with pytest.raises(InfeasibleStart):
            solve_ocp(pentagon, x_bad, None, small_ocp, extract_state(pentagon), Z)


class TestLocalController:
    def test_zero_error_zero_action(self, small_ocp, pentagon):
        nu = local_controller_h(np.zeros(4), pentagon, small_ocp, Z)
        np.testing.assert_array_equal(nu, np.zeros(small_ocp.n_inputs))

    def test_linear_bound(self, small_ocp, pentagon):
        # ||h|| <= L_h ||err|| with L_h from the damped pseudo-inverse gain.
        from polyservo.polygon import dynamics_matrix

        x = extract_state(pentagon)
        g = dynamics_matrix(pentagon, x, Z)[:, small_ocp.mask]
        ggt = g @ g.T + small_ocp.local_damping**2 * np.eye(4)
        L_h = small_ocp.local_gain * np.linalg.norm(g.T @ np.linalg.inv(ggt), 2)
        rng = np.random.default_rng(6)
        for _ in range(200):
            e = rng.uniform(-0.2, 0.2, 4)
            nu = local_controller_h(e, pentagon, small_ocp, Z, x=x)
            assert np.linalg.norm(nu) <= L_h * np.linalg.norm(e) + 1e-12

    def test_clamped_inside_limits(self, small_ocp, pentagon):
        nu = local_controller_h(np.array([5.0, -5.0, 5.0, -5.0]), pentagon, small_ocp, Z)
        assert (np.abs(nu) <= small_ocp.local_clamp * small_ocp.masked_limits + 1e-15).all()

    def test_one_step_error_decrease(self, small_ocp, pentagon):
        x = extract_state(pentagon)
        x_des = x + np.array([0.05, -0.03, 0.06, 0.08])
        nu_m = local_controller_h(x - x_des, pentagon, small_ocp, Z, x=x)
        nu6 = np.zeros(6)
        nu6[small_ocp.mask_idx] = nu_m
        _, x_next = propagate_discrete(
            pentagon, x, nu6, np.zeros_like(pentagon.vertices), small_ocp.dt, Z
        )
        assert np.linalg.norm(x_next - x_des) < np.linalg.norm(x - x_des)


class TestRecedingController:
    def test_cold_start_uses_zero_warm(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        ctrl = RecedingHorizonController(small_ocp, x0, z=Z)
        warm = ctrl.warm_start(pentagon, x0, None, Z)
        np.testing.assert_array_equal(warm, np.zeros((small_ocp.n, small_ocp.n_inputs)))

    def test_shifted_warm_recomposition_bitexact(self, small_ocp, pentagon):
        # Replaying the tail of the previous plan from its own predicted
        # first step reproduces the stored prediction bit for bit.
        x0 = extract_state(pentagon)
        x_des = x0 + np.array([0.1, -0.06, 0.1, 0.1])
        sol = solve_ocp(pentagon, x0, None, small_ocp, x_des, Z)
        shifted = np.vstack([sol.controls[1:], np.zeros((1, small_ocp.n_inputs))])
        poly1 = PolygonFeatures(sol.predicted_vertices[1], pentagon.reference_pair)
        states, verts = rollout(poly1, sol.predicted_states[1], shifted, None, small_ocp, Z)
        n = small_ocp.n
        assert np.array_equal(states[: n - 1], sol.predicted_states[1:n])
        assert np.array_equal(verts[: n - 1], sol.predicted_vertices[1:n])

    def test_recovery_on_infeasible_measurement(self, small_ocp, pentagon):
        x0 = extract_state(pentagon)
        ctrl = RecedingHorizonController(small_ocp, x0, z=Z)
        bad = x0.copy()
        bad[0] = small_ocp.visibility.x_max + 0.02
        res = ctrl.step(pentagon, bad, None, Z)
        assert res.recovered
        assert res.solution is None
        assert np.isfinite(res.nu).all()

    def test_disabled_components_stay_zero(self, small_ocp, pentagon):
        import polyservo.camera as cam

        small_ocp.mask = cam.UAV_MASK.copy()
        x0 = extract_state(pentagon)
        ctrl = RecedingHorizonController(small_ocp, x0 + np.array([0.05, 0, 0, 0]), z=Z)
        res = ctrl.step(pentagon, x0, None, Z)
        assert res.nu[3] == 0.0 and res.nu[4] == 0.0


class TestDiagnostics:
    def test_lipschitz_lf_example(self):
        lim = InputLimits(nu_max=(1.0, 1.0, 1.0), omega_max=(0.5, 0.5, 0.5))
        val = lipschitz_Lf(lim, z=10.0, dt=0.1)
        assert val == pytest.approx(np.sqrt(2 * 4 * 1.01**2), rel=1e-12)
        assert val == pytest.approx(2.8567, abs=2e-4)

    def test_lipschitz_lf_limit_and_monotone(self):
        lims = [InputLimits(nu_max=(1, 1, v), omega_max=(0.5, 0.5, 0.5)) for v in (0.5, 1.0, 2.0)]
        vals = [lipschitz_Lf(l, z=5.0, dt=0.05) for l in lims]
        assert vals[0] <= vals[1] <= vals[2]
        tiny = lipschitz_Lf(lims[1], z=5.0, dt=1e-9)
        assert tiny == pytest.approx(np.sqrt(8.0), rel=1e-6)

    def test_lipschitz_lF(self):
        assert lipschitz_LF(np.ones(4), np.ones(4)) == pytest.approx(4.0)
        assert lipschitz_LF(np.ones(4), 3.0 * np.ones(4)) == pytest.approx(12.0)
        assert lipschitz_LF(np.ones(4), np.array([1.0, 5.0, 2.0, 0.5])) == pytest.approx(20.0)

    def test_prediction_error_bound(self):
        assert prediction_error_bound(1, 0.3, 1.7) == pytest.approx(0.3)
        assert prediction_error_bound(3, 0.1, 2.0) == pytest.approx(0.7)
        assert prediction_error_bound(4, 0.1, 1.0) == pytest.approx(0.4)

    def test_disturbance_bound_table(self):
        # Spreadsheet-style recomputation with plain Python arithmetic.
        n, L_f, L_E, gap = 5, 1.2, 2.0, 0.5
        xi, per_m = disturbance_feasibility_bound(
            a_eps=1.0, a_eps_f=0.5, L_E=L_E, L_f=L_f, n=n
        )
        for m in range(n):
            s = sum(L_f**i for i in range(m + 1))
            expected = gap / (L_E * L_f ** ((n - 1) - m) * s)
            assert per_m[m] == pytest.approx(expected, rel=1e-12)
        assert xi == pytest.approx(min(per_m))

    def test_disturbance_bound_scaling_and_unit_lf(self):
        xi1, _ = disturbance_feasibility_bound(1.0, 0.5, 2.0, 1.3, 6)
        xi2, _ = disturbance_feasibility_bound(1.5, 0.5, 2.0, 1.3, 6)
        assert xi2 == pytest.approx(2.0 * xi1)
        _, per_m = disturbance_feasibility_bound(1.0, 0.5, 2.0, 1.0, 4)
        for m in range(4):
            assert per_m[m] == pytest.approx(0.5 / (2.0 * (m + 1)))

    def test_cost_difference_bound(self, small_ocp, pentagon):
        x_des = extract_state(pentagon)
        diag = compute_diagnostics(small_ocp, Z, x_des)
        bound, lzm = cost_difference_bound(small_ocp.n - 1, e=0.7, cfg=small_ocp, diag=diag)
        assert lzm == pytest.approx(diag.L_E)
        bound0, _ = cost_difference_bound(1, e=0.0, cfg=small_ocp, diag=diag, state_norms=(0.5, 0.2))
        assert bound0 == pytest.approx(-diag.F_lower * (0.25 + 0.04))
        assert bound0 <= 0.0

    def test_bundle_fields_and_terminal_set(self, small_ocp, pentagon):
        x_des = extract_state(pentagon)
        rng = np.random.default_rng(7)
        diag = compute_diagnostics(small_ocp, Z, x_des, ref_polys=[pentagon], rng=rng)
        for v in (diag.L_f, diag.L_F, diag.L_E, diag.F_lower, diag.eps0, diag.a_eps, diag.xi_max):
            assert v > 0
        assert diag.a_eps > diag.a_eps_f > 0
        assert diag.L_f_emp is not None and diag.L_f_emp > 0
        assert diag.L_FV_emp is not None and diag.L_FV_emp > 0
        assert diag.in_terminal_set(np.zeros(4))
        big = np.array([10.0, 0, 0, 0])
        assert not diag.in_terminal_set(big)
        d = diag.to_dict()
        assert set(d) >= {"L_f", "L_F", "L_E", "eps0", "a_eps", "xi_max"}

    def test_eps0_validation(self, small_ocp, pentagon):
        small_ocp.eps0 = 10.0  # terminal box cannot fit the safe set
        with pytest.raises(ValueError):
            compute_diagnostics(small_ocp, Z, extract_state(pentagon))

    def test_lemma1_multistep_audit(self, small_ocp, pentagon):
        # Disturbed vs nominal model rollouts: the accumulated state error
        # stays below the geometric bound with the sampled constant.
        rng = np.random.default_rng(8)
        cfg = small_ocp
        lf_emp = empirical_lipschitz_f(cfg, Z, [pentagon], rng, n_samples=100)
        lf = max(lf_emp, 1.0)
        xi_bound = 2e-3
        x0 = extract_state(pentagon)
        for _ in range(100):
            nu_F = rng.uniform(-0.2, 0.2, size=(cfg.n, 6))
            nom_states, _ = rollout(pentagon, x0, nu_F, None, cfg, Z)
            poly, x = pentagon, x0.copy()
            for i in range(cfg.n):
                xi = rng.uniform(-1.0, 1.0, 4) * (xi_bound / 2.0)
                poly, x = propagate_discrete(
                    poly, x, nu_F[i], np.zeros_like(poly.vertices), cfg.dt, Z
                )
                x = x + xi
                err = np.linalg.norm(x - nom_states[i + 1])
                assert err <= prediction_error_bound(i + 1, xi_bound, lf) + 1e-12
