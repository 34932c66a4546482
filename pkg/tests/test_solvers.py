import numpy as np
import pytest

from stratfair import (
    ContributionMatrix,
    ContractError,
    ExpressionPenalty,
    Geometry,
    GroupParams,
    InputError,
    Objective,
    Scenario,
    check_quadratic_core,
    custom_spec,
    discrepancy_matrix,
    is_beta_fair,
    project_intersection_dykstra,
    project_onto_ball,
    project_onto_ellipsoid,
    project_onto_halfspace,
    solve_constrained,
    solve_ellipsoid_sw,
    solve_nonconvex_envelope,
    solve_nonconvex_multistart,
    solve_nonconvex_restricted,
    solve_unconstrained,
    spec_for_scenario,
    sw_coefficient,
)
from stratfair.solvers import Ball, Ellipsoid, Halfspace, _linear_max_over_sets
from conftest import random_scenario, random_spd


def ellipse_boundary(quad, level, count):
    lam, vecs = np.linalg.eigh(quad)
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    return (vecs @ (np.sqrt(level / lam)[:, None] * circle.T)).T


class TestElementaryProjections:
    def test_ball_inside_returns_copy(self):
        v = np.array([0.3, 0.4])
        np.testing.assert_array_equal(project_onto_ball(v), v)

    def test_ball_radial_clip(self):
        np.testing.assert_allclose(project_onto_ball(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_halfspace(self):
        out = project_onto_halfspace(np.array([2.0, 1.0]), np.array([1.0, 0.0]), 0.0)
        np.testing.assert_allclose(out, [0.0, 1.0])

    def test_ellipsoid_feasible_point_unchanged(self):
        v = np.array([0.1, 0.1])
        np.testing.assert_array_equal(project_onto_ellipsoid(v, np.diag([1.0, 4.0]), 1.0), v)

    def test_ellipsoid_identity_reduces_to_ball(self):
        np.testing.assert_allclose(
            project_onto_ellipsoid(np.array([3.0, 4.0]), np.eye(2), 1.0), [0.6, 0.8], atol=1e-12
        )

    def test_ellipsoid_axis_aligned_boundary_scan(self):
        p = project_onto_ellipsoid(np.array([0.0, 2.0]), np.diag([1.0, 4.0]), 1.0)
        np.testing.assert_allclose(p, [0.0, 0.5], atol=1e-12)
        boundary = ellipse_boundary(np.diag([1.0, 4.0]), 1.0, 1_000_000)
        dists = np.linalg.norm(boundary - np.array([0.0, 2.0]), axis=1)
        assert np.linalg.norm(p - np.array([0.0, 2.0])) <= dists.min() + 1e-9

    def test_ellipsoid_zero_level_projects_to_origin(self):
        np.testing.assert_array_equal(
            project_onto_ellipsoid(np.array([1.0, 1.0]), np.eye(2), 0.0), np.zeros(2)
        )

    def test_ellipsoid_variational_inequality(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            d = int(rng.integers(2, 6))
            quad = random_spd(rng, d, 0.3, 3.0)
            level = float(rng.uniform(0.1, 1.0))
            v = rng.standard_normal(d) * 3.0
            p = project_onto_ellipsoid(v, quad, level)
            lam, vecs = np.linalg.eigh(quad)
            for _ in range(50):
                z = rng.standard_normal(d)
                z = vecs @ (np.sqrt(level / lam) * (vecs.T @ z) / np.linalg.norm(z))
                z *= rng.uniform(0.0, 1.0)
                assert float((v - p) @ (z - p)) <= 1e-8

    def test_ellipsoid_rejects_indefinite_quad(self):
        with pytest.raises(InputError):
            project_onto_ellipsoid(np.array([1.0, 1.0]), np.diag([1.0, -1.0]), 1.0)


class TestDykstra:
    def test_single_set_equals_direct_projection(self):
        v = np.array([3.0, 4.0])
        res = project_intersection_dykstra(v, [Ball(1.0)])
        np.testing.assert_allclose(res.point, project_onto_ball(v), atol=1e-12)
        assert res.converged

    def test_ball_halfspace_corner(self):
        res = project_intersection_dykstra(
            np.array([2.0, 0.0]), [Ball(1.0), Halfspace(np.array([1.0, 0.0]), 0.0)]
        )
        np.testing.assert_allclose(res.point, [0.0, 0.0], atol=1e-9)

    def test_feasible_point_is_fixed(self, worked_example):
        m = discrepancy_matrix(worked_example).matrix
        from stratfair import polyhedron_rows
        from stratfair.solvers import halfspaces_from_rows

        rows, rhs = polyhedron_rows(m, 7.0 / 8.0)
        sets = [Ball(1.0)] + halfspaces_from_rows(rows, rhs)
        v = np.array([0.5, 0.5])
        res = project_intersection_dykstra(v, sets)
        np.testing.assert_allclose(res.point, v, atol=1e-10)

    def test_projection_variational_inequality(self):
        rng = np.random.default_rng(5)
        quad = random_spd(rng, 3, 0.5, 2.0)
        sets = [Ball(1.0), Ellipsoid(quad, 0.7), Halfspace(np.array([1.0, 1.0, 0.0]), 0.3)]
        v = rng.standard_normal(3) * 2.5
        res = project_intersection_dykstra(v, sets)
        p = res.point
        assert res.converged
        hits = 0
        while hits < 1000:
            z = rng.uniform(-1, 1, 3)
            if all(s.contains(z, tol=0.0) for s in sets):
                hits += 1
                assert float((v - p) @ (z - p)) <= 1e-8

    def test_requires_a_set(self):
        with pytest.raises(InputError):
            project_intersection_dykstra(np.zeros(2), [])


class TestSolveUnconstrained:
    def test_acc_interior(self):
        res = solve_unconstrained(Objective.ACC, np.array([0.3, 0.4]))
        np.testing.assert_allclose(res.policy.weights, [0.3, 0.4])
        assert res.objective_value == 0.0

    def test_acc_radial_projection(self):
        res = solve_unconstrained(Objective.ACC, np.array([3.0, 4.0]))
        np.testing.assert_allclose(res.policy.weights, [0.6, 0.8])
        assert res.objective_value == pytest.approx(-16.0)

    def test_sw_unit_direction_checked_against_circle_grid(self):
        coeff = np.array([0.5, 0.5])
        res = solve_unconstrained(Objective.SW, np.zeros(2), coeff)
        np.testing.assert_allclose(res.policy.weights, np.ones(2) / np.sqrt(2.0), atol=1e-12)
        assert res.objective_value == pytest.approx(np.sqrt(0.5), abs=1e-12)
        theta = np.linspace(0, 2 * np.pi, 100_000)
        grid_best = (np.column_stack([np.cos(theta), np.sin(theta)]) @ coeff).max()
        assert res.objective_value >= grid_best - 1e-9

    def test_sw_zero_coefficient_degenerates(self):
        res = solve_unconstrained(Objective.SW, np.zeros(2), np.zeros(2))
        assert res.degenerate and res.objective_value == 0.0
        np.testing.assert_array_equal(res.policy.weights, np.zeros(2))


class TestSolveEllipsoidSw:
    def test_identity_quad(self):
        res = solve_ellipsoid_sw(np.array([3.0, 4.0]), np.eye(2), 1.0)
        np.testing.assert_allclose(res.policy.weights, [0.6, 0.8], atol=1e-14)
        assert res.objective_value == pytest.approx(5.0, abs=1e-12)

    def test_axis_aligned(self):
        res = solve_ellipsoid_sw(np.array([0.0, 1.0]), np.diag([1.0, 4.0]), 1.0)
        np.testing.assert_allclose(res.policy.weights, [0.0, 0.5], atol=1e-14)
        assert res.objective_value == pytest.approx(0.5, abs=1e-14)

    def test_level_to_zero_collapses(self):
        res = solve_ellipsoid_sw(np.array([1.0, 1.0]), np.eye(2), 0.0)
        np.testing.assert_array_equal(res.policy.weights, np.zeros(2))
        assert res.objective_value == 0.0

    def test_numerical_path_consistency(self):
        # the projection-ladder route must land on the closed form
        rng = np.random.default_rng(13)
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(2, 7))
            quad = random_spd(rng, d, 0.3, 3.0)
            level = float(rng.uniform(0.05, 1.0) * np.linalg.eigvalsh(quad)[0])
            coeff = rng.standard_normal(d)
            closed = solve_ellipsoid_sw(coeff, quad, level)
            w, _, converged = _linear_max_over_sets(coeff, [Ellipsoid(quad, level)])
            assert converged
            worst = max(worst, abs(closed.objective_value - float(coeff @ w)))
        assert worst <= 1e-6


class TestSolveSwBallEllipsoid:
    def test_matches_dense_boundary_oracle(self):
        from stratfair import solve_sw_over_ball_and_ellipsoid

        rng = np.random.default_rng(31)
        theta = np.linspace(0.0, 2.0 * np.pi, 400_000, endpoint=False)
        circle = np.column_stack([np.cos(theta), np.sin(theta)])
        for _ in range(30):
            quad = random_spd(rng, 2, 0.3, 3.0)
            lam, vecs = np.linalg.eigh(quad)
            level = float(rng.uniform(0.3, 2.5) * lam[0])
            coeff = rng.standard_normal(2)
            w, _, converged = solve_sw_over_ball_and_ellipsoid(coeff, quad, level)
            assert converged
            assert np.linalg.norm(w) <= 1.0 + 1e-10
            assert w @ quad @ w <= level + 1e-8
            on_ball = circle[(circle * (quad @ circle.T).T).sum(axis=1) <= level]
            ell = (vecs @ (np.sqrt(level / lam)[:, None] * circle.T)).T
            on_ell = ell[np.linalg.norm(ell, axis=1) <= 1.0]
            corners = []
            if abs(lam[1] - lam[0]) > 1e-12:
                u1_sq = (level - lam[1]) / (lam[0] - lam[1])
                if 0.0 <= u1_sq <= 1.0:
                    u1 = np.sqrt(u1_sq)
                    u2 = np.sqrt(1.0 - u1_sq)
                    for s1 in (-1.0, 1.0):
                        for s2 in (-1.0, 1.0):
                            corners.append(vecs @ np.array([s1 * u1, s2 * u2]))
            oracle = max(
                float((on_ball @ coeff).max()) if on_ball.size else -np.inf,
                float((on_ell @ coeff).max()) if on_ell.size else -np.inf,
                max((float(coeff @ c) for c in corners), default=-np.inf),
                0.0,
            )
            assert float(coeff @ w) == pytest.approx(oracle, abs=1e-7)

    def test_singular_quad_with_kernel_coefficient(self):
        from stratfair import solve_sw_over_ball_and_ellipsoid

        quad = np.diag([1.0, 0.0])
        coeff = np.array([1.0, 1.0])
        w, _, converged = solve_sw_over_ball_and_ellipsoid(coeff, quad, 0.25)
        assert converged
        # first coordinate capped at 1/2 by the cylinder; the rest of the
        # unit budget goes to the unconstrained coordinate
        np.testing.assert_allclose(w, [0.5, np.sqrt(0.75)], atol=1e-9)

    def test_singular_quad_with_range_coefficient(self):
        from stratfair import solve_sw_over_ball_and_ellipsoid

        quad = np.diag([1.0, 0.0])
        coeff = np.array([1.0, 0.0])
        w, _, converged = solve_sw_over_ball_and_ellipsoid(coeff, quad, 0.25)
        assert converged
        assert float(coeff @ w) == pytest.approx(0.5, abs=1e-12)

    def test_agrees_with_projection_ladder_across_dimensions(self):
        from stratfair import solve_sw_over_ball_and_ellipsoid
        from stratfair.solvers import _linear_max_over_sets

        rng = np.random.default_rng(41)
        for _ in range(25):
            d = int(rng.integers(2, 7))
            quad = random_spd(rng, d, 0.3, 3.0)
            level = float(rng.uniform(0.3, 2.5) * np.linalg.eigvalsh(quad)[0])
            coeff = rng.standard_normal(d)
            w_kkt, _, ok = solve_sw_over_ball_and_ellipsoid(coeff, quad, level)
            assert ok
            w_ladder, _, _ = _linear_max_over_sets(coeff, [Ball(1.0), Ellipsoid(quad, level)])
            # the exact route must dominate the ladder, which itself is
            # accurate to its lowest accepted rung's 1/(2T) resolution
            assert float(coeff @ w_kkt) >= float(coeff @ w_ladder) - 1e-7
            assert abs(float(coeff @ w_kkt) - float(coeff @ w_ladder)) <= 1e-3


class TestSolveConstrained:
    def test_recovery_when_budget_covers_unconstrained_optimum(self, worked_example):
        spec = spec_for_scenario(worked_example, "l1", beta=2.0)
        for objective in (Objective.ACC, Objective.SW):
            res = solve_constrained(objective, spec, worked_example)
            ref = solve_unconstrained(objective, worked_example.ground_truth,
                                      sw_coefficient(worked_example))
            assert res.objective_value == pytest.approx(ref.objective_value, abs=1e-9)
            assert res.iterations == 0

    def test_worked_example_exact_budget_keeps_truth(self, worked_example):
        spec = spec_for_scenario(worked_example, "l1", beta=7.0 / 8.0)
        res = solve_constrained(Objective.ACC, spec, worked_example)
        np.testing.assert_allclose(res.policy.weights, [0.5, 0.5], atol=1e-12)
        assert res.objective_value == pytest.approx(0.0, abs=1e-15)

    def test_l2_projection_matches_boundary_scan(self, worked_example):
        beta = 25.0 / 128.0  # half the squared-difference discrepancy of the truth
        spec = spec_for_scenario(worked_example, "l2", beta=beta)
        res = solve_constrained(Objective.ACC, spec, worked_example)
        boundary = ellipse_boundary(spec.quad, beta, 1_000_000)
        oracle = -np.min(((boundary - worked_example.ground_truth) ** 2).sum(axis=1))
        assert res.objective_value == pytest.approx(oracle, abs=1e-6)
        assert res.geometry is Geometry.ELLIPSOID

    def test_zero_budget_invertible_map_forces_zero_rule(self, worked_example):
        spec = spec_for_scenario(worked_example, "l1", beta=0.0)
        res = solve_constrained(Objective.SW, spec, worked_example)
        assert res.objective_value == pytest.approx(0.0, abs=1e-9)
        assert np.linalg.norm(res.policy.weights) <= 1e-8

    def test_results_feasible_across_kinds_and_objectives(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            s = random_scenario(rng, int(rng.integers(2, 5)))
            m = discrepancy_matrix(s).matrix
            sigma_min = np.linalg.svd(m, compute_uv=False)[-1]
            beta = float(rng.uniform(0.2, 2.0) * max(sigma_min, 0.05))
            for kind in ("l1", "l2"):
                spec = spec_for_scenario(s, kind, beta=beta)
                for objective in (Objective.ACC, Objective.SW):
                    res = solve_constrained(objective, spec, s)
                    assert res.delta_value <= beta + 1e-8
                    assert res.policy.norm <= 1.0 + 1e-8

    def test_acc_value_monotone_in_budget(self, worked_example):
        values = []
        for beta in np.linspace(0.0, 1.0, 9):
            spec = spec_for_scenario(worked_example, "l1", beta=float(beta))
            values.append(solve_constrained(Objective.ACC, spec, worked_example).objective_value)
        assert all(values[i] <= values[i + 1] + 1e-9 for i in range(len(values) - 1))

    def test_nonconvex_kind_rejected(self, worked_example):
        spec = spec_for_scenario(worked_example, "asym", beta=0.5)
        with pytest.raises(InputError):
            solve_constrained(Objective.ACC, spec, worked_example)

    def test_degenerate_welfare_coefficient_resolves_to_zero_rule(self):
        eye = np.eye(2)
        zero_proj = np.zeros((2, 2))
        s = Scenario(
            ContributionMatrix(eye),
            (GroupParams(eye, zero_proj), GroupParams(eye, zero_proj)),
            np.ones(2),
            np.array([0.5, 0.5]),
        )
        spec = spec_for_scenario(s, "l1", beta=0.3)
        res = solve_constrained(Objective.SW, spec, s)
        assert res.degenerate
        np.testing.assert_array_equal(res.policy.weights, np.zeros(2))


def _full_span_asym_scenario(rng, d=2, other_scale=1.0):
    s = random_scenario(rng, d, full_rank_projectors=True)
    groups = (
        GroupParams(s.groups[0].cost, np.eye(d), s.groups[0].sampler),
        GroupParams(s.groups[1].cost / other_scale, s.groups[1].projector, s.groups[1].sampler),
    )
    return Scenario(s.contribution, groups, s.desirability, s.ground_truth)


class TestNonconvexSolvers:
    def test_restricted_requires_verified_core(self, worked_example):
        spec = spec_for_scenario(worked_example, "asym", beta=0.5)
        with pytest.raises(ContractError):
            solve_nonconvex_restricted(Objective.ACC, spec, worked_example)

    def test_zero_penalty_matches_ellipsoid_solve(self):
        rng = np.random.default_rng(3)
        s = random_scenario(rng, 3)
        quad = random_spd(rng, 3, 0.6, 2.0)
        beta = 0.5 * float(np.linalg.eigvalsh(quad)[0])
        spec = custom_spec(quad, lambda w: 0.0, beta=beta, lipschitz=0.0)
        restricted = solve_nonconvex_restricted(Objective.SW, spec, s)
        direct = solve_ellipsoid_sw(sw_coefficient(s), quad, beta)
        assert restricted.objective_value == pytest.approx(direct.objective_value, abs=1e-12)
        envelope = solve_nonconvex_envelope(Objective.SW, spec, s)
        assert envelope.objective_value == pytest.approx(restricted.objective_value, abs=1e-12)

    def test_restricted_result_always_within_budget(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            s = _full_span_asym_scenario(rng)
            spec0 = spec_for_scenario(s, "asym", beta=1.0, privileged_group=1)
            lam_min = check_quadratic_core(spec0).details["lambda_min"]
            spec = spec_for_scenario(s, "asym", beta=0.7 * lam_min, privileged_group=1)
            for objective in (Objective.ACC, Objective.SW):
                res = solve_nonconvex_restricted(objective, spec, s)
                assert res.delta_value <= spec.beta + 1e-10
                assert res.policy.norm <= 1.0 + 1e-10

    def test_sandwich_on_asym_instances(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            s = _full_span_asym_scenario(rng)
            spec0 = spec_for_scenario(s, "asym", beta=1.0, privileged_group=1)
            lam_min = check_quadratic_core(spec0).details["lambda_min"]
            spec = spec_for_scenario(s, "asym", beta=0.5 * lam_min, privileged_group=1)
            for objective in (Objective.ACC, Objective.SW):
                restricted = solve_nonconvex_restricted(objective, spec, s)
                multistart = solve_nonconvex_multistart(objective, spec, s, starts=32, seed=0)
                envelope = solve_nonconvex_envelope(objective, spec, s)
                assert restricted.objective_value <= multistart.objective_value + 1e-6
                assert multistart.objective_value <= envelope.objective_value + 1e-6
                assert is_beta_fair(multistart.policy.weights, spec)

    def test_envelope_keeps_ball_active_when_inflated_past_it(self):
        rng = np.random.default_rng(16)
        s = _full_span_asym_scenario(rng)
        spec0 = spec_for_scenario(s, "asym", beta=1.0, privileged_group=1)
        core = check_quadratic_core(spec0)
        lam_min = core.details["lambda_min"]
        spec = spec_for_scenario(s, "asym", beta=0.95 * lam_min, privileged_group=1)
        res = solve_nonconvex_envelope(Objective.SW, spec, s)
        assert res.policy.norm <= 1.0 + 1e-8

    def test_multistart_matches_closed_form_on_convex_spec(self):
        rng = np.random.default_rng(17)
        s = random_scenario(rng, 2)
        m = discrepancy_matrix(s).matrix
        sigma_min = np.linalg.svd(m, compute_uv=False)[-1]
        if sigma_min <= 1e-6:
            pytest.skip("degenerate draw")
        beta = 0.5 * sigma_min**2
        spec = spec_for_scenario(s, "l2", beta=beta)
        exact = solve_constrained(Objective.SW, spec, s)
        heuristic = solve_nonconvex_multistart(Objective.SW, spec, s, starts=32, seed=1)
        assert heuristic.objective_value == pytest.approx(exact.objective_value, abs=1e-6)

    def test_square_root_penalty_beats_or_ties_restriction(self):
        penalty = ExpressionPenalty("0.3*sqrt(abs(w1)) + 0.3*sqrt(abs(w2))", 2)
        spec = custom_spec(np.eye(2), penalty, beta=0.3, lipschitz=3.0)
        eye = np.eye(2)
        s = Scenario(
            ContributionMatrix(eye),
            (GroupParams(eye, eye), GroupParams(eye, eye)),
            np.ones(2),
            np.array([1.0, 1.0]),
        )
        restricted = solve_nonconvex_restricted(Objective.ACC, spec, s)
        multistart = solve_nonconvex_multistart(Objective.ACC, spec, s, starts=48, seed=0)
        assert multistart.objective_value >= restricted.objective_value - 1e-9
        assert is_beta_fair(multistart.policy.weights, spec)

    def test_multistart_seed_stability(self):
        rng = np.random.default_rng(18)
        s = _full_span_asym_scenario(rng)
        spec0 = spec_for_scenario(s, "asym", beta=1.0, privileged_group=1)
        lam_min = check_quadratic_core(spec0).details["lambda_min"]
        spec = spec_for_scenario(s, "asym", beta=0.6 * lam_min, privileged_group=1)
        a = solve_nonconvex_multistart(Objective.ACC, spec, s, starts=64, seed=0)
        b = solve_nonconvex_multistart(Objective.ACC, spec, s, starts=64, seed=999)
        assert abs(a.objective_value - b.objective_value) <= 1e-6
