"""Tests for lspia module."""

import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from lspiafit import oracle
from lspiafit.errors import (
    ConfigError,
    DegenerateMatrixError,
    NumericalFailureError,
    ShapeError,
    SingularAssemblyError,
)
from lspiafit.fitting import CollocationMatrix, DataSet, assemble, from_collocation
from lspiafit.lspia import (
    CONVERGED,
    MAX_ITERS,
    STAGNATED,
    SUBSET,
    UNIFORM,
    SolverConfig,
    choose_alpha,
    compute_dvc,
    compute_dvd,
    estimate_lambda_max,
    fit,
    initial_control_points,
    start_state,
    step_uniform,
    step_weighted,
)
from lspiafit.splinecore import BasisSpace

SINGULAR_A = [[0.5, 0.5], [0.5, 0.5]]


def singular_problem(Q=((2.0,), (4.0,))):
    return from_collocation(SINGULAR_A, np.array(Q))


def linear_problem():
    return from_collocation([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]], [[0.0], [1.0], [4.0]])


def interpolation_problem():
    """Square nonsingular system: cubic curve sampled at its Greville abscissae."""
    space = BasisSpace.clamped_uniform([8], 3)
    t = space.greville_points()[:, 0]
    points = np.column_stack([np.cos(3 * t), np.sin(2 * t), t ** 2])
    return assemble(space, DataSet(points, t))


def complement_projector(M):
    """Orthogonal projector onto the complement of the column space of M."""
    U, s, _ = oracle.svd(M)
    rank = int(np.sum(s > oracle.rank_cutoff(s, M.shape)))
    basis = U[:, :rank]
    return np.eye(M.shape[0]) - basis @ basis.T


class TestSolverConfig:
    """Test SolverConfig validation."""

    def test_defaults(self):
        config = SolverConfig()
        assert config.variant == 'weighted'
        assert config.alpha == 'auto'
        assert config.max_iters == 100000
        assert config.tol_delta == 1e-10
        assert config.stall_window == 50

    @pytest.mark.parametrize("kwargs", [
        {'variant': 'newton'},
        {'variant': 'weighted', 'alpha': 0.5},
        {'variant': 'uniform', 'alpha': -1.0},
        {'variant': 'uniform', 'alpha': 'fast'},
        {'variant': 'uniform', 'alpha': float('inf')},
        {'max_iters': 0},
        {'max_iters': 2.5},
        {'tol_delta': 0.0},
        {'tol_residual_change': -1e-3},
        {'stall_window': 0},
        {'empty_group_policy': 'ignore'},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SolverConfig(**kwargs)

    def test_numeric_alpha_coerced(self):
        assert SolverConfig(variant=UNIFORM, alpha=1).alpha == 1.0


class TestDifferenceVectors:
    """Test DVD and DVC computation."""

    def test_dvd_hand_example(self):
        A = CollocationMatrix.from_dense(SINGULAR_A)
        assert_allclose(compute_dvd(A, [2.0, 4.0], [3.0, 3.0]), [[-1.0], [1.0]])

    def test_dvd_from_origin_is_data(self, clustered_problem):
        A = clustered_problem.collocation
        Q = clustered_problem.Q
        assert_array_equal(compute_dvd(A, Q, np.zeros((A.shape[1], 3))), Q)

    def test_dvd_shape_mismatch(self):
        A = CollocationMatrix.from_dense(SINGULAR_A)
        with pytest.raises(ShapeError):
            compute_dvd(A, np.zeros((3, 1)), np.zeros((2, 1)))
        with pytest.raises(ShapeError):
            compute_dvd(A, np.zeros((2, 2)), np.zeros((2, 1)))

    def test_dvc_hand_example(self):
        problem = singular_problem()
        dvc = compute_dvc([2.0, 4.0], problem.groups, problem.weights)
        assert dvc[0, 0] == pytest.approx(3.0)

    def test_dvc_of_zero_is_zero(self, hole_problem):
        delta = np.zeros((hole_problem.data.size, 3))
        assert_array_equal(compute_dvc(delta, hole_problem.groups, hole_problem.weights), 0.0)

    def test_dvc_is_convex_combination(self, hole_problem):
        groups = hole_problem.groups
        delta = np.random.default_rng(6).normal(size=(hole_problem.data.size, 2))
        dvc = compute_dvc(delta, groups, hole_problem.weights)
        for i in range(groups.num_groups):
            members, _ = groups.group(i)
            if len(members) == 0:
                assert_array_equal(dvc[i], 0.0)
                continue
            assert np.all(dvc[i] >= delta[members].min(axis=0) - 1e-12)
            assert np.all(dvc[i] <= delta[members].max(axis=0) + 1e-12)

    def test_dvc_matches_matrix_form(self, hole_problem):
        A = hole_problem.collocation.toarray()
        delta = np.random.default_rng(7).normal(size=(A.shape[0], 3))
        expected = hole_problem.weights.diagonal[:, None] * (A.T @ delta)
        assert_allclose(compute_dvc(delta, hole_problem.groups, hole_problem.weights), expected, atol=1e-13)

    def test_dvc_row_mismatch(self, clustered_problem):
        with pytest.raises(ShapeError):
            compute_dvc(np.zeros((3, 3)), clustered_problem.groups, clustered_problem.weights)


class TestSteps:
    """Test single iteration steps."""

    def test_weighted_hand_example(self):
        problem = linear_problem()
        state = step_weighted(start_state(problem, [[0.0], [4.0]]), problem)
        assert state.k == 1
        assert_allclose(state.P[:, 0], [-1 / 3, 11 / 3], atol=1e-15)

    def test_weighted_singular_reaches_minimum_norm(self):
        problem = singular_problem()
        state = step_weighted(start_state(problem, np.zeros((2, 1))), problem)
        assert_allclose(state.P[:, 0], [3.0, 3.0])
        assert_allclose(state.P, oracle.pinv_solution(SINGULAR_A, [[2.0], [4.0]]), atol=1e-12)
        assert state.delta_norm == pytest.approx(0.0, abs=1e-15)
        after = step_weighted(state, problem)
        assert_allclose(after.P, state.P, atol=1e-15)

    def test_uniform_unit_alpha_one_step(self):
        problem = singular_problem()
        state = step_uniform(start_state(problem, np.zeros((2, 1)), UNIFORM, 1.0), problem, 1.0)
        assert_allclose(state.P[:, 0], [3.0, 3.0])

    def test_null_vector_is_invariant(self):
        problem = singular_problem(Q=((0.0,), (0.0,)))
        state = start_state(problem, [[1.0], [-1.0]], UNIFORM, 0.5)
        for _ in range(5):
            state = step_uniform(state, problem, 0.5)
            assert_allclose(state.P[:, 0], [1.0, -1.0])

    def test_normal_solution_is_stationary(self, full_rank_problem):
        A = full_rank_problem.collocation
        P_star = oracle.normal_solution(A, full_rank_problem.Q)
        state = step_weighted(start_state(full_rank_problem, P_star), full_rank_problem)
        assert_allclose(state.P, P_star, atol=1e-10)

    def test_uniform_needs_positive_alpha(self):
        problem = singular_problem()
        state = start_state(problem, np.zeros((2, 1)), UNIFORM, 1.0)
        with pytest.raises(ConfigError):
            step_uniform(state, problem, 0.0)

    def test_non_finite_start(self):
        problem = singular_problem()
        with pytest.raises(NumericalFailureError):
            start_state(problem, [[np.nan], [0.0]])

    def test_frozen_control_point_never_moves(self, hole_problem):
        P0 = initial_control_points(hole_problem, SUBSET)
        state = start_state(hole_problem, P0)
        for _ in range(20):
            state = step_weighted(state, hole_problem)
        assert_array_equal(state.P[hole_problem.frozen], P0[hole_problem.frozen])


class TestUpdateSubspace:
    """Increments stay in the column space of Lambda A^T (A^T for the uniform step)."""

    @pytest.mark.parametrize("problem_fixture", ['clustered_problem', 'hole_problem'])
    def test_weighted_increments(self, problem_fixture, request):
        problem = request.getfixturevalue(problem_fixture)
        A = problem.collocation.toarray()
        outside = complement_projector(problem.weights.diagonal[:, None] * A.T)
        state = start_state(problem, np.random.default_rng(11).normal(size=(problem.size, 3)))
        for _ in range(20):
            step = step_weighted(state, problem)
            assert np.linalg.norm(outside @ (step.P - state.P)) <= 1e-10
            state = step

    @pytest.mark.parametrize("problem_fixture", ['clustered_problem', 'hole_problem'])
    def test_uniform_increments(self, problem_fixture, request):
        problem = request.getfixturevalue(problem_fixture)
        A = problem.collocation.toarray()
        outside = complement_projector(A.T)
        alpha = choose_alpha(problem.collocation)
        state = start_state(problem, np.random.default_rng(12).normal(size=(problem.size, 3)), UNIFORM, alpha)
        for _ in range(20):
            step = step_uniform(state, problem, alpha)
            assert np.linalg.norm(outside @ (step.P - state.P)) <= 1e-10
            state = step

    def test_uniform_limit_from_zero_has_minimum_norm(self, clustered_problem):
        A = clustered_problem.collocation.toarray()
        assert oracle.numerical_rank(A) < A.shape[1]
        result = fit(clustered_problem, config=SolverConfig(variant=UNIFORM))
        assert result.converged
        assert np.linalg.norm(complement_projector(A.T) @ result.P_final) <= 1e-10


class TestStepSize:
    """Test power iteration and step-size choice."""

    def test_singular_example(self):
        assert choose_alpha(CollocationMatrix.from_dense(SINGULAR_A)) == pytest.approx(1 / 1.01, rel=1e-9)

    def test_identity(self):
        assert choose_alpha(CollocationMatrix.from_dense(np.eye(4))) == pytest.approx(1 / 1.01, rel=1e-9)

    def test_estimate_matches_dense(self, hole_problem):
        A = hole_problem.collocation
        exact = np.linalg.eigvalsh(A.toarray().T @ A.toarray())[-1]
        assert estimate_lambda_max(A) == pytest.approx(exact, rel=1e-2)

    def test_estimate_accepts_dense(self):
        assert estimate_lambda_max(np.diag([1.0, 2.0])) == pytest.approx(4.0, rel=1e-6)

    def test_zero_matrix(self):
        with pytest.raises(DegenerateMatrixError):
            choose_alpha(CollocationMatrix.from_dense(np.zeros((3, 2))))


class TestInitialControlPoints:
    """Test initial control point policies."""

    def test_zero(self, clustered_problem):
        assert_array_equal(initial_control_points(clustered_problem, 'zero'), np.zeros((10, 3)))

    def test_subset_picks_data_points(self, full_rank_problem):
        P0 = initial_control_points(full_rank_problem, SUBSET)
        assert P0.shape == (8, 3)
        Q = full_rank_problem.Q
        for row in P0:
            assert np.any(np.all(Q == row, axis=1))
        assert_array_equal(P0[0], Q[0])
        assert_array_equal(P0[-1], Q[-1])

    def test_subset_needs_space(self):
        with pytest.raises(ConfigError):
            initial_control_points(singular_problem(), SUBSET)

    def test_explicit_matrix_copied(self):
        P0 = np.ones((2, 1))
        resolved = initial_control_points(singular_problem(), P0)
        assert resolved is not P0
        assert_array_equal(resolved, P0)

    def test_explicit_wrong_shape(self):
        with pytest.raises(ShapeError):
            initial_control_points(singular_problem(), np.ones((3, 1)))

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            initial_control_points(singular_problem(), 'random')


class TestFit:
    """Test the iteration driver."""

    def test_interpolation_converges(self):
        problem = interpolation_problem()
        assert problem.collocation.shape == (8, 8)
        result = fit(problem, config=SolverConfig(tol_delta=1e-13))
        assert result.termination == CONVERGED
        assert result.converged
        assert result.final_residual <= 1e-10
        assert result.rms_error <= 1e-10

    def test_trace_has_one_record_per_step(self, clustered_problem):
        result = fit(clustered_problem, config=SolverConfig(max_iters=7))
        assert result.termination == MAX_ITERS
        assert result.iterations_used == 7
        assert [r.k for r in result.trace] == list(range(8))

    def test_stagnation(self, full_rank_problem):
        config = SolverConfig(tol_delta=1e-300, stall_window=10)
        result = fit(full_rank_problem, config=config)
        assert result.termination == STAGNATED
        assert result.iterations_used < config.max_iters

    def test_timing_disabled(self, clustered_problem):
        result = fit(clustered_problem, config=SolverConfig(max_iters=5, trace_timing=False))
        assert all(r.wall_ms is None for r in result.trace)

    def test_timing_enabled(self, clustered_problem):
        result = fit(clustered_problem, config=SolverConfig(max_iters=5))
        times = [r.wall_ms for r in result.trace]
        assert all(t is not None for t in times)
        assert times == sorted(times)

    def test_strict_policy_rejects_frozen(self, hole_problem):
        with pytest.raises(SingularAssemblyError):
            fit(hole_problem, config=SolverConfig(empty_group_policy='strict'))

    def test_data_override_is_linear(self, full_rank_problem):
        config = SolverConfig(tol_delta=1e-13)
        base = fit(full_rank_problem, config=config)
        doubled = fit(full_rank_problem, Q=2.0 * full_rank_problem.Q, config=config)
        assert_allclose(doubled.P_final, 2.0 * base.P_final, atol=1e-9)

    def test_progress_callback(self, clustered_problem):
        seen = []
        fit(clustered_problem, config=SolverConfig(max_iters=4), progress_callback=lambda k, r, d: seen.append(k))
        assert seen == [1, 2, 3, 4]

    def test_failing_callback_does_not_stop_fit(self, clustered_problem):
        def explode(k, r, d):
            raise RuntimeError("boom")

        result = fit(clustered_problem, config=SolverConfig(max_iters=3), progress_callback=explode)
        assert result.iterations_used == 3

    def test_uniform_reports_alpha(self, clustered_problem):
        result = fit(clustered_problem, config=SolverConfig(variant=UNIFORM, max_iters=3))
        assert result.variant == UNIFORM
        lam = np.linalg.eigvalsh(oracle.as_dense(clustered_problem.collocation).T
                                 @ oracle.as_dense(clustered_problem.collocation))[-1]
        assert result.alpha * lam <= 1.0

    def test_large_explicit_alpha_warns(self, clustered_problem, caplog):
        with caplog.at_level(logging.WARNING, logger='lspiafit.lspia'):
            fit(clustered_problem, config=SolverConfig(variant=UNIFORM, alpha=10.0, max_iters=2))
        assert "not guaranteed" in caplog.text

    def test_progress_bar_mode(self, clustered_problem):
        result = fit(clustered_problem, config=SolverConfig(max_iters=150), non_interactive=False)
        assert result.iterations_used <= 150

    def test_errors_reported(self, full_rank_problem):
        result = fit(full_rank_problem, config=SolverConfig(max_iters=20))
        residual = full_rank_problem.Q - full_rank_problem.collocation.dot(result.P_final)
        errors = np.linalg.norm(residual, axis=1)
        assert result.rms_error == pytest.approx(np.sqrt(np.mean(errors ** 2)))
        assert result.max_error == pytest.approx(errors.max())
