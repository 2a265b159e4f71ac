import numpy as np
import pytest

from poisolve.grid import make_problem, relative_error, residual_norms
from poisolve.iterators import (
    JacobiIterator,
    MultigridConfig,
    MultigridIterator,
    ground_truth,
    jacobi_step,
    reset_start,
    solve_to_tol,
)

from conftest import square_problem


class TestJacobiStep:
    def test_constant_fixed_point(self):
        p = square_problem(9, sides=(1, 1, 1, 1))
        u = np.ones((9, 9))
        assert np.array_equal(jacobi_step(u, p), u)

    def test_neighbor_average_formula(self):
        p = square_problem(5, sides=(0, 0, 0, 0))
        u = np.zeros((5, 5))
        u[1, 2] = 4.0  # north neighbor of (2, 2)
        assert jacobi_step(u, p)[2, 2] == 1.0

    def test_homogeneous_is_linear_with_zero_at_zero(self):
        p = square_problem(9, sides=(0, 0, 0, 0))
        assert np.all(jacobi_step(np.zeros((9, 9)), p) == 0.0)
        rng = np.random.default_rng(0)
        u, v = rng.standard_normal((2, 9, 9))
        lhs = jacobi_step(0.3 * u + 0.7 * v, p)
        rhs = 0.3 * jacobi_step(u, p) + 0.7 * jacobi_step(v, p)
        assert np.abs(lhs - rhs).max() < 1e-14

    def test_source_term_enters_scaled(self):
        f = np.zeros((5, 5))
        f[2, 2] = 8.0
        p = square_problem(5, sides=(0, 0, 0, 0), f=f)
        out = jacobi_step(np.zeros((5, 5)), p)
        assert abs(out[2, 2] - 0.25 * p.h ** 2 * 8.0) < 1e-15

    def test_cost(self, p17):
        assert JacobiIterator().step_cost(p17) == (1, 4 * 15 * 15)


class TestAffinity:
    """step(a*u + (1-a)*v) == a*step(u) + (1-a)*step(v) for affine maps."""

    @pytest.mark.parametrize("make_iter", [
        lambda: JacobiIterator(),
        lambda: MultigridIterator(MultigridConfig(depth=2)),
    ])
    def test_affine_combination(self, make_iter, p17_poisson):
        it = make_iter()
        rng = np.random.default_rng(1)
        for alpha in (0.5, -1.5, 2.0):
            u, v = rng.standard_normal((2, 17, 17))
            lhs = it.step(alpha * u + (1 - alpha) * v, p17_poisson)
            rhs = alpha * it.step(u, p17_poisson) + (1 - alpha) * it.step(v, p17_poisson)
            assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())

    @pytest.mark.parametrize("make_iter", [
        lambda: JacobiIterator(),
        lambda: MultigridIterator(MultigridConfig(depth=2)),
    ])
    def test_boundary_exact_after_step(self, make_iter, p17_poisson):
        it = make_iter()
        rng = np.random.default_rng(2)
        u = it.step(rng.standard_normal((17, 17)), p17_poisson)
        assert np.array_equal(u[p17_poisson.mask == 0], p17_poisson.b[p17_poisson.mask == 0])


class TestMultigrid:
    def test_fixed_point_preserved(self, p17_poisson):
        us = ground_truth(p17_poisson)
        mg = MultigridIterator(MultigridConfig(depth=2))
        assert np.abs(mg.step(us, p17_poisson) - us).max() < 1e-12 * max(1, np.abs(us).max())

    def test_one_vcycle_beats_eight_jacobi_sweeps(self):
        rng = np.random.default_rng(3)
        p = square_problem(65, sides=tuple(rng.uniform(-1, 1, 4)))
        us = ground_truth(p)
        u0 = rng.standard_normal((65, 65))
        mg = MultigridIterator(MultigridConfig(depth=2))
        e_mg = relative_error(mg.step(u0, p), us)
        uj = u0
        for _ in range(8):
            uj = jacobi_step(uj, p)
        assert e_mg < relative_error(uj, us)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="divisible"):
            MultigridConfig(depth=2).validate(18)
        with pytest.raises(ValueError, match="coarsest"):
            MultigridConfig(depth=4).validate(17)
        with pytest.raises(ValueError):
            MultigridIterator(MultigridConfig(depth=3)).step(np.zeros((21, 21)),
                                                             square_problem(21))

    def test_vcycle_cost_sums_levels(self, ):
        p = square_problem(17)
        mg = MultigridIterator(MultigridConfig(depth=2, pre_smooth=2, post_smooth=2))
        layers, ops = mg.step_cost(p)
        # sweeps: 4 per level over 3 levels; transfers: 2 per descent
        assert layers == 4 * 3 + 2 * 2
        expected_ops = (4 * 4 * 15 * 15 + 4 * 4 * 7 * 7 + 4 * 4 * 3 * 3
                        + 9 * 9 * 9 + 4 * 17 * 17 + 9 * 5 * 5 + 4 * 9 * 9)
        assert ops == expected_ops


class TestFixedPointProperty:
    def test_stationary_point_solves_system(self, p17_poisson):
        """Any u with step(u) ~= u satisfies the discrete equations."""
        us = ground_truth(p17_poisson)
        for it in (JacobiIterator(), MultigridIterator(MultigridConfig(depth=2))):
            u = us + 1e-13 * np.ones_like(us)
            assert np.abs(it.step(u, p17_poisson) - u).max() < 1e-10
            interior, boundary = residual_norms(p17_poisson, u)
            assert interior <= 1e-8 and boundary <= 1e-8

    def test_jacobi_error_decays_to_zero(self):
        rng = np.random.default_rng(4)
        p = square_problem(17, sides=tuple(rng.uniform(-1, 1, 4)))
        us = ground_truth(p)
        it = JacobiIterator()
        u = rng.standard_normal((17, 17))
        errors = []
        for _ in range(600):
            u = it.step(u, p)
            errors.append(relative_error(u, us))
        assert all(b <= a + 1e-15 for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 1e-3


class TestSolveToTol:
    def test_exact_start_costs_nothing(self, p17):
        us = ground_truth(p17)
        u, rep = solve_to_tol(JacobiIterator(), p17, us, 1e-8, 100, u_star=us)
        assert rep.iterations == 0 and rep.converged

    def test_jacobi_converges_on_16ish_grid(self):
        rng = np.random.default_rng(5)
        p = square_problem(17, sides=tuple(rng.uniform(-1, 1, 4)))
        us = ground_truth(p)
        u0 = rng.standard_normal((17, 17))
        u, rep = solve_to_tol(JacobiIterator(), p, u0, 1e-2, 100000, u_star=us)
        assert rep.converged and rep.iterations > 0
        assert relative_error(u, us) <= 1e-2

    def test_budget_zero_reports_not_converged(self, p17):
        us = ground_truth(p17)
        u0 = us + 1.0
        _, rep = solve_to_tol(JacobiIterator(), p17, u0, 1e-6, 0, u_star=us)
        assert not rep.converged and rep.iterations == 0

    def test_residual_stopping_without_reference(self, p17_poisson):
        u0 = reset_start(p17_poisson)
        u, rep = solve_to_tol(JacobiIterator(), p17_poisson, u0, 1e-3, 100000)
        assert rep.converged
        initial = residual_norms(p17_poisson, u0)[0]
        assert residual_norms(p17_poisson, u)[0] <= 1e-3 * initial

    def test_cost_accumulation(self, p17):
        rng = np.random.default_rng(6)
        u0 = rng.standard_normal((17, 17))
        us = ground_truth(p17)
        _, rep = solve_to_tol(JacobiIterator(), p17, u0, 0.05, 100000, u_star=us)
        assert rep.conv_layers == rep.iterations
        assert rep.mul_adds == rep.iterations * 4 * 15 * 15


class TestGroundTruth:
    def test_constant_boundary(self):
        p = square_problem(17, sides=(0.6, 0.6, 0.6, 0.6))
        us = ground_truth(p)
        assert np.abs(us - 0.6).max() < 1e-10

    def test_strip_is_linear_interpolation(self):
        """Identical rows in b give a solution linear across the columns."""
        n = 17
        mask = np.zeros((n, n), dtype=np.uint8)
        mask[1:-1, 1:-1] = 1
        cols = np.linspace(0.25, -0.5, n)
        b = np.tile(cols, (n, 1))
        p = make_problem(mask, b, np.zeros((n, n)))
        us = ground_truth(p)
        assert np.abs(us - np.tile(cols, (n, 1))).max() < 1e-9

    def test_dense_vs_multigrid_cross_check(self):
        rng = np.random.default_rng(7)
        p = square_problem(17, sides=tuple(rng.uniform(-1, 1, 4)))
        u_dense = ground_truth(p)
        mg = MultigridIterator(MultigridConfig(depth=2))
        u = reset_start(p)
        for _ in range(200):
            u_next = mg.step(u, p)
            if np.abs(u_next - u).max() <= 1e-12:
                u = u_next
                break
            u = u_next
        assert np.abs(u - u_dense).max() <= 1e-8
