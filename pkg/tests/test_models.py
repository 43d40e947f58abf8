import math

import numpy as np
import pytest

from morinv import (
    HemodynamicParams,
    TimeGrid,
    connectivity_prior,
    fmri_assemble,
    generic_prior,
    hemodynamic_forward,
    hemodynamic_prior,
    impulse_input,
    prior_seminorm,
    random_fmri_problem,
    random_stable_system,
    simulate,
    vec_inverse,
)
from morinv.models import random_stable_matrix


class TestRandomStableSystem:
    def test_eigenvalues_below_margin(self):
        for seed in range(8):
            n = 3 + seed
            _, theta = random_stable_system(n, 2, 2, seed=seed)
            eigs = np.linalg.eigvals(vec_inverse(theta, n))
            assert np.max(eigs.real) <= -0.1 + 1e-8

    def test_scalar_case_is_negative(self):
        _, theta = random_stable_system(1, 1, 1, seed=0)
        assert theta[0] < 0.0

    def test_seed_determinism(self):
        a, theta_a = random_stable_system(5, 2, 3, seed=42)
        b, theta_b = random_stable_system(5, 2, 3, seed=42)
        assert np.array_equal(theta_a, theta_b)
        assert np.array_equal(a.B, b.B)
        assert np.array_equal(a.C, b.C)

    def test_dimensions(self):
        system, theta = random_stable_system(4, 2, 3, seed=1)
        assert (system.N, system.J, system.O) == (4, 2, 3)
        assert theta.shape == (16,)
        assert system.parametrization.param_dim == 16


class TestGenericPrior:
    def test_mean_is_negative_identity(self):
        assert np.array_equal(generic_prior(2).mean, [-1.0, 0.0, 0.0, -1.0])

    def test_seminorm_of_mean_equals_dimension(self):
        for n in (2, 3, 5):
            prior = generic_prior(n)
            assert prior_seminorm(prior.mean, prior) == pytest.approx(n, rel=1e-14)

    def test_diagonal_path_active(self):
        assert generic_prior(4).is_diagonal


class TestHemodynamicForward:
    def test_entry_1_1_at_prior_means(self):
        a_for, _, _ = hemodynamic_forward(HemodynamicParams())
        assert a_for[0, 0] == pytest.approx(-1.0 / 0.65, abs=1e-12)
        assert a_for[0, 0] == pytest.approx(-1.5385, abs=1e-4)

    def test_output_row_at_unit_gains(self):
        _, _, c_for = hemodynamic_forward(HemodynamicParams(v_0=1.0, a_1=1.0, a_2=1.0))
        assert np.array_equal(c_for, [[0.0, 0.0, -1.0, 1.0]])

    def test_entry_3_2_expression_oracle(self):
        params = HemodynamicParams()
        a_for, _, _ = hemodynamic_forward(params)
        t0, e0 = 0.98, 0.34
        expected = (1.0 - (1.0 - e0) * (1.0 - math.log(1.0 - e0))) / (t0 * e0)
        assert abs(a_for[2, 1] - expected) <= 1e-12

    def test_full_matrix_layout(self):
        p = HemodynamicParams(tau_s=0.5, tau_f=0.25, tau_0=2.0, e_0=0.5, alpha=0.5)
        a_for, b_for, c_for = hemodynamic_forward(p)
        assert a_for[0, 1] == pytest.approx(4.0)  # 1/tau_f as printed
        assert np.array_equal(a_for[1], [1.0, 0.0, 0.0, 0.0])
        assert a_for[2, 2] == pytest.approx(-0.5)
        assert a_for[2, 3] == pytest.approx((1 - 0.5) / (2.0 * 0.5))
        assert np.array_equal(a_for[3], [0.0, 0.5, 0.0, -1.0])
        assert np.array_equal(b_for.reshape(-1), [1.0, 0.0, 0.0, 0.0])
        assert c_for.shape == (1, 4)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            HemodynamicParams(tau_s=0.0)
        with pytest.raises(ValueError):
            HemodynamicParams(e_0=1.5)
        with pytest.raises(ValueError):
            HemodynamicParams(alpha=0.0)


class TestHemodynamicPrior:
    def test_table_values(self):
        prior = hemodynamic_prior()
        assert prior["tau_s"] == (0.65, 0.001)
        assert prior["a_1"] == (1.00, 0.0)
        assert [mean for mean, _ in prior.values()] == [0.65, 0.41, 0.98, 0.34, 0.32, 1.0, 1.0, 1.0]

    def test_covariances_non_negative_and_fixed_flags(self):
        prior = hemodynamic_prior()
        assert all(cov >= 0.0 for _, cov in prior.values())
        fixed = [name for name, (_, cov) in prior.items() if cov == 0.0]
        assert fixed == ["v_0", "a_1", "a_2"]

    def test_defaults_match_prior_means(self):
        params = HemodynamicParams()
        for name, (mean, _) in hemodynamic_prior().items():
            assert getattr(params, name) == mean


class TestFmriAssemble:
    def test_single_region_shape(self):
        model = fmri_assemble(1)
        assert model.system.N == 5
        assert model.system.parametrization.param_dim == 1
        a = model.system.parametrization.matrix(np.array([-1.0]))
        assert a.shape == (5, 5)

    def test_dimension_law(self):
        for n in (1, 3, 9):
            model = fmri_assemble(n)
            assert model.state_dim == 5 * n
            assert model.system.parametrization.param_dim == n * n
            assert model.system.J == n
            assert model.system.O == n

    def test_parametrization_touches_only_dynamic_block(self):
        n = 3
        model = fmri_assemble(n)
        rng = np.random.default_rng(0)
        base = model.system.parametrization.matrix(np.zeros(n * n))
        for _ in range(5):
            theta = rng.normal(size=n * n)
            delta = model.system.parametrization.matrix(theta) - base
            assert np.array_equal(delta[:n, :n], vec_inverse(theta, n))
            delta[:n, :n] = 0.0
            assert np.count_nonzero(delta) == 0

    def test_sparsity_counting_oracle(self):
        n = 4
        model = fmri_assemble(n)
        a_for, b_for, _ = hemodynamic_forward(model.hemodynamics)
        theta = np.random.default_rng(1).uniform(0.5, 1.5, size=n * n)
        a = model.system.parametrization.matrix(theta)
        expected = n * n + n * np.count_nonzero(a_for) + n * np.count_nonzero(b_for)
        assert np.count_nonzero(a) == expected

    def test_rest_stays_at_rest(self):
        model = fmri_assemble(2)
        grid = TimeGrid(0.0, 0.05, 1.0)
        traj = simulate(model.system, np.zeros(4), np.zeros((grid.steps + 1, 2)), grid)
        assert np.array_equal(traj.outputs, np.zeros_like(traj.outputs))

    def test_stable_connectivity_keeps_outputs_finite_over_ten_seconds(self):
        model, theta_true = random_fmri_problem(9, seed=0)
        grid = TimeGrid(0.0, 0.01, 10.0)
        u = impulse_input(grid, model.system.J)
        traj = simulate(model.system, theta_true, u, grid)
        assert np.all(np.isfinite(traj.outputs))

    def test_coupling_injects_region_state(self):
        model = fmri_assemble(2)
        a = model.system.parametrization.matrix(np.zeros(4))
        # region i's s-equation is driven by x_i
        assert a[2, 0] == 1.0
        assert a[6, 1] == 1.0
        assert a[2, 1] == 0.0

    def test_connectivity_prior_matches_parameter_count(self):
        prior = connectivity_prior(3)
        assert prior.dim == 9
        assert np.array_equal(prior.mean, (-np.eye(3)).reshape(-1))


def test_random_stable_matrix_margin():
    rng = np.random.default_rng(5)
    for _ in range(5):
        a = random_stable_matrix(6, rng)
        assert np.max(np.linalg.eigvals(a).real) <= -0.1 + 1e-8
