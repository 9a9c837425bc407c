"""Bernstein basis, hodograph derivatives, curve fitting."""

import numpy as np
import pytest

from reachplan.bezier import (
    BranchCurve,
    _bernstein_matrix,
    build_basis,
    fit_curve,
    line_control_points,
    reconstruct_states,
)


class TestBasisMatrix:
    def test_quadratic_midpoint(self):
        vals = _bernstein_matrix(2, np.array([0.5]))[:, 0]
        assert np.allclose(vals, [0.25, 0.5, 0.25])

    def test_partition_of_unity(self):
        basis = build_basis(10, 50, 4.0)
        assert np.allclose(basis.B0.sum(axis=0), 1.0)

    def test_endpoint_interpolation(self):
        basis = build_basis(8, 20, 2.0)
        c = np.arange(9, dtype=float)
        p = basis.B0.T @ c
        assert p[0] == pytest.approx(c[0])
        assert p[-1] == pytest.approx(c[-1])

    def test_validation(self):
        with pytest.raises(ValueError):
            build_basis(2, 10, 1.0)
        with pytest.raises(ValueError):
            build_basis(16, 10, 1.0)
        with pytest.raises(ValueError):
            build_basis(5, 10, 0.0)


class TestDerivatives:
    def test_against_finite_differences(self):
        n, N, T = 10, 50, 4.0
        basis = build_basis(n, N, T)
        rng = np.random.default_rng(0)
        c = rng.normal(size=n + 1)
        nu = rng.uniform(1e-4, 1.0 - 1e-4, size=1000)
        h = 1e-5

        def val(nu_):
            return _bernstein_matrix(n, nu_).T @ c

        # first derivative (per unit time, hence /T)
        fd1 = (val(nu + h) - val(nu - h)) / (2 * h * T)
        from reachplan.bezier import _diff_matrix
        D1 = _diff_matrix(n, T)
        D2 = _diff_matrix(n - 1, T) @ D1
        v = _bernstein_matrix(n - 1, nu).T @ (D1 @ c)
        a = _bernstein_matrix(n - 2, nu).T @ (D2 @ c)
        assert np.abs(v - fd1).max() < 1e-6
        fd2 = (val(nu + h) - 2 * val(nu) + val(nu - h)) / (h * T) ** 2
        assert np.abs(a - fd2).max() < 1e-4

    def test_grid_matrices_consistent(self):
        # B1/B2/B3 on the uniform grid agree with the explicit hodograph
        from reachplan.bezier import _diff_matrix
        n, N, T = 10, 50, 4.0
        basis = build_basis(n, N, T)
        nu = np.arange(N + 1) / N
        D1 = _diff_matrix(n, T)
        rng = np.random.default_rng(1)
        c = rng.normal(size=n + 1)
        v_direct = _bernstein_matrix(n - 1, nu).T @ (D1 @ c)
        assert np.allclose(basis.B1.T @ c, v_direct, atol=1e-12)


class TestReconstruct:
    def test_constant_curve(self):
        basis = build_basis(10, 50, 4.0)
        c = np.full(11, 3.0)
        states = reconstruct_states(BranchCurve(c, np.zeros(11), np.zeros(11)), basis)
        assert np.allclose(states[:, 0], 3.0)
        assert np.allclose(states[:, 4:], 0.0, atol=1e-12)

    def test_straight_line_speed(self):
        basis = build_basis(10, 50, 4.0)
        L = 30.0
        c = np.linspace(0.0, L, 11)
        states = reconstruct_states(BranchCurve(c, np.zeros(11), np.zeros(11)), basis)
        assert np.allclose(states[:, 4], L / 4.0)
        assert np.allclose(states[:, 0], np.linspace(0, L, 51), atol=1e-9)

    def test_speed_is_velocity_norm(self):
        basis = build_basis(10, 20, 2.0)
        rng = np.random.default_rng(2)
        curve = BranchCurve(rng.normal(size=11), rng.normal(size=11),
                            rng.normal(size=11) * 0.1)
        states = reconstruct_states(curve, basis)
        vx = basis.B1.T @ curve.c_x
        vy = basis.B1.T @ curve.c_y
        assert np.allclose(states[:, 4], np.hypot(vx, vy))
        assert np.allclose(states[:, 2], basis.B0.T @ curve.c_theta)
        assert np.allclose(states[:, 3], basis.B1.T @ curve.c_theta)


class TestFit:
    def test_interpolation_identity(self):
        basis = build_basis(10, 50, 4.0)
        rng = np.random.default_rng(3)
        c = rng.normal(size=11)
        pos = basis.B0.T @ c
        vel = basis.B1.T @ c
        acc = basis.B2.T @ c
        c_fit, res = fit_curve(pos, vel, acc, basis)
        assert np.abs(c_fit - c).max() < 1e-8
        assert res < 1e-10

    def test_all_zero(self):
        basis = build_basis(10, 50, 4.0)
        c, res = fit_curve(np.zeros(51), np.zeros(51), np.zeros(51), basis)
        assert np.allclose(c, 0.0)
        assert res == 0.0

    def test_suffix_refit_round_trip(self):
        # a polynomial suffix re-expressed on the same-degree basis is exact
        n, N, T = 10, 50, 4.0
        basis = build_basis(n, N, T)
        rng = np.random.default_rng(4)
        c = rng.normal(size=n + 1)
        dt = T / N
        nu = (np.arange(N + 1) * dt + dt) / (T + dt)  # shifted suffix grid
        nu = np.clip(nu, 0.0, 1.0)
        from reachplan.bezier import _diff_matrix
        D1 = _diff_matrix(n, T + dt)
        D2 = _diff_matrix(n - 1, T + dt) @ D1
        big = build_basis(n, N, T + dt)  # same polynomial on longer horizon
        pos = _bernstein_matrix(n, nu).T @ c
        vel = _bernstein_matrix(n - 1, nu).T @ (D1 @ c)
        acc = _bernstein_matrix(n - 2, nu).T @ (D2 @ c)
        c_fit, res = fit_curve(pos, vel, acc, basis)
        assert np.abs(basis.B0.T @ c_fit - pos).max() < 1e-6
        assert res < 1e-6

    def test_line_control_points(self):
        basis = build_basis(10, 50, 4.0)
        c = line_control_points(2.0, 5.0, basis)
        states = reconstruct_states(BranchCurve(c, np.zeros(11), np.zeros(11)), basis)
        assert np.allclose(states[:, 0], 2.0 + 5.0 * np.arange(51) * (4.0 / 50))
        assert np.allclose(states[:, 4], 5.0)
