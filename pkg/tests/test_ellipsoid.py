"""Ellipsoid algebra: membership, containment, outer sums, MVEE."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import min_enclosing_ellipse_area, sampled_enclose_point_area
from reachplan.ellipsoid import (
    AxisAlignedEllipse,
    Ellipsoid,
    axis_aligned_outer,
    contains,
    enclose_point,
    mahalanobis,
    minkowski_outer,
    mvee,
    project_position,
    volume,
)


def random_ellipsoid(rng, dim=2, scale=1.0):
    A = rng.normal(size=(dim, dim))
    return Ellipsoid(rng.normal(size=dim) * scale,
                     A @ A.T + 0.2 * np.eye(dim))


class TestConstruction:
    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Ellipsoid(np.zeros(2), np.eye(3))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            Ellipsoid(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            Ellipsoid(np.zeros(2), np.diag([1.0, -1.0]))

    def test_axis_aligned_needs_positive_semi_axes(self):
        with pytest.raises(ValueError):
            AxisAlignedEllipse(np.zeros(2), np.array([1.0, 0.0]))

    def test_axis_aligned_as_ellipsoid(self):
        e = AxisAlignedEllipse(np.array([1.0, 2.0]), np.array([3.0, 0.5]))
        ell = e.as_ellipsoid()
        assert np.allclose(ell.center, [1.0, 2.0])
        assert np.allclose(ell.shape, np.diag([9.0, 0.25]))


class TestMahalanobis:
    def test_unit_disk(self):
        assert mahalanobis(Ellipsoid(np.zeros(2), np.eye(2)), [2.0, 0.0]) == pytest.approx(2.0)

    def test_semi_axis_boundary(self):
        assert mahalanobis(Ellipsoid(np.zeros(2), np.diag([4.0, 1.0])), [2.0, 0.0]) == pytest.approx(1.0)

    def test_center(self):
        e = Ellipsoid(np.array([1.0, -2.0]), np.eye(2))
        assert mahalanobis(e, [1.0, -2.0]) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            mahalanobis(Ellipsoid(np.zeros(2), np.eye(2)), [1.0, 2.0, 3.0])


class TestContains:
    def test_identical(self):
        e = Ellipsoid(np.array([1.0, 2.0]), np.diag([2.0, 3.0]))
        assert contains(e, e)

    def test_nested_disks(self):
        inner = Ellipsoid(np.zeros(2), np.eye(2))
        outer = Ellipsoid(np.zeros(2), 4.0 * np.eye(2))
        assert contains(outer, inner)
        assert not contains(inner, outer)

    def test_agrees_with_sampling_oracle(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 30:
            outer = random_ellipsoid(rng, scale=0.5)
            inner = random_ellipsoid(rng, scale=0.5)
            pts = inner.sample_boundary(10_000)
            r = pts - outer.center
            margin = np.einsum(
                "ij,ij->i", r @ np.linalg.inv(outer.shape), r).max()
            if abs(margin - 1.0) < 1e-3:
                continue  # sampling oracle not decisive on this pair
            assert contains(outer, inner) == (margin <= 1.0)
            checked += 1


class TestMinkowskiOuter:
    def test_equal_balls_exact(self):
        e = Ellipsoid(np.zeros(2), np.eye(2))
        out = minkowski_outer(e, e)
        assert np.allclose(out.shape, 4.0 * np.eye(2))
        assert np.allclose(out.center, 0.0)

    def test_degenerate_limit(self):
        rng = np.random.default_rng(0)
        e1 = random_ellipsoid(rng)
        e2 = Ellipsoid(np.zeros(2), 1e-10 * np.eye(2))
        out = minkowski_outer(e1, e2)
        # the trace-optimal parameter leaves an O(sqrt(eps)) imprint
        assert np.abs(out.shape - e1.shape).max() < 1e-4

    def test_sampled_sums_inside(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            e1 = random_ellipsoid(rng)
            e2 = random_ellipsoid(rng)
            out = minkowski_outer(e1, e2)
            s = e1.sample_boundary(100)[:, None, :] + e2.sample_boundary(100)[None, :, :]
            r = s.reshape(-1, 2) - out.center
            vals = np.einsum("ij,ij->i", r @ np.linalg.inv(out.shape), r)
            assert vals.max() <= 1.0 + 1e-9


class TestProjection:
    def test_block_diagonal(self):
        e = Ellipsoid(np.array([1.0, 2.0, 3.0, 4.0]), np.diag([1.0, 4.0, 9.0, 16.0]))
        p = project_position(e)
        assert np.allclose(p.center, [1.0, 2.0])
        assert np.allclose(p.shape, np.diag([1.0, 4.0]))

    def test_isotropic(self):
        p = project_position(Ellipsoid(np.zeros(4), np.eye(4)))
        assert np.allclose(p.shape, np.eye(2))

    def test_sampled_members_project_inside(self):
        rng = np.random.default_rng(2)
        e = random_ellipsoid(rng, dim=4)
        pts = e.sample_interior(10_000, rng)[:, :2]
        p = project_position(e)
        r = pts - p.center
        vals = np.einsum("ij,ij->i", r @ np.linalg.inv(p.shape), r)
        assert vals.max() <= 1.0 + 1e-9


class TestAxisAlignedOuter:
    def test_already_aligned_exact(self):
        out = axis_aligned_outer(Ellipsoid(np.zeros(2), np.diag([4.0, 1.0])))
        assert np.allclose(out.semi_axes, [2.0, 1.0])

    def test_rotated_bound(self):
        e = Ellipsoid(np.zeros(2), np.array([[2.0, 1.0], [1.0, 2.0]]))
        out = axis_aligned_outer(e)
        assert np.allclose(out.semi_axes, [2.0, 2.0])
        pts = e.sample_boundary(10_000)
        lx, ly = out.semi_axes
        assert ((pts[:, 0] / lx) ** 2 + (pts[:, 1] / ly) ** 2).max() <= 1.0 + 1e-9

    def test_unit_disk(self):
        out = axis_aligned_outer(Ellipsoid(np.zeros(2), np.eye(2)))
        assert np.allclose(out.semi_axes, [1.0, 1.0])


class TestVolume:
    def test_unit_disk(self):
        assert volume(Ellipsoid(np.zeros(2), np.eye(2))) == pytest.approx(np.pi)

    def test_diagonal(self):
        assert volume(Ellipsoid(np.zeros(2), np.diag([4.0, 1.0]))) == pytest.approx(2 * np.pi)

    def test_matches_rejection_sampling(self):
        rng = np.random.default_rng(4)
        e = random_ellipsoid(rng)
        lo = e.center - 4.0
        hi = e.center + 4.0
        pts = rng.uniform(lo, hi, size=(400_000, 2))
        r = pts - e.center
        inside = np.einsum("ij,ij->i", r @ np.linalg.inv(e.shape), r) <= 1.0
        est = inside.mean() * np.prod(hi - lo)
        assert volume(e) == pytest.approx(est, rel=0.01)


class TestMvee:
    def test_symmetric_cross_is_unit_disk(self):
        out = mvee(np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], float))
        assert volume(out) == pytest.approx(np.pi, rel=1e-3)
        assert np.abs(out.center).max() < 1e-6

    def test_square_is_sqrt2_disk(self):
        out = mvee(np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], float))
        assert volume(out) == pytest.approx(2 * np.pi, rel=1e-3)

    def test_repeated_point_degenerate(self):
        out = mvee(np.array([[2.0, 3.0]] * 4))
        assert np.allclose(out.center, [2.0, 3.0])
        assert np.allclose(out.shape, 1e-8 * np.eye(2))

    def test_matches_exact_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(3, 9))
            P = rng.normal(size=(n, 2)) * rng.uniform(0.5, 3.0, size=2)
            oracle = min_enclosing_ellipse_area(P)
            assert volume(mvee(P)) == pytest.approx(oracle, rel=1e-3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mvee(np.zeros((0, 2)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 12))
    def test_contains_all_points(self, seed, n):
        rng = np.random.default_rng(seed)
        P = rng.normal(size=(n, 2)) * rng.uniform(0.2, 5.0)
        out = mvee(P)
        r = P - out.center
        vals = np.einsum("ij,ij->i", r @ np.linalg.inv(out.shape), r)
        assert vals.max() <= 1.0 + 1e-9


class TestEnclosePoint:
    def test_interior_point_unchanged(self):
        e = Ellipsoid(np.zeros(2), np.diag([4.0, 1.0]))
        assert enclose_point(e, [0.5, 0.2]) is e

    def test_boundary_point_unchanged(self):
        e = Ellipsoid(np.zeros(2), np.eye(2))
        assert enclose_point(e, [1.0, 0.0]) is e

    def test_unit_disk_plus_exterior_point(self):
        e = Ellipsoid(np.zeros(2), np.eye(2))
        u = np.array([3.0, 0.0])
        out = enclose_point(e, u)
        assert mahalanobis(out, u) <= 1.0 + 1e-9
        assert contains(out, e, tol=1e-9)
        oracle = sampled_enclose_point_area(e, u)
        assert volume(out) == pytest.approx(oracle, rel=1e-3)

    def test_matches_sampled_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            e = random_ellipsoid(rng)
            u = e.center + rng.normal(size=2) * 4.0
            if mahalanobis(e, u) <= 1.05:
                continue
            out = enclose_point(e, u)
            oracle = sampled_enclose_point_area(e, u)
            assert volume(out) == pytest.approx(oracle, rel=1e-3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_contains_both_arguments(self, seed):
        rng = np.random.default_rng(seed)
        e = random_ellipsoid(rng)
        u = e.center + rng.normal(size=2) * 5.0
        out = enclose_point(e, u)
        assert mahalanobis(out, u) <= 1.0 + 1e-6
        assert contains(out, e, tol=1e-6)
