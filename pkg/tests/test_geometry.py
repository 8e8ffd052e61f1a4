import numpy as np
import pytest
from hypothesis import given, assume, settings
from hypothesis import strategies as st

from nemalign.errors import NearZeroVector
from nemalign.geometry import (
    PeriodicBox,
    minimum_image,
    project_tangent,
    renormalize,
    wrap_position,
)


class TestProjectTangent:
    def test_removes_parallel_part(self):
        out = project_tangent(np.array([1.0, 0.0]), np.array([3.0, 4.0]))
        np.testing.assert_array_equal(out, [0.0, 4.0])

    def test_parallel_input_maps_to_zero(self):
        out = project_tangent(np.array([0.0, 1.0]), np.array([0.0, 5.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_3d(self):
        out = project_tangent(np.array([1.0, 0.0, 0.0]), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out, [0.0, 2.0, 3.0])

    def test_batched_rows(self):
        u = np.array([[1.0, 0.0], [0.0, 1.0]])
        w = np.array([[3.0, 4.0], [7.0, 5.0]])
        np.testing.assert_array_equal(project_tangent(u, w), [[0.0, 4.0], [7.0, 0.0]])


class TestMinimumImage:
    box = PeriodicBox(np.array([100.0, 100.0]))

    def test_wrap_across_boundary(self):
        out = minimum_image(self.box, np.array([1.0, 1.0]), np.array([99.0, 1.0]))
        np.testing.assert_allclose(out, [-2.0, 0.0], atol=1e-14)

    def test_coincident_points(self):
        x = np.array([3.0, 4.0])
        np.testing.assert_array_equal(minimum_image(self.box, x, x), [0.0, 0.0])

    def test_per_axis_folding(self):
        box = PeriodicBox(np.array([10.0, 10.0]))
        out = minimum_image(box, np.array([0.0, 0.0]), np.array([4.0, 7.0]))
        np.testing.assert_allclose(out, [4.0, -3.0], atol=1e-14)

    def test_half_boundary_is_half_open(self):
        box = PeriodicBox(np.array([10.0, 10.0]))
        out = minimum_image(box, np.array([0.0, 0.0]), np.array([5.0, 0.0]))
        assert out[0] == -5.0


class TestWrapPosition:
    def test_above_box(self):
        box = PeriodicBox(np.array([100.0, 100.0]))
        np.testing.assert_allclose(
            wrap_position(box, np.array([101.0, 50.0])), [1.0, 50.0]
        )

    def test_negative(self):
        box = PeriodicBox(np.array([100.0, 100.0]))
        np.testing.assert_allclose(
            wrap_position(box, np.array([-0.5, 0.0])), [99.5, 0.0]
        )

    def test_interior_fixed_point(self):
        box = PeriodicBox(np.array([100.0, 100.0]))
        np.testing.assert_array_equal(
            wrap_position(box, np.array([50.0, 2.0])), [50.0, 2.0]
        )

    def test_result_always_inside(self):
        box = PeriodicBox(np.array([7.5, 3.25]))
        rng = np.random.default_rng(0)
        x = rng.uniform(-1e3, 1e3, size=(1000, 2))
        w = wrap_position(box, x)
        assert np.all(w >= 0.0) and np.all(w < box.lengths)


class TestRenormalize:
    def test_simple(self):
        np.testing.assert_allclose(renormalize(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_already_unit(self):
        np.testing.assert_array_equal(renormalize(np.array([0.0, 1.0])), [0.0, 1.0])

    def test_near_zero_raises(self):
        with pytest.raises(NearZeroVector):
            renormalize(np.array([1e-12, 0.0]))

    def test_nan_raises(self):
        with pytest.raises(NearZeroVector):
            renormalize(np.array([np.nan, 1.0]))

    def test_batch_reports_offender(self):
        rows = np.array([[3.0, 4.0], [0.0, 0.0]])
        with pytest.raises(NearZeroVector):
            renormalize(rows)


class TestBoxValidation:
    def test_rejects_nonpositive_edges(self):
        with pytest.raises(ValueError):
            PeriodicBox(np.array([1.0, 0.0]))

    def test_rejects_wrong_dimension(self):
        with pytest.raises(ValueError):
            PeriodicBox(np.array([1.0, 1.0, 1.0, 1.0]))


# -- property-based checks --------------------------------------------------

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
lengths2 = st.tuples(
    st.floats(min_value=0.1, max_value=1e3), st.floats(min_value=0.1, max_value=1e3)
)


@settings(deadline=None)
@given(lengths2, st.tuples(finite, finite), st.tuples(finite, finite))
def test_minimum_image_antisymmetric(L, a, b):
    box = PeriodicBox(np.array(L))
    x = wrap_position(box, np.array(a))
    y = wrap_position(box, np.array(b))
    d = y - x
    # the half-open convention breaks exact antisymmetry on the boundary set
    assume(np.all(np.abs(np.abs(np.mod(d, box.lengths)) - box.lengths / 2) > 1e-9))
    np.testing.assert_array_equal(
        minimum_image(box, x, y), -minimum_image(box, y, x)
    )


@settings(deadline=None)
@given(lengths2, st.tuples(finite, finite), st.tuples(finite, finite))
def test_minimum_image_never_longer_than_raw(L, a, b):
    box = PeriodicBox(np.array(L))
    x = wrap_position(box, np.array(a))
    y = wrap_position(box, np.array(b))
    m = minimum_image(box, x, y)
    assert np.linalg.norm(m) <= np.linalg.norm(y - x) * (1 + 1e-12) + 1e-12
    assert np.all(m >= -box.lengths / 2) and np.all(m < box.lengths / 2)


unit_angle = st.floats(min_value=0.0, max_value=2 * np.pi, exclude_max=True)


@settings(deadline=None)
@given(unit_angle, st.tuples(finite, finite))
def test_project_tangent_idempotent_and_orthogonal(theta, w):
    u = np.array([np.cos(theta), np.sin(theta)])
    w = np.array(w)
    p = project_tangent(u, w)
    scale = max(1.0, np.linalg.norm(w))
    assert abs(float(u @ p)) <= 1e-12 * scale
    np.testing.assert_allclose(project_tangent(u, p), p, atol=1e-12 * scale)


@settings(deadline=None)
@given(unit_angle, st.tuples(finite, finite), st.tuples(finite, finite),
       st.floats(min_value=-10, max_value=10, allow_nan=False),
       st.floats(min_value=-10, max_value=10, allow_nan=False))
def test_project_tangent_linear(theta, w1, w2, a, b):
    u = np.array([np.cos(theta), np.sin(theta)])
    w1, w2 = np.array(w1), np.array(w2)
    lhs = project_tangent(u, a * w1 + b * w2)
    rhs = a * project_tangent(u, w1) + b * project_tangent(u, w2)
    scale = max(1.0, np.linalg.norm(a * w1) + np.linalg.norm(b * w2))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * scale)
