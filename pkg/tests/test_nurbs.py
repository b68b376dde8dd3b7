"""Tests for NURBS evaluation, derivatives, normals, projection and fitting."""
import numpy as np
import pytest

from core.errors import DomainError, FittingError, GeometryError
from core.meshgen import naca_curve
from core.nurbs import (
    KnotVector,
    NurbsCurve,
    basis_derivatives,
    find_span,
    fit_profile,
    make_line,
)


def test_circle_radius_is_exact(circle):
    for xi in np.linspace(0.0, 1.0, 1000):
        assert abs(np.hypot(*circle.evaluate(xi)) - 0.5) <= 1e-12


def test_circle_starts_and_ends_on_the_seam(circle):
    assert circle.is_closed
    np.testing.assert_allclose(circle.evaluate(0.0), [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(circle.evaluate(1.0), [0.5, 0.0], atol=1e-15)


def test_clockwise_circle_normal_points_into_the_solid(circle, ccw_circle):
    np.testing.assert_allclose(circle.outward_normal(0.0), [-1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(ccw_circle.outward_normal(0.0), [1.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("xi", [0.0, 0.1, 0.3, 0.5, 0.77, 1.0])
def test_normals_are_unit_and_orthogonal_to_tangent(circle, xi):
    n = circle.outward_normal(xi)
    assert np.hypot(*n) == pytest.approx(1.0, abs=1e-14)
    assert abs(n @ circle.derivative(xi)) <= 1e-12


@pytest.mark.parametrize("xi", [0.1, 0.3, 0.6, 0.9])
def test_derivatives_match_finite_differences(circle, xi):
    h = 1e-6
    fd1 = (circle.evaluate(xi + h) - circle.evaluate(xi - h)) / (2.0 * h)
    np.testing.assert_allclose(circle.derivative(xi, 1), fd1, rtol=1e-6, atol=1e-8)
    fd2 = (circle.derivative(xi + h) - circle.derivative(xi - h)) / (2.0 * h)
    np.testing.assert_allclose(circle.derivative(xi, 2), fd2, rtol=1e-5, atol=1e-5)


def test_point_and_tangent_agree_with_evaluate(circle):
    c, t = circle.point_and_tangent(0.4)
    np.testing.assert_allclose(c, circle.evaluate(0.4), atol=1e-15)
    np.testing.assert_allclose(t, circle.derivative(0.4), atol=1e-14)


def test_find_span(circle):
    kv = circle.knot_vector
    assert find_span(kv, 0.0) == 2
    assert find_span(kv, 0.25) == 4
    assert find_span(kv, 0.3) == 4
    assert find_span(kv, 1.0) == 8
    with pytest.raises(DomainError):
        find_span(kv, 1.5)


def test_basis_partition_of_unity(circle):
    kv = circle.knot_vector
    for xi in (0.0, 0.13, 0.5, 0.99):
        ders = basis_derivatives(kv, find_span(kv, xi), xi, 2)
        assert ders[0].sum() == pytest.approx(1.0, abs=1e-14)
        assert ders[1].sum() == pytest.approx(0.0, abs=1e-12)


def test_derivatives_above_degree_vanish(line):
    kv = line.knot_vector
    ders = basis_derivatives(kv, find_span(kv, 0.5), 0.5, 3)
    assert ders.shape == (4, 2)
    np.testing.assert_array_equal(ders[2:], 0.0)


def test_line_is_linear_in_xi(line):
    np.testing.assert_allclose(line.evaluate(0.5), [1.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(line.derivative(0.2), [2.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(line.derivative(0.2, 2), [0.0, 0.0], atol=1e-14)


def test_rational_basis_sums_to_one(circle):
    values, idx = circle.rational_basis(0.6)
    assert values.sum() == pytest.approx(1.0, abs=1e-14)
    assert len(idx) == circle.degree + 1


@pytest.mark.parametrize("knots, degree", [
    ([0.0, 0.0, 0.5, 1.0], 1),          # end not clamped
    ([0.0, 0.0, 0.7, 0.4, 1.0, 1.0], 1),  # decreasing
    ([0.0, 0.0, 1.0, 2.0, 2.0], 1),     # not on [0, 1]
])
def test_invalid_knot_vectors(knots, degree):
    with pytest.raises(GeometryError):
        KnotVector(knots, degree)


def test_nonpositive_weight_is_rejected():
    kv = KnotVector([0.0, 0.0, 1.0, 1.0], 1)
    with pytest.raises(GeometryError):
        NurbsCurve(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 0.0]), kv)


def test_control_point_count_must_match_knots():
    kv = KnotVector([0.0, 0.0, 1.0, 1.0], 1)
    with pytest.raises(GeometryError):
        NurbsCurve(np.zeros((3, 2)), np.ones(3), kv)


def test_closest_point_on_circle(circle):
    q = np.array([1.0, 1.0])
    xi = circle.closest_point(q)
    expected = 0.5 * q / np.hypot(*q)
    np.testing.assert_allclose(circle.evaluate(xi), expected, atol=1e-10)


def test_closest_point_of_a_curve_point_is_itself(circle):
    xi = circle.closest_point(circle.evaluate(0.37))
    assert xi == pytest.approx(0.37, abs=1e-10)


def test_closest_point_clamps_to_the_end(line):
    assert line.closest_point([4.0, 2.0]) == 1.0
    assert line.closest_point([-1.0, -0.5]) == 0.0


def test_fit_reproduces_a_quadratic_with_given_parameters():
    t = np.linspace(0.0, 1.0, 41)
    samples = np.column_stack([t, t ** 2])
    fit = fit_profile(samples, degree=2, n_ctrl=6, parameters=t)
    assert fit.max_deviation < 1e-10
    np.testing.assert_allclose(fit.curve.evaluate(0.0), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(fit.curve.evaluate(1.0), [1.0, 1.0], atol=1e-12)


def test_fit_needs_enough_samples():
    with pytest.raises(FittingError):
        fit_profile(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]]), degree=2, n_ctrl=5)


def test_fit_recovers_a_sampled_spline():
    n_ctrl = 20
    x = np.linspace(0.0, 1.0, n_ctrl)
    ctrl = np.column_stack([x, 0.1 * np.sin(3.0 * np.pi * x)])
    original = NurbsCurve(ctrl, np.ones(n_ctrl), KnotVector.clamped_uniform(4, n_ctrl))
    samples = np.array([original.evaluate(xi) for xi in np.linspace(0.0, 1.0, 300)])
    fit = fit_profile(samples, degree=4, n_ctrl=n_ctrl)
    assert fit.max_deviation <= 1e-8
    for xi in np.linspace(0.0, 1.0, 25):
        point = fit.curve.evaluate(xi)
        assert np.hypot(*(original.evaluate(original.closest_point(point)) - point)) <= 1e-7


def test_parameter_correction_beats_chord_length():
    t = np.linspace(0.0, 1.0, 60)
    samples = np.column_stack([np.cos(0.5 * np.pi * t), np.sin(0.5 * np.pi * t) ** 3])
    plain = fit_profile(samples, degree=3, n_ctrl=8, refine=False)
    corrected = fit_profile(samples, degree=3, n_ctrl=8)
    assert corrected.max_deviation < plain.max_deviation
    assert corrected.parameters[0] == 0.0
    assert corrected.parameters[-1] == 1.0


def test_naca_fit_is_closed_and_accurate():
    curve, deviation = naca_curve("0012")
    assert deviation <= 1e-4
    assert curve.is_closed
    np.testing.assert_allclose(curve.evaluate(0.0), [1.0, 0.0], atol=1e-14)


def test_make_line_ids():
    assert make_line((0, 0), (1, 0), curve_id=9).curve_id == 9
