"""Tests for the O-grid generator and the airfoil profile."""
import numpy as np
import pytest

from core.errors import DomainError, GeometryError
from core.mesh import classify_elements
from core.meshgen import (
    INFLOW_TAG,
    OUTFLOW_TAG,
    cylinder_mesh,
    default_layers,
    naca4_profile,
    naca_mesh,
    ogrid_mesh,
    stretching,
)


@pytest.mark.parametrize("n_wall, layers", [(64, 52), (128, 105), (256, 210), (1, 1)])
def test_default_layers(n_wall, layers):
    assert default_layers(n_wall) == layers


def test_geometric_stretching():
    g = stretching(4, 0.1, 1.0)
    assert g[0] == 0.0
    assert g[-1] == 1.0
    assert g[1] == pytest.approx(0.1, rel=1e-9)
    ratios = np.diff(g)[1:] / np.diff(g)[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
    assert ratios[0] > 1.0


def test_thick_first_layer_falls_back_to_uniform():
    np.testing.assert_allclose(stretching(4, 0.5, 1.0), [0.0, 0.25, 0.5, 0.75, 1.0])


def test_stretching_needs_layers():
    with pytest.raises(DomainError):
        stretching(0, 0.1, 1.0)


def test_cylinder_grid():
    mesh, curve = cylinder_mesh(16, 4)
    assert mesh.n_nodes == 80
    assert mesh.n_triangles == 128
    assert len(mesh.tagged_edges(curve.curve_id)) == 16
    assert len(mesh.tagged_edges(INFLOW_TAG)) == 8
    assert len(mesh.tagged_edges(OUTFLOW_TAG)) == 8
    np.testing.assert_allclose(np.hypot(*mesh.nodes[:16].T), 0.5, atol=1e-14)
    np.testing.assert_allclose(np.hypot(*mesh.nodes[-16:].T), 4.0, rtol=1e-12)
    assert np.all(mesh.signed_areas() > 0.0)


def test_wall_nodes_sit_at_uniform_parameters(circle):
    mesh = ogrid_mesh(circle, (0.0, 0.0), 16, 4, 2.0)
    for k in (0, 3, 11):
        np.testing.assert_allclose(mesh.nodes[k], circle.evaluate(k / 16), atol=1e-14)


def test_outflow_can_be_disabled(circle):
    mesh = ogrid_mesh(circle, (0.0, 0.0), 16, 4, 2.0, outflow=False)
    assert len(mesh.tagged_edges(INFLOW_TAG)) == 16
    assert len(mesh.tagged_edges(OUTFLOW_TAG)) == 0


def test_counterclockwise_wall_is_rejected(ccw_circle):
    with pytest.raises(GeometryError):
        ogrid_mesh(ccw_circle, (0.0, 0.0), 16, 4, 2.0)


def test_open_wall_is_rejected(line):
    with pytest.raises(GeometryError):
        ogrid_mesh(line, (0.0, 0.0), 16, 4, 5.0)


def test_far_field_must_enclose_the_wall(circle):
    with pytest.raises(GeometryError):
        ogrid_mesh(circle, (0.0, 0.0), 16, 4, 0.4)


def test_airfoil_grid_is_classified():
    mesh, curve = naca_mesh(32, 6)
    assert mesh.n_triangles == 2 * 32 * 6
    assert len(mesh.tagged_edges(OUTFLOW_TAG)) == 0
    records = classify_elements(mesh, {curve.curve_id: curve}, {curve.curve_id: curve.curve_id})
    assert len(records) == 32


def test_naca_profile():
    samples = naca4_profile("0012")
    np.testing.assert_array_equal(samples[0], [1.0, 0.0])
    np.testing.assert_array_equal(samples[-1], [1.0, 0.0])
    assert samples[:, 1].max() == pytest.approx(0.06, abs=1e-3)
    assert samples[:, 1].min() == pytest.approx(-0.06, abs=1e-3)
    assert samples[:, 0].min() == pytest.approx(0.0, abs=1e-14)


def test_naca_profile_follows_the_analytic_thickness():
    samples = naca4_profile("0012")
    assert len(samples) == 401
    x = samples[1:-1, 0]
    yt = 0.6 * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x ** 2 + 0.2843 * x ** 3 - 0.1015 * x ** 4)
    np.testing.assert_allclose(np.abs(samples[1:-1, 1]), yt, atol=1e-15)
    # the formula leaves the trailing edge open by 2 x 0.00126
    assert samples[1, 1] == pytest.approx(-0.00126, abs=2e-5)
    assert samples[-2, 1] == pytest.approx(0.00126, abs=2e-5)


@pytest.mark.parametrize("code", ["12", "00a2", "0000"])
def test_bad_naca_codes(code):
    with pytest.raises(DomainError):
        naca4_profile(code)
