"""Tests for force coefficients and wall samples."""
import numpy as np
import pytest

from core.assembly import BoundaryCondition, discretize
from core.errors import DomainError
from core.forces import (
    ForceCoefficients,
    WallSample,
    cp_jump_ratio,
    drag_coefficient,
    max_mach,
    wall_position,
    wall_samples,
)
from core.mapping import curved_edge_quadrature
from core.mesh import classify_elements
from core.physics import ConstantCoefficientModel, FreeStream, GasModel, NavierStokesModel
from tests.conftest import square_mesh


def ring_disc(ring, circle, fs, mode="NEFEM"):
    records = classify_elements(ring, {1: circle}, {1: 1})
    bcs = [BoundaryCondition("slip", 1), BoundaryCondition("inflow", 2, values=fs.state),
           BoundaryCondition("outflow", 3)]
    return discretize(ring, NavierStokesModel(fs.gas), bcs, records, {1: circle}, mode=mode, freestream=fs)


def linear_pressure_state(mesh, slope=0.1):
    p = 1.0 - slope * mesh.nodes[:, 0]
    U = np.zeros((mesh.n_nodes, 4))
    U[:, 0] = 1.0
    U[:, 3] = p / 0.4
    return U


@pytest.mark.parametrize("mode", ["NEFEM", "SFEM"])
def test_uniform_stream_has_no_net_force(ring, circle, cylinder_stream, mode):
    disc = ring_disc(ring, circle, cylinder_stream, mode)
    U = np.tile(cylinder_stream.state, (ring.n_nodes, 1))
    coeffs = drag_coefficient(disc, U, cylinder_stream)
    assert coeffs.cd == pytest.approx(0.0, abs=1e-10)
    assert coeffs.cl == pytest.approx(0.0, abs=1e-10)
    assert coeffs.cd_viscous == 0.0


def test_linear_pressure_on_the_polygon(ring, circle, cylinder_stream):
    disc = ring_disc(ring, circle, cylinder_stream, "SFEM")
    coeffs = drag_coefficient(disc, linear_pressure_state(ring), cylinder_stream)
    polygon_area = 8.0 * 0.25 * np.sin(np.pi / 8.0)
    assert coeffs.cd_pressure == pytest.approx(0.1 * polygon_area / 0.5, rel=1e-10)
    assert coeffs.cl_pressure == pytest.approx(0.0, abs=1e-12)


def test_linear_pressure_on_the_exact_circle(ring, circle, cylinder_stream):
    disc = ring_disc(ring, circle, cylinder_stream, "NEFEM")
    coeffs = drag_coefficient(disc, linear_pressure_state(ring), cylinder_stream)
    assert coeffs.cd_pressure == pytest.approx(0.1 * (np.pi / 4.0) / 0.5, rel=0.05)


def test_cosine_pressure_on_the_exact_circle(ring, circle):
    total = np.zeros(2)
    for rec in classify_elements(ring, {1: circle}, {1: 1}):
        quad = curved_edge_quadrature(rec, circle)
        cos_theta = quad.points[:, 0] / np.hypot(quad.points[:, 0], quad.points[:, 1])
        total += quad.weights @ (cos_theta[:, None] * quad.normals)
    # normals point into the cylinder, so the integral is -pi r
    assert total[0] == pytest.approx(-np.pi * 0.5, abs=1e-8)
    assert total[1] == pytest.approx(0.0, abs=1e-8)


@pytest.fixture
def couette():
    """Shear flow u = k y over a no-slip floor."""
    mu, k = 0.01, 0.3
    fs = FreeStream(1.0, 1.0, 0.0, 2.0, GasModel(mu=mu))
    mesh = square_mesh(2, tags=(1, 3, 3, 3))
    bcs = [BoundaryCondition("noslip", 1), BoundaryCondition("outflow", 3)]
    disc = discretize(mesh, NavierStokesModel(fs.gas), bcs, mode="SFEM", freestream=fs)
    U = np.zeros((mesh.n_nodes, 4))
    U[:, 0] = 1.0
    U[:, 1] = k * mesh.nodes[:, 1]
    U[:, 3] = 2.0
    return disc, U, fs, mu, k


def test_viscous_drag_of_a_shear_flow(couette):
    disc, U, fs, mu, k = couette
    coeffs = drag_coefficient(disc, U, fs)
    assert coeffs.cd_viscous == pytest.approx(mu * k / 0.5, rel=1e-10)
    assert coeffs.cl_viscous == pytest.approx(0.0, abs=1e-12)
    assert coeffs.cd_pressure == pytest.approx(0.0, abs=1e-12)


def test_skin_friction_of_a_shear_flow(couette):
    disc, U, fs, mu, k = couette
    samples = wall_samples(disc, U, fs, coordinate="x")
    assert [s.position for s in samples] == pytest.approx([0.0, 0.5, 1.0])
    assert {s.surface for s in samples} == {"upper"}
    for s in samples:
        assert s.cf == pytest.approx(2.0 * mu * k, rel=1e-10)


def test_wall_position_angles():
    points = np.array([[-1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])
    np.testing.assert_allclose(wall_position(points), [0.0, 90.0, 180.0, 270.0], atol=1e-12)
    np.testing.assert_allclose(wall_position(points + 2.0, center=(2.0, 2.0)), [0.0, 90.0, 180.0, 270.0],
                               atol=1e-12)


def test_wall_position_chord_fraction():
    points = np.array([[0.0, 0.0], [0.25, 0.1], [1.0, 0.0]])
    np.testing.assert_allclose(wall_position(points, "x"), [0.0, 0.25, 1.0])
    with pytest.raises(DomainError):
        wall_position(np.array([[0.5, 0.0], [0.5, 1.0]]), "x")
    with pytest.raises(DomainError):
        wall_position(points, "s")


def test_wall_samples_around_the_cylinder(ring, circle, cylinder_stream):
    disc = ring_disc(ring, circle, cylinder_stream)
    U = np.tile(cylinder_stream.state, (ring.n_nodes, 1))
    samples = wall_samples(disc, U, cylinder_stream)
    assert len(samples) == 16
    positions = [s.position for s in samples]
    assert positions == sorted(positions)
    assert all(abs(s.cp) < 1e-12 for s in samples)
    assert all(s.cf is None for s in samples)
    np.testing.assert_allclose([np.hypot(s.x, s.y) for s in samples], 0.5, atol=1e-12)


def test_max_mach_of_the_free_stream(ring, circle, cylinder_stream):
    disc = ring_disc(ring, circle, cylinder_stream)
    U = np.tile(cylinder_stream.state, (ring.n_nodes, 1))
    assert max_mach(disc, U) == pytest.approx(1.7, abs=1e-3)


def _samples(cps, surface="upper"):
    return [WallSample(position=float(k), x=float(k), y=0.0, p=0.0, cp=cp, surface=surface)
            for k, cp in enumerate(cps)]


def test_cp_jump_ratio_flags_a_shock():
    samples = _samples([0.0, 0.1, 0.2, 0.3, 1.3, 1.4])
    assert cp_jump_ratio(samples) == pytest.approx(10.0, rel=1e-9)


def test_cp_jump_ratio_skips_short_surfaces():
    assert cp_jump_ratio(_samples([0.0, 1.0])) == 0.0
    assert cp_jump_ratio([]) == 0.0


def test_wall_quantities_need_a_gas_model(square):
    disc = discretize(square, ConstantCoefficientModel())
    with pytest.raises(DomainError):
        drag_coefficient(disc, np.ones((9, 4)), FreeStream(1.0, 1.0, 0.0, 2.0))


def test_coefficient_totals():
    coeffs = ForceCoefficients(cd_pressure=1.0, cd_viscous=0.25, cl_pressure=-0.5, cl_viscous=0.125)
    assert coeffs.as_dict() == {
        "cd": 1.25, "cd_pressure": 1.0, "cd_viscous": 0.25,
        "cl": -0.375, "cl_pressure": -0.5, "cl_viscous": 0.125,
    }
