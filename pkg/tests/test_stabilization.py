"""Tests for the SUPG and shock-capturing parameters."""
import numpy as np
import pytest

from core.errors import DomainError
from core.physics import ConstantCoefficientModel, GasModel, NavierStokesModel
from core.stabilization import TauParams, residual_scaling, tau_dc, tau_mom


def test_tau_for_the_inviscid_cylinder_stream(cylinder_stream):
    U = cylinder_stream.state
    dt, h = 0.05, 0.1
    expected = 1.0 / np.sqrt((2.0 / dt) ** 2 + (2.0 * (1.0 + cylinder_stream.sound_speed) / h) ** 2)
    assert tau_mom(U, h, dt, cylinder_stream.gas) == pytest.approx(expected, rel=1e-14)


def test_viscosity_lowers_tau(cylinder_stream):
    gas = GasModel(mu=0.05)
    U = cylinder_stream.state
    inviscid = tau_mom(U, 0.1, 0.05, cylinder_stream.gas)
    viscous = tau_mom(U, 0.1, 0.05, NavierStokesModel(gas))
    assert viscous < inviscid


def test_tau_is_vectorized(cylinder_stream):
    U = np.tile(cylinder_stream.state, (3, 1))
    tau = tau_mom(U, np.array([0.1, 0.2, 0.4]), 0.05, cylinder_stream.gas)
    assert tau.shape == (3,)
    assert np.all(np.diff(tau) > 0.0)


@pytest.mark.parametrize("h, dt", [(0.0, 0.1), (-1.0, 0.1), (0.1, 0.0)])
def test_tau_needs_positive_sizes(cylinder_stream, h, dt):
    with pytest.raises(DomainError):
        tau_mom(cylinder_stream.state, h, dt, cylinder_stream.gas)


def test_shock_capturing_formula():
    model = ConstantCoefficientModel(speed=10.0)
    R = np.array([3.0, 4.0, 0.0, 0.0])
    grad = np.zeros((4, 2))
    grad[0] = (2.0, 0.0)
    nu = tau_dc(R, grad, 1.0, None, np.ones(4), model)
    assert nu == pytest.approx(0.5 * 5.0 / 2.0)


def test_shock_capturing_is_clamped():
    model = ConstantCoefficientModel(speed=2.0)
    R = np.array([100.0, 0.0, 0.0, 0.0])
    grad = np.zeros((4, 2))
    nu = tau_dc(R, grad, 0.5, None, np.ones(4), model, clamp_factor=1.0)
    assert nu == pytest.approx(0.5 * 0.5 * 2.0)


def test_zero_residual_needs_no_capturing(cylinder_stream):
    nu = tau_dc(np.zeros(4), np.ones((4, 2)), 0.1, cylinder_stream, cylinder_stream.state, cylinder_stream.gas)
    assert nu == 0.0


def test_residual_scaling(cylinder_stream):
    np.testing.assert_allclose(residual_scaling(cylinder_stream), [1.0, 1.0, 1.0, 1.1179])
    np.testing.assert_array_equal(residual_scaling(None), np.ones(4))


def test_tau_params_validation():
    params = TauParams([0.1, 0.2], [0.0, 0.3])
    np.testing.assert_array_equal(params.tau_matrix(1), 0.2 * np.eye(4))
    assert TauParams.zeros(3).tau.shape == (3,)
    with pytest.raises(DomainError):
        TauParams([-0.1], [0.0])
    with pytest.raises(DomainError):
        TauParams([0.1], [np.inf])
