"""
Compressible-flow state algebra for U = (rho, rho u, rho v, rho e).

Ideal gas, constant viscosity, Stokes hypothesis. All functions accept
arrays with the four conservation variables on the last axis, and
complex-valued states (used for the complex-step tangent).
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.errors import DomainError, InvalidStateError

logger = logging.getLogger(__name__)

N_DOF = 4


@dataclass(frozen=True)
class GasModel:
    """Ideal gas with constant dynamic viscosity."""

    gamma: float = 1.4
    mu: float = 0.0
    prandtl: float = 0.72
    inviscid: bool = False

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if self.mu < 0.0:
            raise DomainError(f"viscosity must be nonnegative, got {self.mu}")
        if self.prandtl <= 0.0:
            raise DomainError(f"Prandtl number must be positive, got {self.prandtl}")

    @property
    def is_viscous(self) -> bool:
        return not self.inviscid and self.mu > 0.0

    @property
    def conductivity(self) -> float:
        """Coefficient of the internal-energy gradient in the heat flux, mu gamma / Pr."""
        return self.mu * self.gamma / self.prandtl


@dataclass(frozen=True)
class FreeStream:
    """Free-stream state given by density, velocity and total specific energy."""

    rho: float
    u: float
    v: float
    e: float
    gas: GasModel = GasModel()
    reference_length: float = 1.0

    @property
    def speed(self) -> float:
        return float(np.hypot(self.u, self.v))

    @property
    def pressure(self) -> float:
        p = (self.gas.gamma - 1.0) * self.rho * (self.e - 0.5 * self.speed ** 2)
        if p <= 0.0:
            raise InvalidStateError(f"free stream has nonpositive pressure {p}")
        return p

    @property
    def sound_speed(self) -> float:
        return float(np.sqrt(self.gas.gamma * self.pressure / self.rho))

    @property
    def mach(self) -> float:
        return self.speed / self.sound_speed

    @property
    def reynolds(self) -> float:
        if not self.gas.is_viscous:
            return float("inf")
        return self.rho * self.speed * self.reference_length / self.gas.mu

    @property
    def dynamic_pressure(self) -> float:
        q = 0.5 * self.rho * self.speed ** 2
        if q == 0.0:
            raise DomainError("free-stream speed is zero; pressure coefficient undefined")
        return q

    @property
    def state(self) -> np.ndarray:
        return np.array([self.rho, self.rho * self.u, self.rho * self.v, self.rho * self.e])

    def with_reynolds(self, reynolds: float, prandtl: float = 0.72) -> "FreeStream":
        """Same state with mu set from Re = rho |u| L / mu."""
        mu = self.rho * self.speed * self.reference_length / reynolds
        gas = GasModel(self.gas.gamma, mu, prandtl, inviscid=False)
        return FreeStream(self.rho, self.u, self.v, self.e, gas, self.reference_length)

    @classmethod
    def from_mach(cls, mach: float, gas: GasModel = GasModel(), rho: float = 1.0, speed: float = 1.0,
                  angle: float = 0.0, reference_length: float = 1.0) -> "FreeStream":
        c = speed / mach
        p = rho * c ** 2 / gas.gamma
        e = p / ((gas.gamma - 1.0) * rho) + 0.5 * speed ** 2
        return cls(rho, speed * np.cos(angle), speed * np.sin(angle), e, gas, reference_length)


def _real(x):
    return np.real(x) if np.iscomplexobj(x) else x


def check_state(U: np.ndarray, gas: GasModel):
    """Raise InvalidStateError on nonpositive density or pressure."""
    U = np.asarray(U)
    rho = _real(U[..., 0])
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0.0):
        raise InvalidStateError("nonpositive or non-finite density")
    p = _real(pressure_unchecked(U, gas))
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0):
        raise InvalidStateError("nonpositive or non-finite pressure")


def pressure_unchecked(U: np.ndarray, gas: GasModel) -> np.ndarray:
    rho = U[..., 0]
    return (gas.gamma - 1.0) * (U[..., 3] - 0.5 * (U[..., 1] ** 2 + U[..., 2] ** 2) / rho)


def pressure(U: np.ndarray, gas: GasModel) -> np.ndarray:
    """p = (gamma - 1) (rho e - |rho u|^2 / (2 rho))."""
    check_state(U, gas)
    return pressure_unchecked(np.asarray(U), gas)


def sound_speed(U: np.ndarray, gas: GasModel) -> np.ndarray:
    U = np.asarray(U)
    return np.sqrt(gas.gamma * pressure(U, gas) / U[..., 0])


def velocity(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U)
    return U[..., 1:3] / U[..., 0:1]


def mach_number(U: np.ndarray, gas: GasModel) -> np.ndarray:
    U = np.asarray(U)
    speed = np.hypot(U[..., 1], U[..., 2]) / U[..., 0]
    return speed / sound_speed(U, gas)


def primitive_to_conservative(rho, u, v, p, gas: GasModel) -> np.ndarray:
    rho, u, v, p = (np.asarray(x, dtype=float) for x in (rho, u, v, p))
    E = p / (gas.gamma - 1.0) + 0.5 * rho * (u ** 2 + v ** 2)
    return np.stack([rho, rho * u, rho * v, E], axis=-1)


def conservative_to_primitive(U: np.ndarray, gas: GasModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    U = np.asarray(U)
    p = pressure(U, gas)
    return U[..., 0], U[..., 1] / U[..., 0], U[..., 2] / U[..., 0], p


def euler_flux(U: np.ndarray, gas: GasModel) -> np.ndarray:
    """
    Inviscid fluxes F_1, F_2.

    Returns:
        Array (..., 2, 4)
    """
    U = np.asarray(U)
    rho, mx, my, E = U[..., 0], U[..., 1], U[..., 2], U[..., 3]
    u, v = mx / rho, my / rho
    p = pressure_unchecked(U, gas)
    f1 = np.stack([mx, mx * u + p, my * u, u * (E + p)], axis=-1)
    f2 = np.stack([my, mx * v, my * v + p, v * (E + p)], axis=-1)
    return np.stack([f1, f2], axis=-2)


def euler_jacobian(U: np.ndarray, gas: GasModel) -> np.ndarray:
    """
    Conservation-variable Euler Jacobians A_i = dF_i/dU.

    Returns:
        Array (..., 2, 4, 4)
    """
    U = np.asarray(U)
    g = gas.gamma
    gm1 = g - 1.0
    rho = U[..., 0]
    u, v = U[..., 1] / rho, U[..., 2] / rho
    q2 = u * u + v * v
    p = pressure_unchecked(U, gas)
    H = (U[..., 3] + p) / rho
    phi = 0.5 * gm1 * q2
    zero = np.zeros_like(u)
    one = np.ones_like(u)

    a1 = np.stack([
        np.stack([zero, one, zero, zero], axis=-1),
        np.stack([phi - u * u, (3.0 - g) * u, -gm1 * v, gm1 * one], axis=-1),
        np.stack([-u * v, v, u, zero], axis=-1),
        np.stack([u * (phi - H), H - gm1 * u * u, -gm1 * u * v, g * u], axis=-1),
    ], axis=-2)
    a2 = np.stack([
        np.stack([zero, zero, one, zero], axis=-1),
        np.stack([-u * v, v, u, zero], axis=-1),
        np.stack([phi - v * v, -gm1 * u, (3.0 - g) * v, gm1 * one], axis=-1),
        np.stack([v * (phi - H), -gm1 * u * v, H - gm1 * v * v, g * v], axis=-1),
    ], axis=-2)
    return np.stack([a1, a2], axis=-3)


def _primitive_gradient_rows(U: np.ndarray):
    # rows mapping dU/dx to du/dx, dv/dx and d(internal energy)/dx
    rho = U[..., 0]
    u, v = U[..., 1] / rho, U[..., 2] / rho
    et = U[..., 3] / rho
    zero = np.zeros_like(u)
    one = np.ones_like(u)
    du = np.stack([-u, one, zero, zero], axis=-1) / rho[..., None]
    dv = np.stack([-v, zero, one, zero], axis=-1) / rho[..., None]
    deps = np.stack([u * u + v * v - et, -u, -v, one], axis=-1) / rho[..., None]
    return u, v, du, dv, deps


def viscous_flux(U: np.ndarray, gradU: np.ndarray, gas: GasModel) -> np.ndarray:
    """
    Viscous fluxes E_1, E_2 from conservation variables and their gradients.

    Args:
        U: (..., 4) states
        gradU: (..., 4, 2) gradients, gradU[..., c, j] = dU_c/dx_j

    Returns:
        Array (..., 2, 4)
    """
    U = np.asarray(U)
    gradU = np.asarray(gradU)
    out_shape = U.shape[:-1] + (2, N_DOF)
    if not gas.is_viscous:
        return np.zeros(out_shape, dtype=np.result_type(U, gradU))
    mu, kappa = gas.mu, gas.conductivity
    u, v, du, dv, deps = _primitive_gradient_rows(U)
    ux = np.einsum("...c,...c->...", du, gradU[..., 0])
    uy = np.einsum("...c,...c->...", du, gradU[..., 1])
    vx = np.einsum("...c,...c->...", dv, gradU[..., 0])
    vy = np.einsum("...c,...c->...", dv, gradU[..., 1])
    ex = np.einsum("...c,...c->...", deps, gradU[..., 0])
    ey = np.einsum("...c,...c->...", deps, gradU[..., 1])
    div = ux + vy
    t11 = mu * (2.0 * ux - 2.0 / 3.0 * div)
    t22 = mu * (2.0 * vy - 2.0 / 3.0 * div)
    t12 = mu * (uy + vx)
    zero = np.zeros_like(t11)
    e1 = np.stack([zero, t11, t12, t11 * u + t12 * v + kappa * ex], axis=-1)
    e2 = np.stack([zero, t12, t22, t12 * u + t22 * v + kappa * ey], axis=-1)
    return np.stack([e1, e2], axis=-2)


def diffusivity_matrices(U: np.ndarray, gas: GasModel) -> np.ndarray:
    """
    Blocks K_ij with sum_j K_ij dU/dx_j = E_i.

    Returns:
        Array (..., 2, 2, 4, 4) indexed [i, j, row, col]
    """
    U = np.asarray(U)
    K = np.zeros(U.shape[:-1] + (2, 2, N_DOF, N_DOF), dtype=U.dtype if np.iscomplexobj(U) else float)
    if not gas.is_viscous:
        return K
    mu, kappa = gas.mu, gas.conductivity
    u, v, du, dv, deps = _primitive_gradient_rows(U)
    u, v = u[..., None], v[..., None]
    c43, c23 = 4.0 / 3.0 * mu, 2.0 / 3.0 * mu
    K[..., 0, 0, 1, :] = c43 * du
    K[..., 0, 0, 2, :] = mu * dv
    K[..., 0, 0, 3, :] = u * c43 * du + v * mu * dv + kappa * deps
    K[..., 0, 1, 1, :] = -c23 * dv
    K[..., 0, 1, 2, :] = mu * du
    K[..., 0, 1, 3, :] = -u * c23 * dv + v * mu * du
    K[..., 1, 0, 1, :] = mu * dv
    K[..., 1, 0, 2, :] = -c23 * du
    K[..., 1, 0, 3, :] = u * mu * dv - v * c23 * du
    K[..., 1, 1, 1, :] = mu * du
    K[..., 1, 1, 2, :] = c43 * dv
    K[..., 1, 1, 3, :] = u * mu * du + v * c43 * dv + kappa * deps
    return K


def pressure_coefficient(p, fs: FreeStream):
    """Cp = (p - p_inf) / (rho_inf |u_inf|^2 / 2)."""
    return (np.asarray(p) - fs.pressure) / fs.dynamic_pressure


def stagnation_pressure_coefficient(mach: float, gamma: float = 1.4) -> float:
    """Stagnation-point Cp: isentropic below Mach 1, Rayleigh pitot formula above."""
    m2 = mach * mach
    if mach <= 1.0:
        ratio = (1.0 + 0.5 * (gamma - 1.0) * m2) ** (gamma / (gamma - 1.0))
    else:
        ratio = (((gamma + 1.0) ** 2 * m2 / (4.0 * gamma * m2 - 2.0 * (gamma - 1.0))) ** (gamma / (gamma - 1.0))
                 * (1.0 - gamma + 2.0 * gamma * m2) / (gamma + 1.0))
    return (ratio - 1.0) / (0.5 * gamma * m2)


def critical_pressure_coefficient(mach: float, gamma: float = 1.4) -> float:
    """Cp at which the local flow becomes sonic (Cp*)."""
    m2 = mach * mach
    ratio = ((2.0 + (gamma - 1.0) * m2) / (gamma + 1.0)) ** (gamma / (gamma - 1.0))
    return 2.0 / (gamma * m2) * (ratio - 1.0)


class FluxModel:
    """Coefficients of the quasi-linear system U_t + A_i U_,i - (K_ij U_,j)_,i = 0."""

    n_dof = N_DOF

    def check(self, U: np.ndarray):
        pass

    def jacobians(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diffusive_flux(self, U: np.ndarray, gradU: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def wave_speed(self, U: np.ndarray) -> np.ndarray:
        """Largest advective signal speed, |u| + c for the gas."""
        raise NotImplementedError

    def diffusivity(self, U: np.ndarray) -> np.ndarray:
        """Kinematic diffusivity entering tau."""
        raise NotImplementedError


class NavierStokesModel(FluxModel):
    """Compressible Navier-Stokes (or Euler when the gas is inviscid)."""

    def __init__(self, gas: GasModel):
        self.gas = gas

    def check(self, U):
        check_state(U, self.gas)

    def jacobians(self, U):
        return euler_jacobian(U, self.gas)

    def diffusive_flux(self, U, gradU):
        return viscous_flux(U, gradU, self.gas)

    def wave_speed(self, U):
        U = np.asarray(U)
        return np.hypot(U[..., 1], U[..., 2]) / U[..., 0] + sound_speed(U, self.gas)

    def diffusivity(self, U):
        U = np.asarray(U)
        if not self.gas.is_viscous:
            return np.zeros(U.shape[:-1])
        return max(self.gas.mu, self.gas.conductivity) / U[..., 0]


class ConstantCoefficientModel(FluxModel):
    """Linear advection-diffusion system with fixed A_i and K_ij."""

    def __init__(self, A=None, K=None, speed: float = 1.0, nu: float = 0.0):
        self.A = np.zeros((2, N_DOF, N_DOF)) if A is None else np.asarray(A, dtype=float)
        self.K = np.zeros((2, 2, N_DOF, N_DOF)) if K is None else np.asarray(K, dtype=float)
        self.speed = speed
        self.nu = nu

    def jacobians(self, U):
        U = np.asarray(U)
        return np.broadcast_to(self.A, U.shape[:-1] + self.A.shape)

    def diffusive_flux(self, U, gradU):
        return np.einsum("ijrc,...cj->...ir", self.K, gradU)

    def wave_speed(self, U):
        return np.full(np.shape(U)[:-1], self.speed)

    def diffusivity(self, U):
        return np.full(np.shape(U)[:-1], self.nu)
