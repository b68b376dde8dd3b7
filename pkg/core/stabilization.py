"""
Per-element stabilization parameters: SUPG tau (scalar times identity)
and the residual-based shock-capturing viscosity.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.settings import DC_CLAMP_FACTOR, DC_EPSILON
from core.errors import DomainError
from core.physics import FreeStream, GasModel, NavierStokesModel

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class TauParams:
    """Per-element SUPG scalar tau_s (tau_mom = tau_s I) and shock-capturing viscosity nu_dc."""

    tau: np.ndarray
    nu_dc: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.nu_dc = np.asarray(self.nu_dc, dtype=float)
        if np.any(~np.isfinite(self.tau)) or np.any(self.tau < 0.0):
            raise DomainError("tau must be finite and nonnegative")
        if np.any(~np.isfinite(self.nu_dc)) or np.any(self.nu_dc < 0.0):
            raise DomainError("nu_dc must be finite and nonnegative")

    @classmethod
    def zeros(cls, n_elements: int) -> "TauParams":
        return cls(np.zeros(n_elements), np.zeros(n_elements))

    def tau_matrix(self, element: int) -> np.ndarray:
        return self.tau[element] * np.eye(4)


def tau_mom(U_avg: np.ndarray, h, dt: float, model) -> np.ndarray:
    """
    SUPG parameter tau_s = [(2/dt)^2 + (2(|u|+c)/h)^2 + (4 nu/h^2)^2]^(-1/2).

    Args:
        U_avg: (..., 4) element-average states
        h: Element sizes
        dt: Slab duration
        model: FluxModel or GasModel

    Returns:
        tau_s per element
    """
    if isinstance(model, GasModel):
        model = NavierStokesModel(model)
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0.0) or dt <= 0.0:
        raise DomainError("tau_mom needs h > 0 and dt > 0")
    speed = model.wave_speed(U_avg)
    nu = model.diffusivity(U_avg)
    total = (2.0 / dt) ** 2 + (2.0 * speed / h) ** 2 + (4.0 * nu / h ** 2) ** 2
    return 1.0 / np.sqrt(total)


def residual_scaling(fs: Optional[FreeStream]) -> np.ndarray:
    """Diagonal S = (rho_inf, rho_inf |u_inf|, rho_inf |u_inf|, rho_inf e_inf); unit scales without a free stream."""
    if fs is None:
        return np.ones(4)
    speed = fs.speed if fs.speed > 0.0 else 1.0
    return np.array([fs.rho, fs.rho * speed, fs.rho * speed, fs.rho * fs.e])


def tau_dc(R: np.ndarray, gradU: np.ndarray, h, fs: Optional[FreeStream], U_avg: np.ndarray, model,
           clamp_factor: float = DC_CLAMP_FACTOR) -> np.ndarray:
    """
    Shock-capturing viscosity nu_dc = (h/2) |S^-1 R| / max(|S^-1 gradU|, eps).

    Clamped above by clamp_factor (h/2)(|u| + c).

    Args:
        R: (..., 4) strong residuals
        gradU: (..., 4, 2) gradients
        h: Element sizes
        fs: Free stream providing the scales S
        U_avg: (..., 4) element states for the clamp
        model: FluxModel or GasModel
    """
    if isinstance(model, GasModel):
        model = NavierStokesModel(model)
    h = np.asarray(h, dtype=float)
    scale = residual_scaling(fs)
    r_norm = np.linalg.norm(np.asarray(R) / scale, axis=-1)
    g_norm = np.sqrt(np.sum((np.asarray(gradU) / scale[:, None]) ** 2, axis=(-2, -1)))
    nu = 0.5 * h * r_norm / np.maximum(g_norm, DC_EPSILON)
    nu_max = clamp_factor * 0.5 * h * model.wave_speed(U_avg)
    return np.minimum(nu, nu_max)
