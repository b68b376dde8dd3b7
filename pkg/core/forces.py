"""
Wall quantities: integrated force coefficients, wall pressure samples and skin friction.

Forces on the body are F = int (p n - tau . n) dGamma with n pointing
out of the fluid (into the solid). On NEFEM walls the integral runs
over the exact curve; in SFEM mode over the straight edges.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import EDGE_QUADRATURE_POINTS
from core.assembly import Discretization
from core.errors import DomainError
from core.mapping import (
    EdgeQuadrature,
    affine_jacobian,
    curved_edge_quadrature,
    physical_gradients,
    straight_edge_quadrature,
    trt_jacobian,
)
from core.physics import FreeStream, NavierStokesModel, pressure, pressure_coefficient, viscous_flux

logger = logging.getLogger(__name__)

WALL_COORDINATES = ("theta", "x")


@dataclass
class ForceCoefficients:
    cd_pressure: float
    cd_viscous: float
    cl_pressure: float
    cl_viscous: float

    @property
    def cd(self) -> float:
        return self.cd_pressure + self.cd_viscous

    @property
    def cl(self) -> float:
        return self.cl_pressure + self.cl_viscous

    def as_dict(self) -> Dict[str, float]:
        return {
            "cd": self.cd, "cd_pressure": self.cd_pressure, "cd_viscous": self.cd_viscous,
            "cl": self.cl, "cl_pressure": self.cl_pressure, "cl_viscous": self.cl_viscous,
        }


@dataclass
class WallSample:
    """Wall node data; `position` is theta in degrees or x/c."""

    position: float
    x: float
    y: float
    p: float
    cp: float
    cf: Optional[float] = None
    surface: str = ""


def _gas_model(disc: Discretization) -> NavierStokesModel:
    if not isinstance(disc.model, NavierStokesModel):
        raise DomainError("wall quantities need the Navier-Stokes flux model")
    return disc.model


def wall_tags(disc: Discretization) -> List[int]:
    return sorted({bc.tag for bc in disc.bcs if bc.is_wall})


def _wall_edges(disc: Discretization, n_points: int) -> Iterator[Tuple[EdgeQuadrature, np.ndarray, np.ndarray]]:
    """
    Yield (edge quadrature, element node ids, shape gradients at the edge points (n, 3, 2)).

    Element node ids are ordered like the gradients.
    """
    mesh = disc.mesh
    curved = {}
    if disc.mode == "NEFEM":
        curved = {(rec.wall_nodes, rec.tag): rec for rec in disc.records}
    for tag in wall_tags(disc):
        for a, b, _ in mesh.tagged_edges(tag):
            a, b = int(a), int(b)
            rec = curved.get(((a, b), tag))
            if rec is not None:
                curve = disc.curves[rec.curve_id]
                quad = curved_edge_quadrature(rec, curve, n_points)
                v = quad.shape[:, 1]
                grads = np.array([physical_gradients(trt_jacobian(rec, curve, 1.0 - vq, vq)[0]) for vq in v])
                yield quad, np.array(rec.nodes), grads
            else:
                quad = straight_edge_quadrature(mesh, a, b, n_points)
                t, _ = mesh.boundary_edge_owner(a, b)
                tri = mesh.triangles[t]
                grads = physical_gradients(affine_jacobian(mesh.nodes[tri]))
                yield quad, np.array(tri), np.repeat(grads[None], len(quad.weights), axis=0)


def _edge_state(U: np.ndarray, quad: EdgeQuadrature, nodes: np.ndarray, grads: np.ndarray):
    Uq = quad.shape @ U[list(quad.nodes)]                 # (n, 4)
    gradU = np.einsum("qaj,ac->qcj", grads, U[nodes])      # (n, 4, 2)
    return Uq, gradU


def _traction_parts(Uq, gradU, normals, model: NavierStokesModel):
    """Pressure and viscous parts of the traction on the body, (n, 2) each."""
    p = pressure(Uq, model.gas)
    pressure_part = p[:, None] * normals
    E = viscous_flux(Uq, gradU, model.gas)                 # (n, 2, 4): E[i, 1 + k] = tau_ik
    tau_n = np.einsum("qik,qi->qk", E[:, :, 1:3], normals)
    return pressure_part, -tau_n


def wall_force(disc: Discretization, U: np.ndarray,
               n_points: int = EDGE_QUADRATURE_POINTS) -> Tuple[np.ndarray, np.ndarray]:
    """Pressure and viscous force vectors on all wall tags."""
    model = _gas_model(disc)
    U = np.asarray(U, dtype=float)
    f_pressure = np.zeros(2)
    f_viscous = np.zeros(2)
    for quad, nodes, grads in _wall_edges(disc, n_points):
        Uq, gradU = _edge_state(U, quad, nodes, grads)
        tp, tv = _traction_parts(Uq, gradU, quad.normals, model)
        f_pressure += quad.weights @ tp
        f_viscous += quad.weights @ tv
    return f_pressure, f_viscous


def drag_coefficient(disc: Discretization, U: np.ndarray, fs: FreeStream,
                     n_points: int = EDGE_QUADRATURE_POINTS) -> ForceCoefficients:
    """
    Force coefficients F . d / (rho_inf |u_inf|^2 L / 2) along and across the free-stream direction.

    Args:
        disc: Discretization with wall boundary conditions
        U: Nodal states (n_nodes, 4)
        fs: Free stream fixing q_inf, the flow direction and L
    """
    f_pressure, f_viscous = wall_force(disc, U, n_points)
    scale = fs.dynamic_pressure * fs.reference_length
    drag_dir = np.array([fs.u, fs.v]) / fs.speed
    lift_dir = np.array([-drag_dir[1], drag_dir[0]])
    return ForceCoefficients(
        cd_pressure=float(f_pressure @ drag_dir) / scale,
        cd_viscous=float(f_viscous @ drag_dir) / scale,
        cl_pressure=float(f_pressure @ lift_dir) / scale,
        cl_viscous=float(f_viscous @ lift_dir) / scale,
    )


def wall_position(points: np.ndarray, coordinate: str = "theta",
                  center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """
    Arc coordinate of wall points.

    "theta": angle in degrees about `center` in [0, 360), zero at the
    upstream point (-x side). "x": chordwise fraction over the wall's
    x-extent.
    """
    points = np.atleast_2d(points)
    if coordinate == "theta":
        dx = points[:, 0] - center[0]
        dy = points[:, 1] - center[1]
        return np.mod(np.degrees(np.arctan2(dy, -dx)), 360.0)
    if coordinate == "x":
        lo, hi = points[:, 0].min(), points[:, 0].max()
        if hi <= lo:
            raise DomainError("wall has no x-extent")
        return (points[:, 0] - lo) / (hi - lo)
    raise DomainError(f"wall coordinate must be one of {WALL_COORDINATES}, got {coordinate}")


def _nodal_skin_friction(disc: Discretization, U: np.ndarray, fs: FreeStream) -> Dict[int, float]:
    # edge-averaged tangential wall shear, averaged again over the edges sharing each node;
    # the tangent follows the wall curve and the normal points into the fluid
    model = _gas_model(disc)
    total: Dict[int, float] = {}
    count: Dict[int, int] = {}
    for quad, nodes, grads in _wall_edges(disc, EDGE_QUADRATURE_POINTS):
        Uq, gradU = _edge_state(U, quad, nodes, grads)
        E = viscous_flux(Uq, gradU, model.gas)
        tangent = np.column_stack([-quad.normals[:, 1], quad.normals[:, 0]])
        shear = np.einsum("qik,qi,qk->q", E[:, :, 1:3], -quad.normals, tangent)
        value = float(quad.weights @ shear) / quad.length
        for node in quad.nodes:
            total[node] = total.get(node, 0.0) + value
            count[node] = count.get(node, 0) + 1
    q = fs.dynamic_pressure
    return {node: total[node] / count[node] / q for node in total}


def wall_samples(disc: Discretization, U: np.ndarray, fs: FreeStream, coordinate: str = "theta",
                 center: Sequence[float] = (0.0, 0.0)) -> List[WallSample]:
    """Pressure (and skin friction for viscous gas) at every wall node, ordered by arc position."""
    model = _gas_model(disc)
    U = np.asarray(U, dtype=float)
    nodes = sorted({int(n) for tag in wall_tags(disc) for n in disc.mesh.tagged_edges(tag)[:, :2].ravel()})
    if not nodes:
        return []
    points = disc.mesh.nodes[nodes]
    positions = wall_position(points, coordinate, center)
    p = pressure(U[nodes], model.gas)
    cp = pressure_coefficient(p, fs)
    cf = _nodal_skin_friction(disc, U, fs) if model.gas.is_viscous else {}
    samples = []
    for k, node in enumerate(nodes):
        surface = ""
        if coordinate == "x":
            surface = "upper" if points[k, 1] >= center[1] else "lower"
        samples.append(WallSample(
            position=float(positions[k]), x=float(points[k, 0]), y=float(points[k, 1]),
            p=float(p[k]), cp=float(cp[k]), cf=cf.get(node), surface=surface,
        ))
    samples.sort(key=lambda s: (s.surface, s.position))
    return samples


def max_mach(disc: Discretization, U: np.ndarray) -> float:
    """Largest nodal Mach number."""
    model = _gas_model(disc)
    U = np.asarray(U, dtype=float)
    speed = np.hypot(U[:, 1], U[:, 2]) / U[:, 0]
    c = np.sqrt(model.gas.gamma * pressure(U, model.gas) / U[:, 0])
    return float(np.max(speed / c))


def cp_jump_ratio(samples: List[WallSample]) -> float:
    """Largest |dCp| between neighbouring samples divided by the median |dCp|; detects shocks."""
    ratios = []
    for surface in sorted({s.surface for s in samples}):
        cp = np.array([s.cp for s in samples if s.surface == surface])
        if len(cp) < 3:
            continue
        jumps = np.abs(np.diff(cp))
        median = float(np.median(jumps))
        ratios.append(float(jumps.max()) / max(median, 1e-300))
    return max(ratios) if ratios else 0.0
