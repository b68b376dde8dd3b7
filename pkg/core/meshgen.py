"""
Structured O-grid meshes around closed wall curves (cylinder and NACA 4-digit airfoils).

Wall nodes sit exactly on the NURBS curve at xi = k / n_wall, so the
meshes feed NEFEM classification without projection error. Layers
follow rays from a center inside the body, blended from the wall
polar angle to a uniform far-field angle, with geometric stretching.
"""
import logging
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from core.errors import DomainError, GeometryError
from core.mesh import Mesh, build_mesh
from core.nurbs import NurbsCurve, fit_profile, make_circle

logger = logging.getLogger(__name__)

INFLOW_TAG = 2
OUTFLOW_TAG = 3
WALL_CURVE_ID = 1


def default_layers(n_wall: int) -> int:
    """Radial layer count matching the cylinder grid family (64 -> 52, 128 -> 105, 256 -> 210)."""
    return max(1, (105 * n_wall) // 128)


def stretching(n_layers: int, first: float, total: float) -> np.ndarray:
    """
    Cumulative geometric layer distances g_0 = 0 ... g_n = 1.

    The growth ratio q solves first / total = (q - 1) / (q^n - 1); a
    uniform distribution is used when the first layer is not thinner
    than total / n.
    """
    if n_layers < 1:
        raise DomainError(f"need at least one layer, got {n_layers}")
    target = first / total
    if target >= 1.0 / n_layers:
        return np.linspace(0.0, 1.0, n_layers + 1)

    def residual(q):
        return (q - 1.0) / (q ** n_layers - 1.0) - target

    q = brentq(residual, 1.0 + 1e-12, 100.0, xtol=1e-14)
    g = (q ** np.arange(n_layers + 1) - 1.0) / (q ** n_layers - 1.0)
    g[-1] = 1.0
    return g


def ogrid_mesh(curve: NurbsCurve, center: Sequence[float], n_wall: int, n_layers: int, far_radius: float,
               first_height: Optional[float] = None, outflow: bool = True) -> Mesh:
    """
    O-grid of 2 n_wall n_layers triangles between a closed curve and a circle.

    Args:
        curve: Closed wall curve, clockwise (fluid on the left)
        center: Point from which the wall is star-shaped
        n_wall: Wall edges; wall node k sits at xi = k / n_wall
        n_layers: Radial layers
        far_radius: Far-field circle radius about `center`
        first_height: Wall-normal spacing of the first layer (wall spacing by default)
        outflow: Tag the downstream half of the far field as outflow (3); otherwise all inflow (2)

    Returns:
        Validated Mesh; wall edges carry the curve id as tag

    Raises:
        GeometryError: the curve is not star-shaped about `center` or crosses the far field
    """
    if not curve.is_closed:
        raise GeometryError(f"curve {curve.curve_id} is not closed")
    if n_wall < 3:
        raise DomainError(f"need at least 3 wall edges, got {n_wall}")
    center = np.asarray(center, dtype=float)

    wall = np.array([curve.evaluate(k / n_wall) for k in range(n_wall)])
    rel = wall - center
    rho = np.hypot(rel[:, 0], rel[:, 1])
    if np.any(rho <= 0.0) or rho.max() >= far_radius:
        raise GeometryError("wall must lie strictly between the center and the far-field circle")
    phi = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    steps = np.diff(np.append(phi, phi[0] - 2.0 * np.pi))
    if np.any(steps >= 0.0):
        raise GeometryError(
            f"curve {curve.curve_id} is not star-shaped about {center.tolist()} "
            "or is not oriented clockwise")

    perimeter = float(np.sum(np.hypot(*np.diff(np.vstack([wall, wall[:1]]), axis=0).T)))
    if first_height is None:
        first_height = perimeter / n_wall
    g = stretching(n_layers, first_height, far_radius - float(rho.mean()))
    psi = phi[0] - 2.0 * np.pi * np.arange(n_wall) / n_wall

    angle = phi[None, :] + g[:, None] * (psi - phi)[None, :]
    radius = rho[None, :] + g[:, None] * (far_radius - rho)[None, :]
    nodes = np.empty(((n_layers + 1) * n_wall, 2))
    nodes[:, 0] = (center[0] + radius * np.cos(angle)).ravel()
    nodes[:, 1] = (center[1] + radius * np.sin(angle)).ravel()
    nodes[:n_wall] = wall

    def nid(j, k):
        return j * n_wall + k % n_wall

    triangles = []
    for j in range(n_layers):
        for k in range(n_wall):
            a, b = nid(j, k), nid(j, k + 1)
            c, d = nid(j + 1, k + 1), nid(j + 1, k)
            triangles.append((a, b, c))
            triangles.append((a, c, d))

    edges = [(nid(0, k), nid(0, k + 1), curve.curve_id) for k in range(n_wall)]
    for k in range(n_wall):
        a, b = nid(n_layers, k), nid(n_layers, k + 1)
        mid_x = 0.5 * (nodes[a, 0] + nodes[b, 0]) - center[0]
        tag = OUTFLOW_TAG if outflow and mid_x > 0.0 else INFLOW_TAG
        edges.append((a, b, tag))

    mesh = build_mesh(nodes, triangles, edges, source=f"ogrid(curve {curve.curve_id})")
    logger.info(f"Generated O-grid: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, {n_wall} wall edges")
    return mesh


def cylinder_curve(radius: float = 0.5, center: Sequence[float] = (0.0, 0.0),
                   curve_id: int = WALL_CURVE_ID) -> NurbsCurve:
    """Clockwise nine-point rational quadratic circle."""
    return make_circle(center, radius, clockwise=True, curve_id=curve_id)


def naca4_profile(code: str = "0012", n_samples: int = 400) -> np.ndarray:
    """
    Analytic NACA 4-digit profile on a cosine-spaced chord.

    Ordered TE -> lower surface -> LE -> upper surface -> TE. The open
    trailing edge of the thickness formula is closed by setting the first
    and last samples to (1, 0).
    """
    if len(code) != 4 or not code.isdigit():
        raise DomainError(f"NACA code must have four digits, got '{code}'")
    m = int(code[0]) / 100.0
    p = int(code[1]) / 10.0
    t = int(code[2:]) / 100.0
    if t <= 0.0:
        raise DomainError("NACA thickness must be positive")

    n_half = max(n_samples // 2, 4)
    beta = np.linspace(0.0, np.pi, n_half + 1)
    x = 0.5 * (1.0 - np.cos(beta))
    yt = 5.0 * t * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x ** 2 + 0.2843 * x ** 3 - 0.1015 * x ** 4)

    yc = np.zeros_like(x)
    slope = np.zeros_like(x)
    if m > 0.0 and p > 0.0:
        front = x < p
        yc[front] = m / p ** 2 * (2.0 * p * x[front] - x[front] ** 2)
        yc[~front] = m / (1.0 - p) ** 2 * ((1.0 - 2.0 * p) + 2.0 * p * x[~front] - x[~front] ** 2)
        slope[front] = 2.0 * m / p ** 2 * (p - x[front])
        slope[~front] = 2.0 * m / (1.0 - p) ** 2 * (p - x[~front])
    theta = np.arctan(slope)

    upper = np.column_stack([x - yt * np.sin(theta), yc + yt * np.cos(theta)])
    lower = np.column_stack([x + yt * np.sin(theta), yc - yt * np.cos(theta)])
    samples = np.vstack([lower[::-1], upper[1:]])
    samples[0] = samples[-1] = (1.0, 0.0)
    return samples


@lru_cache(maxsize=8)
def naca_curve(code: str = "0012", degree: int = 4, n_ctrl: int = 96, n_samples: int = 400,
               curve_id: int = WALL_CURVE_ID) -> Tuple[NurbsCurve, float]:
    """Least-squares NURBS fit of a 4-digit profile; returns the curve and its max deviation."""
    fit = fit_profile(naca4_profile(code, n_samples), degree, n_ctrl, curve_id)
    return fit.curve, fit.max_deviation


def cylinder_mesh(n_wall: int = 64, n_layers: Optional[int] = None, far_radius: float = 4.0,
                  radius: float = 0.5) -> Tuple[Mesh, NurbsCurve]:
    """Cylinder O-grid with upstream inflow and downstream outflow far-field halves."""
    curve = cylinder_curve(radius)
    layers = default_layers(n_wall) if n_layers is None else n_layers
    return ogrid_mesh(curve, (0.0, 0.0), n_wall, layers, far_radius), curve


def naca_mesh(n_wall: int = 64, n_layers: Optional[int] = None, far_radius: float = 10.0,
              code: str = "0012", degree: int = 4, n_ctrl: int = 96) -> Tuple[Mesh, NurbsCurve]:
    """Airfoil O-grid about mid-chord; the whole far field is inflow for the subsonic free stream."""
    curve, deviation = naca_curve(code, degree, n_ctrl)
    logger.info(f"NACA {code} curve fitted with max deviation {deviation:.3e}")
    layers = default_layers(n_wall) if n_layers is None else n_layers
    mesh = ogrid_mesh(curve, (0.5, 0.0), n_wall, layers, far_radius, outflow=False)
    return mesh, curve
