"""
Reference-to-physical element maps and quadrature.

STANDARD triangles use the affine P1 map. NEFEM triangles use the
Triangle-Rectangle-Triangle map

    Phi(s, r) = (1 - s - r) x3 + (s + r) C((s xi1 + r xi2) / (s + r))

with reference node 1 at (1, 0) (wall, xi1), node 2 at (0, 1) (wall, xi2)
and node 3 at (0, 0) (interior). Fields are linear in (s, r) on both
element kinds; only the geometry is curved.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Mapping, Optional, Tuple

import numpy as np

from core.errors import DomainError, ElementError, TangledElementError
from core.mesh import Mesh, NefemElementRecord
from core.nurbs import NurbsCurve

logger = logging.getLogger(__name__)

# Reference gradients of (L1, L2, L3) = (s, r, 1 - s - r); rows are nodes.
REFERENCE_GRADIENTS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points (s, r) in the reference triangle and weights summing to 1/2."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.weights)


def shape_functions(s, r) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linear shape functions and their reference gradients.

    Returns:
        Tuple of (L1, L2, L3) stacked on the last axis and the constant
        (3, 2) reference gradient matrix
    """
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    values = np.stack([s, r, 1.0 - s - r], axis=-1)
    return values, REFERENCE_GRADIENTS.copy()


def _orbit_points(a: float) -> List[Tuple[float, float]]:
    b = 1.0 - 2.0 * a
    return [(a, a), (b, a), (a, b)]


@lru_cache(maxsize=None)
def standard_quadrature(order: int) -> QuadratureRule:
    """
    Symmetric Gauss rule on the reference triangle, exact up to `order`.

    Args:
        order: Polynomial degree, 1..5

    Returns:
        QuadratureRule
    """
    if order == 1:
        pts, wts = [(1.0 / 3.0, 1.0 / 3.0)], [1.0]
    elif order == 2:
        pts, wts = _orbit_points(1.0 / 6.0), [1.0 / 3.0] * 3
    elif order in (3, 4):
        # positive-weight 6-point degree-4 rule also serves order 3
        pts = _orbit_points(0.445948490915965) + _orbit_points(0.091576213509771)
        wts = [0.223381589678011] * 3 + [0.109951743655322] * 3
    elif order == 5:
        pts = ([(1.0 / 3.0, 1.0 / 3.0)] + _orbit_points(0.470142064105115)
               + _orbit_points(0.101286507323456))
        wts = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
    else:
        raise DomainError(f"unsupported triangle quadrature order {order} (1..5)")
    weights = np.array(wts) / np.sum(wts) * 0.5
    return QuadratureRule(np.array(pts, dtype=float), weights)


@lru_cache(maxsize=None)
def nefem_quadrature(n: int = 5) -> QuadratureRule:
    """
    Collapsed tensor-product Gauss-Legendre rule for NEFEM triangles.

    (rho, v) in the unit square maps to (s, r) = (rho (1 - v), rho v); the
    collapsed edge rho = 0 is the interior vertex, so no point lands on
    the singular corner and the points crowd toward the curved edge.

    Args:
        n: Points per direction (n x n points in total)
    """
    if n < 2:
        raise DomainError(f"NEFEM quadrature needs at least 2 points per direction, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    rho, v = np.meshgrid(x, x, indexing="ij")
    wr, wv = np.meshgrid(w, w, indexing="ij")
    s = rho * (1.0 - v)
    r = rho * v
    weights = wr * wv * rho
    return QuadratureRule(np.column_stack([s.ravel(), r.ravel()]), weights.ravel())


@lru_cache(maxsize=None)
def edge_quadrature(n: int = 8) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def affine_map(coords: np.ndarray, s, r) -> np.ndarray:
    """P1 map of the triangle (node1, node2, node3) matching the TRT node convention."""
    L, _ = shape_functions(s, r)
    return L @ coords


def affine_jacobian(coords: np.ndarray) -> np.ndarray:
    return coords.T @ REFERENCE_GRADIENTS


def trt_map(rec: NefemElementRecord, curve: NurbsCurve, s: float, r: float) -> np.ndarray:
    """
    Physical point of reference coordinates (s, r) on a NEFEM element.

    The interior vertex (0, 0) returns x3 directly.
    """
    t = s + r
    if t == 0.0:
        return rec.x3.copy()
    theta = (s * rec.xi1 + r * rec.xi2) / t
    lo, hi = min(rec.xi1, rec.xi2), max(rec.xi1, rec.xi2)
    if theta < lo - 1e-14 or theta > hi + 1e-14:
        raise ElementError(f"TRT curve parameter {theta} outside [{lo}, {hi}]")
    theta = min(max(theta, lo), hi)
    return (1.0 - t) * rec.x3 + t * curve.evaluate(theta)


def _element_span(rec: NefemElementRecord, curve: NurbsCurve, theta: float) -> int:
    # at the upper end of the element use the span to the left of the knot
    span = curve.span(theta)
    knots = curve.knot_vector.knots
    if theta >= max(rec.xi1, rec.xi2) and theta == knots[span] and span > curve.degree:
        span -= 1
        while span > curve.degree and knots[span] == knots[span + 1]:
            span -= 1
    return span


def trt_jacobian(rec: NefemElementRecord, curve: NurbsCurve, s: float, r: float) -> Tuple[np.ndarray, float]:
    """
    Jacobian dPhi/d(s, r) of the TRT map.

    Returns:
        Tuple of (2x2 matrix with columns dPhi/ds, dPhi/dr; determinant)
    """
    t = s + r
    if t <= 0.0:
        raise ElementError("TRT Jacobian is singular at the interior vertex (0, 0)")
    theta = (s * rec.xi1 + r * rec.xi2) / t
    lo, hi = min(rec.xi1, rec.xi2), max(rec.xi1, rec.xi2)
    theta = min(max(theta, lo), hi)
    c, dc = curve.point_and_tangent(theta, _element_span(rec, curve, theta))
    dphi_ds = -rec.x3 + c + dc * (r * (rec.xi1 - rec.xi2) / t)
    dphi_dr = -rec.x3 + c + dc * (s * (rec.xi2 - rec.xi1) / t)
    jac = np.column_stack([dphi_ds, dphi_dr])
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    return jac, det


def physical_gradients(jac: np.ndarray, ref_grads: np.ndarray = REFERENCE_GRADIENTS) -> np.ndarray:
    """
    Shape-function gradients in physical coordinates, grad_x L = J^{-T} grad_(s,r) L.

    Args:
        jac: (..., 2, 2) map Jacobians
        ref_grads: (3, 2) reference gradients

    Returns:
        (..., 3, 2) physical gradients
    """
    jac = np.asarray(jac, dtype=float)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    scale = np.maximum(np.abs(jac).max(axis=(-2, -1)), 1e-300) ** 2
    if np.any(np.abs(det) <= 1e-14 * scale):
        raise ElementError("singular element Jacobian")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    return np.einsum("ak,...kj->...aj", ref_grads, inv)


@dataclass(eq=False)
class ElementBatch:
    """
    Quadrature data for a group of elements sharing one rule.

    Arrays: conn (E, 3) node ids in local order; shape (Q, 3);
    grads (E, Q, 3, 2); wdet (E, Q) = weight * |J|; points (E, Q, 2).
    """

    kind: str
    elements: np.ndarray
    conn: np.ndarray
    shape: np.ndarray
    grads: np.ndarray
    wdet: np.ndarray
    points: np.ndarray

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def take(self, sl: slice) -> "ElementBatch":
        return ElementBatch(self.kind, self.elements[sl], self.conn[sl], self.shape,
                            self.grads[sl], self.wdet[sl], self.points[sl])


def standard_batch(mesh: Mesh, elements: np.ndarray, rule: QuadratureRule,
                   conn: Optional[np.ndarray] = None) -> ElementBatch:
    """Affine P1 elements."""
    if conn is None:
        conn = mesh.triangles[elements]
    coords = mesh.nodes[conn]                         # (E, 3, 2)
    jac = np.einsum("eai,aj->eij", coords, REFERENCE_GRADIENTS)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0.0):
        raise ElementError(f"nonpositive P1 Jacobian in element(s) {elements[det <= 0.0][:10].tolist()}")
    grads = physical_gradients(jac)                   # (E, 3, 2)
    shape, _ = shape_functions(rule.points[:, 0], rule.points[:, 1])
    n_q = rule.n_points
    return ElementBatch(
        kind="STANDARD",
        elements=np.asarray(elements, dtype=np.int64),
        conn=np.asarray(conn, dtype=np.int64),
        shape=shape,
        grads=np.repeat(grads[:, None], n_q, axis=1),
        wdet=det[:, None] * rule.weights[None, :],
        points=np.einsum("qa,eai->eqi", shape, coords),
    )


def nefem_batch(records: List[NefemElementRecord], curves: Mapping[int, NurbsCurve],
                rule: QuadratureRule) -> ElementBatch:
    """TRT-mapped elements; raises TangledElementError on a nonpositive determinant."""
    n_e, n_q = len(records), rule.n_points
    grads = np.zeros((n_e, n_q, 3, 2))
    wdet = np.zeros((n_e, n_q))
    points = np.zeros((n_e, n_q, 2))
    for e, rec in enumerate(records):
        curve = curves[rec.curve_id]
        for q, (s, r) in enumerate(rule.points):
            jac, det = trt_jacobian(rec, curve, s, r)
            if det <= 0.0:
                raise TangledElementError(
                    f"NEFEM element {rec.triangle}: Jacobian determinant {det:.3e} at (s, r)=({s:.4f}, {r:.4f})")
            grads[e, q] = physical_gradients(jac)
            wdet[e, q] = rule.weights[q] * det
            points[e, q] = trt_map(rec, curve, s, r)
    shape, _ = shape_functions(rule.points[:, 0], rule.points[:, 1])
    return ElementBatch(
        kind="NEFEM",
        elements=np.array([rec.triangle for rec in records], dtype=np.int64),
        conn=np.array([rec.nodes for rec in records], dtype=np.int64).reshape(-1, 3),
        shape=shape,
        grads=grads,
        wdet=wdet,
        points=points,
    )


def build_batches(mesh: Mesh, records: List[NefemElementRecord], curves: Mapping[int, NurbsCurve],
                  mode: str = "NEFEM", standard_order: int = 3, nefem_points: int = 5) -> List[ElementBatch]:
    """
    Split the mesh into quadrature batches.

    In SFEM mode every triangle is an affine element, including the wall
    triangles whose nodes sit on the curve.
    """
    all_elements = np.arange(mesh.n_triangles)
    rule = standard_quadrature(standard_order)
    if mode.upper() == "SFEM" or not records:
        return [standard_batch(mesh, all_elements, rule)]
    curved = np.array([rec.triangle for rec in records], dtype=np.int64)
    straight = np.setdiff1d(all_elements, curved)
    batches = []
    if straight.size:
        batches.append(standard_batch(mesh, straight, rule))
    batches.append(nefem_batch(records, curves, nefem_quadrature(nefem_points)))
    return batches


def min_nefem_determinant(records: List[NefemElementRecord], curves: Mapping[int, NurbsCurve],
                          rule: QuadratureRule) -> float:
    """Smallest Jacobian determinant over all NEFEM quadrature points (no exception)."""
    lowest = np.inf
    for rec in records:
        curve = curves[rec.curve_id]
        for s, r in rule.points:
            lowest = min(lowest, trt_jacobian(rec, curve, s, r)[1])
    return float(lowest)


def element_area(batch: ElementBatch) -> np.ndarray:
    return batch.wdet.sum(axis=1)


@dataclass(frozen=True, eq=False)
class EdgeQuadrature:
    """
    Quadrature along one boundary edge.

    `shape` holds the two edge-node shape functions (n, 2), `weights`
    already include the arc-length element ds, and `normals` are unit
    normals pointing out of the fluid (into the solid for a wall).
    """

    nodes: Tuple[int, int]
    shape: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    @property
    def length(self) -> float:
        return float(self.weights.sum())


def curved_edge_quadrature(rec: NefemElementRecord, curve: NurbsCurve, n: int = 8) -> EdgeQuadrature:
    """Gauss rule on the wall edge of a NEFEM element, theta = (1 - v) xi1 + v xi2."""
    v, w = edge_quadrature(n)
    points = np.zeros((n, 2))
    normals = np.zeros((n, 2))
    ds = np.zeros(n)
    for q, vq in enumerate(v):
        theta = (1.0 - vq) * rec.xi1 + vq * rec.xi2
        span = _element_span(rec, curve, theta)
        points[q], tangent = curve.point_and_tangent(theta, span)
        speed = float(np.hypot(*tangent))
        normals[q] = np.array([tangent[1], -tangent[0]]) / speed
        ds[q] = speed * abs(rec.xi2 - rec.xi1)
    return EdgeQuadrature(rec.wall_nodes, np.column_stack([1.0 - v, v]), points, normals, w * ds)


def straight_edge_quadrature(mesh: Mesh, a: int, b: int, n: int = 2) -> EdgeQuadrature:
    """Gauss rule on the straight boundary edge a -> b (fluid on the left)."""
    v, w = edge_quadrature(n)
    xa, xb = mesh.nodes[a], mesh.nodes[b]
    edge = xb - xa
    length = float(np.hypot(*edge))
    normal = np.array([edge[1], -edge[0]]) / length
    shape = np.column_stack([1.0 - v, v])
    return EdgeQuadrature((int(a), int(b)), shape, shape @ np.vstack([xa, xb]),
                          np.tile(normal, (n, 1)), w * length)
