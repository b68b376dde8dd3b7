"""
Unstructured triangular meshes.
Loading, validation, element sizes and classification of boundary
triangles into STANDARD and NURBS-enhanced (NEFEM) elements.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from core.errors import ClassificationError, MeshFormatError, MeshValidationError, ProjectionError
from core.nurbs import NurbsCurve

logger = logging.getLogger(__name__)

STANDARD = "STANDARD"
NEFEM = "NEFEM"

# Relative tolerance (of the domain diameter) for wall nodes lying on their curve.
PROJECTION_TOLERANCE = 1e-6
_SEAM_TOLERANCE = 1e-9


@dataclass(eq=False)
class Mesh:
    """Triangles are stored counterclockwise; boundary edges run with the fluid on their left."""

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    n_sd: int = 2
    _edge_owner: Dict[Tuple[int, int], List[Tuple[int, int]]] = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_en(self) -> int:
        """Element count as reported in grid summaries."""
        return len(self.triangles)

    def n_en_wall(self, wall_tags) -> int:
        return int(np.isin(self.boundary_edges[:, 2], list(wall_tags)).sum())

    @property
    def diameter(self) -> float:
        span = self.nodes.max(axis=0) - self.nodes.min(axis=0)
        return float(np.hypot(*span))

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_owners(self) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
        """Map sorted node pair -> list of (triangle, local edge); local edge k runs tri[k] -> tri[k+1]."""
        if self._edge_owner is None:
            owners = defaultdict(list)
            for t, tri in enumerate(self.triangles):
                for k in range(3):
                    a, b = int(tri[k]), int(tri[(k + 1) % 3])
                    owners[(min(a, b), max(a, b))].append((t, k))
            self._edge_owner = dict(owners)
        return self._edge_owner

    def boundary_edge_owner(self, a: int, b: int) -> Tuple[int, int]:
        owners = self.edge_owners().get((min(a, b), max(a, b)), [])
        if len(owners) != 1:
            raise MeshValidationError(f"boundary edge ({a}, {b}) belongs to {len(owners)} triangles, expected 1")
        return owners[0]

    def tagged_edges(self, tag: int) -> np.ndarray:
        return self.boundary_edges[self.boundary_edges[:, 2] == tag]

    def boundary_tags(self) -> List[int]:
        return sorted(set(int(t) for t in self.boundary_edges[:, 2]))


def build_mesh(nodes, triangles, boundary_edges=None, source: str = "") -> Mesh:
    """
    Validate raw arrays and return a mesh with counterclockwise triangles.

    Args:
        nodes: (N, 2) coordinates
        triangles: (T, 3) node ids
        boundary_edges: (B, 3) rows (a, b, tag)
        source: Name used in error messages

    Returns:
        Validated Mesh
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if boundary_edges is None or len(boundary_edges) == 0:
        bedges = np.zeros((0, 3), dtype=np.int64)
    else:
        bedges = np.array(boundary_edges, dtype=np.int64).reshape(-1, 3)

    if triangles.size and (triangles.min() < 0 or triangles.max() >= len(nodes)):
        raise MeshValidationError(f"{source}: triangle references a node outside 0..{len(nodes) - 1}")
    if bedges.size and (bedges[:, :2].min() < 0 or bedges[:, :2].max() >= len(nodes)):
        raise MeshValidationError(f"{source}: boundary edge references a node outside 0..{len(nodes) - 1}")

    mesh = Mesh(nodes, triangles, bedges)
    areas = mesh.signed_areas()
    scale = max(mesh.diameter, 1e-300) ** 2
    degenerate = np.flatnonzero(np.abs(areas) <= 1e-14 * scale)
    if degenerate.size:
        raise MeshValidationError(f"{source}: degenerate triangle(s) {degenerate[:10].tolist()}")
    flipped = areas < 0.0
    if flipped.any():
        logger.info(f"Reoriented {int(flipped.sum())} clockwise triangle(s) to counterclockwise")
        triangles[flipped] = triangles[flipped][:, [0, 2, 1]]
        mesh = Mesh(nodes, triangles, bedges)

    _orient_boundary_edges(mesh)
    _check_boundary_loops(mesh, source)
    return mesh


def _orient_boundary_edges(mesh: Mesh):
    for row in mesh.boundary_edges:
        a, b = int(row[0]), int(row[1])
        t, k = mesh.boundary_edge_owner(a, b)
        tri = mesh.triangles[t]
        row[0], row[1] = int(tri[k]), int(tri[(k + 1) % 3])


def _check_boundary_loops(mesh: Mesh, source: str):
    if len(mesh.boundary_edges) == 0:
        return
    out_degree = np.bincount(mesh.boundary_edges[:, 0], minlength=mesh.n_nodes)
    in_degree = np.bincount(mesh.boundary_edges[:, 1], minlength=mesh.n_nodes)
    if np.any(out_degree != in_degree) or np.any(out_degree > 1):
        bad = np.flatnonzero((out_degree != in_degree) | (out_degree > 1))
        raise MeshValidationError(f"{source}: boundary edges do not form closed loops at node(s) {bad[:10].tolist()}")
    seen = set()
    for row in mesh.boundary_edges:
        key = (min(row[0], row[1]), max(row[0], row[1]))
        if key in seen:
            raise MeshValidationError(f"{source}: boundary edge {key} listed twice")
        seen.add(key)


def load_mesh(path: Union[str, Path]) -> Mesh:
    """
    Read a mesh file.

    Format: header `nodes N triangles T bedges B`, then N lines `x y`,
    T lines `a b c` and B lines `a b tag`, 0-based ids; `#` starts a comment.

    Args:
        path: Mesh file path

    Returns:
        Validated Mesh
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as handle:
        lines = [(i + 1, ln.split("#", 1)[0].split()) for i, ln in enumerate(handle)]
    lines = [(no, tokens) for no, tokens in lines if tokens]
    if not lines:
        raise MeshFormatError("empty mesh file", path, 1)

    no, header = lines[0]
    if len(header) != 6 or header[0::2] != ["nodes", "triangles", "bedges"]:
        raise MeshFormatError("expected header 'nodes N triangles T bedges B'", path, no)
    try:
        n_nodes, n_tris, n_bedges = (int(header[1]), int(header[3]), int(header[5]))
    except ValueError:
        raise MeshFormatError("header counts must be integers", path, no) from None

    body = lines[1:]
    expected = n_nodes + n_tris + n_bedges
    if len(body) != expected:
        last = body[-1][0] if body else no
        raise MeshFormatError(f"expected {expected} data lines, found {len(body)}", path, last)

    def parse(rows, width, kind, cast):
        out = []
        for line_no, tokens in rows:
            if len(tokens) != width:
                raise MeshFormatError(f"{kind} line needs {width} values, got {len(tokens)}", path, line_no)
            try:
                out.append([cast(t) for t in tokens])
            except ValueError:
                raise MeshFormatError(f"malformed {kind} line", path, line_no) from None
        return out

    nodes = parse(body[:n_nodes], 2, "node", float)
    tris = parse(body[n_nodes:n_nodes + n_tris], 3, "triangle", int)
    bedges = parse(body[n_nodes + n_tris:], 3, "boundary edge", int)
    mesh = build_mesh(nodes, tris, bedges, source=path)
    logger.info(f"Loaded mesh {path}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
                f"{len(mesh.boundary_edges)} boundary edges")
    return mesh


def write_mesh(mesh: Mesh, path: Union[str, Path]):
    """Write a mesh in the plain-text format read by load_mesh."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"nodes {mesh.n_nodes} triangles {mesh.n_triangles} bedges {len(mesh.boundary_edges)}\n")
        for x, y in mesh.nodes:
            handle.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            handle.write(f"{a} {b} {c}\n")
        for a, b, tag in mesh.boundary_edges:
            handle.write(f"{a} {b} {tag}\n")
    logger.info(f"Wrote mesh {path}")


def element_size(mesh: Mesh, triangle: int) -> float:
    """Edge length of the equilateral triangle with the same area."""
    return float(element_sizes(mesh)[triangle])


def element_sizes(mesh: Mesh) -> np.ndarray:
    return np.sqrt(4.0 * np.abs(mesh.signed_areas()) / np.sqrt(3.0))


@dataclass(frozen=True, eq=False)
class NefemElementRecord:
    """
    Boundary triangle with one edge on a NURBS curve.

    `nodes` is the counterclockwise local ordering (wall node at xi1,
    wall node at xi2, interior node).
    """

    triangle: int
    local_edge: int
    curve_id: int
    tag: int
    xi1: float
    xi2: float
    nodes: Tuple[int, int, int]
    x3: np.ndarray

    @property
    def interior_node(self) -> int:
        return self.nodes[2]

    @property
    def wall_nodes(self) -> Tuple[int, int]:
        return self.nodes[0], self.nodes[1]


def _seam_fix(curve: NurbsCurve, xa: float, xb: float, triangle: int) -> Tuple[float, float]:
    if not curve.is_closed or abs(xa - xb) <= 0.5:
        return xa, xb
    if xa < xb:
        if xa <= _SEAM_TOLERANCE:
            return 1.0, xb
        if xb >= 1.0 - _SEAM_TOLERANCE:
            return xa, 0.0
    else:
        if xb <= _SEAM_TOLERANCE:
            return xa, 1.0
        if xa >= 1.0 - _SEAM_TOLERANCE:
            return 0.0, xb
    raise ClassificationError(
        f"triangle {triangle} straddles the seam of closed curve {curve.curve_id}; "
        "place a mesh node at xi=0"
    )


def classify_elements(mesh: Mesh, curves: Mapping[int, NurbsCurve], wall_tags: Mapping[int, int],
                      tolerance: Optional[float] = None) -> List[NefemElementRecord]:
    """
    Build NEFEM records for every triangle owning a curved wall edge.

    Args:
        mesh: Validated mesh
        curves: curve id -> NurbsCurve
        wall_tags: boundary tag -> curve id
        tolerance: Absolute projection tolerance; defaults to
            PROJECTION_TOLERANCE times the domain diameter

    Returns:
        Records sorted by triangle id; every other triangle is STANDARD
    """
    if tolerance is None:
        tolerance = PROJECTION_TOLERANCE * mesh.diameter
    records = []
    owned = {}
    node_xi: Dict[Tuple[int, int], float] = {}

    for tag, curve_id in sorted(wall_tags.items()):
        if curve_id not in curves:
            raise ClassificationError(f"boundary tag {tag} refers to unknown curve {curve_id}")
        curve = curves[curve_id]
        for a, b, _ in mesh.tagged_edges(tag):
            a, b = int(a), int(b)
            t, k = mesh.boundary_edge_owner(a, b)
            if t in owned:
                raise ClassificationError(
                    f"triangle {t} has two wall edges (tags {owned[t]} and {tag}); "
                    "split it in the mesh generator so each boundary triangle has one curved edge"
                )
            owned[t] = tag

            for node in (a, b):
                key = (curve_id, node)
                if key not in node_xi:
                    point = mesh.nodes[node]
                    xi = curve.closest_point(point)
                    distance = float(np.hypot(*(curve.evaluate(xi) - point)))
                    if distance > tolerance:
                        raise ProjectionError(
                            f"wall node {node} is {distance:.3e} away from curve {curve_id}", xi, distance)
                    if xi < 1e-12:
                        xi = 0.0
                    elif xi > 1.0 - 1e-12:
                        xi = 1.0
                    node_xi[key] = xi
            xa, xb = _seam_fix(curve, node_xi[(curve_id, a)], node_xi[(curve_id, b)], t)
            if xa == xb:
                raise ClassificationError(f"triangle {t}: wall nodes map to the same curve parameter {xa}")

            tri = mesh.triangles[t]
            interior = int(tri[(k + 2) % 3])
            edge = mesh.nodes[b] - mesh.nodes[a]
            edge_normal = np.array([edge[1], -edge[0]])
            mid = 0.5 * (xa + xb)
            if float(curve.outward_normal(mid) @ edge_normal) <= 0.0:
                raise ClassificationError(
                    f"curve {curve_id} is oriented with the fluid on its right at triangle {t}; "
                    "reverse the control net"
                )
            records.append(NefemElementRecord(
                triangle=t, local_edge=k, curve_id=curve_id, tag=int(tag),
                xi1=xa, xi2=xb, nodes=(a, b, interior), x3=mesh.nodes[interior].copy(),
            ))

    records.sort(key=lambda rec: rec.triangle)
    logger.info(f"Classified {len(records)} NEFEM and {mesh.n_triangles - len(records)} STANDARD elements")
    return records


def element_classes(mesh: Mesh, records: List[NefemElementRecord]) -> np.ndarray:
    """Per-triangle class labels."""
    labels = np.full(mesh.n_triangles, STANDARD, dtype=object)
    for rec in records:
        labels[rec.triangle] = NEFEM
    return labels
