"""
Space-time slab assembly of the stabilized weak form.

Each slab extrudes the fixed spatial mesh over (t_n, t_n + dt) into
6-node prisms: spatial P1 (or TRT-mapped) shape functions times linear
functions in time. Slab unknowns are laid out as

    dof(layer, node, component) = (layer * n_nodes + node) * 4 + component

with layer 0 the bottom (t_n^+) and layer 1 the top (t_{n+1}^-). Element
contributions are evaluated batch-wise with numpy and the tangent is the
complex-step derivative of the element residual with the stabilization
parameters frozen.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from config.settings import (
    ASSEMBLY_CHUNK_POINTS,
    COMPLEX_STEP,
    DC_CLAMP_FACTOR,
    EDGE_QUADRATURE_POINTS,
    NEFEM_QUADRATURE_POINTS,
    STANDARD_QUADRATURE_ORDER,
)
from core.errors import BoundaryConditionError, DomainError
from core.mapping import (
    ElementBatch,
    build_batches,
    curved_edge_quadrature,
    straight_edge_quadrature,
)
from core.mesh import Mesh, NefemElementRecord, element_sizes
from core.nurbs import NurbsCurve
from core.physics import N_DOF, FluxModel, FreeStream
from core.stabilization import TauParams, tau_dc, tau_mom

logger = logging.getLogger(__name__)

NODES_PER_ELEMENT = 3
LAYERS = 2
ELEMENT_DOFS = LAYERS * NODES_PER_ELEMENT * N_DOF

# 2-point Gauss rule on the slab interval; rows are time points,
# columns the bottom/top time shape functions
_ETA = np.array([-1.0, 1.0]) / np.sqrt(3.0)
TIME_SHAPE = np.column_stack([0.5 * (1.0 - _ETA), 0.5 * (1.0 + _ETA)])

BC_KINDS = ("inflow", "outflow", "slip", "noslip")


@dataclass(frozen=True)
class Stabilization:
    supg: bool = True
    dc: bool = True
    clamp_factor: float = DC_CLAMP_FACTOR


@dataclass(eq=False)
class BoundaryCondition:
    """
    Condition on all boundary edges carrying `tag`.

    inflow fixes all four components to `values`; noslip fixes both
    momenta to zero (adiabatic wall); slip fixes the normal momentum to
    zero in the local wall frame; outflow leaves everything free.
    `flux` prescribes n_i E_i component-wise (NaN = not prescribed).
    """

    kind: str
    tag: int
    values: Optional[np.ndarray] = None
    flux: Optional[np.ndarray] = None
    curve_id: Optional[int] = None

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise BoundaryConditionError(f"unknown boundary kind '{self.kind}' for tag {self.tag}")
        if self.kind == "inflow":
            if self.values is None:
                raise BoundaryConditionError(f"inflow tag {self.tag} needs prescribed values")
            self.values = np.asarray(self.values, dtype=float).reshape(N_DOF)
        if self.flux is not None:
            self.flux = np.asarray(self.flux, dtype=float).reshape(N_DOF)
            if np.any(self.mask & self.flux_mask):
                raise BoundaryConditionError(
                    f"tag {self.tag}: flux prescribed on Dirichlet components {np.flatnonzero(self.mask & self.flux_mask).tolist()}")
            if self.kind == "slip" and np.any(self.flux_mask[1:3]):
                raise BoundaryConditionError(f"slip tag {self.tag}: momentum flux cannot be prescribed")

    @property
    def mask(self) -> np.ndarray:
        """Constrained components (slip: in the rotated normal/tangent frame)."""
        return {
            "inflow": np.array([True, True, True, True]),
            "outflow": np.array([False, False, False, False]),
            "slip": np.array([False, True, False, False]),
            "noslip": np.array([False, True, True, False]),
        }[self.kind]

    @property
    def flux_mask(self) -> np.ndarray:
        if self.flux is None:
            return np.zeros(N_DOF, dtype=bool)
        return np.isfinite(self.flux)

    @property
    def is_wall(self) -> bool:
        return self.kind in ("slip", "noslip")


@dataclass(eq=False)
class NodalConstraints:
    """
    Strong constraints per spatial node, applied on both slab layers.

    `fixed` and `values` refer to the rotated frame (rho, m.n, m.t, rho e)
    at nodes with `rotated` set, to the Cartesian components elsewhere.
    """

    fixed: np.ndarray
    values: np.ndarray
    normals: np.ndarray
    rotated: np.ndarray

    @property
    def n_constrained(self) -> int:
        return int(self.fixed.sum())

    def rotation_blocks(self) -> np.ndarray:
        """(n_nodes, 4, 4) orthogonal blocks mapping Cartesian to local components."""
        n = len(self.rotated)
        blocks = np.tile(np.eye(N_DOF), (n, 1, 1))
        nx, ny = self.normals[self.rotated, 0], self.normals[self.rotated, 1]
        blocks[self.rotated, 1, 1] = nx
        blocks[self.rotated, 1, 2] = ny
        blocks[self.rotated, 2, 1] = -ny
        blocks[self.rotated, 2, 2] = nx
        return blocks


def _edge_normal(mesh: Mesh, a: int, b: int) -> np.ndarray:
    edge = mesh.nodes[b] - mesh.nodes[a]
    return np.array([edge[1], -edge[0]]) / np.hypot(*edge)


def build_constraints(mesh: Mesh, bcs: Sequence[BoundaryCondition],
                      records: Sequence[NefemElementRecord] = (),
                      curves: Optional[Mapping[int, NurbsCurve]] = None,
                      mode: str = "NEFEM") -> NodalConstraints:
    """
    Merge the boundary conditions into per-node constraints.

    Slip normals come from the NURBS normal at each wall node's curve
    parameter (averaged over the node's NEFEM records) in NEFEM mode and
    from the average of the adjacent straight edge normals otherwise.
    """
    n = mesh.n_nodes
    node_bcs: Dict[int, List[BoundaryCondition]] = {}
    for bc in bcs:
        edges = mesh.tagged_edges(bc.tag)
        if len(edges) == 0:
            logger.warning(f"⚠️ Boundary tag {bc.tag} ({bc.kind}) has no edges in the mesh")
        for a, b, _ in edges:
            for node in (int(a), int(b)):
                lst = node_bcs.setdefault(node, [])
                if bc not in lst:
                    lst.append(bc)

    fixed = np.zeros((n, N_DOF), dtype=bool)
    values = np.zeros((n, N_DOF))
    rotated = np.zeros(n, dtype=bool)

    slip_tags = set()
    for node in sorted(node_bcs):
        lst = node_bcs[node]
        kinds = {bc.kind for bc in lst}
        inflow = [bc for bc in lst if bc.kind == "inflow"]
        if inflow and kinds & {"slip", "noslip"}:
            tags = sorted(bc.tag for bc in lst)
            raise BoundaryConditionError(f"node {node}: inflow and wall constraints meet (tags {tags})")
        if inflow:
            ref = inflow[0].values
            for other in inflow[1:]:
                if not np.allclose(other.values, ref, rtol=1e-12, atol=0.0):
                    raise BoundaryConditionError(
                        f"node {node}: inflow tags {inflow[0].tag} and {other.tag} prescribe different states")
            fixed[node] = True
            values[node] = ref
        elif "noslip" in kinds:
            fixed[node, 1:3] = True
        elif "slip" in kinds:
            fixed[node, 1] = True
            rotated[node] = True
            slip_tags.update(bc.tag for bc in lst if bc.kind == "slip")

    normals = np.zeros((n, 2))
    if rotated.any():
        use_curves = mode.upper() == "NEFEM" and curves is not None
        curved_tags = {rec.tag for rec in records} if use_curves else set()
        for rec in records:
            if not use_curves or rec.tag not in slip_tags:
                continue
            curve = curves[rec.curve_id]
            for node, xi in zip(rec.wall_nodes, (rec.xi1, rec.xi2)):
                normals[node] += curve.outward_normal(xi)
        for tag in sorted(slip_tags - curved_tags):
            for a, b, _ in mesh.tagged_edges(tag):
                normal = _edge_normal(mesh, int(a), int(b))
                normals[int(a)] += normal
                normals[int(b)] += normal
        length = np.hypot(normals[rotated, 0], normals[rotated, 1])
        if np.any(length < 1e-12):
            bad = np.flatnonzero(rotated)[length < 1e-12][:10].tolist()
            raise BoundaryConditionError(f"slip nodes {bad} have no well-defined normal")
        normals[rotated] /= length[:, None]
        normals[~rotated] = 0.0

    constraints = NodalConstraints(fixed, values, normals, rotated)
    logger.debug(f"{constraints.n_constrained} constrained nodal components, {int(rotated.sum())} slip nodes")
    return constraints


def neumann_load(mesh: Mesh, bcs: Sequence[BoundaryCondition], records: Sequence[NefemElementRecord] = (),
                 curves: Optional[Mapping[int, NurbsCurve]] = None, mode: str = "NEFEM",
                 edge_points: int = EDGE_QUADRATURE_POINTS) -> np.ndarray:
    """Spatial boundary load int L_a h dGamma per node, shape (n_nodes, 4)."""
    load = np.zeros((mesh.n_nodes, N_DOF))
    by_edge = {(rec.wall_nodes, rec.tag): rec for rec in records}
    for bc in bcs:
        if not bc.flux_mask.any():
            continue
        h = np.where(bc.flux_mask, bc.flux, 0.0)
        for a, b, _ in mesh.tagged_edges(bc.tag):
            a, b = int(a), int(b)
            rec = by_edge.get(((a, b), bc.tag))
            if rec is not None and curves is not None and mode.upper() == "NEFEM":
                quad = curved_edge_quadrature(rec, curves[rec.curve_id], edge_points)
            else:
                quad = straight_edge_quadrature(mesh, a, b)
            nodal = quad.shape.T @ quad.weights
            load[a] += nodal[0] * h
            load[b] += nodal[1] * h
    return load


@dataclass(eq=False)
class Discretization:
    """Slab-independent spatial data: mesh, element batches, constraints and loads."""

    mesh: Mesh
    model: FluxModel
    batches: List[ElementBatch]
    sizes: List[np.ndarray]
    constraints: NodalConstraints
    load: np.ndarray
    bcs: List[BoundaryCondition] = field(default_factory=list)
    records: List[NefemElementRecord] = field(default_factory=list)
    curves: Dict[int, NurbsCurve] = field(default_factory=dict)
    mode: str = "NEFEM"
    freestream: Optional[FreeStream] = None
    stabilization: Stabilization = Stabilization()

    def __post_init__(self):
        self._locator = {}
        for k, batch in enumerate(self.batches):
            for pos, elem in enumerate(batch.elements):
                self._locator[int(elem)] = (k, pos)

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def locate(self, elem: int) -> Tuple[int, int]:
        """Batch index and position of a triangle."""
        try:
            return self._locator[int(elem)]
        except KeyError:
            raise DomainError(f"element {elem} is not part of the discretization")

    def element_nodes(self, elem: int) -> np.ndarray:
        """Node ids of a triangle in its local (quadrature) order."""
        k, pos = self.locate(elem)
        return self.batches[k].conn[pos]


def discretize(mesh: Mesh, model: FluxModel, bcs: Sequence[BoundaryCondition] = (),
               records: Sequence[NefemElementRecord] = (), curves: Optional[Mapping[int, NurbsCurve]] = None,
               mode: str = "NEFEM", freestream: Optional[FreeStream] = None,
               stabilization: Stabilization = Stabilization(),
               standard_order: int = STANDARD_QUADRATURE_ORDER,
               nefem_points: int = NEFEM_QUADRATURE_POINTS) -> Discretization:
    mode = mode.upper()
    if mode not in ("NEFEM", "SFEM"):
        raise DomainError(f"mode must be NEFEM or SFEM, got {mode}")
    curves = dict(curves or {})
    records = list(records)
    batches = build_batches(mesh, records, curves, mode, standard_order, nefem_points)
    h = element_sizes(mesh)
    constraints = build_constraints(mesh, bcs, records, curves, mode)
    load = neumann_load(mesh, bcs, records, curves, mode)
    logger.info(f"Discretized {mesh.n_triangles} elements in {len(batches)} batch(es), mode {mode}")
    return Discretization(
        mesh=mesh, model=model, batches=batches, sizes=[h[b.elements] for b in batches],
        constraints=constraints, load=load, bcs=list(bcs), records=records, curves=curves,
        mode=mode, freestream=freestream, stabilization=stabilization,
    )


@dataclass(eq=False)
class SpaceTimeSlab:
    """Prism slab over (t_n, t_n + dt) with the previous top solution for the jump term."""

    disc: Discretization
    t_n: float
    dt: float
    prev: np.ndarray

    @property
    def t_next(self) -> float:
        return self.t_n + self.dt

    @property
    def n_nodes(self) -> int:
        return self.disc.n_nodes

    @property
    def n_dof(self) -> int:
        return LAYERS * N_DOF * self.n_nodes

    def dof_index(self, layer: int, node, component) -> np.ndarray:
        return (layer * self.n_nodes + np.asarray(node)) * N_DOF + np.asarray(component)

    def initial_guess(self) -> np.ndarray:
        """Previous top layer copied to both layers, with the Dirichlet values imposed."""
        U = np.stack([self.prev, self.prev]).astype(float)
        return impose_constraints(self.disc.constraints, U)


def build_slab(disc: Discretization, t_n: float, dt: float, prevU: np.ndarray) -> SpaceTimeSlab:
    if not dt > 0.0:
        raise DomainError(f"slab duration must be positive, got {dt}")
    prevU = np.asarray(prevU, dtype=float)
    if prevU.shape != (disc.n_nodes, N_DOF):
        raise DomainError(f"previous solution has shape {prevU.shape}, expected {(disc.n_nodes, N_DOF)}")
    return SpaceTimeSlab(disc, float(t_n), float(dt), prevU)


def prism_jacobian_determinant(spatial_det, dt: float):
    """Determinant of the extruded map (s, r, eta) -> (x, y, t) with eta in [-1, 1]."""
    return np.asarray(spatial_det) * 0.5 * dt


def impose_constraints(constraints: NodalConstraints, U: np.ndarray) -> np.ndarray:
    """Overwrite constrained components of a (2, n_nodes, 4) slab state."""
    U = np.array(U, dtype=float)
    blocks = constraints.rotation_blocks()
    for layer in range(LAYERS):
        local = np.einsum("nrc,nc->nr", blocks, U[layer])
        local[constraints.fixed] = constraints.values[constraints.fixed]
        U[layer] = np.einsum("ncr,nc->nr", blocks, local)
    return U


def _slab_kernel(batch: ElementBatch, Ue: np.ndarray, Uprev: np.ndarray, tau: np.ndarray, nu: np.ndarray,
                 model: FluxModel, dt: float, stab: Stabilization) -> np.ndarray:
    """
    Element residuals for coefficients Ue of shape (E, P, 2, 3, 4).

    P indexes independent evaluations of the same elements (the
    complex-step perturbations). Returns (E, P, 2, 3, 4).
    """
    L = batch.shape                      # (Q, 3)
    G = batch.grads                      # (E, Q, 3, 2)
    w = 0.5 * dt * batch.wdet            # time weight dt/2 per Gauss point

    Uq = np.einsum("qa,epbac->epbqc", L, Ue)
    dUq = np.einsum("eqaj,epbac->epbqcj", G, Ue)
    U = np.einsum("tb,epbqc->eptqc", TIME_SHAPE, Uq)
    gradU = np.einsum("tb,epbqcj->eptqcj", TIME_SHAPE, dUq)
    Ut = (Uq[:, :, 1] - Uq[:, :, 0]) / dt

    A = model.jacobians(U)               # (E, P, T, Q, 2, 4, 4)
    strong = Ut[:, :, None] + np.einsum("eptqirc,eptqci->eptqr", A, gradU)

    R = np.einsum("tb,qa,eq,eptqc->epbac", TIME_SHAPE, L, w, strong, optimize=True)
    flux = model.diffusive_flux(U, gradU)
    R = R + np.einsum("tb,eqai,eq,eptqic->epbac", TIME_SHAPE, G, w, flux, optimize=True)
    if stab.supg:
        AR = np.einsum("eptqirc,eptqc->eptqir", A, strong)
        R = R + np.einsum("tb,eqai,eq,e,eptqic->epbac", TIME_SHAPE, G, w, tau, AR, optimize=True)
    if stab.dc:
        R = R + np.einsum("tb,eqai,eq,e,eptqci->epbac", TIME_SHAPE, G, w, nu, gradU, optimize=True)

    jump = Uq[:, :, 0] - np.einsum("qa,eac->eqc", L, Uprev)[:, None]
    R[:, :, 0] += np.einsum("qa,eq,epqc->epac", L, batch.wdet, jump, optimize=True)
    return R


def _batch_taus(slab: SpaceTimeSlab, batch: ElementBatch, h: np.ndarray, Ue: np.ndarray) -> TauParams:
    """Stabilization parameters from the centroid state at mid-slab; Ue is (E, 2, 3, 4)."""
    disc = slab.disc
    stab = disc.stabilization
    n_e = batch.n_elements
    if not (stab.supg or stab.dc):
        return TauParams.zeros(n_e)
    area = batch.wdet.sum(axis=1)
    Lbar = np.einsum("eq,qa->ea", batch.wdet, batch.shape) / area[:, None]
    Gbar = np.einsum("eq,eqaj->eaj", batch.wdet, batch.grads) / area[:, None, None]
    Umid = 0.5 * (Ue[:, 0] + Ue[:, 1])
    Uc = np.einsum("ea,eac->ec", Lbar, Umid)
    gradUc = np.einsum("eaj,eac->ecj", Gbar, Umid)
    tau = tau_mom(Uc, h, slab.dt, disc.model) if stab.supg else np.zeros(n_e)
    if stab.dc:
        Utc = np.einsum("ea,eac->ec", Lbar, Ue[:, 1] - Ue[:, 0]) / slab.dt
        R = Utc + np.einsum("eirc,eci->er", disc.model.jacobians(Uc), gradUc)
        nu = tau_dc(R, gradUc, h, disc.freestream, Uc, disc.model, stab.clamp_factor)
    else:
        nu = np.zeros(n_e)
    return TauParams(tau, nu)


def _gather(U: np.ndarray, conn: np.ndarray) -> np.ndarray:
    # (2, N, 4) slab state -> (E, 2, 3, 4) element coefficients
    return U[:, conn].transpose(1, 0, 2, 3)


def _as_slab_state(slab: SpaceTimeSlab, U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.size != slab.n_dof:
        raise DomainError(f"slab state has {U.size} entries, expected {slab.n_dof}")
    return U.reshape(LAYERS, slab.n_nodes, N_DOF)


def compute_taus(slab: SpaceTimeSlab, U: np.ndarray) -> List[TauParams]:
    """Frozen stabilization parameters per batch for the current iterate."""
    U = _as_slab_state(slab, U)
    return [_batch_taus(slab, batch, h, _gather(U, batch.conn))
            for batch, h in zip(slab.disc.batches, slab.disc.sizes)]


def _element_taus(slab: SpaceTimeSlab, elem: int, Ue: np.ndarray, taus) -> Tuple[np.ndarray, np.ndarray]:
    if taus is not None:
        tau, nu = taus
        return np.atleast_1d(np.asarray(tau, dtype=float)), np.atleast_1d(np.asarray(nu, dtype=float))
    k, pos = slab.disc.locate(elem)
    batch = slab.disc.batches[k].take(slice(pos, pos + 1))
    params = _batch_taus(slab, batch, slab.disc.sizes[k][pos:pos + 1], Ue[None])
    return params.tau, params.nu_dc


def _single_element(slab: SpaceTimeSlab, elem: int, U_coeffs) -> Tuple[ElementBatch, np.ndarray, np.ndarray]:
    k, pos = slab.disc.locate(elem)
    batch = slab.disc.batches[k].take(slice(pos, pos + 1))
    Ue = np.asarray(U_coeffs, dtype=float).reshape(LAYERS, NODES_PER_ELEMENT, N_DOF)
    prev = slab.prev[batch.conn[0]]
    return batch, Ue, prev


def element_residual(slab: SpaceTimeSlab, elem: int, U_coeffs, taus: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """
    Weak-form residual of one prism as a 24-vector (layer, node, component).

    U_coeffs are ordered like `slab.disc.element_nodes(elem)`. With
    `taus` None the stabilization parameters are computed from U_coeffs.
    The Neumann load is assembled globally and is not part of this vector.
    """
    batch, Ue, prev = _single_element(slab, elem, U_coeffs)
    slab.disc.model.check(Ue)
    tau, nu = _element_taus(slab, elem, Ue, taus)
    R = _slab_kernel(batch, Ue[None, None], prev[None], tau, nu, slab.disc.model, slab.dt,
                     slab.disc.stabilization)
    return np.real(R[0, 0]).ravel()


def _perturbations(Ue: np.ndarray, step: float) -> np.ndarray:
    # (E, 2, 3, 4) -> (E, 24, 2, 3, 4) with i*step added to one coefficient each
    eye = np.eye(ELEMENT_DOFS).reshape(ELEMENT_DOFS, LAYERS, NODES_PER_ELEMENT, N_DOF)
    return Ue[:, None].astype(complex) + 1j * step * eye[None]


def _tangent_kernel(batch: ElementBatch, Ue: np.ndarray, prev: np.ndarray, tau, nu, model, dt, stab,
                    step: float = COMPLEX_STEP) -> Tuple[np.ndarray, np.ndarray]:
    """Residuals (E, 24) and complex-step tangents (E, 24, 24)."""
    R = _slab_kernel(batch, _perturbations(Ue, step), prev, tau, nu, model, dt, stab)
    n_e = Ue.shape[0]
    R = R.reshape(n_e, ELEMENT_DOFS, ELEMENT_DOFS)
    residual = np.real(R[:, 0])
    tangent = np.imag(R).transpose(0, 2, 1) / step
    return residual, tangent


def element_tangent(slab: SpaceTimeSlab, elem: int, U_coeffs, taus: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """24 x 24 derivative of element_residual with the stabilization parameters frozen."""
    batch, Ue, prev = _single_element(slab, elem, U_coeffs)
    slab.disc.model.check(Ue)
    tau, nu = _element_taus(slab, elem, Ue, taus)
    _, tangent = _tangent_kernel(batch, Ue[None], prev[None], tau, nu, slab.disc.model, slab.dt,
                                 slab.disc.stabilization)
    return tangent[0]


@dataclass(eq=False)
class AssembledSystem:
    residual: np.ndarray
    tangent: Optional[sp.csr_matrix] = None


def _chunks(n_elements: int, per_element: int) -> Iterator[slice]:
    size = max(1, ASSEMBLY_CHUNK_POINTS // max(per_element, 1))
    for start in range(0, n_elements, size):
        yield slice(start, min(start + size, n_elements))


def _global_dofs(slab: SpaceTimeSlab, conn: np.ndarray) -> np.ndarray:
    # (E, 24) global slab dofs in local order layer * 12 + node * 4 + component
    layer = np.arange(LAYERS)[None, :, None, None]
    comp = np.arange(N_DOF)[None, None, None, :]
    idx = (layer * slab.n_nodes + conn[:, None, :, None]) * N_DOF + comp
    return idx.reshape(len(conn), ELEMENT_DOFS)


def assemble(slab: SpaceTimeSlab, U: np.ndarray, taus: Optional[List[TauParams]] = None,
             with_tangent: bool = True) -> AssembledSystem:
    """
    Global slab residual (minus the Neumann load) and sparse tangent.

    Elements are visited batch by batch in a fixed order and duplicate
    entries are summed by scipy, so the result is deterministic.
    """
    disc = slab.disc
    U = _as_slab_state(slab, U)
    disc.model.check(U)
    if taus is None:
        taus = compute_taus(slab, U)

    residual = np.zeros(slab.n_dof)
    rows, cols, vals = [], [], []
    for batch, params in zip(disc.batches, taus):
        n_q = batch.shape.shape[0]
        per_element = (ELEMENT_DOFS if with_tangent else 1) * len(TIME_SHAPE) * n_q
        for sl in _chunks(batch.n_elements, per_element):
            part = batch.take(sl)
            Ue = _gather(U, part.conn)
            prev = slab.prev[part.conn]
            dofs = _global_dofs(slab, part.conn)
            if with_tangent:
                res, jac = _tangent_kernel(part, Ue, prev, params.tau[sl], params.nu_dc[sl], disc.model,
                                           slab.dt, disc.stabilization)
                rows.append(np.repeat(dofs, ELEMENT_DOFS, axis=1).ravel())
                cols.append(np.tile(dofs, (1, ELEMENT_DOFS)).ravel())
                vals.append(jac.ravel())
            else:
                res = np.real(_slab_kernel(part, Ue[:, None], prev, params.tau[sl], params.nu_dc[sl],
                                           disc.model, slab.dt, disc.stabilization)[:, 0])
                res = res.reshape(len(Ue), ELEMENT_DOFS)
            residual += np.bincount(dofs.ravel(), weights=res.ravel(), minlength=slab.n_dof)

    load = 0.5 * slab.dt * disc.load
    residual -= np.concatenate([load.ravel(), load.ravel()])

    tangent = None
    if with_tangent:
        tangent = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(slab.n_dof, slab.n_dof),
        ).tocsr()
    return AssembledSystem(residual, tangent)


@dataclass(eq=False)
class ConstrainedSystem:
    """
    Newton system in the rotated frame with the Dirichlet rows eliminated.

    Solving matrix @ x = rhs gives the rotated update; `to_global` maps
    it back to Cartesian slab components.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    rotation: sp.csr_matrix
    residual_norm: float

    def to_global(self, x: np.ndarray) -> np.ndarray:
        return self.rotation.T @ x


def rotation_matrix(slab: SpaceTimeSlab) -> sp.csr_matrix:
    """Block-diagonal orthogonal map from Cartesian to local nodal components for both layers."""
    blocks = np.tile(slab.disc.constraints.rotation_blocks(), (LAYERS, 1, 1))
    n_blocks = len(blocks)
    return sp.bsr_matrix((blocks, np.arange(n_blocks), np.arange(n_blocks + 1)),
                         shape=(slab.n_dof, slab.n_dof)).tocsr()


def apply_dirichlet(slab: SpaceTimeSlab, system: AssembledSystem, U: np.ndarray) -> ConstrainedSystem:
    """
    Strong Dirichlet imposition by row and column elimination.

    Constrained rows become (U_d - g_d); their coupling is moved to the
    right-hand side of the free rows.
    """
    constraints = slab.disc.constraints
    U = _as_slab_state(slab, U).ravel()
    Rm = rotation_matrix(slab)
    fixed = np.concatenate([constraints.fixed.ravel()] * LAYERS)
    target = np.concatenate([constraints.values.ravel()] * LAYERS)
    free = ~fixed

    r_local = Rm @ system.residual
    U_local = Rm @ U
    delta = np.zeros(slab.n_dof)
    delta[fixed] = target[fixed] - U_local[fixed]

    residual_norm = float(np.sqrt(np.sum(r_local[free] ** 2) + np.sum(delta ** 2)))
    if system.tangent is None:
        return ConstrainedSystem(None, None, Rm, residual_norm)

    J_local = (Rm @ system.tangent @ Rm.T).tocsr()
    D = sp.diags(free.astype(float))
    matrix = (D @ J_local @ D + sp.diags(fixed.astype(float))).tocsr()
    rhs = np.where(free, -r_local - J_local @ delta, delta)
    return ConstrainedSystem(matrix, rhs, Rm, residual_norm)
