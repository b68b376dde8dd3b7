"""
Command handlers for the NEFEM flow solver.
Handles run, check-mesh, sample-curve, study, generate-mesh and dump-quadrature.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.case import CaseConfig, load_case
from config.settings import NEFEM_DETERMINISTIC, NEFEM_QUADRATURE_POINTS, STANDARD_QUADRATURE_ORDER
from core.assembly import BoundaryCondition, Discretization, discretize
from core.errors import (
    BoundaryConditionError,
    ClassificationError,
    DomainError,
    GeometryError,
    SlabFailure,
)
from core.forces import ForceCoefficients, cp_jump_ratio, drag_coefficient, max_mach, wall_samples
from core.history import history
from core.mapping import build_batches, min_nefem_determinant, nefem_quadrature
from core.mesh import Mesh, NefemElementRecord, classify_elements, load_mesh, write_mesh
from core.meshgen import cylinder_mesh, naca_mesh
from core.nurbs import NurbsCurve
from core.physics import NavierStokesModel
from core.solver import RunState, march
from handlers.callbacks import dump_failed_state, snapshot_callback, snapshot_path
from utils.boundary_file import load_curves, write_curves
from utils.helpers import format_report, format_table, mesh_cache
from utils.writers import write_force_history, write_rows, write_summary, write_vtk, write_wall_csv

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(eq=False)
class PreparedCase:
    """A case with its mesh, curves, NEFEM records and discretization built."""

    case: CaseConfig
    mesh: Mesh
    curves: Dict[int, NurbsCurve]
    records: List[NefemElementRecord]
    bcs: List[BoundaryCondition]
    disc: Discretization

    @property
    def has_walls(self) -> bool:
        return any(bc.is_wall for bc in self.bcs)

    @property
    def n_en_wall(self) -> int:
        return self.mesh.n_en_wall([bc.tag for bc in self.bcs if bc.is_wall])


@dataclass
class RunOutcome:
    state: RunState
    coefficients: Optional[ForceCoefficients]
    summary: Dict
    directory: Path


@dataclass
class MeshReport:
    """Result of check_mesh; `problems` lists every violated NEFEM requirement."""

    n_nodes: int
    n_triangles: int
    n_boundary_edges: int
    wall_edges: int
    n_nefem: int
    max_projection: float
    min_determinant: Optional[float]
    problems: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def generated_mesh(generator: str, wall_edges: int, layers: Optional[int] = None,
                   far_radius: Optional[float] = None) -> Tuple[Mesh, NurbsCurve]:
    """
    Build (or fetch from the cache) a benchmark O-grid.

    Args:
        generator: "cylinder" or "naca0012"
        wall_edges: Edges on the wall curve
        layers: Radial layers (grid-family default when None)
        far_radius: Far-field radius (generator default when None)

    Returns:
        (mesh, wall curve)
    """
    key = (generator, wall_edges, layers, far_radius)
    cached = mesh_cache.get(key)
    if cached is not None:
        return cached
    kwargs = {} if far_radius is None else {"far_radius": far_radius}
    if generator == "cylinder":
        mesh, curve = cylinder_mesh(wall_edges, layers, **kwargs)
    elif generator == "naca0012":
        mesh, curve = naca_mesh(wall_edges, layers, **kwargs)
    else:
        raise DomainError(f"unknown mesh generator '{generator}'")
    mesh_cache.store(key, mesh, curve)
    return mesh, curve


def _boundary_conditions(case: CaseConfig, mesh: Mesh) -> List[BoundaryCondition]:
    tags = set(mesh.boundary_tags())
    missing = sorted(tags - set(case.boundaries))
    if missing:
        raise BoundaryConditionError(f"mesh boundary tag(s) {missing} have no boundary.<tag>.kind", str(case.path))
    for tag in sorted(set(case.boundaries) - tags):
        logger.warning(f"⚠️ boundary.{tag} is configured but the mesh has no edges with tag {tag}")
    bcs = []
    for tag, spec in sorted(case.boundaries.items()):
        if tag not in tags:
            continue
        values = case.freestream.state if spec.kind == "inflow" else None
        bcs.append(BoundaryCondition(spec.kind, tag, values=values, flux=spec.flux, curve_id=spec.curve))
    return bcs


def prepare_case(case: CaseConfig) -> PreparedCase:
    """
    Build the mesh, curves, boundary conditions and discretization of a case.

    NEFEM records are only built in NEFEM mode; SFEM keeps the same nodes
    with straight edges everywhere.
    """
    if case.mesh_generator is not None:
        mesh, curve = generated_mesh(case.mesh_generator, case.wall_edges, case.layers, case.far_radius)
        curves = {curve.curve_id: curve}
    else:
        mesh = load_mesh(case.mesh_path)
        curves = {}
    if case.geometry_path is not None:
        curves.update(load_curves(case.geometry_path))

    bcs = _boundary_conditions(case, mesh)
    records: List[NefemElementRecord] = []
    if case.mode == "NEFEM":
        wall_tags = {tag: cid for tag, cid in case.wall_tags.items() if tag in mesh.boundary_tags()}
        if curves:
            records = classify_elements(mesh, curves, wall_tags)
        elif wall_tags:
            logger.warning("⚠️ NEFEM mode without curves: wall elements stay straight")

    disc = discretize(
        mesh, NavierStokesModel(case.gas), bcs, records, curves, case.mode, case.freestream,
        case.stabilization, case.standard_order, case.nefem_points,
    )
    return PreparedCase(case, mesh, curves, records, bcs, disc)


def _summary(prepared: PreparedCase, state: RunState, coefficients: Optional[ForceCoefficients],
             samples) -> Dict:
    case = prepared.case
    summary = {
        "case": case.name,
        "mode": case.mode,
        "status": "steady" if state.steady else "max_slabs",
        "slabs": state.slab,
        "time": state.time,
        "final_dt": state.history[-1].dt if state.history else case.solver.dt,
        "newton_total": state.total_newton,
        "nodes": prepared.mesh.n_nodes,
        "triangles": prepared.mesh.n_triangles,
        "nefem_elements": len(prepared.records),
        "wall_edges": prepared.n_en_wall,
        "mach": case.freestream.mach,
        "deterministic": NEFEM_DETERMINISTIC,
        "max_mach": max_mach(prepared.disc, state.U),
    }
    if coefficients is not None:
        summary.update(coefficients.as_dict())
    if samples:
        summary["cp_jump_ratio"] = cp_jump_ratio(samples)
    return summary


def run_case(case: CaseConfig, prepared: Optional[PreparedCase] = None) -> RunOutcome:
    """
    March a case to steady state and write every output file.

    Outputs in case.output_directory: `<name>_<slab>.vtk` snapshots every
    cadence slabs plus the final one, `<name>_wall.csv`,
    `<name>_forces.csv` and `<name>_summary.json`.

    Raises:
        SlabFailure: after dumping the last good state next to the outputs
    """
    prepared = prepared or prepare_case(case)
    directory = Path(case.output_directory)
    directory.mkdir(parents=True, exist_ok=True)
    fs = case.freestream

    logger.info(f"🚀 Running '{case.name}' in {case.mode} mode: {prepared.mesh.n_triangles} triangles, "
                f"{len(prepared.records)} NEFEM elements, M={fs.mach:.3f}")

    monitor = None
    if prepared.has_walls:
        def monitor(U):
            return drag_coefficient(prepared.disc, U, fs).as_dict()

    try:
        state = march(prepared.disc, case.solver, monitor=monitor,
                      on_slab=snapshot_callback(prepared, directory))
    except SlabFailure as e:
        dump_failed_state(prepared, directory, e)
        raise

    for rec in state.history:
        history.track_slab(case.name, rec.newton_iterations)
    history.track_halvings(state.dt_halvings)
    if state.slab % case.solver.cadence != 0:
        write_vtk(prepared.mesh, state.U, case.gas, fs, snapshot_path(directory, case.name, state.slab),
                  title=f"{case.name} slab {state.slab} t={state.time:.6g}")
        history.track_output("vtk")

    coefficients = None
    samples = []
    if prepared.has_walls:
        coefficients = drag_coefficient(prepared.disc, state.U, fs)
        samples = wall_samples(prepared.disc, state.U, fs, case.wall_coordinate, case.wall_center)
        write_wall_csv(samples, directory / f"{case.name}_wall.csv", case.wall_coordinate)
        history.track_output("wall")
        history.track_drag(case.name, coefficients.cd)
    write_force_history(state, directory / f"{case.name}_forces.csv")
    history.track_output("forces")

    summary = _summary(prepared, state, coefficients, samples)
    write_summary(summary, directory / f"{case.name}_summary.json")
    history.track_output("summary")

    if coefficients is not None:
        logger.info(f"✅ '{case.name}' done after {state.slab} slabs: C_D = {coefficients.cd:.6f} "
                    f"(pressure {coefficients.cd_pressure:.6f}, viscous {coefficients.cd_viscous:.6f})")
    else:
        logger.info(f"✅ '{case.name}' done after {state.slab} slabs")
    return RunOutcome(state, coefficients, summary, directory)


def run(config_path: PathLike, output_directory: Optional[PathLike] = None) -> RunOutcome:
    """Handle `run <config>`."""
    case = load_case(config_path)
    if output_directory is not None:
        case = case.variant(output_directory=Path(output_directory))
    outcome = run_case(case)
    logger.info(history.get_stats_summary())
    return outcome


def _curve_wall_tags(mesh: Mesh, curves: Dict[int, NurbsCurve]) -> Dict[int, int]:
    """Boundary tags that name a curve id are wall tags on that curve."""
    return {tag: tag for tag in mesh.boundary_tags() if tag in curves}


def check_mesh(mesh_path: PathLike, curves_path: Optional[PathLike] = None,
               nefem_points: int = NEFEM_QUADRATURE_POINTS) -> MeshReport:
    """
    Handle `check-mesh <mesh> [<curves>]`.

    Boundary tags equal to a curve id are treated as walls on that curve.
    Parse errors propagate; NEFEM requirement violations are collected
    in the report.
    """
    mesh = load_mesh(mesh_path)
    curves = load_curves(curves_path) if curves_path is not None else {}
    wall_tags = _curve_wall_tags(mesh, curves)

    max_projection = 0.0
    for tag, cid in wall_tags.items():
        curve = curves[cid]
        nodes = np.unique(mesh.tagged_edges(tag)[:, :2])
        for node in nodes:
            point = mesh.nodes[node]
            xi = curve.closest_point(point)
            max_projection = max(max_projection, float(np.hypot(*(curve.evaluate(xi) - point))))

    report = MeshReport(
        n_nodes=mesh.n_nodes, n_triangles=mesh.n_triangles, n_boundary_edges=len(mesh.boundary_edges),
        wall_edges=mesh.n_en_wall(list(wall_tags)), n_nefem=0, max_projection=max_projection,
        min_determinant=None,
    )
    try:
        records = classify_elements(mesh, curves, wall_tags)
    except (GeometryError, ClassificationError) as e:
        report.problems.append(str(e))
        records = []
    report.n_nefem = len(records)
    if records:
        report.min_determinant = min_nefem_determinant(records, curves, nefem_quadrature(nefem_points))
        if report.min_determinant <= 0.0:
            report.problems.append(f"nonpositive NEFEM Jacobian determinant {report.min_determinant:.3e}")

    text = format_report(f"🔎 Mesh check: {mesh_path}", [
        ("nodes", report.n_nodes),
        ("triangles", report.n_triangles),
        ("boundary edges", report.n_boundary_edges),
        ("wall edges", report.wall_edges),
        ("NEFEM records", report.n_nefem),
        ("max projection", report.max_projection),
        ("min NEFEM det", report.min_determinant if report.min_determinant is not None else "-"),
    ])
    logger.info(text)
    if report.ok:
        logger.info("✅ Mesh satisfies the NEFEM requirements")
    for problem in report.problems:
        logger.error(f"❌ {problem}")
    return report


def sample_curve(curves_path: PathLike, curve_id: int, n: int, output: Optional[PathLike] = None) -> np.ndarray:
    """
    Handle `sample-curve <curves> <id> <n>`.

    Returns:
        (n + 1, 5) array of xi, x, y, nx, ny at uniform xi
    """
    curves = load_curves(curves_path)
    if curve_id not in curves:
        raise DomainError(f"no curve {curve_id} in {curves_path} (have {sorted(curves)})")
    if n < 1:
        raise DomainError(f"need at least one interval, got {n}")
    curve = curves[curve_id]
    xi = np.linspace(0.0, 1.0, n + 1)
    rows = np.array([[x, *curve.evaluate(x), *curve.outward_normal(x)] for x in xi])
    if output is not None:
        write_rows(["xi", "x", "y", "nx", "ny"], [[float(v) for v in row] for row in rows], output)
    return rows


@dataclass
class StudyRow:
    grid: str
    mode: str
    n_en: int
    n_en_wall: int
    cd: float
    rel_error: Optional[float] = None


STUDY_HEADER = ["grid", "mode", "n_en", "n_en_wall", "cd", "rel_error"]


def _write_study(rows: List[StudyRow], path: Path):
    write_rows(STUDY_HEADER, [[r.grid, r.mode, r.n_en, r.n_en_wall, r.cd,
                               "" if r.rel_error is None else r.rel_error] for r in rows], path)


def relative_errors(rows: List[StudyRow]):
    """Fill rel_error per mode against the run with the most elements (last one on ties)."""
    for mode in sorted({r.mode for r in rows}):
        group = [r for r in rows if r.mode == mode]
        finest = max(reversed(group), key=lambda r: r.n_en)
        for r in group:
            diff = abs(r.cd - finest.cd)
            r.rel_error = diff / abs(finest.cd) if finest.cd != 0.0 else diff


def _grid_variant(case: CaseConfig, grid: str, mode: str) -> CaseConfig:
    directory = case.output_directory / f"{mode.lower()}_{Path(grid).stem}"
    if grid.isdigit():
        if case.mesh_generator is None:
            raise DomainError(f"grid '{grid}' is a wall-edge count but the case has no mesh.generator")
        return case.variant(mode=mode, wall_edges=int(grid), output_directory=directory)
    path = Path(grid)
    if not path.exists():
        raise DomainError(f"grid mesh {grid} does not exist")
    return case.variant(mode=mode, mesh_path=path, mesh_generator=None, output_directory=directory)


def convergence_study(config_path: PathLike, grids: Sequence[str], output_directory: Optional[PathLike] = None,
                      modes: Sequence[str] = ("NEFEM", "SFEM")) -> List[StudyRow]:
    """
    Handle `study <config> <grids...>`.

    Each grid (a wall-edge count for generated meshes or a mesh path) is
    run in every mode. Relative C_D errors are taken against the finest
    grid of the same mode. The CSV is rewritten after every run, so a
    failure leaves the finished rows behind.
    """
    case = load_case(config_path)
    if output_directory is not None:
        case = case.variant(output_directory=Path(output_directory))
    case.output_directory.mkdir(parents=True, exist_ok=True)
    path = case.output_directory / f"{case.name}_study.csv"
    rows: List[StudyRow] = []

    for mode in modes:
        for grid in grids:
            variant = _grid_variant(case, str(grid), mode)
            logger.info(f"📐 Study: grid {grid} in {mode} mode")
            try:
                outcome = run_case(variant)
            except Exception:
                _write_study(rows, path)
                logger.error(f"❌ Study aborted at grid {grid} ({mode}); {len(rows)} finished run(s) saved to {path}")
                raise
            if outcome.coefficients is None:
                raise DomainError("a convergence study needs a wall to integrate the drag on")
            mesh_info = outcome.summary
            rows.append(StudyRow(str(grid), mode, mesh_info["triangles"], mesh_info["wall_edges"],
                                 outcome.coefficients.cd))
            _write_study(rows, path)

    relative_errors(rows)
    _write_study(rows, path)
    logger.info("\n" + format_table(STUDY_HEADER, [[r.grid, r.mode, r.n_en, r.n_en_wall, r.cd, r.rel_error]
                                                   for r in rows]))
    return rows


def generate_mesh(generator: str, wall_edges: int, mesh_output: PathLike, curves_output: Optional[PathLike] = None,
                  layers: Optional[int] = None, far_radius: Optional[float] = None) -> Mesh:
    """Handle `generate-mesh <cylinder|naca0012> <wall_edges> <out.mesh> [--curves out.nurbs]`."""
    mesh, curve = generated_mesh(generator, wall_edges, layers, far_radius)
    write_mesh(mesh, mesh_output)
    if curves_output is not None:
        write_curves([curve], curves_output)
    logger.info(f"✅ {generator} mesh with {mesh.n_triangles} triangles written to {mesh_output}")
    return mesh


def dump_quadrature(mesh_path: PathLike, curves_path: Optional[PathLike], output: PathLike, mode: str = "NEFEM",
                    standard_order: int = STANDARD_QUADRATURE_ORDER,
                    nefem_points: int = NEFEM_QUADRATURE_POINTS) -> int:
    """
    Handle `dump-quadrature <mesh> <curves> <out.csv>`.

    Writes one row per quadrature point: element, kind, point index,
    physical x and y, and weight times Jacobian determinant.

    Returns:
        Number of points written
    """
    mesh = load_mesh(mesh_path)
    curves = load_curves(curves_path) if curves_path is not None else {}
    records = []
    if mode.upper() == "NEFEM" and curves:
        records = classify_elements(mesh, curves, _curve_wall_tags(mesh, curves))
    rows = []
    for batch in build_batches(mesh, records, curves, mode, standard_order, nefem_points):
        for e, elem in enumerate(batch.elements):
            for q in range(batch.points.shape[1]):
                x, y = batch.points[e, q]
                rows.append((int(elem), batch.kind, q, float(x), float(y), float(batch.wdet[e, q])))
    rows.sort(key=lambda row: (row[0], row[2]))
    write_rows(["element", "kind", "point", "x", "y", "weight"], rows, output)
    return len(rows)
