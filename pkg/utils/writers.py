"""
Output writers: VTK legacy fields, wall and force-history CSVs, run summaries.

Numbers are written with fixed formats so identical runs give identical files.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from core.mesh import Mesh
from core.physics import FreeStream, GasModel, mach_number, pressure, pressure_coefficient
from core.solver import RunState

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
NUMBER = "{:.12e}"


def _fmt(value) -> str:
    if value is None:
        return ""
    return NUMBER.format(float(value))


def nodal_fields(U: np.ndarray, gas: GasModel, fs: FreeStream) -> Dict[str, np.ndarray]:
    """rho, u, v, p, M and Cp at every node."""
    U = np.asarray(U, dtype=float)
    p = pressure(U, gas)
    return {
        "rho": U[:, 0],
        "u": U[:, 1] / U[:, 0],
        "v": U[:, 2] / U[:, 0],
        "p": p,
        "M": mach_number(U, gas),
        "Cp": pressure_coefficient(p, fs),
    }


def write_vtk(mesh: Mesh, U: np.ndarray, gas: GasModel, fs: FreeStream, path: PathLike, title: str = "nefem"):
    """ASCII legacy VTK unstructured grid with point data rho, u, v, p, M, Cp."""
    fields = nodal_fields(U, gas, fs)
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes)
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend("5" for _ in range(mesh.n_triangles))
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, values in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in values)
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"📝 Wrote field snapshot {path}")


def write_wall_csv(samples: Sequence, path: PathLike, coordinate: str = "theta"):
    """One row per WallSample: position, x, y, p, Cp, cf (empty when inviscid), surface."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([coordinate, "x", "y", "p", "Cp", "cf", "surface"])
        for s in samples:
            writer.writerow([_fmt(s.position), _fmt(s.x), _fmt(s.y), _fmt(s.p), _fmt(s.cp), _fmt(s.cf), s.surface])
    logger.info(f"📝 Wrote wall data {path}")


def write_force_history(state: RunState, path: PathLike):
    """Columns slab, time, C_D pressure part, C_D viscous part (plus lift when monitored)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["slab", "time", "cd_pressure", "cd_viscous", "cl_pressure", "cl_viscous",
                         "newton", "residual", "change"])
        for rec in state.history:
            q = rec.quantities
            writer.writerow([
                rec.slab, _fmt(rec.time), _fmt(q.get("cd_pressure")), _fmt(q.get("cd_viscous")),
                _fmt(q.get("cl_pressure")), _fmt(q.get("cl_viscous")),
                rec.newton_iterations, _fmt(rec.residual), _fmt(rec.change),
            ])
    logger.info(f"📝 Wrote force history {path}")


def write_summary(summary: Dict, path: PathLike):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    logger.info(f"📝 Wrote run summary {path}")


def write_rows(header: Sequence[str], rows: Iterable[Sequence], path: PathLike):
    """Generic CSV with floats in the fixed output format."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    logger.info(f"📝 Wrote {path}")


def read_rows(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
