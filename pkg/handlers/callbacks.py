"""
Per-slab callbacks and error handling for the NEFEM flow solver.
Writes field snapshots while marching and turns failures into exit codes.
"""
import logging
from pathlib import Path
from typing import Callable

from core.errors import (
    ClassificationError,
    ConfigError,
    DomainError,
    ElementError,
    GeometryError,
    InvalidStateError,
    LinearSolverError,
    MeshFormatError,
    MeshValidationError,
    NefemError,
    NewtonError,
    SlabFailure,
)
from core.history import history
from core.solver import RunState
from utils.helpers import truncate_message
from utils.writers import write_force_history, write_summary, write_vtk

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

INPUT_ERRORS = (ConfigError, MeshFormatError, MeshValidationError, ClassificationError,
                GeometryError, ElementError, DomainError)
SOLVER_ERRORS = (SlabFailure, NewtonError, LinearSolverError, InvalidStateError)


def snapshot_path(directory: Path, name: str, slab: int) -> Path:
    return Path(directory) / f"{name}_{slab:05d}.vtk"


def snapshot_callback(prepared, directory: Path) -> Callable[[RunState], None]:
    """
    Build the on_slab callback that writes a VTK snapshot of the top layer.

    Args:
        prepared: PreparedCase with mesh and case configuration
        directory: Output directory

    Returns:
        Callable taking the current RunState
    """
    case = prepared.case

    def on_slab(state: RunState):
        path = snapshot_path(directory, case.name, state.slab)
        write_vtk(prepared.mesh, state.U, case.gas, case.freestream, path,
                  title=f"{case.name} slab {state.slab} t={state.time:.6g}")
        history.track_output("vtk")

    return on_slab


def dump_failed_state(prepared, directory: Path, error: SlabFailure):
    """Write the last converged state and the partial history of a failed run."""
    case = prepared.case
    state = error.state
    if state is None:
        logger.warning("⚠️ No state attached to the failure, nothing to dump")
        return
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_vtk(prepared.mesh, state.U, case.gas, case.freestream, directory / f"{case.name}_failed.vtk",
              title=f"{case.name} last good state slab {state.slab}")
    write_force_history(state, directory / f"{case.name}_forces.csv")
    write_summary({
        "case": case.name,
        "mode": case.mode,
        "status": "failed",
        "error": str(error),
        "slabs": state.slab,
        "time": state.time,
        "newton_total": state.total_newton,
    }, directory / f"{case.name}_summary.json")
    history.track_output("dump")
    logger.error(f"❌ Solver state dumped to {directory}")


def error_handler(error: Exception) -> int:
    """
    Log an error and map it to a process exit code.

    Args:
        error: The exception raised by a command

    Returns:
        2 for input errors (configuration, mesh, geometry), 3 for solver failures
    """
    if isinstance(error, SOLVER_ERRORS):
        history.track_failure()
        logger.error(f"❌ Solver failure: {truncate_message(str(error))}")
        return EXIT_SOLVER
    if isinstance(error, INPUT_ERRORS):
        logger.error(f"❌ Input error: {error}")
        return EXIT_CONFIG
    if isinstance(error, NefemError):
        logger.error(f"❌ {type(error).__name__}: {error}")
        return EXIT_CONFIG
    if isinstance(error, (OSError, RuntimeError)):
        logger.error(f"❌ {type(error).__name__}: {error}")
        return EXIT_CONFIG
    raise error
