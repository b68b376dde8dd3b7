"""
Exception hierarchy for the NEFEM flow solver.
Library code raises these; the handlers turn them into log records and exit codes.
"""
from typing import Optional


class NefemError(Exception):
    """Base class for all solver errors."""


class DomainError(NefemError):
    """A parameter lies outside its admissible range."""


class GeometryError(NefemError):
    """Invalid or degenerate curve geometry."""


class ProjectionError(GeometryError):
    """Closest-point projection did not converge."""

    def __init__(self, message: str, best_xi: float, best_distance: float):
        super().__init__(f"{message} (best xi={best_xi:.15g}, distance={best_distance:.3e})")
        self.best_xi = best_xi
        self.best_distance = best_distance


class FittingError(GeometryError):
    """Least-squares curve fit is rank deficient."""


class MeshFormatError(NefemError):
    """Mesh or curve file does not follow the documented grammar."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class MeshValidationError(NefemError):
    """Mesh violates a topological or geometric invariant."""


class ClassificationError(NefemError):
    """Boundary triangle cannot be turned into a NEFEM element."""


class ElementError(NefemError):
    """Singular element mapping."""


class TangledElementError(ElementError):
    """NEFEM element with a nonpositive Jacobian determinant."""


class InvalidStateError(NefemError):
    """Nonpositive density or pressure."""


class ConfigError(NefemError):
    """Case file or configuration error."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class BoundaryConditionError(ConfigError):
    """Conflicting constraints at a boundary node."""


class LinearSolverError(NefemError):
    """Krylov breakdown or stagnation."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved relative residual {residual:.3e})")
        self.residual = residual


class NewtonError(NefemError):
    """Newton iteration failed to reach tolerance."""


class SlabFailure(NefemError):
    """A space-time slab could not be solved, even after dt halving."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
