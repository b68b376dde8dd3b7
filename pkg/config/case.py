"""
Case files: flat `section.key = value` text with `#` comments.

    case.name = cylinder
    case.mode = NEFEM
    mesh.generator = cylinder
    mesh.wall_edges = 64
    boundary.1.kind = noslip
    boundary.2.kind = inflow
    freestream.e = 1.1179
    solver.dt = 0.05

Relative paths are resolved against the case file's directory.
"""
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config.settings import NEFEM_QUADRATURE_POINTS, OUTPUT_DIRECTORY, STANDARD_QUADRATURE_ORDER
from core.assembly import BC_KINDS, Stabilization
from core.errors import ConfigError, DomainError, InvalidStateError
from core.physics import FreeStream, GasModel, check_state
from core.solver import SolverConfig

logger = logging.getLogger(__name__)

MODES = ("NEFEM", "SFEM")
GENERATORS = ("cylinder", "naca0012")
WALL_COORDINATES = ("theta", "x")

SECTIONS = ("case", "mesh", "geometry", "boundary", "freestream", "gas", "solver",
            "supg", "dc", "quadrature", "output")


@dataclass
class BoundarySpec:
    kind: str
    curve: Optional[int] = None
    flux: Optional[np.ndarray] = None


@dataclass
class CaseConfig:
    """Everything a run needs, as read from a case file."""

    name: str
    path: Path
    mode: str = "NEFEM"
    mesh_path: Optional[Path] = None
    mesh_generator: Optional[str] = None
    wall_edges: int = 64
    layers: Optional[int] = None
    far_radius: Optional[float] = None
    geometry_path: Optional[Path] = None
    boundaries: Dict[int, BoundarySpec] = field(default_factory=dict)
    freestream: Optional[FreeStream] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    stabilization: Stabilization = Stabilization()
    standard_order: int = STANDARD_QUADRATURE_ORDER
    nefem_points: int = NEFEM_QUADRATURE_POINTS
    output_directory: Path = Path(OUTPUT_DIRECTORY)
    wall_coordinate: str = "theta"
    wall_center: Tuple[float, float] = (0.0, 0.0)

    @property
    def gas(self) -> GasModel:
        return self.freestream.gas

    @property
    def wall_tags(self) -> Dict[int, int]:
        """Wall boundary tag -> curve id."""
        return {tag: (spec.curve if spec.curve is not None else tag)
                for tag, spec in self.boundaries.items() if spec.kind in ("slip", "noslip")}

    def variant(self, **changes) -> "CaseConfig":
        """Copy with some fields replaced (mode, wall_edges, output_directory...)."""
        return replace(self, **changes)


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{text}'")


def _floats(text: str) -> List[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


_CASTS = {bool: _bool, int: int, float: float, str: str}


def _read_pairs(path: Path) -> List[Tuple[int, str, str]]:
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read case file: {e}", str(path))
    pairs = []
    seen = {}
    for number, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got '{line}'", str(path), number)
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"key '{key}' has no section", str(path), number)
        section = key.split(".", 1)[0]
        if section not in SECTIONS:
            raise ConfigError(f"unknown section '{section}'", str(path), number)
        if key in seen:
            raise ConfigError(f"duplicate key '{key}' (first on line {seen[key]})", str(path), number)
        seen[key] = number
        pairs.append((number, key, value))
    return pairs


def load_case(path: Union[str, Path]) -> CaseConfig:
    """
    Parse and validate a case file.

    Raises:
        ConfigError: with file and line for syntax, unknown keys, bad values
            and missing referenced files
    """
    path = Path(path)
    pairs = _read_pairs(path)
    base = path.parent
    where = str(path)

    values: Dict[str, Tuple[int, str]] = {key: (number, value) for number, key, value in pairs}

    def get(key, cast=str, default=None):
        if key not in values:
            return default
        number, text = values.pop(key)
        try:
            return cast(text)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {e}", where, number)

    def line_of(key):
        return values[key][0] if key in values else None

    def resolve(text):
        p = Path(text)
        return p if p.is_absolute() else base / p

    case = CaseConfig(name=get("case.name", str, path.stem), path=path)
    case.mode = get("case.mode", str, "NEFEM").upper()
    if case.mode not in MODES:
        raise ConfigError(f"case.mode must be one of {MODES}, got {case.mode}", where)

    mesh_line = line_of("mesh.path")
    mesh_path = get("mesh.path")
    case.mesh_generator = get("mesh.generator")
    if (mesh_path is None) == (case.mesh_generator is None):
        raise ConfigError("exactly one of mesh.path and mesh.generator is required", where)
    if mesh_path is not None:
        case.mesh_path = resolve(mesh_path)
        if not case.mesh_path.exists():
            raise ConfigError(f"mesh file {case.mesh_path} does not exist", where, mesh_line)
    elif case.mesh_generator not in GENERATORS:
        raise ConfigError(f"mesh.generator must be one of {GENERATORS}, got {case.mesh_generator}", where)
    case.wall_edges = get("mesh.wall_edges", int, case.wall_edges)
    case.layers = get("mesh.layers", int)
    case.far_radius = get("mesh.far_radius", float)

    geometry_line = line_of("geometry.path")
    geometry = get("geometry.path")
    if geometry is not None:
        case.geometry_path = resolve(geometry)
        if not case.geometry_path.exists():
            raise ConfigError(f"curve file {case.geometry_path} does not exist", where, geometry_line)
    elif case.mesh_path is not None and case.mode == "NEFEM":
        logger.info("No geometry.path given: mesh walls are treated as straight")

    case.boundaries = _parse_boundaries(values, where)
    case.freestream = _parse_freestream(get, where)

    solver_kwargs = {}
    for f in fields(SolverConfig):
        key = f"solver.{f.name}"
        if key in values:
            solver_kwargs[f.name] = get(key, _CASTS[type(f.default)])
    cadence = get("output.cadence", int)
    if cadence is not None:
        solver_kwargs["cadence"] = cadence
    try:
        case.solver = SolverConfig(**solver_kwargs)
    except DomainError as e:
        raise ConfigError(str(e), where)

    case.stabilization = Stabilization(
        supg=get("supg.enabled", _bool, True),
        dc=get("dc.enabled", _bool, True),
        clamp_factor=get("dc.clamp_factor", float, Stabilization().clamp_factor),
    )
    case.standard_order = get("quadrature.standard_order", int, case.standard_order)
    case.nefem_points = get("quadrature.nefem_points", int, case.nefem_points)

    case.output_directory = resolve(get("output.directory", str, OUTPUT_DIRECTORY))
    case.wall_coordinate = get("output.wall_coordinate", str, case.wall_coordinate)
    if case.wall_coordinate not in WALL_COORDINATES:
        raise ConfigError(f"output.wall_coordinate must be one of {WALL_COORDINATES}", where)
    center = get("output.wall_center", _floats)
    if center is not None:
        if len(center) != 2:
            raise ConfigError("output.wall_center needs two numbers", where)
        case.wall_center = (center[0], center[1])

    if values:
        key, (number, _) = min(values.items(), key=lambda item: item[1][0])
        raise ConfigError(f"unknown key '{key}'", where, number)

    logger.info(f"Loaded case '{case.name}' ({case.mode}) from {path}")
    return case


def _parse_boundaries(values: Dict[str, Tuple[int, str]], where: str) -> Dict[int, BoundarySpec]:
    specs: Dict[int, BoundarySpec] = {}
    pending = {}
    for key in [k for k in values if k.startswith("boundary.")]:
        number, text = values.pop(key)
        parts = key.split(".")
        if len(parts) != 3 or not parts[1].isdigit():
            raise ConfigError(f"boundary keys look like boundary.<tag>.<field>, got '{key}'", where, number)
        tag, name = int(parts[1]), parts[2]
        if name not in ("kind", "curve", "flux"):
            raise ConfigError(f"unknown boundary field '{name}'", where, number)
        pending.setdefault(tag, {})[name] = (number, text.strip())

    for tag, entries in sorted(pending.items()):
        if "kind" not in entries:
            number = min(n for n, _ in entries.values())
            raise ConfigError(f"boundary.{tag}.kind is missing", where, number)
        number, kind = entries["kind"]
        if kind not in BC_KINDS:
            raise ConfigError(f"boundary kind must be one of {BC_KINDS}, got '{kind}'", where, number)
        spec = BoundarySpec(kind)
        if "curve" in entries:
            number, text = entries["curve"]
            try:
                spec.curve = int(text)
            except ValueError:
                raise ConfigError(f"boundary.{tag}.curve must be an integer", where, number)
        if "flux" in entries:
            number, text = entries["flux"]
            try:
                flux = _floats(text)
            except ValueError as e:
                raise ConfigError(f"bad flux for tag {tag}: {e}", where, number)
            if len(flux) != 4:
                raise ConfigError(f"boundary.{tag}.flux needs 4 values (nan = free)", where, number)
            spec.flux = np.array(flux)
        specs[tag] = spec
    return specs


def _parse_freestream(get, where: str) -> FreeStream:
    rho = get("freestream.rho", float, 1.0)
    u = get("freestream.u", float, 1.0)
    v = get("freestream.v", float, 0.0)
    e = get("freestream.e", float)
    if e is None:
        raise ConfigError("freestream.e is required", where)
    gamma = get("gas.gamma", float, 1.4)
    prandtl = get("gas.prandtl", float, 0.72)
    inviscid = get("gas.inviscid", _bool, False)
    mu = get("gas.mu", float)
    reynolds = get("gas.reynolds", float)
    length = get("gas.reference_length", float, 1.0)
    if mu is not None and reynolds is not None:
        raise ConfigError("give gas.mu or gas.reynolds, not both", where)
    try:
        if reynolds is not None and not inviscid:
            if not reynolds > 0.0 or math.isinf(reynolds):
                raise ConfigError("gas.reynolds must be positive and finite", where)
            mu = rho * math.hypot(u, v) * length / reynolds
        gas = GasModel(gamma, 0.0 if (mu is None or inviscid) else mu, prandtl, inviscid)
        fs = FreeStream(rho, u, v, e, gas, length)
        check_state(fs.state, gas)
    except (DomainError, InvalidStateError) as e:
        raise ConfigError(str(e), where)
    return fs
