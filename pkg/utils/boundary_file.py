"""
NURBS boundary files.

One block per curve:

    curve <id> degree <p> nctrl <n>
    <knot> <knot> ...            (n + p + 1 values)
    <x> <y> <w>                  (n lines)

Blank lines and `#` comments are ignored. Floats are written with
repr(), so reading a written file and writing it again reproduces it
byte for byte.
"""
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from core.errors import DomainError, GeometryError, MeshFormatError
from core.nurbs import KnotVector, NurbsCurve

logger = logging.getLogger(__name__)


def _content_lines(path: Path):
    try:
        text = path.read_text()
    except OSError as e:
        raise MeshFormatError(f"cannot read curve file: {e}", str(path))
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def load_curves(path: Union[str, Path]) -> Dict[int, NurbsCurve]:
    """
    Read every curve of a boundary file.

    Returns:
        curve id -> NurbsCurve, in file order

    Raises:
        MeshFormatError: grammar violations and invalid curve data, with line numbers
    """
    path = Path(path)
    where = str(path)
    lines = list(_content_lines(path))
    curves: Dict[int, NurbsCurve] = {}
    i = 0
    while i < len(lines):
        number, tokens = lines[i]
        if len(tokens) != 6 or tokens[0] != "curve" or tokens[2] != "degree" or tokens[4] != "nctrl":
            raise MeshFormatError("expected 'curve <id> degree <p> nctrl <n>'", where, number)
        try:
            curve_id, degree, n_ctrl = int(tokens[1]), int(tokens[3]), int(tokens[5])
        except ValueError:
            raise MeshFormatError("curve header needs integer id, degree and nctrl", where, number) from None
        if curve_id in curves:
            raise MeshFormatError(f"curve {curve_id} defined twice", where, number)
        if n_ctrl < 1:
            raise MeshFormatError(f"curve {curve_id}: nctrl must be positive", where, number)
        if i + 2 + n_ctrl > len(lines):
            raise MeshFormatError(f"curve {curve_id}: file ends before its {n_ctrl} control points", where, number)

        knot_line, knot_tokens = lines[i + 1]
        try:
            knots = [float(t) for t in knot_tokens]
        except ValueError:
            raise MeshFormatError("malformed knot vector", where, knot_line) from None
        if len(knots) != n_ctrl + degree + 1:
            raise MeshFormatError(
                f"curve {curve_id}: {len(knots)} knots, expected nctrl + degree + 1 = {n_ctrl + degree + 1}",
                where, knot_line)

        ctrl = np.zeros((n_ctrl, 2))
        weights = np.zeros(n_ctrl)
        for k in range(n_ctrl):
            row_line, row = lines[i + 2 + k]
            if len(row) != 3:
                raise MeshFormatError(f"control point line needs 'x y w', got {len(row)} values", where, row_line)
            try:
                ctrl[k] = float(row[0]), float(row[1])
                weights[k] = float(row[2])
            except ValueError:
                raise MeshFormatError("malformed control point line", where, row_line) from None

        try:
            curves[curve_id] = NurbsCurve(ctrl, weights, KnotVector(knots, degree), curve_id)
        except (GeometryError, DomainError) as e:
            raise MeshFormatError(f"curve {curve_id}: {e}", where, number) from None
        i += 2 + n_ctrl

    logger.info(f"Loaded {len(curves)} curve(s) from {path}")
    return curves


def format_curve(curve: NurbsCurve) -> List[str]:
    lines = [f"curve {curve.curve_id} degree {curve.degree} nctrl {curve.n_ctrl}",
             " ".join(repr(float(k)) for k in curve.knot_vector.knots)]
    for (x, y), w in zip(curve.control_points, curve.weights):
        lines.append(f"{float(x)!r} {float(y)!r} {float(w)!r}")
    return lines


def write_curves(curves, path: Union[str, Path]):
    """Write curves (a list or an id -> curve mapping) in file order."""
    if isinstance(curves, dict):
        curves = list(curves.values())
    lines = []
    for curve in curves:
        lines.extend(format_curve(curve))
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(curves)} curve(s) to {path}")
