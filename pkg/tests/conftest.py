"""Shared fixtures: curves, small meshes and the benchmark free streams."""
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core.mesh import build_mesh  # noqa: E402
from core.meshgen import cylinder_curve, ogrid_mesh  # noqa: E402
from core.nurbs import make_circle, make_line  # noqa: E402
from core.physics import FreeStream, GasModel  # noqa: E402

# Supersonic cylinder (M = 1.7) and transonic airfoil (M = 0.8) streams
CYLINDER_E = 1.1179
NACA_E = 3.29


@pytest.fixture
def circle():
    """Clockwise circle of radius 0.5 about the origin, curve id 1."""
    return cylinder_curve()


@pytest.fixture
def ccw_circle():
    return make_circle((0.0, 0.0), 0.5, clockwise=False, curve_id=7)


@pytest.fixture
def line():
    return make_line((0.0, 0.0), (2.0, 1.0), curve_id=3)


@pytest.fixture
def air():
    return GasModel()


@pytest.fixture
def cylinder_stream():
    return FreeStream(1.0, 1.0, 0.0, CYLINDER_E, GasModel())


@pytest.fixture
def viscous_cylinder_stream():
    return FreeStream(1.0, 1.0, 0.0, CYLINDER_E, GasModel()).with_reynolds(2.0e5)


@pytest.fixture
def naca_stream():
    return FreeStream(1.0, 1.0, 0.0, NACA_E, GasModel(inviscid=True))


def square_mesh(n: int = 2, size: float = 1.0, tags=(2, 3, 2, 2)):
    """
    Structured n x n square split into 2 n^2 triangles.

    Boundary tags in order bottom, right, top, left.
    """
    h = size / n
    nodes = [(i * h, j * h) for j in range(n + 1) for i in range(n + 1)]

    def nid(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            triangles += [(a, b, c), (a, c, d)]
    bottom, right, top, left = tags
    edges = [(nid(i, 0), nid(i + 1, 0), bottom) for i in range(n)]
    edges += [(nid(n, j), nid(n, j + 1), right) for j in range(n)]
    edges += [(nid(i + 1, n), nid(i, n), top) for i in range(n)]
    edges += [(nid(0, j + 1), nid(0, j), left) for j in range(n)]
    return build_mesh(np.array(nodes), triangles, edges, source="square")


@pytest.fixture
def square():
    return square_mesh()


@pytest.fixture
def ring(circle):
    """Coarse O-grid around the unit-diameter cylinder: 16 wall edges, 4 layers."""
    return ogrid_mesh(circle, (0.0, 0.0), 16, 4, 2.0)
