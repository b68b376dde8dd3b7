"""Tests for mesh loading, validation and NEFEM classification."""
from pathlib import Path

import numpy as np
import pytest

from core.errors import ClassificationError, MeshFormatError, MeshValidationError, ProjectionError
from core.mesh import NEFEM, STANDARD, build_mesh, classify_elements, element_classes, element_size, load_mesh, write_mesh

ROOT = Path(__file__).resolve().parents[1]


def test_load_shipped_square_mesh():
    mesh = load_mesh(ROOT / "meshes" / "square.mesh")
    assert mesh.n_nodes == 9
    assert mesh.n_triangles == 8
    assert mesh.boundary_tags() == [2, 3]
    assert np.all(mesh.signed_areas() > 0.0)
    assert mesh.signed_areas().sum() == pytest.approx(1.0)


def test_write_and_load(tmp_path, ring):
    path = tmp_path / "ring.mesh"
    write_mesh(ring, path)
    loaded = load_mesh(path)
    np.testing.assert_array_equal(loaded.nodes, ring.nodes)
    np.testing.assert_array_equal(loaded.triangles, ring.triangles)
    np.testing.assert_array_equal(loaded.boundary_edges, ring.boundary_edges)


def test_bad_header_reports_line(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("# comment\nnodes 3 tris 1 bedges 0\n0 0\n1 0\n0 1\n0 1 2\n")
    with pytest.raises(MeshFormatError) as err:
        load_mesh(path)
    assert err.value.line == 2


def test_malformed_triangle_line(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("nodes 3 triangles 1 bedges 0\n0 0\n1 0\n0 1\n0 1\n")
    with pytest.raises(MeshFormatError) as err:
        load_mesh(path)
    assert err.value.line == 5


def test_clockwise_triangles_are_reoriented():
    mesh = build_mesh([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])
    assert mesh.signed_areas()[0] == pytest.approx(0.5)


def test_degenerate_triangle_is_rejected():
    with pytest.raises(MeshValidationError):
        build_mesh([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])


def test_open_boundary_loop_is_rejected():
    with pytest.raises(MeshValidationError):
        build_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)], [(0, 1, 1), (1, 2, 1)])


def test_boundary_edges_run_with_fluid_on_the_left():
    mesh = build_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)], [(1, 0, 1), (2, 1, 1), (0, 2, 1)])
    for a, b, _ in mesh.boundary_edges:
        t, k = mesh.boundary_edge_owner(int(a), int(b))
        tri = mesh.triangles[t]
        assert (tri[k], tri[(k + 1) % 3]) == (a, b)


def test_element_size_of_unit_right_triangle():
    mesh = build_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    assert element_size(mesh, 0) == pytest.approx(1.0746, abs=1e-4)


def test_classification_of_ring(ring, circle):
    records = classify_elements(ring, {1: circle}, {1: 1})
    assert len(records) == 16
    for rec in records:
        assert rec.xi2 - rec.xi1 == pytest.approx(1.0 / 16.0, abs=1e-9)
        assert rec.interior_node not in rec.wall_nodes
        np.testing.assert_array_equal(rec.x3, ring.nodes[rec.interior_node])
    # the element closing the seam ends at xi = 1
    assert max(rec.xi2 for rec in records) == 1.0
    labels = element_classes(ring, records)
    assert np.count_nonzero(labels == NEFEM) == 16
    assert np.count_nonzero(labels == STANDARD) == ring.n_triangles - 16


def test_node_off_the_curve_fails_projection(ring, circle):
    nodes = ring.nodes.copy()
    nodes[3] *= 1.0 + 2e-3
    moved = build_mesh(nodes, ring.triangles, ring.boundary_edges)
    with pytest.raises(ProjectionError):
        classify_elements(moved, {1: circle}, {1: 1})


def test_curve_oriented_against_the_fluid_is_rejected(ring, ccw_circle):
    with pytest.raises(ClassificationError):
        classify_elements(ring, {7: ccw_circle}, {1: 7})


def test_unknown_curve_id(ring, circle):
    with pytest.raises(ClassificationError):
        classify_elements(ring, {1: circle}, {1: 5})


def test_straight_mesh_without_walls_has_no_records(square):
    assert classify_elements(square, {}, {}) == []
