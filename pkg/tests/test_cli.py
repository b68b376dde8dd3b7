"""End-to-end tests of the command-line handlers."""
import json

import numpy as np
import pytest

from app import main
from core.errors import ConfigError, DomainError, NewtonError, SlabFailure
from core.mesh import load_mesh, write_mesh
from core.stabilization import TauParams, tau_mom
from handlers.callbacks import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, error_handler, snapshot_path
from handlers.commands import StudyRow, check_mesh, relative_errors, sample_curve
from tests.conftest import ROOT
from utils.boundary_file import write_curves
from utils.writers import read_rows

CYLINDER_CURVE = ROOT / "geometry" / "cylinder.nurbs"
FREESTREAM_CASE = ROOT / "cases" / "freestream.cfg"


def vtk_scalars(path, name):
    lines = path.read_text().splitlines()
    start = lines.index(f"SCALARS {name} double 1") + 2
    values = []
    for line in lines[start:]:
        if line.startswith("SCALARS"):
            break
        values.append(float(line))
    return np.array(values)


def test_sample_curve_to_csv(tmp_path):
    out = tmp_path / "samples.csv"
    assert main(["sample-curve", str(CYLINDER_CURVE), "1", "4", "--output", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert len(rows) == 5
    for row in rows:
        x, y = float(row["x"]), float(row["y"])
        assert np.hypot(x, y) == pytest.approx(0.5, abs=1e-12)
        assert np.hypot(float(row["nx"]), float(row["ny"])) == pytest.approx(1.0, abs=1e-12)


def test_sample_curve_normals_point_into_the_body():
    rows = sample_curve(CYLINDER_CURVE, 1, 8)
    assert rows.shape == (9, 5)
    np.testing.assert_allclose(rows[:, 3:5], -rows[:, 1:3] / 0.5, atol=1e-12)


def test_sample_curve_unknown_id():
    assert main(["sample-curve", str(CYLINDER_CURVE), "9", "4"]) == EXIT_CONFIG


def test_generated_mesh_passes_the_check(tmp_path):
    mesh_path, curve_path = tmp_path / "cyl.mesh", tmp_path / "cyl.nurbs"
    assert main(["generate-mesh", "cylinder", "64", str(mesh_path), "--curves", str(curve_path)]) == EXIT_OK
    report = check_mesh(mesh_path, curve_path)
    assert report.ok
    assert report.wall_edges == 64
    assert report.n_nefem == 64
    assert report.max_projection < 1e-10
    assert report.min_determinant > 0.0
    assert main(["check-mesh", str(mesh_path), str(curve_path)]) == EXIT_OK


def test_moved_wall_node_fails_the_check(tmp_path):
    mesh_path, curve_path = tmp_path / "cyl.mesh", tmp_path / "cyl.nurbs"
    main(["generate-mesh", "cylinder", "32", str(mesh_path), "--curves", str(curve_path), "--layers", "8"])
    mesh = load_mesh(mesh_path)
    mesh.nodes[5] *= 1.05
    write_mesh(mesh, mesh_path)
    report = check_mesh(mesh_path, curve_path)
    assert not report.ok
    assert "wall node 5" in report.problems[0]
    assert main(["check-mesh", str(mesh_path), str(curve_path)]) == EXIT_CONFIG


def test_straight_mesh_check():
    report = check_mesh(ROOT / "meshes" / "square.mesh")
    assert report.ok
    assert report.n_nefem == 0
    assert report.wall_edges == 0
    assert report.min_determinant is None


def test_malformed_mesh_is_an_input_error(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("nodes 3 triangles 1\n")
    assert main(["check-mesh", str(path)]) == EXIT_CONFIG


@pytest.mark.parametrize("mode, count", [("NEFEM", 16 * 25 + 112 * 6), ("SFEM", 128 * 6)])
def test_dump_quadrature(tmp_path, mode, count):
    mesh_path, curve_path = tmp_path / "cyl.mesh", tmp_path / "cyl.nurbs"
    main(["generate-mesh", "cylinder", "16", str(mesh_path), "--curves", str(curve_path), "--layers", "4"])
    out = tmp_path / "points.csv"
    assert main(["dump-quadrature", str(mesh_path), str(curve_path), str(out), "--mode", mode]) == EXIT_OK
    rows = read_rows(out)
    assert len(rows) == count
    assert all(float(row["weight"]) > 0.0 for row in rows)


def test_free_stream_run(tmp_path):
    out = tmp_path / "run"
    assert main(["run", str(FREESTREAM_CASE), "--output", str(out)]) == EXIT_OK
    snapshots = sorted(out.glob("freestream_*.vtk"))
    assert [p.name for p in snapshots] == [snapshot_path(out, "freestream", k).name for k in range(1, 6)]
    np.testing.assert_allclose(vtk_scalars(snapshots[-1], "Cp"), 0.0, atol=1e-10)
    np.testing.assert_allclose(vtk_scalars(snapshots[-1], "M"), 1.7, atol=1e-3)
    summary = json.loads((out / "freestream_summary.json").read_text())
    assert summary["slabs"] == 5
    assert summary["status"] == "max_slabs"
    assert summary["newton_total"] == 0
    assert not (out / "freestream_wall.csv").exists()
    assert len(read_rows(out / "freestream_forces.csv")) == 5


def test_runs_are_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(FREESTREAM_CASE), "--output", str(first)]) == EXIT_OK
    assert main(["run", str(FREESTREAM_CASE), "--output", str(second)]) == EXIT_OK
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_missing_case_file(tmp_path):
    assert main(["run", str(tmp_path / "none.cfg")]) == EXIT_CONFIG


def test_unconfigured_boundary_tag(tmp_path):
    case = tmp_path / "partial.cfg"
    case.write_text(
        f"mesh.path = {ROOT / 'meshes' / 'square.mesh'}\n"
        "boundary.2.kind = inflow\n"
        "freestream.e = 1.1179\n"
        "gas.inviscid = true\n"
    )
    assert main(["run", str(case), "--output", str(tmp_path / "out")]) == EXIT_CONFIG


def test_error_codes():
    assert error_handler(SlabFailure("slab 3 failed")) == EXIT_SOLVER
    assert error_handler(NewtonError("no convergence")) == EXIT_SOLVER
    assert error_handler(ConfigError("bad key", "case.cfg", 4)) == EXIT_CONFIG
    with pytest.raises(KeyError):
        error_handler(KeyError("bug"))


def test_bad_stabilization_sizes_are_input_errors(cylinder_stream):
    with pytest.raises(DomainError) as err:
        tau_mom(cylinder_stream.state, 0.0, 0.1, cylinder_stream.gas)
    assert error_handler(err.value) == EXIT_CONFIG
    with pytest.raises(DomainError) as err:
        TauParams([-0.1], [0.0])
    assert error_handler(err.value) == EXIT_CONFIG


def test_relative_errors_against_the_finest_grid():
    rows = [
        StudyRow("64", "NEFEM", 100, 64, 1.10),
        StudyRow("128", "NEFEM", 400, 128, 1.00),
        StudyRow("64", "SFEM", 100, 64, 1.30),
        StudyRow("128", "SFEM", 400, 128, 1.20),
        StudyRow("128b", "SFEM", 400, 128, 1.25),
    ]
    relative_errors(rows)
    assert rows[0].rel_error == pytest.approx(0.1)
    assert rows[1].rel_error == 0.0
    assert rows[2].rel_error == pytest.approx(0.05 / 1.25)
    assert rows[4].rel_error == 0.0


def test_line_samples_are_collinear(tmp_path, line):
    path = tmp_path / "line.nurbs"
    write_curves([line], path)
    rows = sample_curve(path, 3, 6)
    np.testing.assert_allclose(rows[:, 2], 0.5 * rows[:, 1], atol=1e-14)
    np.testing.assert_allclose(np.hypot(rows[:, 3], rows[:, 4]), 1.0, atol=1e-14)
