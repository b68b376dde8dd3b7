"""Tests for the output writers, report helpers and run history."""
import numpy as np

from core.forces import WallSample
from core.history import RunHistory
from core.solver import RunState, SlabRecord
from utils.helpers import MeshCache, format_report, format_table, truncate_message
from utils.writers import nodal_fields, read_rows, write_force_history, write_rows, write_vtk, write_wall_csv


def test_vtk_layout(tmp_path, square, cylinder_stream):
    U = np.tile(cylinder_stream.state, (9, 1))
    path = tmp_path / "square.vtk"
    write_vtk(square, U, cylinder_stream.gas, cylinder_stream, path, title="square\nslab 1")
    lines = path.read_text().splitlines()
    assert lines[1] == "square slab 1"
    assert "POINTS 9 double" in lines
    assert "CELLS 8 32" in lines
    start = lines.index("CELL_TYPES 8") + 1
    assert lines[start:start + 8] == ["5"] * 8
    for name in ("rho", "u", "v", "p", "M", "Cp"):
        assert f"SCALARS {name} double 1" in lines


def test_nodal_fields(cylinder_stream):
    fields = nodal_fields(np.tile(cylinder_stream.state, (2, 1)), cylinder_stream.gas, cylinder_stream)
    np.testing.assert_allclose(fields["u"], 1.0)
    np.testing.assert_allclose(fields["Cp"], 0.0, atol=1e-14)
    np.testing.assert_allclose(fields["M"], cylinder_stream.mach)


def test_wall_csv(tmp_path):
    samples = [WallSample(0.0, -0.5, 0.0, 1.2, 1.5, None), WallSample(90.0, 0.0, 0.5, 0.4, -0.3, 0.002)]
    path = tmp_path / "wall.csv"
    write_wall_csv(samples, path)
    rows = read_rows(path)
    assert list(rows[0]) == ["theta", "x", "y", "p", "Cp", "cf", "surface"]
    assert rows[0]["cf"] == ""
    assert float(rows[1]["cf"]) == 0.002


def test_force_history_columns(tmp_path):
    state = RunState(slab=2, time=0.2, U=np.zeros((1, 4)), history=[
        SlabRecord(1, 0.1, 0.1, 2, 1e-10, 0.5, {"cd_pressure": 1.0, "cd_viscous": 0.1}),
        SlabRecord(2, 0.2, 0.1, 1, 1e-11, 0.01),
    ])
    path = tmp_path / "forces.csv"
    write_force_history(state, path)
    rows = read_rows(path)
    assert [row["slab"] for row in rows] == ["1", "2"]
    assert float(rows[0]["cd_pressure"]) == 1.0
    assert rows[1]["cd_pressure"] == ""
    assert rows[0]["newton"] == "2"


def test_rows_use_the_fixed_float_format(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows(["name", "value"], [["a", 0.5], ["b", 3]], path)
    assert path.read_text() == "name,value\na,5.000000000000e-01\nb,3\n"


def test_format_report_and_table():
    report = format_report("Title", [("nodes", 9), ("det", 0.123456789)])
    assert report.splitlines() == ["Title", "  nodes : 9", "  det   : 0.123457"]
    table = format_table(["grid", "cd"], [["64", 1.5], ["128", 1.25]])
    assert table.splitlines() == ["grid    cd", "  64   1.5", " 128  1.25"]


def test_truncate_message():
    assert truncate_message("short") == "short"
    assert truncate_message("x" * 300) == "x" * 200 + "..."


def test_mesh_cache(square, circle):
    cache = MeshCache()
    key = ("cylinder", 16, None, None)
    assert cache.get(key) is None
    cache.store(key, square, circle)
    assert cache.get(key) == (square, circle)
    cache.clear()
    assert cache.get(key) is None


def test_run_history_summary():
    history = RunHistory()
    history.track_slab("cylinder", 3)
    history.track_slab("cylinder", 1)
    history.track_slab("naca0012", 4)
    history.track_halvings(2)
    history.track_drag("cylinder", 1.45)
    history.track_output("vtk")
    text = history.get_stats_summary()
    assert history.mean_newton("cylinder") == 2.0
    assert history.get_busiest_cases()[0] == ("cylinder", 2)
    assert "Total slabs: 3" in text
    assert "dt halvings: 2" in text
    assert "1. cylinder: 2 slabs, 2.00 newton/slab, C_D 1.450000" in text
    assert "• vtk: 1 files" in text


def test_empty_history():
    text = RunHistory().get_stats_summary()
    assert text.count("No data yet") == 2
