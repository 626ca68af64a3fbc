import math

import numpy as np
import orjson
import pytest

from Components.Verification import ERROR_COLUMNS, ErrorReport, ErrorRow
from Components.export import (read_csv, read_vtk_counts, write_csv, write_error_report, write_gap_report,
                               write_metadata, write_residual_history, write_vtk)
from Components.export.reports import fmt


def make_fields(mesh):
    v = mesh.vertices
    return {"velocity": np.stack([v[:, 1], -v[:, 0]], axis=1)}, {"pressure": v[:, 0] - 0.5}


def test_vtk_layout(tmp_path, square2):
    vectors, scalars = make_fields(square2)
    path = write_vtk(square2, tmp_path / "solution.vtk", point_vectors=vectors, point_scalars=scalars)
    lines = open(path).read().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2:5] == ["ASCII", "DATASET UNSTRUCTURED_GRID", "POINTS 9 double"]
    assert "CELLS 8 32" in lines
    assert lines.count("5") == 8
    assert "POINT_DATA 9" in lines and "CELL_DATA 8" in lines
    assert "VECTORS velocity double" in lines
    assert "SCALARS pressure double 1" in lines
    assert "SCALARS subdomain int 1" in lines
    assert read_vtk_counts(path) == {"POINTS": 9, "CELLS": 8, "CELL_TYPES": 8}


def test_vtk_is_byte_stable(tmp_path, multidomain8):
    vectors, scalars = make_fields(multidomain8)
    a = write_vtk(multidomain8, tmp_path / "a.vtk", point_vectors=vectors, point_scalars=scalars)
    b = write_vtk(multidomain8, tmp_path / "b.vtk", point_vectors=vectors, point_scalars=scalars)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_vtk_folds_negative_zero(tmp_path, square2):
    vectors = {"w": np.full((square2.n_vertices, 2), -0.0)}
    text = open(write_vtk(square2, tmp_path / "z.vtk", point_vectors=vectors)).read()
    assert "-0.000000000000e+00" not in text


def test_vtk_writes_subdomain_labels(tmp_path, multidomain8):
    path = write_vtk(multidomain8, tmp_path / "labels.vtk")
    lines = open(path).read().splitlines()
    start = lines.index("SCALARS subdomain int 1") + 2
    labels = [int(s) for s in lines[start:start + multidomain8.n_triangles]]
    assert labels == multidomain8.subdomain_labels.tolist()
    assert "POINT_DATA" not in " ".join(lines)


def test_vtk_rejects_misshaped_fields(tmp_path, square2):
    with pytest.raises(ValueError, match="point vector 'v'"):
        write_vtk(square2, tmp_path / "bad.vtk", point_vectors={"v": np.zeros((3, 2))})
    with pytest.raises(ValueError, match="point scalar 's'"):
        write_vtk(square2, tmp_path / "bad.vtk", point_scalars={"s": np.zeros((9, 2))})
    with pytest.raises(ValueError, match="cell scalar 'c'"):
        write_vtk(square2, tmp_path / "bad.vtk", cell_scalars={"c": np.zeros(9)})


def test_vtk_unwritable_path(tmp_path, square2):
    with pytest.raises(OSError, match="Cannot write VTK"):
        write_vtk(square2, tmp_path / "missing" / "x.vtk")


def test_fmt():
    assert fmt(3) == "3"
    assert fmt("EOC") == "EOC"
    assert fmt(math.nan) == "nan"
    assert fmt(-0.0) == "0.000000000000e+00"
    assert fmt(np.float64(0.125)) == "1.250000000000e-01"


def test_residual_history_csv(tmp_path):
    path = write_residual_history([(1.0, 0.5), (0.01, 0.002)], tmp_path / "report.csv")
    rows = read_csv(path)
    assert list(rows[0]) == ["iteration", "residual_player1", "residual_player2"]
    assert [r["iteration"] for r in rows] == ["0", "1"]
    assert float(rows[1]["residual_player2"]) == pytest.approx(0.002)


def test_error_report_csv(tmp_path):
    rows = [ErrorRow(h=h, stability=1.0, **{c: h ** 2 for c in ERROR_COLUMNS if c != "h"}) for h in (0.25, 0.125)]
    report = ErrorReport(rows=rows, eoc=[{c: 2.0 for c in ERROR_COLUMNS if c != "h"}])
    table = read_csv(write_error_report(report, tmp_path / "report.csv"))
    assert [r["row"] for r in table] == ["mesh", "EOC", "mesh"]
    assert list(table[0]) == ["row", *ERROR_COLUMNS, "stability"]
    assert float(table[2]["y_L2"]) == pytest.approx(0.125 ** 2)
    assert table[1]["h"] == "" and float(table[1]["p_L2"]) == 2.0


def test_gap_report_csv(tmp_path):
    gaps = {("reduced-cg", "dense-oracle"): (1e-10, 3e-10), ("fixed-point", "gradient"): (2e-9, 1e-9)}
    table = read_csv(write_gap_report(gaps, tmp_path / "gaps.csv"))
    assert [(r["method_a"], r["method_b"]) for r in table] == [("fixed-point", "gradient"),
                                                               ("reduced-cg", "dense-oracle")]
    assert float(table[0]["max_rel_gap"]) == pytest.approx(2e-9)


def test_csv_is_deterministic(tmp_path):
    header = ["a", "b"]
    rows = [[1, 0.1], [2, -0.0]]
    first = open(write_csv(tmp_path / "1.csv", header, rows), "rb").read()
    second = open(write_csv(tmp_path / "2.csv", header, rows), "rb").read()
    assert first == second
    assert first.endswith(b"\n") and b"\r" not in first


def test_metadata_json(tmp_path):
    path = write_metadata({"b": np.arange(3), "a": {"levels": [8, 16]}}, tmp_path / "metadata.json")
    raw = open(path, "rb").read()
    assert raw.index(b'"a"') < raw.index(b'"b"')
    assert orjson.loads(raw) == {"a": {"levels": [8, 16]}, "b": [0, 1, 2]}
