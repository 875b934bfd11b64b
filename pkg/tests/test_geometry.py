import math

import numpy as np
import pytest

from expfb.errors import DegenerateInput, DomainError
from expfb.geometry import (band_table, band_table_to_csv, box_counting_dimension,
                            coarea_perimeter, free_boundary, level_average_length,
                            level_set, origin_fit, polyline_length, polylines_to_csv,
                            thin_band_stats)
from expfb.grid import build_mesh, interval, rectangle
from expfb.problem import Coefficient, sample


@pytest.fixture(scope="module")
def square():
    return build_mesh(rectangle(), (32, 32))


def test_planar_interface_is_exact(square):
    U = sample(Coefficient("affine", (-0.3, 0.0, 1.0)), square)   # y = 0.3
    lines = level_set(square, U, 0.0)
    assert len(lines) == 1
    assert polyline_length(lines) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(lines[0][:, 1], 0.3)
    assert coarea_perimeter(square, U, 0.05, "minus") == pytest.approx(1.0, abs=1e-12)


def test_circle_closes(square):
    U = sample(Coefficient("radial", (0.5, 0.5, 0.3)), square)
    lines = level_set(square, U, 0.0, "minus")
    assert len(lines) == 1
    assert np.array_equal(lines[0][0], lines[0][-1])
    assert polyline_length(lines) == pytest.approx(2 * math.pi * 0.3, rel=0.01)


def test_sides_trace_the_same_curve(square):
    U = sample(Coefficient("sinusoidal", (1.0, 2, 1, -0.2)), square)
    plus = polyline_length(level_set(square, U, 0.0, "plus"))
    minus = polyline_length(level_set(square, U, 0.0, "minus"))
    assert plus == pytest.approx(minus, rel=1e-12)


def test_vertex_hits_are_not_duplicated():
    mesh = build_mesh(rectangle(), (4, 4))
    U = mesh.nodes[:, 0] - 0.5          # the level passes through grid nodes
    lines = level_set(mesh, U, 0.0)
    assert len(lines) == 1 and len(lines[0]) == 5
    assert polyline_length(lines) == pytest.approx(1.0)


def test_plateaus_reported():
    mesh = build_mesh(rectangle(), (4, 4))
    U = np.maximum(mesh.nodes[:, 0] - 0.5, 0.0)
    fb = free_boundary(mesh, U, "plus", 0.05)
    assert fb.plateau_elements.size == 16
    assert fb.length_marching == pytest.approx(1.0)


def test_one_dimensional_points():
    mesh = build_mesh(interval(), 10)
    U = np.sin(2 * np.pi * mesh.nodes[:, 0] + 0.1)
    pts = level_set(mesh, U, 0.0)
    assert polyline_length(pts) == 2.0
    xs = [p[0, 0] for p in pts]
    assert xs == sorted(xs)


def test_coarea_matches_level_average(square):
    U = sample(Coefficient("radial_smooth", (0.5, 0.5, 0.2, 1.0)), square) - 0.4
    for e in (0.01, 0.05):
        assert coarea_perimeter(square, U, e) == pytest.approx(
            level_average_length(square, U, e, levels=256), rel=2e-3)


def test_band_stats_shapes(square):
    U = square.nodes[:, 0] - 0.5
    t = thin_band_stats(square, U, [0.1, 0.02])
    assert t.shape == (2, 3) and t[0, 0] == 0.02
    assert np.allclose(t[:, 1], 2 * t[:, 0])
    assert np.allclose(t[:, 2], 2 * t[:, 0])
    table = band_table(square, U, [0.02, 0.1])
    assert table.shape == (2, 5)
    assert np.allclose(table[:, 3:], 1.0)
    with pytest.raises(DomainError):
        thin_band_stats(square, U, [0.0])


def test_origin_fit():
    c, r2 = origin_fit([1, 2, 3], [2, 4, 6])
    assert c == pytest.approx(2.0) and r2 == pytest.approx(1.0)
    _, r2 = origin_fit([1, 2, 3], [3, 1, 2])
    assert r2 < 0.5


def test_box_counting():
    seg = [np.array([[0.0, 0.0], [1.0, 1.0]])]
    dim, r2 = box_counting_dimension(seg, [1 / 4, 1 / 8, 1 / 16, 1 / 32])
    assert dim == pytest.approx(1.0, abs=1e-12) and r2 == pytest.approx(1.0)
    dim, _ = box_counting_dimension([np.array([[0.2, 0.3]])], [0.5, 0.25, 0.125])
    assert dim == 0.0
    with pytest.raises(DegenerateInput):
        box_counting_dimension([], [0.5, 0.25, 0.125])
    with pytest.raises(DomainError):
        box_counting_dimension(seg, [0.5, 0.25])


def test_csv_exports(tmp_path, square):
    U = square.nodes[:, 1] - 0.5
    lines = level_set(square, U, 0.0)
    polylines_to_csv(lines, tmp_path / "fb.csv")
    rows = (tmp_path / "fb.csv").read_text().splitlines()
    assert rows[0] == "polyline_id,vertex_index,x,y"
    assert len(rows) == 1 + sum(len(l) for l in lines)
    band_table_to_csv(band_table(square, U, [0.05]), tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().startswith("epsilon,band_measure")


def test_bad_arguments(square):
    U = np.zeros(square.n_nodes)
    with pytest.raises(DomainError):
        level_set(square, U, 0.0, side="up")
    with pytest.raises(DomainError):
        level_set(square, U, np.nan)
    with pytest.raises(DomainError):
        coarea_perimeter(square, U, 0.0)
