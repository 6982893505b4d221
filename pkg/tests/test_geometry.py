import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtclean.geometry import (
    DegenerateRing, is_simple, overlap_error_bound, overlap_fraction, points_in_polygon, polygon_area,
    segments_intersect, validate_plot,
)
from gtclean.model import PlotRecord

from conftest import square


def test_unit_square_is_valid():
    v = validate_plot(PlotRecord("p", square(), "wheat", "D", 2024, ("a", "b", "c")))
    assert v.ok and v.violations == []


def test_two_vertex_ring_is_degenerate():
    v = validate_plot(PlotRecord("p", ((0, 0), (1, 1)), "wheat", "D", 2024, ("a",)))
    assert "degenerate polygon" in v.violations


def test_bowtie_self_intersects():
    bowtie = ((0, 0), (1, 1), (1, 0), (0, 1))
    # independent check: edges (0,0)-(1,1) and (1,0)-(0,1) cross at (0.5, 0.5)
    assert segments_intersect((0, 0), (1, 1), (1, 0), (0, 1))
    assert not is_simple(bowtie)
    assert "self-intersecting" in validate_plot(PlotRecord("p", bowtie, "wheat", "D", 2024, ("a",))).violations


def test_empty_pixel_set_reported_with_other_violations():
    v = validate_plot(PlotRecord("p", ((0, 0), (1, 1)), "wheat", "D", 2024, ()))
    assert set(v.violations) == {"degenerate polygon", "empty pixel set"}


def test_closing_vertex_is_ignored():
    assert is_simple(((0, 0), (1, 0), (1, 1), (0, 1), (0, 0)))


@pytest.mark.parametrize("ring,area", [
    (square(), 1.0),
    (((0, 0), (1, 0), (0, 1)), 0.5),
    (tuple(reversed(square())), 1.0),
])
def test_area_examples(ring, area):
    assert polygon_area(ring) == pytest.approx(area)


def test_area_of_degenerate_ring_raises():
    with pytest.raises(DegenerateRing):
        polygon_area(((0, 0), (1, 1), (0, 0)))


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-50, 50), st.floats(-50, 50))
def test_rectangle_area_matches_width_times_height(w, h, x, y):
    ring = ((x, y), (x + w, y), (x + w, y + h), (x, y + h))
    assert polygon_area(ring) == pytest.approx(w * h, rel=1e-9)


def test_overlap_examples():
    assert overlap_fraction(square(), square(), 256) == pytest.approx(1.0, abs=0.01)
    assert overlap_fraction(square(), square(5, 5), 256) == 0.0
    assert overlap_fraction(square(), square(0.5, 0), 256) == pytest.approx(0.5, abs=0.01)


def test_overlap_needs_minimum_resolution():
    with pytest.raises(ValueError):
        overlap_fraction(square(), square(), 16)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2), st.floats(0.2, 2.0), st.sampled_from([64, 128, 256]))
def test_overlap_of_rectangles_within_error_bound(dx, dy, s, res):
    # rectangle arithmetic: |A ∩ B| / |A| for axis-aligned squares
    b = square(dx, dy, s)
    ix = max(0.0, min(1.0, dx + s) - max(0.0, dx))
    iy = max(0.0, min(1.0, dy + s) - max(0.0, dy))
    exact = ix * iy
    assert abs(overlap_fraction(square(), b, res) - exact) <= overlap_error_bound(res) + 1e-12


def test_points_in_polygon_triangle():
    tri = ((0, 0), (4, 0), (0, 4))
    x = np.array([1.0, 3.0, 0.5, -1.0])
    y = np.array([1.0, 3.0, 3.0, 0.5])
    assert points_in_polygon(x, y, tri).tolist() == [True, False, True, False]


@given(st.floats(0, 2 * math.pi), st.floats(0.1, 0.99))
def test_points_inside_regular_polygon(theta, r):
    ring = tuple((math.cos(2 * math.pi * i / 12), math.sin(2 * math.pi * i / 12)) for i in range(12))
    # inscribed radius of the 12-gon is cos(pi/12)
    rr = r * math.cos(math.pi / 12)
    assert points_in_polygon(np.array([rr * math.cos(theta)]), np.array([rr * math.sin(theta)]), ring)[0]
