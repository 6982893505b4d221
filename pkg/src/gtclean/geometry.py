"""Planar polygon helpers on (lon, lat) rings.

Everything here treats coordinates as planar; plots are field-scale so the
curvature error is irrelevant for overlap fractions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PlotRecord, as_ring


class DegenerateRing(ValueError):
    pass


def _check_ring(ring) -> np.ndarray:
    pts = np.asarray(as_ring(ring), dtype=np.float64)
    if len(pts) < 3 or len({tuple(p) for p in pts}) < 3:
        raise DegenerateRing("ring needs at least 3 distinct vertices")
    return pts


def polygon_area(ring) -> float:
    """Absolute shoelace area in squared degrees."""
    pts = _check_ring(ring)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    return min(p[0], r[0]) <= q[0] <= max(p[0], r[0]) and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(q1, p1, q2):
        return True
    if d2 == 0 and _on_segment(q1, p2, q2):
        return True
    if d3 == 0 and _on_segment(p1, q1, p2):
        return True
    if d4 == 0 and _on_segment(p1, q2, p2):
        return True
    return False


def is_simple(ring) -> bool:
    """True when no two non-adjacent edges of the closed ring touch."""
    pts = [tuple(p) for p in as_ring(ring)]
    n = len(pts)
    if n < 3:
        return False
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent edges share one vertex; only a fold-back overlap is bad
                a, b = edges[i], edges[j]
                shared = a[1] if j == i + 1 else a[0]
                other_a = a[0] if j == i + 1 else a[1]
                other_b = b[1] if j == i + 1 else b[0]
                if _orient(other_a, shared, other_b) == 0 and (
                    _on_segment(shared, other_b, other_a) or _on_segment(shared, other_a, other_b)
                ):
                    return False
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def bbox(ring) -> tuple[float, float, float, float]:
    pts = np.asarray(as_ring(ring), dtype=np.float64)
    return float(pts[:, 0].min()), float(pts[:, 1].min()), float(pts[:, 0].max()), float(pts[:, 1].max())


def bboxes_intersect(a, b) -> bool:
    return not (a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1])


def points_in_polygon(x: np.ndarray, y: np.ndarray, ring) -> np.ndarray:
    """Vectorised even-odd ray casting."""
    pts = np.asarray(as_ring(ring), dtype=np.float64)
    inside = np.zeros(np.shape(x), dtype=bool)
    xj, yj = pts[-1]
    for xi, yi in pts:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < x_cross)
        xj, yj = xi, yi
    return inside


def overlap_fraction(a, b, resolution: int = 256) -> float:
    """Fraction of ``a``'s area covered by ``b``.

    Estimated on a ``resolution`` x ``resolution`` grid of cell centres over
    the bounding box of ``a``; absolute error is at most ``2 / resolution``
    (see ``overlap_error_bound``).
    """
    if resolution < 32:
        raise ValueError("resolution must be >= 32")
    _check_ring(a)
    _check_ring(b)
    x0, y0, x1, y1 = bbox(a)
    if not bboxes_intersect((x0, y0, x1, y1), bbox(b)):
        return 0.0
    u = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(x0 + u * (x1 - x0), y0 + u * (y1 - y0))
    in_a = points_in_polygon(gx, gy, a)
    n_a = int(in_a.sum())
    if n_a == 0:
        raise DegenerateRing("ring too thin to sample at this resolution")
    in_b = points_in_polygon(gx[in_a], gy[in_a], b)
    return float(in_b.sum()) / n_a


def overlap_error_bound(resolution: int) -> float:
    return 2.0 / resolution


@dataclass
class Verdict:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate_plot(plot: PlotRecord) -> Verdict:
    """Collect every invariant violation of a plot without raising."""
    problems = []
    ring = as_ring(plot.polygon)
    if len(set(ring)) < 3:
        problems.append("degenerate polygon")
    elif not is_simple(ring):
        problems.append("self-intersecting")
    if not plot.pixel_ids:
        problems.append("empty pixel set")
    return Verdict(not problems, problems)
