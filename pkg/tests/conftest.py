from __future__ import annotations

import numpy as np
import pytest

from gtclean.model import BANDS, CleanProfile, PixelProfile, PlotRecord

_ACCEPTANCE_LINES: list[str] = []


def square(x0=0.0, y0=0.0, size=1.0):
    return ((x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size))


def pixel(pid="x", plot="p1", days=(0, 10, 20), value=0.3, cloudy=None, row=None, col=None):
    days = np.asarray(days)
    vals = np.full((len(BANDS), days.size), value, dtype=float) if np.isscalar(value) else np.asarray(value)
    cloudy = np.zeros(days.size, bool) if cloudy is None else np.asarray(cloudy, bool)
    return PixelProfile(pid, plot, days, vals, cloudy, row, col)


def clean_profile(pid, plot, ndvi, bands=None, row=None, col=None):
    ndvi = np.asarray(ndvi, dtype=float)
    if bands is None:
        bands = np.tile(ndvi, (len(BANDS), 1))
    return CleanProfile(pid, plot, np.asarray(bands, dtype=float), ndvi, row, col)


def plot(pid, ring=None, label="wheat", pixels=("a",), district="D1"):
    return PlotRecord(pid, ring or square(), label, district, 2024, tuple(pixels))


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
