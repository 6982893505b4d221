"""Readers and writers for the three input files, plus referential checks.

Plots and masks are GeoJSON FeatureCollections; pixel series are a CSV with
one row per pixel per acquisition day.
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections import defaultdict
from typing import Iterable, Sequence, TextIO

import numpy as np

from .model import (
    BANDS, DEFAULT_CROPS, Dataset, EliminationRecord, Level, MaskKind, MaskLayer,
    PixelProfile, PlotRecord, Reason, TimeGrid, as_ring, normalize_label,
)

PIXEL_COLUMNS = ("pixel_id", "plot_id", "day", "red", "green", "blue", "nir", "swir2", "cloudy")
SPATIAL_COLUMNS = ("row", "col")
_RC_ID = re.compile(r"^(\d+)_(\d+)$")
MAX_REFLECTANCE = 1.5


class IngestError(ValueError):
    pass


def _read(source) -> str:
    if isinstance(source, str):
        return source
    return source.read()


def _features(text: str, what: str) -> list[dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise IngestError(f"{what}: malformed JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise IngestError(f"{what}: expected a GeoJSON FeatureCollection")
    feats = doc.get("features")
    if not isinstance(feats, list):
        raise IngestError(f"{what}: 'features' must be a list")
    return feats


def _ring_of(feat: dict, where: str):
    geom = feat.get("geometry") or {}
    if geom.get("type") != "Polygon":
        raise IngestError(f"{where}: geometry must be a Polygon")
    try:
        ring = as_ring(geom["coordinates"][0])
    except (KeyError, IndexError, TypeError, ValueError):
        raise IngestError(f"{where}: malformed Polygon coordinates") from None
    if len(set(ring)) < 3:
        raise IngestError(f"{where}: polygon needs at least 3 distinct vertices")
    return ring


def parse_plots(source: TextIO | str, crops: Sequence[str] = DEFAULT_CROPS) -> list[PlotRecord]:
    """Parse the plots GeoJSON. Unrecognised crop strings become UNKNOWN."""
    plots, seen = [], set()
    for i, feat in enumerate(_features(_read(source), "plots")):
        props = feat.get("properties") or {}
        pid = props.get("plot_id")
        where = f"plots feature {i} ({pid if pid is not None else 'no plot_id'})"
        if pid is None:
            raise IngestError(f"{where}: missing required property 'plot_id'")
        pid = str(pid)
        for key in ("crop", "district", "season_year"):
            if key not in props:
                raise IngestError(f"{where}: missing required property '{key}'")
        if pid in seen:
            raise IngestError(f"duplicate plot_id '{pid}' at feature {i}")
        seen.add(pid)
        try:
            year = int(props["season_year"])
        except (TypeError, ValueError):
            raise IngestError(f"{where}: season_year must be an integer") from None
        pixel_ids = tuple(str(p) for p in props.get("pixel_ids", ()))
        plots.append(PlotRecord(
            plot_id=pid,
            polygon=_ring_of(feat, where),
            claimed_label=normalize_label(str(props["crop"]), crops),
            district=str(props["district"]),
            season_year=year,
            pixel_ids=pixel_ids,
        ))
    return plots


def parse_masks(source: TextIO | str) -> list[MaskLayer]:
    by_kind: dict[MaskKind, list] = defaultdict(list)
    for i, feat in enumerate(_features(_read(source), "masks")):
        kind = (feat.get("properties") or {}).get("kind")
        try:
            kind = MaskKind(kind)
        except ValueError:
            raise IngestError(f"masks feature {i}: kind must be ROAD, BUILT or NON_AG, got {kind!r}") from None
        by_kind[kind].append(_ring_of(feat, f"masks feature {i}"))
    return [MaskLayer(k, tuple(by_kind[k])) for k in MaskKind if k in by_kind]


def parse_pixel_series(rows: Iterable[str] | TextIO) -> list[PixelProfile]:
    """Group CSV rows into per-pixel profiles, sorted by day.

    Optional ``row`` and ``col`` columns give the pixel's raster position;
    without them a pixel id of the form ``"<row>_<col>"`` is used.
    """
    reader = csv.reader(rows)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError("pixel file is empty") from None
    missing = [c for c in PIXEL_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"pixel file header missing columns: {', '.join(missing)}")
    pos = {c: header.index(c) for c in header}
    band_pos = [pos[b.lower()] for b in BANDS]
    spatial = all(c in pos for c in SPATIAL_COLUMNS)

    groups: dict[str, dict] = {}
    for rownum, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise IngestError(f"wrong number of fields, row {rownum}")
        pid = rec[pos["pixel_id"]]
        try:
            day = int(rec[pos["day"]])
        except ValueError:
            raise IngestError(f"non-integer day, row {rownum}") from None
        try:
            vals = [float(rec[j]) for j in band_pos]
        except ValueError:
            raise IngestError(f"non-numeric reflectance, row {rownum}") from None
        if any(not (0.0 <= v <= MAX_REFLECTANCE) for v in vals):
            raise IngestError(f"reflectance out of range, row {rownum}")
        cloudy = rec[pos["cloudy"]].strip()
        if cloudy not in ("0", "1"):
            raise IngestError(f"cloudy must be 0 or 1, row {rownum}")
        g = groups.get(pid)
        if g is None:
            g = groups[pid] = {"plot": rec[pos["plot_id"]], "rows": {}, "rc": None}
            if spatial:
                try:
                    g["rc"] = (int(rec[pos["row"]]), int(rec[pos["col"]]))
                except ValueError:
                    raise IngestError(f"non-integer row/col, row {rownum}") from None
        elif g["plot"] != rec[pos["plot_id"]]:
            raise IngestError(f"pixel '{pid}' assigned to two plots, row {rownum}")
        if day in g["rows"]:
            raise IngestError(f"duplicate (pixel_id, day) = ('{pid}', {day}), row {rownum}")
        g["rows"][day] = (vals, cloudy == "1")

    profiles = []
    for pid, g in groups.items():
        days = sorted(g["rows"])
        values = np.array([g["rows"][d][0] for d in days], dtype=np.float64).T
        cloudy = np.array([g["rows"][d][1] for d in days], dtype=bool)
        rc = g["rc"]
        if rc is None and (m := _RC_ID.match(pid)):
            rc = (int(m.group(1)), int(m.group(2)))
        profiles.append(PixelProfile(
            pixel_id=pid, plot_id=g["plot"], days=np.array(days), values=values.reshape(len(BANDS), -1),
            cloudy=cloudy, row=rc[0] if rc else None, col=rc[1] if rc else None,
        ))
    return profiles


def join_and_check(plots: Sequence[PlotRecord], pixels: Sequence[PixelProfile],
                   masks: Sequence[MaskLayer], grid: TimeGrid) -> Dataset:
    """Resolve plot/pixel references into a consistent Dataset.

    Plots left without any resolvable pixel are dropped with a NO_PIXELS
    record (kept on ``Dataset.eliminations``). Any dangling reference from
    a pixel is an error; nothing partial is returned.
    """
    plot_map: dict[str, PlotRecord] = {}
    for p in plots:
        if p.plot_id in plot_map:
            raise IngestError(f"duplicate plot_id '{p.plot_id}'")
        plot_map[p.plot_id] = p
    pixel_map: dict[str, PixelProfile] = {}
    members: dict[str, list[str]] = defaultdict(list)
    for px in pixels:
        if px.pixel_id in pixel_map:
            raise IngestError(f"duplicate pixel_id '{px.pixel_id}'")
        if px.plot_id not in plot_map:
            raise IngestError(f"pixel '{px.pixel_id}' references unknown plot '{px.plot_id}'")
        pixel_map[px.pixel_id] = px
        members[px.plot_id].append(px.pixel_id)
    kinds = [m.kind for m in masks]
    if len(set(kinds)) != len(kinds):
        raise IngestError("mask kinds must be unique per layer")

    out_plots, elims = {}, []
    for pid, p in plot_map.items():
        if p.pixel_ids:
            listed = set(p.pixel_ids)
            stray = [x for x in members[pid] if x not in listed]
            if stray:
                raise IngestError(f"pixel '{stray[0]}' claims plot '{pid}' but is not listed by it")
            resolved = [x for x in p.pixel_ids if x in pixel_map]
        else:
            resolved = members[pid]
        if not resolved:
            elims.append(EliminationRecord(pid, Level.PRE, Reason.NO_PIXELS, "no resolvable pixels"))
            continue
        out_plots[pid] = p.with_pixels(resolved)
    kept_pixels = {k: v for k, v in pixel_map.items() if v.plot_id in out_plots}
    return Dataset(out_plots, kept_pixels, list(masks), grid, elims)


def load_dataset(plots_path, pixels_path, masks_path=None, grid: TimeGrid | None = None,
                 crops: Sequence[str] = DEFAULT_CROPS) -> Dataset:
    with open(plots_path, encoding="utf-8") as f:
        plots = parse_plots(f, crops)
    with open(pixels_path, newline="", encoding="utf-8") as f:
        pixels = parse_pixel_series(f)
    masks = []
    if masks_path:
        with open(masks_path, encoding="utf-8") as f:
            masks = parse_masks(f)
    return join_and_check(plots, pixels, masks, grid or TimeGrid())


# -- writers (used by the synthetic generator and round-trip tests) ---------

def _fmt(v: float) -> str:
    return format(v, ".10g")


def _polygon_geom(ring) -> dict:
    coords = [[x, y] for x, y in ring]
    coords.append(coords[0])
    return {"type": "Polygon", "coordinates": [coords]}


def plots_to_geojson(plots: Iterable[PlotRecord], include_pixel_ids: bool = False) -> str:
    feats = []
    for p in plots:
        props = {"plot_id": p.plot_id, "crop": p.claimed_label, "district": p.district,
                 "season_year": p.season_year}
        if include_pixel_ids:
            props["pixel_ids"] = list(p.pixel_ids)
        feats.append({"type": "Feature", "properties": props, "geometry": _polygon_geom(p.polygon)})
    return json.dumps({"type": "FeatureCollection", "features": feats}, indent=1) + "\n"


def masks_to_geojson(masks: Iterable[MaskLayer]) -> str:
    feats = [
        {"type": "Feature", "properties": {"kind": m.kind.value}, "geometry": _polygon_geom(r)}
        for m in masks for r in m.polygons
    ]
    return json.dumps({"type": "FeatureCollection", "features": feats}, indent=1) + "\n"


def pixels_to_csv(pixels: Iterable[PixelProfile], spatial: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(PIXEL_COLUMNS) + (list(SPATIAL_COLUMNS) if spatial else [])
    w.writerow(header)
    for px in pixels:
        tail = [px.row, px.col] if spatial else []
        for j, day in enumerate(px.days.tolist()):
            w.writerow([px.pixel_id, px.plot_id, day, *(_fmt(v) for v in px.values[:, j]),
                        int(px.cloudy[j]), *tail])
    return buf.getvalue()
