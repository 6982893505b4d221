"""Stage orchestration for the clean, train-eval, report and fcc commands."""

from __future__ import annotations

import csv
import json
import logging
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .cleaning import cluster_stats, flag_clusters, kmeans_inertia_sweep, l1_filter, l2_filter, l3_filter
from .config import EVAL_LEVELS, LEVELS, ConfigError, RunConfig, stage_seed
from .evaluation import REPORT_COLUMNS, EvalReport, evaluate, split_plots
from .fcc import render_fcc_chip, write_png
from .forest import train_forest
from .ingest import load_dataset
from .kmeans import ClusterModel, kmeans
from .model import (
    SENTINELS, CleanProfile, Dataset, EliminationRecord, Level, Reason,
)
from .preprocess import NdviWarnings, preprocess_pixel
from .synth import read_truth
from .verify import (
    Decision, Verdict, build_median_profiles, embed_plot, read_seed_file, verify_plot, write_verdicts,
)

log = logging.getLogger(__name__)

ELIMINATION_COLUMNS = ("subject_id", "granularity", "level", "reason", "detail")
SNAPSHOT_COLUMNS = ("plot_id", "pixel_id", "claimed")
TIMING_KEY = "wall_time_s"


@dataclass
class Stage:
    level: str
    plots_in: list[str]
    pixels_in: list[str]
    plots: list[str]
    pixels: list[str]
    records: list[EliminationRecord]

    def counts(self) -> dict:
        plot_recs = [r for r in self.records if r.granularity == "plot"]
        pixel_recs = [r for r in self.records if r.granularity == "pixel"]
        direct = {r.subject_id for r in pixel_recs}
        kept = set(self.pixels)
        cascaded = sum(1 for p in self.pixels_in if p not in kept and p not in direct)
        return {
            "plots_in": len(self.plots_in),
            "plots_retained": len(self.plots),
            "plots_eliminated": len(plot_recs),
            "pixels_in": len(self.pixels_in),
            "pixels_retained": len(self.pixels),
            "pixels_eliminated": len(pixel_recs),
            "pixels_cascaded": cascaded,
            "reasons": dict(sorted(Counter(f"{r.reason.value}:{r.granularity}" for r in self.records).items())),
        }


@dataclass
class CleanResult:
    dataset: Dataset
    profiles: dict[str, CleanProfile]
    stages: dict[str, Stage]
    cluster_model: ClusterModel | None = None
    cluster_ids: list[str] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    diagnostics: list[tuple[int, float]] = field(default_factory=list)
    ndvi_warnings: int = 0

    @property
    def eliminations(self) -> list[EliminationRecord]:
        out = list(self.dataset.eliminations)
        for s in self.stages.values():
            out.extend(s.records)
        return out

    def profiles_of(self, pixel_ids: Sequence[str]) -> list[CleanProfile]:
        return [self.profiles[p] for p in pixel_ids]


def _pixels_in_plots(result_profiles: dict[str, CleanProfile], dataset: Dataset, plot_ids) -> list[str]:
    out = []
    for pid in plot_ids:
        out.extend(p for p in dataset.plots[pid].pixel_ids if p in result_profiles)
    return out


def preprocess_dataset(dataset: Dataset, cfg: RunConfig):
    """Clean every pixel; returns (profiles by id, PRE stage)."""
    n_obs = dataset.n_observable
    warnings = NdviWarnings()
    profiles, records = {}, []
    plot_ids = sorted(dataset.plots)
    all_pixels = [p for pid in plot_ids for p in dataset.plots[pid].pixel_ids]
    for pid in plot_ids:
        for px_id in dataset.plots[pid].pixel_ids:
            out = preprocess_pixel(dataset.pixels[px_id], dataset.grid, cfg.preprocess, n_obs, warnings)
            if isinstance(out, EliminationRecord):
                records.append(out)
            else:
                profiles[px_id] = out
    kept_plots = []
    for pid in plot_ids:
        if any(p in profiles for p in dataset.plots[pid].pixel_ids):
            kept_plots.append(pid)
        else:
            records.append(EliminationRecord(pid, Level.PRE, Reason.TOO_SPARSE, "every pixel too sparse"))
    stage = Stage("UNCLEAN", plot_ids, all_pixels, kept_plots,
                  _pixels_in_plots(profiles, dataset, kept_plots), records)
    return profiles, stage, warnings.zero_denominator


def run_cleaning(dataset: Dataset, cfg: RunConfig, levels: Sequence[str] | None = None) -> CleanResult:
    """Run PRE, then L1..max(levels); verification follows L3 when seeds are configured."""
    levels = tuple(cfg.levels if levels is None else levels)
    top = max(LEVELS.index(lv) for lv in levels) if levels else -1
    profiles, pre, warn = preprocess_dataset(dataset, cfg)
    result = CleanResult(dataset, profiles, {"UNCLEAN": pre}, ndvi_warnings=warn)
    c = cfg.cleaning
    if top < 0:
        return result

    sub = Dataset({pid: dataset.plots[pid] for pid in pre.plots}, dataset.pixels, dataset.masks, dataset.grid)
    l1_plots, l1_records = l1_filter(sub, c.l1)
    l1_ids = [p.plot_id for p in l1_plots]
    result.stages["L1"] = Stage("L1", pre.plots, pre.pixels, l1_ids,
                                _pixels_in_plots(profiles, dataset, l1_ids), l1_records)
    if top < 1:
        return result

    l1 = result.stages["L1"]
    kept, recs = l2_filter(result.profiles_of(l1.pixels), c.ndvi_max_min, c.plot_survival_min)
    l2_pixels = [p.pixel_id for p in kept]
    l2_plots = list(dict.fromkeys(p.plot_id for p in kept))
    result.stages["L2"] = Stage("L2", l1.plots, l1.pixels, l2_plots, l2_pixels, recs)
    if top < 2:
        return result

    l2 = result.stages["L2"]
    inputs = result.profiles_of(l2.pixels)
    if inputs:
        X = np.stack([p.ndvi for p in inputs])
        n_distinct = np.unique(X, axis=0).shape[0]
        k = min(c.k, n_distinct)
        if k < c.k:
            log.warning("k reduced from %d to %d distinct profiles", c.k, k)
        model = kmeans(X, k, seed=stage_seed(cfg.seed, "kmeans"), max_iter=c.kmeans_max_iter,
                       n_init=c.kmeans_n_init, ids=l2.pixels)
        model = flag_clusters(model, X, c.flat_var_max, c.rough_min)
        kept, recs = l3_filter(inputs, model, c.plot_survival_min)
        result.cluster_model = model
        result.cluster_ids = list(l2.pixels)
        if c.k_diagnostics:
            lo, hi = c.k_diagnostics
            result.diagnostics = kmeans_inertia_sweep(X, range(lo, hi + 1), stage_seed(cfg.seed, "kmeans"),
                                                      c.kmeans_max_iter, c.kmeans_n_init)
    else:
        kept, recs = [], []
    l3_pixels = [p.pixel_id for p in kept]
    l3_plots = list(dict.fromkeys(p.plot_id for p in kept))
    result.stages["L3"] = Stage("L3", l2.plots, l2.pixels, l3_plots, l3_pixels, recs)

    if cfg.paths.seeds:
        result.verdicts, vstage = run_verification(result, cfg)
        result.stages["VERIFY"] = vstage
    return result


def run_verification(result: CleanResult, cfg: RunConfig):
    """Build crop medians from expert seeds among L3 plots; vote on the rest."""
    l3 = result.stages["L3"]
    ds = result.dataset
    by_plot = defaultdict(list)
    for px in l3.pixels:
        by_plot[result.profiles[px].plot_id].append(result.profiles[px])
    seeds = read_seed_file(cfg.paths.seeds)
    seed_ids = set()
    seed_pairs = []
    for pid, crop in seeds:
        if crop not in cfg.crops:
            raise ValueError(f"seed plot {pid}: verified crop '{crop}' not in crop list")
        if pid not in by_plot:
            log.warning("seed plot %s did not survive L3; skipped", pid)
            continue
        seed_ids.add(pid)
        seed_pairs.append((embed_plot(pid, by_plot[pid]), crop))
    medians = build_median_profiles(seed_pairs, cfg.cleaning.min_seed_support)
    verdicts, records = [], []
    for pid in l3.plots:
        if pid in seed_ids:
            continue
        plot = ds.plots[pid]
        v = verify_plot(embed_plot(pid, by_plot[pid]), medians, plot.claimed_label, plot.district)
        verdicts.append(v)
        if v.decision is Decision.FLAGGED:
            votes = ",".join(f"{m}={v.votes[m] or 'ABSTAIN'}" for m in v.votes)
            records.append(EliminationRecord(pid, Level.VERIFY, Reason.VERIFY_FLAGGED, votes))
    flagged = {r.subject_id for r in records}
    plots = [p for p in l3.plots if p not in flagged]
    pixels = [p for p in l3.pixels if result.profiles[p].plot_id not in flagged]
    return verdicts, Stage("VERIFY", l3.plots, l3.pixels, plots, pixels, records)


# -- writing -----------------------------------------------------------------

def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_clean_outputs(result: CleanResult, cfg: RunConfig, out_dir, wall_time: float = 0.0) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = result.dataset
    for name, stage in result.stages.items():
        _write_csv(out / f"retained_{name}.csv", SNAPSHOT_COLUMNS,
                   [(result.profiles[p].plot_id, p, ds.plots[result.profiles[p].plot_id].claimed_label)
                    for p in stage.pixels])
    _write_csv(out / "eliminations.csv", ELIMINATION_COLUMNS,
               [(r.subject_id, r.granularity, r.level.value, r.reason.value, r.detail)
                for r in result.eliminations])
    if "VERIFY" in result.stages:
        write_verdicts(out / "verdicts.csv", result.verdicts)
    m = result.cluster_model
    if m is not None:
        X = np.stack([result.profiles[p].ndvi for p in result.cluster_ids])
        stats = cluster_stats(m, X)
        _write_csv(out / "clusters.csv", ("cluster", "size", "mean_variance", "mean_roughness", "flag"),
                   [(j, n, f"{v:.6g}", f"{r:.6g}", m.flags[j].value) for j, (v, r, n) in stats.items()])
        _write_csv(out / "cluster_assignments.csv", ("pixel_id", "cluster"),
                   zip(result.cluster_ids, m.labels.tolist()))
    if result.diagnostics:
        _write_csv(out / "kmeans_diagnostics.csv", ("k", "inertia"),
                   [(k, f"{v:.10g}") for k, v in result.diagnostics])
    manifest = {
        "tool": "gtclean",
        "version": __version__,
        "config": cfg.to_dict(),
        "input_plots": len(ds.plots) + len(ds.eliminations),
        "ingest_eliminated": dict(Counter(r.reason.value for r in ds.eliminations)),
        "stages": {name: s.counts() for name, s in result.stages.items()},
        "ndvi_zero_denominator": result.ndvi_warnings,
        "kmeans": None if m is None else {
            "k": m.k, "inertia": m.inertia, "n_iter": m.n_iter,
            "flags": {str(j): f.value for j, f in m.flags.items()},
        },
        TIMING_KEY: round(wall_time, 3),
    }
    write_manifest(out, manifest)
    return manifest


def write_manifest(out: Path, manifest: dict) -> None:
    (Path(out) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")


def read_manifest(out) -> dict:
    path = Path(out) / "manifest.json" if Path(out).is_dir() else Path(out)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_inputs(cfg: RunConfig) -> Dataset:
    cfg.check_inputs()
    p = cfg.paths
    return load_dataset(p.plots, p.pixels, p.masks, cfg.grid, cfg.crops)


def run_clean(cfg: RunConfig, out_dir) -> CleanResult:
    t0 = time.perf_counter()
    ds = load_inputs(cfg)
    result = run_cleaning(ds, cfg)
    write_clean_outputs(result, cfg, out_dir, time.perf_counter() - t0)
    return result


# -- training and evaluation -------------------------------------------------

def read_snapshot(out_dir, level: str) -> list[tuple[str, str, str]]:
    path = Path(out_dir) / f"retained_{level}.csv"
    if not path.is_file():
        raise ConfigError(f"missing snapshot for level {level}: {path} (run 'clean' first)")
    with open(path, newline="", encoding="utf-8") as f:
        return [(r["plot_id"], r["pixel_id"], r["claimed"]) for r in csv.DictReader(f)]


def _flagged_plots(out_dir) -> set[str]:
    path = Path(out_dir) / "verdicts.csv"
    if not path.is_file():
        return set()
    with open(path, newline="", encoding="utf-8") as f:
        return {r["plot_id"] for r in csv.DictReader(f) if r["decision"] == Decision.FLAGGED.value}


@dataclass
class LevelEval:
    level: str
    report: EvalReport
    by_district: dict[str, EvalReport]
    n_train_rows: int
    n_train_plots: int
    n_test_rows: int
    oob_accuracy: float | None


def train_eval_levels(result: CleanResult, cfg: RunConfig, snapshots: dict[str, list],
                      flagged: set[str], truth: dict[str, str] | None,
                      save_models_to: Path | None = None) -> tuple[list[LevelEval], str]:
    """Train one forest per level on its retained training plots and score
    each on a shared test split.

    With a truth table the test split is the truth-labelled pixels of
    genuinely-crop test plots, taken from the cleanest snapshot available;
    otherwise it is the claimed labels of that snapshot.
    """
    ds = result.dataset
    crops = list(cfg.crops)
    base = snapshots["UNCLEAN"]
    plot_labels = {pid: lab for pid, _, lab in base if lab in crops}
    train_plots, test_plots = split_plots(plot_labels, cfg.test_fraction, stage_seed(cfg.seed, "split"))

    cleanest = [lv for lv in EVAL_LEVELS if lv in snapshots][-1]
    if truth is not None:
        test_rows = [(pid, px, truth[pid]) for pid, px, _ in snapshots[cleanest]
                     if pid in test_plots and truth.get(pid) in crops]
        source = f"truth labels, pixels retained at {cleanest}"
    else:
        test_rows = [(pid, px, lab) for pid, px, lab in snapshots[cleanest]
                     if pid in test_plots and pid not in flagged and lab in crops]
        source = f"held-out claimed labels at {cleanest} (no truth table)"
    if not test_rows:
        raise ValueError("test split is empty")
    X_test = np.stack([result.profiles[px].features() for _, px, _ in test_rows])
    y_test = [lab for _, _, lab in test_rows]
    districts = [ds.plots[pid].district for pid, _, _ in test_rows]

    evals = []
    for level in EVAL_LEVELS:
        if level not in snapshots:
            continue
        rows = [(pid, px, lab) for pid, px, lab in snapshots[level]
                if pid in train_plots and lab in crops and lab not in SENTINELS
                and not (level == "L3" and pid in flagged)]
        if len({lab for _, _, lab in rows}) < 2:
            raise ValueError(f"level {level}: fewer than two crops left to train on")
        X = np.stack([result.profiles[px].features() for _, px, _ in rows])
        model = train_forest(X, [lab for _, _, lab in rows], replace(cfg.forest, seed=stage_seed(cfg.seed, "forest")))
        if save_models_to is not None:
            model.save(Path(save_models_to) / f"model_{level}.json")
        pred = model.predict(X_test)
        report = evaluate(pred, y_test, crops, level)
        by_district = {}
        for d in sorted(set(districts)):
            idx = [i for i, x in enumerate(districts) if x == d]
            by_district[d] = evaluate([pred[i] for i in idx], [y_test[i] for i in idx], crops, level)
        evals.append(LevelEval(level, report, by_district, len(rows), len({r[0] for r in rows}),
                               len(test_rows), model.oob_accuracy))
        log.info("%s: macro F1 %.3f on %d test pixels", level, report.macro_f1(), len(test_rows))
    return evals, source


def _year_of(ds: Dataset, district: str | None) -> str:
    years = sorted({p.season_year for p in ds.plots.values() if district is None or p.district == district})
    return "/".join(str(y) for y in years)


def report_rows(ev: LevelEval, ds: Dataset) -> list[tuple]:
    rows = []
    scopes = [(d, r) for d, r in ev.by_district.items()] + [("ALL", ev.report)]
    for district, rep in scopes:
        year = _year_of(ds, None if district == "ALL" else district)
        for crop in rep.crops:
            if rep.support[crop] == 0 and district != "ALL":
                continue
            p, r, f = rep.percent_row(crop)
            rows.append((district, crop, year, ev.level, p, r, f))
    return rows


def markdown_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(x) for x in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def run_train_eval(cfg: RunConfig, out_dir, save_models: bool = False) -> list[LevelEval]:
    out = Path(out_dir)
    ds = load_inputs(cfg)
    result = run_cleaning(ds, cfg, levels=())  # preprocessing only
    wanted = ("UNCLEAN",) + tuple(lv for lv in LEVELS if lv in cfg.levels)
    snapshots = {lv: read_snapshot(out, lv) for lv in wanted}
    truth = read_truth(cfg.paths.truth) if cfg.paths.truth else None
    flagged = _flagged_plots(out) if "L3" in snapshots else set()
    evals, source = train_eval_levels(result, cfg, snapshots, flagged, truth, out if save_models else None)

    all_rows = []
    for ev in evals:
        rows = report_rows(ev, ds)
        all_rows.extend(rows)
        _write_csv(out / f"report_{ev.level}.csv", REPORT_COLUMNS, rows)
    f = cfg.forest
    header = (f"# Random forest per cleaning level\n\n"
              f"- test set: {source}\n"
              f"- forest: n_trees={f.n_trees}, max_depth={f.max_depth}, min_samples_leaf={f.min_samples_leaf}, "
              f"features_per_split={'floor(sqrt(d))' if f.max_features is None else f.max_features}, "
              f"bootstrap={f.bootstrap}\n"
              f"- split: plot-grouped, test_fraction={cfg.test_fraction}\n"
              f"- L3 training excludes plots FLAGGED by verification: {bool(flagged)}\n\n")
    md_header = ("District", "Crop", "Year", "Level", "Precision", "TPR", "F1")
    (out / "report.md").write_text(header + markdown_table(md_header, all_rows), encoding="utf-8")

    manifest = read_manifest(out) if (out / "manifest.json").is_file() else {}
    manifest["evaluation"] = {
        "test_source": source,
        "levels": {
            ev.level: {
                "macro_f1": ev.report.macro_f1(),
                "n_train_rows": ev.n_train_rows,
                "n_train_plots": ev.n_train_plots,
                "n_test_rows": ev.n_test_rows,
                "oob_accuracy": ev.oob_accuracy,
                "per_crop": {c: {"precision": ev.report.precision(c), "recall": ev.report.recall(c),
                                 "f1": ev.report.f1(c), "support": ev.report.support[c]}
                             for c in ev.report.crops},
            } for ev in evals
        },
    }
    write_manifest(out, manifest)
    return evals


# -- report ------------------------------------------------------------------

FUNNEL_ORDER = ("UNCLEAN", "L1", "L2", "L3", "VERIFY")


def build_summary(manifest: dict) -> str:
    """Markdown funnel per level plus metric deltas between consecutive levels."""
    lines = ["# GT cleaning summary", ""]
    stages = manifest.get("stages", {})
    lines.append("## Funnel")
    lines.append("")
    rows = []
    for name in FUNNEL_ORDER:
        s = stages.get(name)
        if s is None:
            continue
        pct = 100.0 * s["plots_retained"] / s["plots_in"] if s["plots_in"] else 100.0
        reasons = ", ".join(f"{k}={v}" for k, v in s["reasons"].items()) or "-"
        rows.append((name, s["plots_in"], s["plots_retained"], f"{pct:.1f}%",
                     s["pixels_in"], s["pixels_retained"], reasons))
    lines.append(markdown_table(("Level", "Plots in", "Plots kept", "Plot retention", "Pixels in",
                                 "Pixels kept", "Eliminations by reason"), rows))
    ev = manifest.get("evaluation")
    if ev:
        levels = [lv for lv in EVAL_LEVELS if lv in ev["levels"]]
        lines += ["## Macro F1 by level", ""]
        deltas = []
        rows = []
        for i, lv in enumerate(levels):
            f1 = 100 * ev["levels"][lv]["macro_f1"]
            d = None if i == 0 else f1 - 100 * ev["levels"][levels[i - 1]]["macro_f1"]
            if d is not None:
                deltas.append((d, lv))
            rows.append([lv, f"{f1:.1f}", "" if d is None else f"{d:+.1f}"])
        if deltas:
            best = max(deltas)[1]
            for r in rows:
                if r[0] == best:
                    r[0] = f"**{r[0]}**"
                    r[2] = f"**{r[2]}** (largest gain)"
        lines.append(markdown_table(("Level", "Macro F1", "Delta vs previous"), rows))
        lines.append(f"Test set: {ev['test_source']}\n")
    return "\n".join(lines)


def run_report(out_dir) -> str:
    manifest = read_manifest(out_dir)
    text = build_summary(manifest)
    target = Path(out_dir) if Path(out_dir).is_dir() else Path(out_dir).parent
    (target / "summary.md").write_text(text, encoding="utf-8")
    return text


# -- FCC ---------------------------------------------------------------------

def run_fcc(cfg: RunConfig, out_dir, day: int, plot_ids: Sequence[str] | None = None,
            per_cluster: int = 3, size: int = 64) -> list[Path]:
    """Write FCC chips for the given plots, or a few plots per cluster."""
    out = Path(out_dir)
    ds = load_inputs(cfg)
    result = run_cleaning(ds, cfg, levels=())
    days = cfg.grid.days.tolist()
    if day not in days:
        raise ConfigError(f"day {day} is not on the time grid {days[0]}..{days[-1]} step {cfg.grid.step_days}")
    t = days.index(day)
    pool = None
    for lv in ("L3", "L2", "L1", "UNCLEAN"):
        if (out / f"retained_{lv}.csv").is_file():
            pool = read_snapshot(out, lv)
            break
    if pool is None:
        pool = [(result.profiles[p].plot_id, p, "") for p in result.stages["UNCLEAN"].pixels]
    pixels_by_plot = defaultdict(list)
    for pid, px, _ in pool:
        pixels_by_plot[pid].append(px)
    if not plot_ids:
        plot_ids = _plots_per_cluster(out, pixels_by_plot, per_cluster) or sorted(pixels_by_plot)[:per_cluster]
    chips = out / "fcc"
    chips.mkdir(parents=True, exist_ok=True)
    written = []
    for pid in plot_ids:
        if pid not in pixels_by_plot:
            raise ValueError(f"plot {pid} has no retained pixels")
        img = render_fcc_chip(result.profiles_of(pixels_by_plot[pid]), t, size)
        written.append(write_png(img, chips / f"{pid}_{day}.png"))
    return written


def _plots_per_cluster(out: Path, pixels_by_plot, per_cluster: int) -> list[str]:
    path = out / "cluster_assignments.csv"
    if not path.is_file():
        return []
    with open(path, newline="", encoding="utf-8") as f:
        cluster_of = {r["pixel_id"]: int(r["cluster"]) for r in csv.DictReader(f)}
    by_cluster = defaultdict(list)
    for pid in sorted(pixels_by_plot):
        labs = [cluster_of[p] for p in pixels_by_plot[pid] if p in cluster_of]
        if labs:
            by_cluster[Counter(labs).most_common(1)[0][0]].append(pid)
    return [pid for c in sorted(by_cluster) for pid in by_cluster[c][:per_cluster]]
