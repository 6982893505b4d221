"""Command line entry point: ``gtclean {synth,clean,train-eval,report,fcc}``.

Exit codes: 0 ok, 1 runtime error, 2 usage or configuration error. Every
error is printed as one line ``error[<CODE>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import LEVELS, ConfigError, Paths, RunConfig, SynthConfig, load_config
from .ingest import IngestError
from .synth import NoiseSpec, generate_dataset

ACCEPTANCE_NOISE = NoiseSpec(mislabel_rate=0.30, non_ag_rate=0.10, perennial_rate=0.05,
                             boundary_pixel_rate=0.10, cloud_rate=0.15, reflectance_noise_sd=0.02)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--levels", help="comma-separated subset of L1,L2,L3")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _inputs() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--data", help="directory holding plots.geojson, pixels.csv, masks.geojson, seeds.csv, truth.csv")
    for name in ("plots", "pixels", "masks", "seeds", "truth"):
        p.add_argument(f"--{name}", help=f"{name} file (overrides --data and config)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gtclean", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common, inputs = _common(), _inputs()

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--plots-per-crop", type=int)
    s.add_argument("--pixels-per-plot", type=int)
    s.add_argument("--preset", choices=["clean", "acceptance"],
                   help="'acceptance': 200 plots/crop with the reference noise mix")

    sub.add_parser("clean", parents=[common, inputs], help="run cleaning levels L1..L3 and verification")
    te = sub.add_parser("train-eval", parents=[common, inputs], help="train and score a forest per level")
    te.add_argument("--save-models", action="store_true", help="write model_<level>.json")
    sub.add_parser("report", parents=[common], help="summarise manifest.json as Markdown")
    f = sub.add_parser("fcc", parents=[common, inputs], help="render false colour chips")
    f.add_argument("--day", type=int, required=True, help="grid day to render")
    f.add_argument("--plot-ids", help="comma-separated plot ids (default: a few per cluster)")
    f.add_argument("--per-cluster", type=int, default=3)
    f.add_argument("--size", type=int, default=64)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.levels:
        levels = tuple(x.strip() for x in args.levels.split(",") if x.strip())
        bad = [x for x in levels if x not in LEVELS]
        if bad or not levels:
            raise ConfigError(f"--levels accepts {','.join(LEVELS)}, got {args.levels!r}")
        cfg = replace(cfg, levels=levels)
    if getattr(args, "data", None) or any(getattr(args, n, None) for n in ("plots", "pixels", "masks", "seeds", "truth")):
        base = Paths.from_dir(args.data) if getattr(args, "data", None) else cfg.paths
        over = {n: getattr(args, n) for n in ("plots", "pixels", "masks", "seeds", "truth") if getattr(args, n, None)}
        cfg = replace(cfg, paths=replace(base, **over))
    return cfg.validate()


def cmd_synth(args, cfg: RunConfig) -> None:
    sc = cfg.synth
    if args.preset == "acceptance":
        sc = replace(sc, n_plots_per_crop=200, pixels_per_plot=20, noise=ACCEPTANCE_NOISE)
    elif args.preset == "clean":
        sc = replace(sc, noise=NoiseSpec())
    if args.plots_per_crop is not None:
        sc = replace(sc, n_plots_per_crop=args.plots_per_crop)
    if args.pixels_per_plot is not None:
        sc = replace(sc, pixels_per_plot=args.pixels_per_plot)
    if sc.n_plots_per_crop < 1 or sc.pixels_per_plot < 1:
        raise ConfigError("synthetic dataset needs at least one plot per crop and one pixel per plot")
    ds = synth_from_config(cfg, sc)
    ds.write(args.out)
    print(f"wrote {len(ds.plots)} plots, {len(ds.pixels)} pixels to {args.out}")


def synth_from_config(cfg: RunConfig, sc: SynthConfig | None = None):
    from .synth import DEFAULT_PHENOLOGY

    sc = sc or cfg.synth
    by_name = {p.name: p for p in DEFAULT_PHENOLOGY}
    missing = [c for c in cfg.crops if c not in by_name]
    if missing:
        raise ConfigError(f"no synthetic phenology for crop(s): {', '.join(missing)}")
    return generate_dataset(
        sc.n_plots_per_crop, sc.pixels_per_plot, [by_name[c] for c in cfg.crops], sc.noise, cfg.grid,
        cfg.seed, sc.acquisition_step, sc.seeds_per_crop, sc.n_districts, sc.season_year,
    )


def main(argv=None) -> int:
    from . import pipeline

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        if args.command == "synth":
            cmd_synth(args, cfg)
        elif args.command == "clean":
            result = pipeline.run_clean(cfg, args.out)
            for name, st in result.stages.items():
                print(f"{name}: {len(st.plots)}/{len(st.plots_in)} plots, "
                      f"{len(st.pixels)}/{len(st.pixels_in)} pixels retained")
        elif args.command == "train-eval":
            for ev in pipeline.run_train_eval(cfg, args.out, save_models=args.save_models):
                print(f"{ev.level}: macro F1 {100 * ev.report.macro_f1():.1f}")
        elif args.command == "report":
            print(pipeline.run_report(args.out))
        elif args.command == "fcc":
            ids = [x for x in (args.plot_ids or "").split(",") if x]
            for path in pipeline.run_fcc(cfg, args.out, args.day, ids, args.per_cluster, args.size):
                print(path)
    except UsageError as e:
        print(f"error[USAGE]: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"error[CONFIG]: {e}", file=sys.stderr)
        return 2
    except IngestError as e:
        print(f"error[INGEST]: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error[RUNTIME]: {' '.join(str(e).split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
