"""How much does claimed-label noise cost an uncleaned forest?

Sweeps the mislabel rate with the other corruptions held at the reference
mix and prints macro F1 for UNCLEAN and L3 training. Smaller than the full
experiment by default so it finishes in a few minutes.

    python scripts/label_noise_sweep.py --rates 0.3 0.5 0.6 0.7
"""

from __future__ import annotations

import argparse
import tempfile
from dataclasses import replace
from pathlib import Path

from gtclean.cli import ACCEPTANCE_NOISE
from gtclean.config import Paths, RunConfig
from gtclean.forest import ForestConfig
from gtclean.pipeline import run_clean, run_train_eval
from gtclean.synth import generate_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rates", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.6, 0.7])
    ap.add_argument("--plots-per-crop", type=int, default=60)
    ap.add_argument("--trees", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    print("| mislabel rate | UNCLEAN | L3 | gap |")
    print("|---|---|---|---|")
    for rate in args.rates:
        with tempfile.TemporaryDirectory() as tmp:
            data, out = Path(tmp) / "d", Path(tmp) / "o"
            noise = replace(ACCEPTANCE_NOISE, mislabel_rate=rate)
            generate_dataset(args.plots_per_crop, 20, noise=noise, seed=args.seed).write(data)
            cfg = RunConfig(paths=Paths.from_dir(data), forest=ForestConfig(n_trees=args.trees), seed=args.seed)
            run_clean(cfg, out)
            f1 = {e.level: 100 * e.report.macro_f1() for e in run_train_eval(cfg, out)}
        print(f"| {rate:.2f} | {f1['UNCLEAN']:.1f} | {f1['L3']:.1f} | {f1['L3'] - f1['UNCLEAN']:+.1f} |")


if __name__ == "__main__":
    main()
