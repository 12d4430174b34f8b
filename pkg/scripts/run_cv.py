"""10-fold CV of the full pipeline at each grade, plus the multiclass view at grade 4.

Writes one JSON report per run and a comparison CSV into --out.

    python3 scripts/run_cv.py --n 5000 --out results/
"""

import argparse
import logging
import time
from pathlib import Path

from degreelevel import NoiseConfig, PipelineConfig, Resources, generate_synthetic, kfold_cv
from degreelevel.eval import write_comparison_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000, help="synthetic corpus size")
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument("--corpus-seed", type=int, default=42)
    p.add_argument("--seed", type=int, default=42, help="fold and model seed")
    p.add_argument("--grades", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("results"))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    res = Resources.default()
    corpus = generate_synthetic(res.db, args.n, NoiseConfig(rng_seed=args.corpus_seed), res.taxonomy)
    args.out.mkdir(parents=True, exist_ok=True)
    runs = [(g, {}) for g in args.grades]
    if 4 in args.grades:
        runs.append((4, {"mode": "multiclass"}))
    reports = []
    for grade, flags in runs:
        cfg = PipelineConfig(grade=grade, **flags)
        if args.epochs:
            cfg.train.epochs = args.epochs
        t0 = time.perf_counter()
        rep = kfold_cv(corpus, args.k, cfg, args.seed, res)
        print(f"grade {grade} {rep.scenario}: subset {rep.subset_accuracy:.4f} "
              f"highest-level {rep.projected_accuracy:.4f} ({time.perf_counter() - t0:.0f} s)")
        name = f"grade{grade}-{rep.scenario.replace('+', '_')}"
        rep.write(args.out / f"{name}.json")
        rep.write_confusion_csv(args.out / f"{name}-confusion.csv")
        reports.append(rep)
    write_comparison_csv(reports, args.out / "comparison.csv")


if __name__ == "__main__":
    main()
