"""Ablation grid over pipeline stages on one grade, with shared folds.

Scenarios: no expansion, expansion only, + spell correction, + subword
vectors, + numeric features (the full pipeline).

    python3 scripts/ablation.py --grade 1 --out results/ablation.csv
"""

import argparse
import logging
from pathlib import Path

from degreelevel import NoiseConfig, PipelineConfig, Resources, generate_synthetic, kfold_cv
from degreelevel.eval import write_comparison_csv

SCENARIOS = [
    dict(expand=False, spell=True, subword=True, features=True),
    dict(expand=True, spell=False, subword=False, features=False),
    dict(expand=True, spell=True, subword=False, features=False),
    dict(expand=True, spell=True, subword=True, features=False),
    dict(expand=True, spell=True, subword=True, features=True),
]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grade", type=int, default=1)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--corpus-seed", type=int, default=42)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--abbreviation-render", type=float, default=0.6,
                   help="share of titles rendered as abbreviations")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("results/ablation.csv"))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    res = Resources.default()
    noise = NoiseConfig(rng_seed=args.corpus_seed, abbreviation_render=args.abbreviation_render)
    corpus = generate_synthetic(res.db, args.n, noise, res.taxonomy)
    reports = []
    for flags in SCENARIOS:
        cfg = PipelineConfig(grade=args.grade, **flags)
        if args.epochs:
            cfg.train.epochs = args.epochs
        rep = kfold_cv(corpus, args.k, cfg, args.seed, res)
        print(f"{rep.scenario:45s} subset {rep.subset_accuracy:.4f}")
        reports.append(rep)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(reports, args.out)


if __name__ == "__main__":
    main()
