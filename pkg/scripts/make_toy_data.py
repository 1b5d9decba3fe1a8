#!/usr/bin/env python3
"""Generate a synthetic corpus plus a ready-to-run config file.

Usage:
    python scripts/make_toy_data.py --out runs/toy --tables 100 --seed 7
    kgtable build-dataset --config runs/toy/config.json
"""

import argparse
import json
from pathlib import Path

from kgtable import synth


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/toy", help="output directory")
    parser.add_argument("--tables", type=int, default=100)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    root = Path(args.out)
    paths = synth.make_corpus(str(root / "data"), n_tables=args.tables, seed=args.seed)
    config = {
        "graph_path": paths.graph,
        "entity_meta_path": paths.entity_meta,
        "predicate_meta_path": paths.predicate_meta,
        "corpus_path": paths.corpus,
        "url2mid_path": paths.url2mid,
        "mid2types_path": paths.mid2types,
        "fget_path": paths.fget,
        "embeddings_path": paths.embeddings,
        "dataset_dir": str(root / "dataset"),
        "output_dir": str(root / "out"),
        # The synthetic predicates never collide with the generic-prefix list,
        # and small embedding dimensions keep selector training quick.
        "banned_prefixes": [],
        "dim_qis": 32, "dim_cn": 8, "dim_set": 32, "dim_chain": 80,
        "learning_rate": 0.05,
        "epochs": 60,
        "tree_count": 30,
        "tree_depth": 3,
        "seed": 13,
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2) + "\n")
    print(f"corpus with {args.tables} tables -> {paths.root}")
    print(f"config -> {cfg_path}")


if __name__ == "__main__":
    main()
