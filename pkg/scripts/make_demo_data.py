#!/usr/bin/env python3
"""Generate the synthetic datasets behind configs/scenario_a.yaml.

Writes three UCR-format files under data/: a two-class victim train and
test split (length 512) and an unrelated random-walk external set
(length 128) that stands in for D'.
"""

import argparse
from pathlib import Path

from tstrojan.data import save_ucr
from tstrojan.synthetic import make_external_dataset, make_victim_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--out", default=Path(__file__).resolve().parent.parent / "data",
        type=Path, help="output directory (default: <repo>/data)",
    )
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    splits = {
        "victim_train.tsv": make_victim_dataset(40, 512, seed=10, name="victim-train"),
        "victim_test.tsv": make_victim_dataset(80, 512, seed=11, name="victim-test"),
        "external.tsv": make_external_dataset(24, 128, seed=12, name="external"),
    }
    for filename, dataset in splits.items():
        path = args.out / filename
        save_ucr(dataset, path)
        print(f"wrote {path} ({len(dataset)} series of length {dataset.series_length})")


if __name__ == "__main__":
    main()
