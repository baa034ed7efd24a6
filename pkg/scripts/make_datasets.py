#!/usr/bin/env python3
"""Regenerate the bundled benchmark CSVs under data/.

iris.csv      150 x 4 flower measurements with a species label column.
digits150.csv 150 handwritten-digit images subsampled from the sklearn
              digits set (8x8 grayscale), projected to 10 PCA components,
              with the digit label in the last column.

Both files are committed; this script exists so they can be rebuilt.
"""

import argparse
import csv
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits, load_iris
from sklearn.decomposition import PCA


def write_iris(out: Path) -> None:
    iris = load_iris()
    names = [n.replace(" (cm)", "").replace(" ", "_") for n in iris.feature_names]
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "species"])
        for row, label in zip(iris.data, iris.target):
            w.writerow([f"{x:.1f}" for x in row] + [iris.target_names[label]])
    print(f"wrote {out} ({iris.data.shape[0]} rows)")


def write_digits(out: Path, n: int = 150, components: int = 10, seed: int = 7) -> None:
    digits = load_digits()
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(digits.data.shape[0], size=n, replace=False))
    X = digits.data[idx]
    y = digits.target[idx]
    X = PCA(n_components=components, random_state=0).fit_transform(X)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"pc{i}" for i in range(components)] + ["digit"])
        for row, label in zip(X, y):
            w.writerow([f"{x:.6f}" for x in row] + [int(label)])
    print(f"wrote {out} ({n} rows, {components} components)")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_iris(out / "iris.csv")
    write_digits(out / "digits150.csv")


if __name__ == "__main__":
    main()
