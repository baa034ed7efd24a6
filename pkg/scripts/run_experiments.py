"""Run the full scheme-comparison experiments on both bundled datasets.

Writes one directory per dataset under --out-dir with metrics.csv,
averages.json, and the exact config used.  --quick shrinks everything for
a smoke run; the full runs take a few minutes per dataset.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tripletree.cli import main as cli_main  # noqa: E402

DATASETS = {
    "iris": {"file": "iris.csv", "label_column": "species"},
    "digits150": {"file": "digits150.csv", "label_column": "digit"},
}


def build_config(data_dir: Path, name: str, quick: bool) -> dict:
    spec = DATASETS[name]
    doc = {
        "dataset": {
            "path": str(data_dir / spec["file"]),
            "label_column": spec["label_column"],
        },
        "target": {"labels": True},
        "scheme": ["simple", "smart", "random", "active", "interleaved"],
        "iterations_per_query": 100,
        "total_queries": 30,
        "subset_size": 10,
        "candidates_L": 20,
        "runs": 4,
        "seed": 0,
    }
    if quick:
        doc["dataset"]["subsample"] = 40
        doc["dataset"]["seed"] = 0
        doc.update(iterations_per_query=20, total_queries=5, runs=2,
                   subset_size=8, candidates_L=5)
    return doc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--datasets", nargs="+", default=sorted(DATASETS),
                        choices=sorted(DATASETS))
    parser.add_argument("--quick", action="store_true",
                        help="small subsample and short chains, for smoke runs")
    args = parser.parse_args(argv)

    data_dir = Path(args.data_dir)
    missing = [n for n in args.datasets
               if not (data_dir / DATASETS[n]["file"]).exists()]
    if missing:
        print(f"generating datasets {missing} into {data_dir}/")
        subprocess.run(
            [sys.executable, str(Path(__file__).with_name("make_datasets.py")),
             "--out-dir", str(data_dir)],
            check=True,
        )

    for name in args.datasets:
        out = Path(args.out_dir) / name
        out.mkdir(parents=True, exist_ok=True)
        config = build_config(data_dir, name, args.quick)
        config_path = out / "config.json"
        config_path.write_text(json.dumps(config, indent=2) + "\n")
        print(f"== {name}: writing to {out}/")
        code = cli_main(["experiment", "--config", str(config_path),
                         "--out", str(out)])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
