"""Command-line front end.

Subcommands: ``fit`` samples without constraints and writes a trace,
``experiment`` runs the scheme-comparison loop from a JSON config,
``serve`` starts the HTTP session server, ``eval`` scores one tree
against a target, and ``baseline`` prints the average-linkage tree.
Exit codes: 0 success, 2 bad usage or config, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (
    Dataset,
    DatasetError,
    ExperimentConfig,
    average_linkage,
    average_series,
    load_dataset,
    run_experiment,
    target_from_labels,
    target_from_newick,
    write_metrics,
)
from .model import DdtParams, estimate_sigma2
from .newick import NewickError, read_newick_file, to_newick, write_newick_file
from .sampler import SamplerSchedule, initial_state, run
from .trace import SampleTrace, write_trace_jsonl
from .tree import TreeError
from .triplets import triplet_distance


class ConfigError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripletree",
        description="steerable Bayesian hierarchical clustering over tree posteriors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="sample trees for a dataset, no constraints")
    p_fit.add_argument("--data", required=True, help="CSV of numeric features")
    p_fit.add_argument("--label-column", default=None, help="column name or index to drop")
    p_fit.add_argument("--iterations", type=int, default=1000)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--sigma2", default="auto", help='noise variance or "auto"')
    p_fit.add_argument("--c", type=float, default=1.0, help="divergence hazard scale")
    p_fit.add_argument("--out", default="fit-out", help="output directory")

    p_exp = sub.add_parser("experiment", help="scheme comparison from a JSON config")
    p_exp.add_argument("--config", required=True, help="JSON config file")
    p_exp.add_argument("--out", default="experiment-out", help="output directory")
    p_exp.add_argument("--seed", type=int, default=None, help="override config seed")

    p_srv = sub.add_parser("serve", help="start the HTTP session server")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.add_argument("--data", required=True, help="CSV served to new sessions")
    p_srv.add_argument("--label-column", default=None)
    p_srv.add_argument("--log-dir", default=None, help="directory for session query logs")

    p_eval = sub.add_parser("eval", help="triplet distance between two Newick trees")
    p_eval.add_argument("--target", required=True, help="ground-truth Newick file")
    p_eval.add_argument("--tree", required=True, help="candidate Newick file")

    p_base = sub.add_parser("baseline", help="average-linkage tree for a dataset")
    p_base.add_argument("--data", required=True)
    p_base.add_argument("--label-column", default=None)
    p_base.add_argument("--out", default=None, help="write Newick here instead of stdout")
    return parser


def _coerce_label_column(raw: str | None) -> int | str | None:
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        return raw


def _sigma2_arg(raw) -> float | str:
    if raw == "auto":
        return "auto"
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f'sigma2 must be a number or "auto", got {raw!r}') from None


def _cmd_fit(args) -> int:
    ds = load_dataset(args.data, label_column=_coerce_label_column(args.label_column))
    sigma2 = _sigma2_arg(args.sigma2)
    params = DdtParams(
        sigma2=estimate_sigma2(ds.X) if sigma2 == "auto" else sigma2,
        c=args.c,
        dim=ds.dim,
    )
    rng = np.random.default_rng(args.seed)
    state = initial_state(ds.X, params, rng)
    trace = SampleTrace(capacity=max(1, args.iterations // 10))
    run(state, args.iterations, SamplerSchedule(snapshot_stride=10), trace=trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_jsonl(trace, out / "trace.jsonl")
    write_newick_file(state.tree, out / "final.nwk")
    print(
        f"sampled {args.iterations} iterations; "
        f"final log posterior {state.log_posterior:.4f}; wrote {out}/"
    )
    return 0


def _dataset_from_config(spec) -> Dataset:
    if isinstance(spec, str):
        return load_dataset(spec)
    if not isinstance(spec, dict) or "path" not in spec:
        raise ConfigError('config "dataset" must be a path or {"path": ...}')
    return load_dataset(
        spec["path"],
        label_column=spec.get("label_column"),
        subsample=spec.get("subsample"),
        seed=spec.get("seed"),
        center=spec.get("center", True),
    )


def _target_from_config(spec, dataset: Dataset):
    if not isinstance(spec, dict) or not ({"labels", "newick"} & spec.keys()):
        raise ConfigError('config "target" must contain "labels" or "newick"')
    if spec.get("labels"):
        return target_from_labels(dataset)
    table = None
    if dataset.labels is not None:
        if len(set(dataset.labels)) == len(dataset.labels):
            table = {name: i for i, name in enumerate(dataset.labels)}
    return target_from_newick(spec["newick"], label_table=table)


def _experiment_config(doc, seed_override: int | None) -> ExperimentConfig:
    scheme = doc.get("scheme", list(ExperimentConfig.__dataclass_fields__["schemes"].default))
    schemes = (scheme,) if isinstance(scheme, str) else tuple(scheme)
    try:
        return ExperimentConfig(
            schemes=schemes,
            iterations_per_query=doc.get("iterations_per_query", 100),
            total_queries=doc.get("total_queries", 30),
            subset_size=doc.get("subset_size", 10),
            candidates=doc.get("candidates_L", 20),
            runs=doc.get("runs", 4),
            seed=seed_override if seed_override is not None else doc.get("seed", 0),
            sigma2=_sigma2_arg(doc.get("sigma2", "auto")),
            c=doc.get("c", 1.0),
            trace_capacity=doc.get("trace_capacity", 20),
            trace_stride=doc.get("trace_stride", 5),
            include_vanilla=doc.get("include_vanilla", True),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _cmd_experiment(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{args.config}: {e}") from None
    if "dataset" not in doc or "target" not in doc:
        raise ConfigError('config needs "dataset" and "target"')
    dataset = _dataset_from_config(doc["dataset"])
    target = _target_from_config(doc["target"], dataset)
    config = _experiment_config(doc, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_experiment(config, dataset, target)
    write_metrics(rows, out / "metrics.csv")
    averages = average_series(rows)
    with open(out / "averages.json", "w") as f:
        json.dump(averages, f, indent=2, sort_keys=True)
    final_td = {s: v[-1] for s, v in sorted(averages.items())}
    print(f"wrote {out}/metrics.csv; final mean triplet distance per scheme: {final_td}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import build_app

    ds = load_dataset(args.data, label_column=_coerce_label_column(args.label_column))
    app = build_app(ds, log_dir=args.log_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_eval(args) -> int:
    target = read_newick_file(args.target, allow_multifurcations=True)
    tree = read_newick_file(args.tree, allow_multifurcations=True)
    print(f"{triplet_distance(target, tree):.6f}")
    return 0


def _cmd_baseline(args) -> int:
    ds = load_dataset(args.data, label_column=_coerce_label_column(args.label_column))
    tree = average_linkage(ds.X)
    text = to_newick(tree)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "experiment": _cmd_experiment,
    "serve": _cmd_serve,
    "eval": _cmd_eval,
    "baseline": _cmd_baseline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DatasetError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (TreeError, NewickError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
