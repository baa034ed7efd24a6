"""Datasets, target trees, baselines, and the convergence experiment loop.

An experiment compares query schemes on one dataset: per scheme and per
run, a chain starts from a prior-simulated tree with no constraints, and
every block of MCMC iterations ends with one query whose answer (if any)
is folded into the constraint set.  Triplet distance to the target and
the log posterior are recorded at every query boundary, alongside a
query-free chain and an average-linkage tree as baselines.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .constraints import incorporate_triplet
from .model import DdtParams, estimate_sigma2
from .newick import read_newick_file
from .querying import QueryScheme, ask
from .sampler import SamplerSchedule, gibbs_internal_values, initial_state, run
from .trace import SampleTrace
from .tree import Tree, TreeError, assign_canonical_times
from .triplets import TripletDistance

METRICS_HEADER = (
    "scheme",
    "run",
    "query_index",
    "triplet_distance",
    "log_posterior",
    "constraints_count",
)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional per-row labels and column names."""

    X: np.ndarray
    labels: tuple[str, ...] | None = None
    names: tuple[str, ...] | None = None
    source: str = ""
    subsample_seed: int | None = None

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-d, got shape {self.X.shape}")
        if self.X.shape[0] < 3:
            raise ValueError(f"need at least 3 rows, got {self.X.shape[0]}")
        if self.labels is not None and len(self.labels) != self.X.shape[0]:
            raise ValueError("labels length must match the row count")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


class DatasetError(ValueError):
    pass


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DatasetError(
            f"row {row}, column {col}: {text!r} is not a number"
        ) from None
    if not math.isfinite(v):
        raise DatasetError(f"row {row}, column {col}: {text!r} is not finite")
    return v


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def load_dataset(
    path,
    label_column: int | str | None = None,
    subsample: int | None = None,
    seed: int | None = None,
    center: bool = True,
) -> Dataset:
    """Read a CSV of numeric features, with an optional label column.

    A header row is assumed when some column is non-numeric in the first
    row but numeric in the second (an all-text label column alone does not
    imply a header).  Errors name the offending file row and column,
    1-based, counting the header.  ``subsample`` keeps that many rows,
    chosen without replacement under ``seed``, preserving file order.
    Features are centered column-wise unless ``center`` is false.
    """
    path = Path(path)
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise DatasetError(f"{path}: too few rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DatasetError(
                f"{path}: row {i + 1} has {len(r)} cells, expected {width}"
            )
    has_header = any(
        not _is_number(rows[0][j]) and _is_number(rows[1][j]) for j in range(width)
    )
    names = tuple(c.strip() for c in rows[0]) if has_header else None
    data_rows = rows[1:] if has_header else rows
    row_offset = 2 if has_header else 1  # file row of the first data row
    if len(data_rows) < 3:
        raise DatasetError(f"{path}: need at least 3 data points, got {len(data_rows)}")

    label_idx: int | None = None
    if label_column is not None:
        if isinstance(label_column, str):
            if names is None:
                raise DatasetError(
                    f"{path}: label column {label_column!r} needs a header row"
                )
            if label_column not in names:
                raise DatasetError(
                    f"{path}: no column named {label_column!r} (header: {names})"
                )
            label_idx = names.index(label_column)
        else:
            label_idx = int(label_column)
            if not (0 <= label_idx < width):
                raise DatasetError(f"{path}: label column {label_idx} out of range")

    feature_cols = [j for j in range(width) if j != label_idx]
    if not feature_cols:
        raise DatasetError(f"{path}: no feature columns left")
    X = np.empty((len(data_rows), len(feature_cols)))
    for i, r in enumerate(data_rows):
        for jj, j in enumerate(feature_cols):
            X[i, jj] = _parse_cell(r[j].strip(), i + row_offset, j + 1)
    labels = (
        tuple(r[label_idx].strip() for r in data_rows) if label_idx is not None else None
    )

    subsample_seed = None
    if subsample is not None and subsample < X.shape[0]:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(X.shape[0], size=subsample, replace=False))
        X = X[keep]
        if labels is not None:
            labels = tuple(labels[i] for i in keep)
        subsample_seed = seed
    if center:
        X = X - X.mean(axis=0)
    feature_names = (
        tuple(names[j] for j in feature_cols) if names is not None else None
    )
    return Dataset(
        X=X,
        labels=labels,
        names=feature_names,
        source=str(path),
        subsample_seed=subsample_seed,
    )


def target_from_labels(dataset: Dataset) -> Tree:
    """Flat classification tree: one multifurcating node per label class.

    Row indices are the leaves; classes are ordered by label string.  The
    result is read-only ground truth (non-binary, no values).
    """
    if dataset.labels is None:
        raise TreeError("dataset has no label column")
    classes: dict[str, list[int]] = {}
    for i, lab in enumerate(dataset.labels):
        classes.setdefault(lab, []).append(i)
    if len(classes) < 2:
        raise TreeError(f"need at least 2 label classes, got {len(classes)}")
    tree = Tree()
    top = tree.new_node(0.5)
    for lab in sorted(classes):
        members = classes[lab]
        if len(members) == 1:
            tree.link(top, tree.new_node(1.0, payload=members[0]))
        else:
            cluster = tree.new_node(0.75)
            for i in members:
                tree.link(cluster, tree.new_node(1.0, payload=i))
            tree.link(top, cluster)
    stem = tree.new_node(0.0)
    tree.link(stem, top)
    tree.set_root(stem)
    assign_canonical_times(tree)
    tree.rebuild_caches()
    tree.validate(require_binary=False)
    return tree


def target_from_newick(path, label_table: dict[str, int] | None = None) -> Tree:
    """Ground-truth tree from a Newick file; may be non-binary."""
    return read_newick_file(path, label_table=label_table, allow_multifurcations=True)


def average_linkage(X: np.ndarray) -> Tree:
    """Agglomerative hierarchy under average linkage on Euclidean distance.

    Structure comes from scipy's linkage; node times are reassigned by
    height (the comparison metric only reads the topology).
    """
    from scipy.cluster.hierarchy import linkage

    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise TreeError("average linkage needs at least 2 rows")
    tree = Tree()
    nodes = [tree.new_node(1.0, payload=i) for i in range(n)]
    if n == 2:
        joint = tree.new_node(0.5)
        tree.link(joint, nodes[0])
        tree.link(joint, nodes[1])
        nodes.append(joint)
    else:
        Z = linkage(X, method="average")
        for a, b, _, _ in Z:
            joint = tree.new_node(0.5)
            tree.link(joint, nodes[int(a)])
            tree.link(joint, nodes[int(b)])
            nodes.append(joint)
    stem = tree.new_node(0.0)
    tree.link(stem, nodes[-1])
    tree.set_root(stem)
    assign_canonical_times(tree)
    tree.rebuild_caches()
    tree.validate(require_binary=True)
    return tree


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs of one experiment; schemes run sequentially over shared data."""

    schemes: tuple[str, ...] = ("simple", "smart", "random", "active", "interleaved")
    iterations_per_query: int = 100
    total_queries: int = 30
    subset_size: int = 10
    candidates: int = 20
    runs: int = 4
    seed: int = 0
    sigma2: float | str = "auto"
    c: float = 1.0
    trace_capacity: int = 20
    trace_stride: int = 5
    include_vanilla: bool = True

    def __post_init__(self):
        for name in (
            "iterations_per_query",
            "subset_size",
            "candidates",
            "runs",
            "trace_capacity",
            "trace_stride",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.total_queries < 0:
            raise ValueError("total_queries must be nonnegative")
        for s in self.schemes:
            if s not in ("simple", "smart", "random", "active", "interleaved"):
                raise ValueError(f"unknown scheme {s!r}")
        if isinstance(self.sigma2, str):
            if self.sigma2 != "auto":
                raise ValueError('sigma2 must be a number or "auto"')
        elif self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.c <= 0:
            raise ValueError("c must be positive")


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    run: int
    query_index: int
    triplet_distance: float
    log_posterior: float | None
    constraints_count: int


def _resolve_params(config: ExperimentConfig, dataset: Dataset) -> DdtParams:
    sigma2 = (
        estimate_sigma2(dataset.X) if config.sigma2 == "auto" else float(config.sigma2)
    )
    return DdtParams(sigma2=sigma2, c=config.c, dim=dataset.dim)


def _run_series(
    scheme_name: str,
    config: ExperimentConfig,
    dataset: Dataset,
    target: Tree,
    run_index: int,
    seed_key: tuple[int, ...],
    on_tree=None,
) -> list[MetricsRow]:
    """One chain for one scheme and one run; vanilla skips the queries."""
    rng = np.random.default_rng(list(seed_key))
    params = _resolve_params(config, dataset)
    state = initial_state(dataset.X, params, rng)
    trace = SampleTrace(capacity=config.trace_capacity)
    td = TripletDistance(target)
    schedule = SamplerSchedule(snapshot_stride=config.trace_stride)
    scheme = (
        None
        if scheme_name == "vanilla"
        else QueryScheme(
            kind=scheme_name,
            subset_size=config.subset_size,
            candidates=config.candidates,
        )
    )
    rows = [
        MetricsRow(
            scheme_name,
            run_index,
            0,
            td(state.tree),
            state.log_posterior,
            len(state.constraints),
        )
    ]
    if on_tree is not None:
        on_tree(state)
    for q in range(config.total_queries):
        run(state, config.iterations_per_query, schedule, trace=trace)
        if scheme is not None:
            outcome = ask(scheme, state.tree, target, trace, rng, query_index=q)
            if outcome.answer is not None and state.constraints.add(outcome.answer):
                incorporate_triplet(state.tree, state.constraints, outcome.answer)
                gibbs_internal_values(state)
                state.refresh_log_terms()
        rows.append(
            MetricsRow(
                scheme_name,
                run_index,
                q + 1,
                td(state.tree),
                state.log_posterior,
                len(state.constraints),
            )
        )
        if on_tree is not None:
            on_tree(state)
    return rows


def run_experiment(
    config: ExperimentConfig,
    dataset: Dataset,
    target: Tree,
    on_tree=None,
) -> list[MetricsRow]:
    """Full scheme comparison: every scheme (plus the query-free chain) for
    every run, then one average-linkage row.  Row order is scheme-major,
    run-minor, query-index-last; identical config and seed give identical
    rows."""
    series = list(config.schemes)
    if config.include_vanilla:
        series.append("vanilla")
    rows: list[MetricsRow] = []
    for s_idx, scheme_name in enumerate(series):
        for r in range(config.runs):
            rows.extend(
                _run_series(
                    scheme_name,
                    config,
                    dataset,
                    target,
                    r,
                    (config.seed, s_idx, r),
                    on_tree=on_tree,
                )
            )
    td = TripletDistance(target)
    rows.append(
        MetricsRow("average_linkage", 0, 0, td(average_linkage(dataset.X)), None, 0)
    )
    return rows


def write_metrics(rows: Iterable[MetricsRow], path) -> None:
    """CSV emission with a fixed header; floats use shortest round-trip
    formatting so identical runs produce identical bytes."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.scheme,
                    r.run,
                    r.query_index,
                    repr(float(r.triplet_distance)),
                    "" if r.log_posterior is None else repr(float(r.log_posterior)),
                    r.constraints_count,
                ]
            )


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise DatasetError(f"unexpected metrics header {header}")
        out = []
        for row in reader:
            out.append(
                MetricsRow(
                    row[0],
                    int(row[1]),
                    int(row[2]),
                    float(row[3]),
                    None if row[4] == "" else float(row[4]),
                    int(row[5]),
                )
            )
        return out


def average_series(rows: Sequence[MetricsRow]) -> dict[str, list[float]]:
    """Mean triplet distance across runs, per scheme, by query index."""
    by_scheme: dict[str, dict[int, list[float]]] = {}
    for r in rows:
        by_scheme.setdefault(r.scheme, {}).setdefault(r.query_index, []).append(
            r.triplet_distance
        )
    out: dict[str, list[float]] = {}
    for scheme, per_q in by_scheme.items():
        out[scheme] = [
            float(np.mean(per_q[q])) for q in sorted(per_q)
        ]
    return out
