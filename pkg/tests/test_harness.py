"""CSV ingestion, targets, baselines, and the experiment loop."""

import itertools

import numpy as np
import pytest

from conftest import two_cluster_points
from tripletree.harness import (
    Dataset,
    DatasetError,
    ExperimentConfig,
    average_linkage,
    average_series,
    load_dataset,
    read_metrics,
    run_experiment,
    target_from_labels,
    target_from_newick,
    write_metrics,
)
from tripletree.tree import Tree, TreeError, lca, same_topology
from tripletree.triplets import TripletDistance, extract_triplets


def write_csv(path, text):
    path.write_text(text)
    return path


def test_load_with_header_and_label(tmp_path):
    p = write_csv(tmp_path / "d.csv",
                  "x,y,cls\n1.0,2.0,a\n2.0,3.0,b\n0.5,1.5,a\n")
    ds = load_dataset(p, label_column="cls")
    assert ds.n == 3 and ds.dim == 2
    assert ds.labels == ("a", "b", "a")
    # centered
    np.testing.assert_allclose(ds.X.mean(axis=0), 0.0, atol=1e-12)


def test_load_without_header(tmp_path):
    p = write_csv(tmp_path / "d.csv", "1,2\n3,4\n5,6\n")
    ds = load_dataset(p)
    assert ds.n == 3 and ds.dim == 2
    assert ds.labels is None


def test_load_label_by_index(tmp_path):
    p = write_csv(tmp_path / "d.csv", "1,2,a\n3,4,b\n5,6,a\n")
    ds = load_dataset(p, label_column=2)
    assert ds.dim == 2
    assert ds.labels == ("a", "b", "a")


def test_load_rejects_nan_with_location(tmp_path):
    p = write_csv(tmp_path / "d.csv", "x,y\n1,2\n3,NaN\n5,6\n")
    with pytest.raises(DatasetError) as exc:
        load_dataset(p)
    msg = str(exc.value)
    assert "row 3" in msg and "column 2" in msg


def test_load_rejects_ragged_rows(tmp_path):
    p = write_csv(tmp_path / "d.csv", "1,2\n3\n5,6\n")
    with pytest.raises(DatasetError):
        load_dataset(p)


def test_load_rejects_tiny(tmp_path):
    p = write_csv(tmp_path / "d.csv", "1,2\n3,4\n")
    with pytest.raises(DatasetError):
        load_dataset(p)


def test_subsample_is_deterministic(tmp_path):
    rows = "\n".join(f"{i},{i * 2}" for i in range(40))
    p = write_csv(tmp_path / "d.csv", rows + "\n")
    a = load_dataset(p, subsample=10, seed=3)
    b = load_dataset(p, subsample=10, seed=3)
    c = load_dataset(p, subsample=10, seed=4)
    np.testing.assert_array_equal(a.X, b.X)
    assert a.n == 10
    assert not np.array_equal(a.X, c.X)


def test_target_from_labels_counts():
    X = np.zeros((150, 2))
    labels = tuple(["a"] * 50 + ["b"] * 50 + ["c"] * 50)
    ds = Dataset(X=X, labels=labels, names=None, source="mem", subsample_seed=None)
    t = target_from_labels(ds)
    td = TripletDistance(t)
    # 3 * C(50,2) * 100
    assert td.n_target_triplets == 367_500


def test_target_from_labels_structure():
    X = np.zeros((6, 1))
    ds = Dataset(X=X, labels=("b", "a", "b", "a", "c", "b"), names=None,
                 source="mem", subsample_seed=None)
    t = target_from_labels(ds)
    t.validate(require_binary=False)
    # class clusters present: {1,3}=a, {0,2,5}=b, {4}=c
    assert lca(t, 1, 3) != t.cladogram_root
    assert lca(t, 0, 2) == lca(t, 0, 5)
    assert lca(t, 0, 2) != t.cladogram_root
    got = extract_triplets(t)
    assert (1, 3, 4) in got
    assert (0, 2, 1) in got
    assert (1, 3, 0) in got


def test_target_from_labels_needs_two_classes():
    ds = Dataset(X=np.zeros((4, 1)), labels=("a",) * 4, names=None,
                 source="mem", subsample_seed=None)
    with pytest.raises(TreeError):
        target_from_labels(ds)


def test_target_singletons_rejected_by_distance():
    ds = Dataset(X=np.zeros((3, 1)), labels=("a", "b", "c"), names=None,
                 source="mem", subsample_seed=None)
    t = target_from_labels(ds)
    with pytest.raises(ValueError):
        TripletDistance(t)


def test_target_from_newick(tmp_path):
    p = tmp_path / "t.nwk"
    p.write_text("((ant,bee),(cow,dog),emu);\n")
    table = {"ant": 0, "bee": 1, "cow": 2, "dog": 3, "emu": 4}
    t = target_from_newick(p, label_table=table)
    t.validate(require_binary=False)
    assert sorted(t.leaf_payloads()) == [0, 1, 2, 3, 4]


def test_average_linkage_collinear():
    t = average_linkage(np.array([[0.0], [1.0], [10.0]]))
    assert same_topology(t, Tree.from_nested(((0, 1), 2)))
    t.validate()


def test_average_linkage_pair():
    t = average_linkage(np.array([[0.0], [3.0]]))
    assert sorted(t.leaf_payloads()) == [0, 1]
    t.validate()


def reference_upgma(X: np.ndarray) -> Tree:
    """Quadratic-memory UPGMA, written independently of scipy."""
    n = X.shape[0]
    dist = {}
    for i, j in itertools.combinations(range(n), 2):
        dist[(i, j)] = float(np.linalg.norm(X[i] - X[j]))

    def d(a, b):
        return dist[(a, b) if a < b else (b, a)]

    clusters = {i: (i, 1) for i in range(n)}  # id -> (nested, size)
    active = list(range(n))
    next_id = n
    while len(active) > 1:
        best = min(((d(a, b), a, b) for a, b in itertools.combinations(sorted(active), 2)))
        _, a, b = best
        na, nb = clusters[a], clusters[b]
        merged = (na[0], nb[0])
        size = na[1] + nb[1]
        for other in active:
            if other in (a, b):
                continue
            new_d = (na[1] * d(a, other) + nb[1] * d(b, other)) / size
            key = (other, next_id) if other < next_id else (next_id, other)
            dist[key] = new_d
        active = [x for x in active if x not in (a, b)] + [next_id]
        clusters[next_id] = (merged, size)
        next_id += 1
    return Tree.from_nested(clusters[active[0]][0])


def test_average_linkage_matches_reference():
    rng = np.random.default_rng(13)
    for trial in range(8):
        n = int(rng.integers(4, 21))
        X = rng.standard_normal((n, 3))
        got = average_linkage(X)
        want = reference_upgma(X)
        assert same_topology(got, want), f"trial {trial}, n={n}"


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(runs=0)
    with pytest.raises(ValueError):
        ExperimentConfig(schemes=("bogus",))
    with pytest.raises(ValueError):
        ExperimentConfig(sigma2=-1.0)
    cfg = ExperimentConfig()
    assert cfg.schemes == ("simple", "smart", "random", "active", "interleaved")


def tiny_setup(n=12, queries=3):
    X, labels = two_cluster_points(n)
    ds = Dataset(X=X, labels=tuple(str(x) for x in labels), names=None,
                 source="mem", subsample_seed=None)
    target = target_from_labels(ds)
    cfg = ExperimentConfig(schemes=("random", "smart"), iterations_per_query=20,
                           total_queries=queries, subset_size=6, candidates=4,
                           runs=2, seed=5, trace_capacity=8, trace_stride=5)
    return cfg, ds, target


def test_run_experiment_row_bookkeeping():
    cfg, ds, target = tiny_setup()
    rows = run_experiment(cfg, ds, target)
    # per scheme plus the vanilla series: runs * (queries + 1) rows each,
    # plus one average-linkage row
    per_series = cfg.runs * (cfg.total_queries + 1)
    assert len(rows) == per_series * 3 + 1
    schemes = {r.scheme for r in rows}
    assert schemes == {"random", "smart", "vanilla", "average_linkage"}
    for r in rows:
        assert 0.0 <= r.triplet_distance <= 1.0
        if r.scheme == "average_linkage":
            assert r.log_posterior is None
        else:
            assert np.isfinite(r.log_posterior)
    # constraint counts only grow within a run
    for scheme in ("random", "smart"):
        for run in range(cfg.runs):
            series = [r.constraints_count for r in rows
                      if r.scheme == scheme and r.run == run]
            assert len(series) == cfg.total_queries + 1
            assert all(a <= b for a, b in zip(series, series[1:]))
    # vanilla never accumulates constraints
    assert all(r.constraints_count == 0 for r in rows if r.scheme == "vanilla")


def test_run_experiment_zero_queries():
    cfg, ds, target = tiny_setup(queries=0)
    rows = run_experiment(cfg, ds, target)
    assert all(r.query_index == 0 for r in rows if r.scheme != "average_linkage")
    assert len(rows) == cfg.runs * 3 + 1


def test_run_experiment_determinism():
    cfg, ds, target = tiny_setup()
    a = run_experiment(cfg, ds, target)
    b = run_experiment(cfg, ds, target)
    assert a == b


def test_metrics_round_trip(tmp_path):
    cfg, ds, target = tiny_setup(queries=2)
    rows = run_experiment(cfg, ds, target)
    path = tmp_path / "metrics.csv"
    write_metrics(rows, path)
    text = path.read_text()
    assert text.splitlines()[0] == \
        "scheme,run,query_index,triplet_distance,log_posterior,constraints_count"
    back = read_metrics(path)
    assert back == rows
    # byte determinism of the writer itself
    path2 = tmp_path / "metrics2.csv"
    write_metrics(rows, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_average_series():
    cfg, ds, target = tiny_setup(queries=2)
    rows = run_experiment(cfg, ds, target)
    avg = average_series([r for r in rows if r.scheme == "smart"])
    assert len(avg["smart"]) == cfg.total_queries + 1
    manual = np.mean([r.triplet_distance for r in rows
                      if r.scheme == "smart" and r.query_index == 0])
    assert avg["smart"][0] == pytest.approx(manual)


def test_smart_scheme_reaches_zero_td():
    # 2 well-separated clusters, 20 points: with whole-tree queries the
    # oracle feeds back every needed triplet and TD hits 0 and stays
    X, labels = two_cluster_points(20)
    ds = Dataset(X=X, labels=tuple(str(x) for x in labels), names=None,
                 source="mem", subsample_seed=None)
    target = target_from_labels(ds)
    cfg = ExperimentConfig(schemes=("smart",), iterations_per_query=30,
                           total_queries=25, subset_size=10, candidates=4,
                           runs=1, seed=11, include_vanilla=False)
    rows = run_experiment(cfg, ds, target)
    tds = [r.triplet_distance for r in rows if r.scheme == "smart"]
    assert tds[-1] == 0.0
