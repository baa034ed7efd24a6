"""Snapshot ring buffer and the tree-distance-variance statistic."""

import numpy as np
import pytest

from conftest import random_timed_tree
from tripletree.trace import SampleTrace, read_trace_jsonl, tdv, write_trace_jsonl
from tripletree.tree import Tree, lca


def make_trace(*trees) -> SampleTrace:
    trace = SampleTrace(capacity=max(len(trees), 1))
    for i, t in enumerate(trees):
        trace.push(i, t, 0.0, 0.0)
    return trace


def test_identical_snapshots_give_zero():
    t = Tree.from_nested((((1, 2), 3), 4))
    trace = make_trace(t, t.copy(), t.copy())
    assert tdv(trace, [1, 2, 3, 4]) == 0.0


def test_hand_variance_example():
    # distance(1,2) flips between 2 (cherry) and 4 (caterpillar ends);
    # population variance of {2,4} is 1.0
    a = Tree.from_nested(((1, 2), (3, 4)))
    b = Tree.from_nested((((1, 3), 2), 4))
    assert tdv(make_trace(a, b), [1, 2, 3, 4]) == 1.0


def test_order_invariance():
    rng = np.random.default_rng(0)
    trees = [random_timed_tree(rng, 6) for _ in range(4)]
    s = [0, 2, 4, 5]
    forward = tdv(make_trace(*trees), s)
    backward = tdv(make_trace(*reversed(trees)), s)
    assert forward == pytest.approx(backward)


def test_tdv_uses_induced_distances():
    # on the full tree, d(1,4) differs between the two shapes; restricted
    # to {1,4} both induce a bare cherry, so the variance must be 0
    a = Tree.from_nested((((1, 2), 3), 4))
    b = Tree.from_nested(((1, 2), (3, 4)))
    trace = make_trace(a, b)
    assert tdv(trace, [1, 4]) == 0.0


def test_tdv_validates_inputs():
    t = Tree.from_nested(((1, 2), 3))
    with pytest.raises(ValueError):
        tdv(make_trace(t), [1])
    with pytest.raises(ValueError):
        tdv(SampleTrace(capacity=3), [1, 2])


def test_capacity_ring():
    trace = SampleTrace(capacity=3)
    t = Tree.from_nested(((1, 2), 3))
    for i in range(7):
        trace.push(i, t, float(i), 0.0)
    assert len(trace) == 3
    assert [e.iteration for e in trace] == [4, 5, 6]


def test_snapshots_are_isolated_copies():
    trace = SampleTrace(capacity=2)
    t = Tree.from_nested(((1, 2), 3))
    trace.push(0, t, 0.0, 0.0)
    t.set_time(lca(t, 1, 2), 0.9)
    snap = trace[0].tree
    assert snap.time(lca(snap, 1, 2)) != 0.9


def test_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    trace = SampleTrace(capacity=4)
    for i in range(4):
        trace.push(i * 5, random_timed_tree(rng, 5), -1.5 * i, -20.0 + i)
    path = tmp_path / "trace.jsonl"
    write_trace_jsonl(trace, path)
    records = read_trace_jsonl(path)
    assert len(records) == 4
    assert records[0]["iteration"] == 0
    assert records[3]["log_prior"] == pytest.approx(-4.5)
    assert all("newick" in r for r in records)
