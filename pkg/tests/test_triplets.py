"""Triplet extraction, refinement, and the triplet-distance metric."""

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_topology
from tripletree.tree import Tree, TreeError, assign_canonical_times, induce_subtree, lca, lca_node
from tripletree.triplets import (
    Triplet,
    TripletDistance,
    TripletSet,
    extract_triplets,
    is_refinement,
    resolved_triple_positions,
    triplet_distance,
    triplet_distance_sampled,
)


def star_with_cluster_123() -> Tree:
    """Multifurcating target: cluster {1,2,3} unresolved, then 4, 5 split off.

    Shape ((1,2,3),4,5) read as: root has three children, one of which is
    the unresolved cluster over {1,2,3}.  No triplet among {1,2,3} exists,
    but ({i,j},4) and ({i,j},5) do for i,j in the cluster.
    """
    t = Tree()
    stem = t.new_node(time=0.0)
    t.set_root(stem)
    root = t.new_node(time=0.5)
    t.link(stem, root)
    cluster = t.new_node(time=0.75)
    t.link(root, cluster)
    for p in (1, 2, 3):
        t.link(cluster, t.new_node(time=1.0, payload=p))
    for p in (4, 5):
        t.link(root, t.new_node(time=1.0, payload=p))
    t.rebuild_caches()
    t.validate(require_binary=False)
    return t


def brute_triplets(tree: Tree) -> set[Triplet]:
    """Independent LCA-definition enumeration (strict-descendant test)."""
    out = set()
    for a, b, c in itertools.combinations(sorted(tree.leaf_payloads()), 3):
        top = lca_node(tree, lca(tree, a, b), tree.leaf_node(c))
        for x, y, z in ((a, b, c), (a, c, b), (b, c, a)):
            if lca(tree, x, y) != top:
                out.add(Triplet(x, y, z))
    return out


def brute_td(target: Tree, tree: Tree) -> float:
    dt = brute_triplets(target)
    if not dt:
        raise ValueError("target has no triplets")
    missing = sum(1 for t in dt if t not in brute_triplets(tree))
    return missing / len(dt)


def test_triplet_normalizes_pair_order():
    assert Triplet(2, 1, 3) == Triplet(1, 2, 3)
    assert Triplet(2, 1, 3).a == 1
    assert hash(Triplet(9, 4, 0)) == hash(Triplet(4, 9, 0))


def test_triplet_requires_distinct_endpoints():
    with pytest.raises(ValueError):
        Triplet(1, 1, 2)
    with pytest.raises(ValueError):
        Triplet(1, 2, 1)


def test_tripletset_dedup_and_membership():
    s = TripletSet()
    assert s.add(Triplet(1, 2, 3))
    assert not s.add(Triplet(2, 1, 3))  # same constraint
    assert len(s) == 1
    assert (1, 2, 3) in s
    assert Triplet(1, 2, 3) in s
    assert Triplet(1, 3, 2) not in s


def test_tripletset_restricted_and_touching():
    s = TripletSet([Triplet(1, 2, 3), Triplet(3, 4, 5), Triplet(1, 2, 5)])
    r = s.restricted_to({1, 2, 3})
    assert set(r) == {Triplet(1, 2, 3)}
    assert s.touching(5) == frozenset({Triplet(3, 4, 5), Triplet(1, 2, 5)})
    assert s.leaves() == {1, 2, 3, 4, 5}


def test_extract_single_cherry():
    t = Tree.from_nested(((1, 2), 3))
    assert set(extract_triplets(t)) == {Triplet(1, 2, 3)}


def test_extract_caterpillar_four():
    t = Tree.from_nested((((1, 2), 3), 4))
    want = {Triplet(1, 2, 3), Triplet(1, 2, 4), Triplet(1, 3, 4), Triplet(2, 3, 4)}
    assert set(extract_triplets(t)) == want


def test_extract_unresolved_cluster_has_no_inner_triplet():
    t = star_with_cluster_123()
    got = set(extract_triplets(t))
    for a, b in itertools.combinations((1, 2, 3), 2):
        for c in (1, 2, 3):
            if c not in (a, b):
                assert Triplet(a, b, c) not in got
        # but the cluster does resolve against the outgroups
        assert Triplet(a, b, 4) in got
        assert Triplet(a, b, 5) in got
    assert Triplet(4, 5, 1) not in got  # 4, 5 attach at the root: unresolved


@given(st.integers(0, 10_000))
def test_binary_tree_has_choose3_triplets(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 10))
    t = random_topology(rng, n)
    got = extract_triplets(t)
    assert len(got) == n * (n - 1) * (n - 2) // 6
    assert set(got) == brute_triplets(t)


def test_resolved_triple_positions_matches_extract():
    rng = np.random.default_rng(8)
    t = random_topology(rng, 8)
    from tripletree.tree import leaf_lca_depths

    payloads, D = leaf_lca_depths(t)
    A, B, C = resolved_triple_positions(D)
    got = {Triplet(payloads[a], payloads[b], payloads[c])
           for a, b, c in zip(A, B, C)}
    assert got == set(extract_triplets(t))


def test_is_refinement_identity_and_counterexample():
    t = Tree.from_nested((((1, 2), 3), 4))
    assert is_refinement(t, t)
    other = Tree.from_nested((((1, 3), 2), 4))
    assert not is_refinement(other, t)
    assert not is_refinement(t, other)


def test_refinement_of_multifurcating_target():
    target = star_with_cluster_123()
    # resolve the cluster arbitrarily and attach 4,5 as a cherry: every
    # cluster of the target ({1,2,3} and singletons) survives
    fine = Tree.from_nested((((1, 2), 3), (4, 5)))
    assert is_refinement(fine, target)
    # breaking the {1,2,3} cluster loses refinement
    coarse = Tree.from_nested((((1, 2), 4), (3, 5)))
    assert not is_refinement(coarse, target)


def test_is_refinement_rejects_leaf_mismatch():
    a = Tree.from_nested(((1, 2), 3))
    b = Tree.from_nested(((1, 2), 4))
    with pytest.raises(TreeError):
        is_refinement(a, b)


@given(st.integers(0, 10_000))
def test_lemma_refinement_iff_triplet_subset(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 11))
    target = random_topology(rng, n)
    if rng.random() < 0.5:
        tree = random_topology(rng, n)
    else:
        tree = target.copy()  # exercise the refinement side too
    subset = set(extract_triplets(target)) <= set(extract_triplets(tree))
    assert is_refinement(tree, target) == subset


def test_td_examples():
    target = Tree.from_nested((((1, 2), 3), 4))
    assert triplet_distance(target, target) == 0.0
    other = Tree.from_nested((((1, 3), 2), 4))
    assert triplet_distance(target, other) == 0.25


def test_td_star_cluster_example():
    # star over {1..5} with the single cluster {1,2}: |delta| = 3
    t = Tree()
    stem = t.new_node(time=0.0)
    t.set_root(stem)
    root = t.new_node(time=0.5)
    t.link(stem, root)
    pair = t.new_node(time=0.75)
    t.link(root, pair)
    for p in (1, 2):
        t.link(pair, t.new_node(time=1.0, payload=p))
    for p in (3, 4, 5):
        t.link(root, t.new_node(time=1.0, payload=p))
    t.rebuild_caches()
    dist = TripletDistance(t)
    assert dist.n_target_triplets == 3
    refined = Tree.from_nested((((1, 2), 3), (4, 5)))
    assert dist(refined) == 0.0


def test_td_undefined_for_targets_without_triplets():
    t = Tree()
    stem = t.new_node(time=0.0)
    t.set_root(stem)
    root = t.new_node(time=0.5)
    t.link(stem, root)
    for p in (1, 2, 3):
        t.link(root, t.new_node(time=1.0, payload=p))
    t.rebuild_caches()
    with pytest.raises(ValueError):
        TripletDistance(t)


@given(st.integers(0, 10_000))
def test_td_zero_iff_refinement(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 10))
    target = random_topology(rng, n)
    tree = random_topology(rng, n)
    td = triplet_distance(target, tree)
    assert (td == 0.0) == is_refinement(tree, target)


@given(st.integers(0, 10_000))
def test_td_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 9))
    target = random_topology(rng, n)
    tree = random_topology(rng, n)
    assert triplet_distance(target, tree) == brute_td(target, tree)


def test_induced_triplets_are_restriction():
    rng = np.random.default_rng(41)
    for _ in range(20):
        t = random_topology(rng, 10)
        s = sorted(rng.choice(10, size=5, replace=False).tolist())
        sub = induce_subtree(t, s)
        want = {trip for trip in extract_triplets(t)
                if set(trip.endpoints()) <= set(s)}
        assert set(extract_triplets(sub)) == want


def test_sampled_estimator_close_to_exact():
    rng = np.random.default_rng(2)
    target = random_topology(rng, 12)
    tree = random_topology(rng, 12)
    exact = triplet_distance(target, tree)
    approx = triplet_distance_sampled(target, tree, n_samples=4000,
                                      rng=np.random.default_rng(3))
    assert abs(approx - exact) < 0.05
