"""Shared helpers for the test suite.

Random tree generators live here so the module tests and the acceptance
suite draw structures the same way.  Everything is seeded through
numpy Generators; tests that need reproducibility construct their own
generator from an explicit seed.
"""

import numpy as np
import pytest
from hypothesis import settings

from tripletree.tree import Tree, assign_canonical_times
from tripletree.model import DdtParams, simulate_tree

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


def random_topology(rng: np.random.Generator, n: int, payloads=None,
                    dim: int | None = None) -> Tree:
    """Uniform-ish random binary cladogram over n leaves, canonical times.

    Built by attaching leaves one at a time onto a uniformly chosen
    existing edge.  Not the uniform distribution over topologies, but it
    reaches every shape with positive probability, which is all the
    property tests need.  With ``dim`` set, all values start at zero.
    """
    if payloads is None:
        payloads = list(range(n))
    assert len(payloads) == n and n >= 2
    zero = None if dim is None else np.zeros(dim)
    tree = Tree(dim=dim)
    stem = tree.new_node(time=0.0, value=zero)
    tree.set_root(stem)
    first = tree.new_node(time=1.0, payload=payloads[0], value=zero)
    tree.link(stem, first)
    tree.rebuild_caches()
    for payload in payloads[1:]:
        # pick a non-stem node uniformly: its parent edge hosts the join
        candidates = [nid for nid in tree.nodes() if nid != tree.root]
        v = candidates[rng.integers(len(candidates))]
        u = tree.parent(v)
        joint = tree.new_node(time=0.5, value=zero)
        leaf = tree.new_node(time=1.0, payload=payload, value=zero)
        tree.replace_child(u, v, joint)
        tree.link(joint, v)
        tree.link(joint, leaf)
        tree.rebuild_caches()
    assign_canonical_times(tree)
    tree.validate()
    return tree


def random_timed_tree(rng: np.random.Generator, n: int, dim: int = 1,
                      sigma2: float = 1.0, c: float = 1.0) -> Tree:
    """Random tree with generative times and values (prior simulation)."""
    params = DdtParams(sigma2=sigma2, c=c, dim=dim)
    data = rng.standard_normal((n, dim))
    return simulate_tree(data, params, rng)


def leaf_data(rng: np.random.Generator, n: int, dim: int = 1) -> np.ndarray:
    return rng.standard_normal((n, dim))


def two_cluster_points(n: int, dim: int = 2, gap: float = 6.0,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic 2-cluster dataset: first half near 0, second near gap."""
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.standard_normal((half, dim)) * 0.5
    b = rng.standard_normal((n - half, dim)) * 0.5 + gap
    X = np.vstack([a, b])
    labels = np.array([0] * half + [1] * (n - half))
    X = X - X.mean(axis=0)
    return X, labels


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
