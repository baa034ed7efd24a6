"""Chain snapshot ring buffer and the subtree-distance variance score."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .newick import to_newick
from .tree import Tree, induce_subtree, pairwise_leaf_distances


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    tree: Tree
    log_prior: float
    log_likelihood: float

    @property
    def log_posterior(self) -> float:
        return self.log_prior + self.log_likelihood


class SampleTrace:
    """Ring buffer of the most recent ``capacity`` tree snapshots.

    Pushed trees are deep-copied; treat stored entries as immutable.
    """

    def __init__(self, capacity: int = 20):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._entries: deque[TraceEntry] = deque(maxlen=capacity)

    def push(self, iteration: int, tree: Tree, log_prior: float, log_likelihood: float) -> None:
        self._entries.append(
            TraceEntry(iteration, tree.copy(), float(log_prior), float(log_likelihood))
        )

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self._entries)

    def __getitem__(self, i: int) -> TraceEntry:
        return self._entries[i]


def tdv(trace: SampleTrace, subset: Iterable[int]) -> float:
    """Across-snapshot instability of the subset's induced subtree.

    For each snapshot, compute all leaf-to-leaf path lengths inside the
    induced subtree over ``subset``; the score is the maximum over leaf
    pairs of the population variance of that pair's distance across
    snapshots.  High scores mark subtrees the chain keeps rearranging.
    """
    s = sorted(set(subset))
    if len(s) < 2:
        raise ValueError("subtree variance needs at least two leaves")
    if len(trace) == 0:
        raise ValueError("empty trace")
    stacks = []
    for entry in trace:
        sub = induce_subtree(entry.tree, s)
        _, dist = pairwise_leaf_distances(sub)
        stacks.append(dist)
    dists = np.stack(stacks)  # (snapshots, |s|, |s|)
    var = dists.var(axis=0)  # population variance, ddof 0
    iu = np.triu_indices(len(s), k=1)
    return float(var[iu].max())


def write_trace_jsonl(trace: SampleTrace, path) -> None:
    """Line-delimited snapshot export: iteration, both log terms, Newick."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in trace:
            rec = {
                "iteration": e.iteration,
                "log_prior": e.log_prior,
                "log_likelihood": e.log_likelihood,
                "newick": to_newick(e.tree),
            }
            fh.write(json.dumps(rec) + "\n")


def read_trace_jsonl(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
