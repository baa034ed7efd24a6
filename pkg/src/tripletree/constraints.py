"""Triplet constraint machinery: realizability, construction, repair.

``build`` constructs a binary tree satisfying a triplet set by recursive
component splitting of the constraint graph (one edge {a, b} per triplet
({a, b}, c) whose three endpoints all lie in the active subset).  A
connected graph over two or more active leaves certifies that no tree can
satisfy the constraints.

``incorporate_triplet`` is the repair step used after a user answer: it
rebuilds only the subtree rooted at ``lca(a, b)``, which is the lowest
region whose structure can conflict with the new triplet, and leaves every
leaf outside that subtree attached exactly where it was.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tree import NO_NODE, Tree, TreeError, assign_canonical_times, lca
from .triplets import Triplet, TripletSet


class UnrealizableError(ValueError):
    """No tree over the active leaves can satisfy the triplet set."""


@dataclass(frozen=True)
class AhoGraph:
    """Constraint graph over an active leaf subset.

    ``component_of`` labels each vertex with the minimum vertex of its
    connected component, so labels are stable across runs.
    """

    vertices: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    component_of: dict[int, int]

    def components(self) -> list[list[int]]:
        """Connected components, each sorted, ordered by minimum member."""
        groups: dict[int, list[int]] = {}
        for v in self.vertices:
            groups.setdefault(self.component_of[v], []).append(v)
        return [sorted(groups[k]) for k in sorted(groups)]

    @property
    def n_components(self) -> int:
        return len(set(self.component_of.values()))


def aho_graph(constraints: TripletSet, subset: Iterable[int]) -> AhoGraph:
    """Build the constraint graph on ``subset``.

    Only triplets with all three endpoints inside the subset contribute an
    edge between their in-pair.
    """
    verts = sorted(set(subset))
    vset = set(verts)
    parent = {v: v for v in verts}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            if rx > ry:
                rx, ry = ry, rx
            parent[ry] = rx

    edges = set()
    for t in constraints:
        if t.a in vset and t.b in vset and t.c in vset:
            edges.add((t.a, t.b))
            union(t.a, t.b)
    labels: dict[int, int] = {}
    for v in verts:
        labels[v] = find(v)
    # normalize each label to the minimum vertex in the component
    mins: dict[int, int] = {}
    for v in verts:
        r = labels[v]
        mins[r] = min(mins.get(r, v), v)
    component_of = {v: mins[labels[v]] for v in verts}
    return AhoGraph(tuple(verts), frozenset(edges), component_of)


def build(constraints: TripletSet, subset: Iterable[int]) -> Tree:
    """Construct a binary tree over ``subset`` satisfying ``constraints``.

    Deterministic: at each level the constraint-graph components are sorted
    by minimum contained index; the first component becomes the left child
    and the union of the rest the right child.  Times are canonical
    heights; callers that need model times must reassign them.

    Raises UnrealizableError when the constraint graph is connected over
    two or more leaves.
    """
    s = sorted(set(subset))
    if not s:
        raise TreeError("cannot build a tree over an empty leaf set")
    tree = Tree()

    def rec(leaves: list[int], cons: TripletSet) -> int:
        if len(leaves) == 1:
            return tree.new_node(1.0, payload=leaves[0])
        comps = aho_graph(cons, leaves).components()
        if len(comps) == 1:
            raise UnrealizableError(
                f"constraints over leaves {leaves} form a single connected component"
            )
        left = comps[0]
        right = sorted(x for comp in comps[1:] for x in comp)
        node = tree.new_node(0.5)
        tree.link(node, rec(left, cons.restricted_to(left)))
        tree.link(node, rec(right, cons.restricted_to(right)))
        return node

    top = rec(s, constraints.restricted_to(s))
    stem = tree.new_node(0.0)
    tree.link(stem, top)
    tree.set_root(stem)
    assign_canonical_times(tree)
    tree.rebuild_caches()
    return tree


def find_violation(tree: Tree, constraints: Iterable[Triplet]) -> Triplet | None:
    """First triplet (iteration order) the tree fails to resolve, or None."""
    for t in constraints:
        z = lca(tree, t.a, t.b)
        if (tree.mask(z) >> t.c) & 1:
            return t
    return None


def check_satisfies(tree: Tree, constraints: Iterable[Triplet]) -> bool:
    """True when the tree resolves every triplet in ``constraints``.

    A triplet ({a, b}, c) holds exactly when c is not a descendant of
    lca(a, b), which the leaf masks answer in O(depth) per triplet.
    """
    return find_violation(tree, constraints) is None


def _seed_subtree_values(tree: Tree, top: int) -> None:
    """Post-order mean-of-children initialization for freshly built internals.

    A placeholder good enough to keep likelihoods finite; callers should
    follow with a Gibbs pass over internal values.
    """
    for nid in tree.postorder(top):
        if tree.payload(nid) is None:
            kids = tree.children(nid)
            tree.set_value(nid, np.mean([tree.value(c) for c in kids], axis=0))


def incorporate_triplet(tree: Tree, constraints: TripletSet, new: Triplet) -> Tree:
    """Mutate ``tree`` so it satisfies ``constraints`` plus ``new``.

    Preconditions: the tree satisfies ``constraints`` and the union is
    realizable (always true when answers come from a real hierarchy over
    the same leaves).  If the tree already resolves ``new`` it is returned
    unchanged.  Otherwise the subtree rooted at z = lca(a, b) is rebuilt by
    ``build`` over leaves(z) under the union constraint set, times inside
    the rebuilt region are respaced uniformly between t(parent(z)) and 1,
    and every leaf outside leaves(z) keeps its attachment.

    Internal values inside the rebuilt region are seeded with child means
    when the tree carries values; run a Gibbs sweep afterwards to draw them
    from the model.
    """
    if check_satisfies(tree, [new]):
        return tree
    z = lca(tree, new.a, new.b)
    parent = tree.parent(z)
    if parent == NO_NODE:
        raise TreeError("lca of a violated triplet cannot be the stem")
    leaves_z = tree.subtree_leaf_payloads(z)
    merged = constraints.restricted_to(leaves_z)
    merged.add(new)
    replacement = build(merged, leaves_z)

    saved_values = None
    if tree.dim is not None:
        saved_values = {p: tree.value(tree.leaf_node(p)).copy() for p in leaves_z}

    # drop the old subtree under z
    def drop(nid: int) -> None:
        for c in list(tree.children(nid)):
            drop(c)
        tree._children[nid] = []
        tree._parent[nid] = NO_NODE
        tree.free_node(nid)

    slot = tree.children(parent).index(z)
    tree._children[parent].pop(slot)
    tree._parent[z] = NO_NODE
    drop(z)

    # graft a copy of the replacement structure
    def graft(src: int) -> int:
        pay = replacement.payload(src)
        if pay is not None:
            val = saved_values[pay] if saved_values is not None else None
            nid = tree.new_node(1.0, payload=pay, value=val)
        else:
            nid = tree.new_node(0.5)
            for c in replacement.children(src):
                tree.link(nid, graft(c))
        return nid

    top = graft(replacement.cladogram_root)
    tree._children[parent].insert(slot, top)
    tree._parent[top] = parent

    # uniform respacing: height h maps to 1 - h * (1 - t_parent) / (H + 1)
    heights: dict[int, int] = {}
    for nid in tree.postorder(top):
        ch = tree.children(nid)
        heights[nid] = 0 if not ch else 1 + max(heights[c] for c in ch)
    t0 = tree.time(parent)
    denom = heights[top] + 1
    for nid, h in heights.items():
        tree.set_time(nid, 1.0 if h == 0 else 1.0 - h * (1.0 - t0) / denom)

    if tree.dim is not None:
        _seed_subtree_values(tree, top)
    tree.rebuild_caches()
    return tree


# ----------------------------------------------------------------------
# triplet files: one "a b | c" per line, '#' starts a comment


def write_triplets(constraints: Iterable[Triplet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in constraints:
            fh.write(f"{t.a} {t.b} | {t.c}\n")


def parse_triplet_line(line: str) -> Triplet | None:
    """Parse one triplet line; returns None for blanks and comments."""
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    if "|" not in body:
        raise ValueError(f"missing '|' separator in triplet line {line!r}")
    left, right = body.split("|", 1)
    pair = left.split()
    out = right.split()
    if len(pair) != 2 or len(out) != 1:
        raise ValueError(f"expected 'a b | c', got {line!r}")
    try:
        a, b, c = int(pair[0]), int(pair[1]), int(out[0])
    except ValueError:
        raise ValueError(f"non-integer leaf index in triplet line {line!r}") from None
    return Triplet(a, b, c)


def read_triplets(path) -> TripletSet:
    out = TripletSet()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                t = parse_triplet_line(line)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if t is not None:
                out.add(t)
    return out
