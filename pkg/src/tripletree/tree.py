"""Rooted trees with divergence times, latent node values, and leaf bitmasks.

Nodes live in an index arena: a ``NodeId`` is an integer slot that stays
valid until the node is freed.  Every tree stores a *stem* node at time 0
(the origin of the diffusion); the stem has exactly one child, the
cladogram root, and is excluded from drawing, triplet extraction, and
leaf-to-leaf path counting.  Leaves sit at time 1 and carry a ``payload``,
the integer index of the data row they represent.

Each node caches the bitmask of leaf payloads below it (bit ``i`` set means
payload ``i`` is a descendant) together with the leaf count.  Masks are
plain Python ints, so membership tests and subset checks are O(1) word
operations at the scales this package targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

NodeId = int

NO_NODE: NodeId = -1


class TreeError(ValueError):
    """Raised on structural misuse: stale handles, unknown leaves, broken invariants."""


class Tree:
    """Arena-backed rooted tree.

    Parameters
    ----------
    dim:
        Dimension of per-node value vectors, or None for trees that carry
        no values (targets, bare topologies).
    """

    __slots__ = (
        "dim",
        "_parent",
        "_children",
        "_time",
        "_payload",
        "_mask",
        "_count",
        "_alive",
        "_free",
        "_values",
        "_root",
        "_leaf_node",
        "_version",
    )

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self._parent: list[int] = []
        self._children: list[list[int]] = []
        self._time: list[float] = []
        self._payload: list[int | None] = []
        self._mask: list[int] = []
        self._count: list[int] = []
        self._alive: list[bool] = []
        self._free: list[int] = []
        self._values: np.ndarray | None = None
        self._root: NodeId = NO_NODE
        self._leaf_node: dict[int, NodeId] = {}
        self._version = 0

    # ------------------------------------------------------------------
    # allocation and wiring

    def new_node(
        self,
        time: float,
        payload: int | None = None,
        value: np.ndarray | Sequence[float] | None = None,
    ) -> NodeId:
        """Allocate a node. Leaves are nodes created with a payload."""
        if self._free:
            nid = self._free.pop()
            self._alive[nid] = True
            self._parent[nid] = NO_NODE
            self._children[nid] = []
            self._time[nid] = time
            self._payload[nid] = payload
        else:
            nid = len(self._parent)
            self._parent.append(NO_NODE)
            self._children.append([])
            self._time.append(time)
            self._payload.append(payload)
            self._mask.append(0)
            self._count.append(0)
            self._alive.append(True)
            if self._values is not None and nid >= self._values.shape[0]:
                grown = np.zeros((max(2 * nid, 8), self._values.shape[1]))
                grown[: self._values.shape[0]] = self._values
                self._values = grown
        if payload is not None:
            if payload < 0:
                raise TreeError(f"leaf payload must be nonnegative, got {payload}")
            if payload in self._leaf_node:
                raise TreeError(f"duplicate leaf payload {payload}")
            self._leaf_node[payload] = nid
            self._mask[nid] = 1 << payload
            self._count[nid] = 1
        else:
            self._mask[nid] = 0
            self._count[nid] = 0
        if value is not None:
            self.set_value(nid, value)
        self._version += 1
        return nid

    def free_node(self, nid: NodeId) -> None:
        """Release a detached node slot. The node must not be wired anywhere."""
        self.check_node(nid)
        if self._parent[nid] != NO_NODE or self._children[nid]:
            raise TreeError(f"cannot free node {nid}: still wired into the tree")
        p = self._payload[nid]
        if p is not None:
            del self._leaf_node[p]
        self._alive[nid] = False
        self._payload[nid] = None
        self._free.append(nid)
        self._version += 1

    def link(self, parent: NodeId, child: NodeId) -> None:
        """Attach ``child`` under ``parent``. Caches are not refreshed; call
        :meth:`rebuild_caches` after bulk construction."""
        self.check_node(parent)
        self.check_node(child)
        if self._parent[child] != NO_NODE:
            raise TreeError(f"node {child} already has a parent")
        self._children[parent].append(child)
        self._parent[child] = parent
        self._version += 1

    def set_root(self, stem: NodeId) -> None:
        self.check_node(stem)
        if self._parent[stem] != NO_NODE:
            raise TreeError("root must not have a parent")
        self._root = stem
        self._version += 1

    def rebuild_caches(self) -> None:
        """Recompute every leaf mask and count bottom-up."""
        for nid in self._postorder(self._root):
            if self._payload[nid] is not None:
                self._mask[nid] = 1 << self._payload[nid]
                self._count[nid] = 1
            else:
                m = 0
                c = 0
                for ch in self._children[nid]:
                    m |= self._mask[ch]
                    c += self._count[ch]
                self._mask[nid] = m
                self._count[nid] = c

    def refresh_upward(self, nid: NodeId) -> None:
        """Recompute masks and counts on ``nid`` and every ancestor."""
        cur = nid
        while cur != NO_NODE:
            if self._payload[cur] is None:
                m = 0
                c = 0
                for ch in self._children[cur]:
                    m |= self._mask[ch]
                    c += self._count[ch]
                self._mask[cur] = m
                self._count[cur] = c
            cur = self._parent[cur]

    def replace_child(self, parent: NodeId, old: NodeId, new: NodeId) -> None:
        """Swap ``old`` for ``new`` in ``parent``'s child list, same slot."""
        ch = self._children[parent]
        ch[ch.index(old)] = new
        self._parent[old] = NO_NODE
        self._parent[new] = parent
        self._version += 1

    # ------------------------------------------------------------------
    # accessors

    def check_node(self, nid: NodeId) -> None:
        if not isinstance(nid, (int, np.integer)) or nid < 0 or nid >= len(self._alive) or not self._alive[nid]:
            raise TreeError(f"stale or invalid node handle {nid!r}")

    @property
    def root(self) -> NodeId:
        """The stem node (time 0)."""
        if self._root == NO_NODE:
            raise TreeError("tree has no root")
        return self._root

    @property
    def cladogram_root(self) -> NodeId:
        """The stem's single child: the first divergence (or the only leaf)."""
        ch = self._children[self.root]
        if len(ch) != 1:
            raise TreeError(f"stem must have exactly one child, has {len(ch)}")
        return ch[0]

    @property
    def n_leaves(self) -> int:
        return len(self._leaf_node)

    @property
    def version(self) -> int:
        return self._version

    def parent(self, nid: NodeId) -> NodeId:
        self.check_node(nid)
        return self._parent[nid]

    def children(self, nid: NodeId) -> tuple[NodeId, ...]:
        self.check_node(nid)
        return tuple(self._children[nid])

    def time(self, nid: NodeId) -> float:
        self.check_node(nid)
        return self._time[nid]

    def set_time(self, nid: NodeId, t: float) -> None:
        self.check_node(nid)
        self._time[nid] = float(t)

    def payload(self, nid: NodeId) -> int | None:
        self.check_node(nid)
        return self._payload[nid]

    def is_leaf(self, nid: NodeId) -> bool:
        self.check_node(nid)
        return self._payload[nid] is not None

    def value(self, nid: NodeId) -> np.ndarray:
        self.check_node(nid)
        if self._values is None:
            raise TreeError("tree carries no values (dim is None)")
        return self._values[nid]

    def set_value(self, nid: NodeId, v: np.ndarray | Sequence[float]) -> None:
        self.check_node(nid)
        if self.dim is None:
            raise TreeError("tree carries no values (dim is None)")
        if self._values is None or len(self._alive) > self._values.shape[0]:
            grown = np.zeros((max(2 * len(self._alive), 8), self.dim))
            if self._values is not None:
                grown[: self._values.shape[0]] = self._values
            self._values = grown
        arr = np.asarray(v, dtype=float)
        if arr.shape != (self.dim,):
            raise TreeError(f"value must have shape ({self.dim},), got {arr.shape}")
        self._values[nid] = arr

    def values_matrix(self) -> np.ndarray:
        """Raw (capacity, dim) storage; rows of dead nodes are garbage."""
        if self._values is None:
            raise TreeError("tree carries no values (dim is None)")
        return self._values

    def leaf_node(self, payload: int) -> NodeId:
        try:
            return self._leaf_node[payload]
        except KeyError:
            raise TreeError(f"no leaf with payload {payload}") from None

    def has_leaf(self, payload: int) -> bool:
        return payload in self._leaf_node

    def leaf_payloads(self) -> list[int]:
        return sorted(self._leaf_node)

    def mask(self, nid: NodeId) -> int:
        self.check_node(nid)
        return self._mask[nid]

    def leaf_count(self, nid: NodeId) -> int:
        self.check_node(nid)
        return self._count[nid]

    def nodes(self) -> Iterator[NodeId]:
        """All live node ids, ascending."""
        for nid, ok in enumerate(self._alive):
            if ok:
                yield nid

    def internal_nodes(self, include_stem: bool = False) -> Iterator[NodeId]:
        root = self._root
        for nid, ok in enumerate(self._alive):
            if ok and self._payload[nid] is None and (include_stem or nid != root):
                yield nid

    def depth(self, nid: NodeId) -> int:
        """Edge count from the stem."""
        self.check_node(nid)
        d = 0
        cur = nid
        while self._parent[cur] != NO_NODE:
            cur = self._parent[cur]
            d += 1
        if cur != self._root:
            raise TreeError(f"node {nid} is detached from the root")
        return d

    def subtree_leaf_payloads(self, nid: NodeId) -> list[int]:
        m = self.mask(nid)
        out = []
        i = 0
        while m:
            if m & 1:
                out.append(i)
            m >>= 1
            i += 1
        return out

    def _postorder(self, start: NodeId) -> list[NodeId]:
        order: list[NodeId] = []
        stack = [start]
        while stack:
            nid = stack.pop()
            order.append(nid)
            stack.extend(self._children[nid])
        order.reverse()
        return order

    def postorder(self, start: NodeId | None = None) -> list[NodeId]:
        return self._postorder(self.root if start is None else start)

    # ------------------------------------------------------------------
    # whole-tree operations

    def copy(self) -> "Tree":
        """Deep copy preserving node ids."""
        t = Tree(self.dim)
        t._parent = list(self._parent)
        t._children = [list(c) for c in self._children]
        t._time = list(self._time)
        t._payload = list(self._payload)
        t._mask = list(self._mask)
        t._count = list(self._count)
        t._alive = list(self._alive)
        t._free = list(self._free)
        t._values = None if self._values is None else self._values.copy()
        t._root = self._root
        t._leaf_node = dict(self._leaf_node)
        return t

    def clusters(self) -> set[int]:
        """Leaf masks of all non-stem nodes (singletons included)."""
        root = self.root
        return {self._mask[n] for n in self.nodes() if n != root}

    def cluster_times(self) -> dict[int, float]:
        """Map each non-stem node's leaf mask to its time (binary trees only)."""
        root = self.root
        out: dict[int, float] = {}
        for n in self.nodes():
            if n == root:
                continue
            m = self._mask[n]
            if m in out:
                raise TreeError("duplicate cluster mask; tree is not binary-resolved")
            out[m] = self._time[n]
        return out

    def validate(self, require_binary: bool = True, full_range: bool = False) -> None:
        """Check every structural invariant; raise TreeError on the first failure."""
        root = self.root
        if self._parent[root] != NO_NODE:
            raise TreeError("stem has a parent")
        if self._time[root] != 0.0:
            raise TreeError(f"stem time must be 0, got {self._time[root]}")
        if len(self._children[root]) != 1:
            raise TreeError("stem must have exactly one child")
        seen_payloads: set[int] = set()
        reached = 0
        for nid in self._postorder(root):
            reached += 1
            p = self._payload[nid]
            ch = self._children[nid]
            for c in ch:
                if self._parent[c] != nid:
                    raise TreeError(f"child {c} does not point back to parent {nid}")
                if not (self._time[nid] < self._time[c]):
                    raise TreeError(
                        f"times not strictly increasing: t({nid})={self._time[nid]} "
                        f"!< t({c})={self._time[c]}"
                    )
            if p is not None:
                if ch:
                    raise TreeError(f"leaf {nid} has children")
                if self._time[nid] != 1.0:
                    raise TreeError(f"leaf {nid} has time {self._time[nid]}, expected 1.0")
                if p in seen_payloads:
                    raise TreeError(f"payload {p} appears twice")
                seen_payloads.add(p)
                if self._leaf_node.get(p) != nid:
                    raise TreeError(f"leaf map out of sync for payload {p}")
            elif nid != root:
                if require_binary and len(ch) != 2:
                    raise TreeError(f"internal node {nid} has {len(ch)} children, expected 2")
                if len(ch) < 2:
                    raise TreeError(f"internal node {nid} has {len(ch)} children, expected >= 2")
            m = 0
            c = 0
            for x in ch:
                m |= self._mask[x]
                c += self._count[x]
            if p is not None:
                m, c = 1 << p, 1
            if self._mask[nid] != m or self._count[nid] != c:
                raise TreeError(f"cached mask/count stale at node {nid}")
        if reached != sum(self._alive):
            raise TreeError("live nodes exist outside the tree rooted at the stem")
        if seen_payloads != set(self._leaf_node):
            raise TreeError("leaf map does not match reachable leaves")
        if full_range and seen_payloads != set(range(len(seen_payloads))):
            raise TreeError("leaf payloads are not exactly 0..n-1")

    # ------------------------------------------------------------------
    # construction helpers

    @classmethod
    def from_nested(cls, nested, dim: int | None = None) -> "Tree":
        """Build a tree from nested tuples of payload ints, e.g. ``((1, 2), 3)``.

        Times are assigned canonically from node heights (leaves at 1, stem
        at 0, strictly increasing along every root-to-leaf path).
        """
        t = cls(dim)

        def build(spec) -> NodeId:
            if isinstance(spec, (int, np.integer)):
                return t.new_node(1.0, payload=int(spec))
            if isinstance(spec, (tuple, list)):
                if len(spec) < 2:
                    raise TreeError("nested groups need at least two members")
                nid = t.new_node(0.5)
                for sub in spec:
                    t.link(nid, build(sub))
                return nid
            raise TreeError(f"cannot interpret {spec!r} as a tree")

        top = build(nested)
        stem = t.new_node(0.0)
        t.link(stem, top)
        t.set_root(stem)
        assign_canonical_times(t)
        t.rebuild_caches()
        return t


def assign_canonical_times(tree: Tree) -> None:
    """Set node times from heights: leaves at 1, node at height h gets
    ``1 - h / (H + 1)`` where H is the cladogram root's height. The stem
    stays at 0."""
    heights: dict[NodeId, int] = {}
    for nid in tree.postorder():
        ch = tree.children(nid)
        heights[nid] = 0 if not ch else 1 + max(heights[c] for c in ch)
    stem = tree.root
    top = tree.cladogram_root
    big = heights[top] + 1
    for nid, h in heights.items():
        if nid == stem:
            tree.set_time(nid, 0.0)
        else:
            tree.set_time(nid, 1.0 - h / big)


# ----------------------------------------------------------------------
# queries


def lca(tree: Tree, u: int, v: int) -> NodeId:
    """Lowest common ancestor of leaf payloads ``u`` and ``v``."""
    cur = tree.leaf_node(u)
    tree.leaf_node(v)
    want = (1 << u) | (1 << v)
    while tree.mask(cur) & want != want:
        cur = tree.parent(cur)
        if cur == NO_NODE:
            raise TreeError(f"leaves {u} and {v} have no common ancestor")
    return cur


def lca_node(tree: Tree, a: NodeId, b: NodeId) -> NodeId:
    """Lowest common ancestor of two node handles."""
    da, db = tree.depth(a), tree.depth(b)
    while da > db:
        a = tree.parent(a)
        da -= 1
    while db > da:
        b = tree.parent(b)
        db -= 1
    while a != b:
        a = tree.parent(a)
        b = tree.parent(b)
    return a


def tree_distance(tree: Tree, u: int, v: int) -> int:
    """Edge count of the path between leaves ``u`` and ``v``.

    The path never crosses the stem: the lowest common ancestor of two
    leaves is at or below the cladogram root, so stem-based depths cancel.
    Returns 0 when ``u == v``.
    """
    if u == v:
        tree.leaf_node(u)
        return 0
    a = lca(tree, u, v)
    return tree.depth(tree.leaf_node(u)) + tree.depth(tree.leaf_node(v)) - 2 * tree.depth(a)


def induce_subtree(tree: Tree, subset: Iterable[int]) -> Tree:
    """Restriction of ``tree`` to leaf payloads ``subset``.

    Keeps the selected leaves and the LCAs of pairs of them, suppresses
    degree-2 internals, and preserves retained node times (and values when
    the tree carries them).
    """
    s = sorted(set(subset))
    if not s:
        raise TreeError("cannot induce a subtree on an empty leaf set")
    for p in s:
        tree.leaf_node(p)
    want = 0
    for p in s:
        want |= 1 << p
    out = Tree(tree.dim)

    def reduce(nid: NodeId) -> NodeId | None:
        pay = tree.payload(nid)
        if pay is not None:
            if not (want >> pay) & 1:
                return None
            v = tree.value(nid) if tree.dim is not None else None
            return out.new_node(1.0, payload=pay, value=v)
        kept = [r for r in (reduce(c) for c in tree.children(nid)) if r is not None]
        if not kept:
            return None
        if len(kept) == 1:
            return kept[0]
        v = tree.value(nid) if tree.dim is not None else None
        fresh = out.new_node(tree.time(nid), value=v)
        for k in kept:
            out.link(fresh, k)
        return fresh

    top = reduce(tree.cladogram_root)
    if top is None:
        raise TreeError("subset matched no leaves")
    stem = out.new_node(0.0, value=(np.zeros(tree.dim) if tree.dim is not None else None))
    out.link(stem, top)
    out.set_root(stem)
    out.rebuild_caches()
    return out


def leaf_lca_depths(tree: Tree) -> tuple[list[int], np.ndarray]:
    """Pairwise LCA depth matrix over the tree's leaves.

    Returns ``(payloads, D)`` where ``payloads`` is the sorted leaf payload
    list and ``D[i, j]`` is the depth (edges below the cladogram root) of
    ``lca(payloads[i], payloads[j])``; the diagonal holds leaf depths.
    O(n^2) total via cross products of child leaf groups.
    """
    payloads = tree.leaf_payloads()
    pos = {p: i for i, p in enumerate(payloads)}
    n = len(payloads)
    D = np.zeros((n, n), dtype=np.int32)

    def rec(nid: NodeId, depth: int) -> np.ndarray:
        pay = tree.payload(nid)
        if pay is not None:
            i = pos[pay]
            D[i, i] = depth
            return np.array([i], dtype=np.int64)
        groups = [rec(c, depth + 1) for c in tree.children(nid)]
        for gi in range(len(groups)):
            for gj in range(gi + 1, len(groups)):
                D[np.ix_(groups[gi], groups[gj])] = depth
                D[np.ix_(groups[gj], groups[gi])] = depth
        return np.concatenate(groups)

    rec(tree.cladogram_root, 0)
    return payloads, D


def pairwise_leaf_distances(tree: Tree) -> tuple[list[int], np.ndarray]:
    """Edge-count distance matrix between all leaf pairs."""
    payloads, D = leaf_lca_depths(tree)
    dep = np.diag(D).copy()
    dist = dep[:, None] + dep[None, :] - 2 * D
    np.fill_diagonal(dist, 0)
    return payloads, dist


def leaf_lca_nodes(tree: Tree) -> tuple[list[int], np.ndarray]:
    """Pairwise LCA node-id matrix over the tree's leaves.

    Same recursion as :func:`leaf_lca_depths`; ``N[i, j]`` is the node id of
    ``lca(payloads[i], payloads[j])`` and the diagonal holds leaf node ids.
    """
    payloads = tree.leaf_payloads()
    pos = {p: i for i, p in enumerate(payloads)}
    n = len(payloads)
    N = np.zeros((n, n), dtype=np.int64)

    def rec(nid: NodeId) -> np.ndarray:
        pay = tree.payload(nid)
        if pay is not None:
            i = pos[pay]
            N[i, i] = nid
            return np.array([i], dtype=np.int64)
        groups = [rec(c) for c in tree.children(nid)]
        for gi in range(len(groups)):
            for gj in range(gi + 1, len(groups)):
                N[np.ix_(groups[gi], groups[gj])] = nid
                N[np.ix_(groups[gj], groups[gi])] = nid
        return np.concatenate(groups)

    rec(tree.cladogram_root)
    return payloads, N


def same_topology(a: Tree, b: Tree) -> bool:
    """True when the two trees have identical leaf sets and cluster sets."""
    if a.leaf_payloads() != b.leaf_payloads():
        return False
    return a.clusters() == b.clusters()


def structurally_equal(a: Tree, b: Tree, time_rtol: float = 0.0) -> bool:
    """Topology equality, plus per-cluster time equality within ``time_rtol``
    (exact when 0)."""
    if not same_topology(a, b):
        return False
    ta, tb = a.cluster_times(), b.cluster_times()
    for m, t in ta.items():
        t2 = tb[m]
        if time_rtol == 0.0:
            if t != t2:
                return False
        elif not math.isclose(t, t2, rel_tol=time_rtol, abs_tol=time_rtol):
            return False
    return True


@dataclass(frozen=True)
class TreeShape:
    """Hashable topology key: the frozenset of non-stem cluster masks."""

    clusters: frozenset[int]

    @classmethod
    def of(cls, tree: Tree) -> "TreeShape":
        return cls(frozenset(tree.clusters()))
