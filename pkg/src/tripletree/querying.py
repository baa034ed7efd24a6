"""Query selection schemes and the simulated respondent.

A query shows the user the current tree restricted to a leaf subset S.
Five ways of choosing S are provided: three random leaves judged directly
(simple), the whole tree (smart), a uniform subset (random), the subset
with the highest tree-distance variance across recent posterior snapshots
(active), and a strict alternation of the last two (interleaved).

The simulated respondent answers from a fixed ground-truth tree: it finds
the shallowest shown node whose child split separates some ground-truth
in-pair with the out point also underneath, and reports one such triplet
uniformly at random.  No violated triplet anywhere means the shown tree
already refines the ground truth over S, and the answer is acceptance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import SampleTrace, tdv
from .tree import Tree, TreeError, induce_subtree, leaf_lca_depths, leaf_lca_nodes
from .triplets import Triplet, resolved_triple_positions

SCHEMES = ("simple", "smart", "random", "active", "interleaved")


@dataclass(frozen=True)
class QueryScheme:
    """A scheme name plus its knobs: subset size, candidate count, and
    which parity of the interleave shows the random subset."""

    kind: str
    subset_size: int = 10
    candidates: int = 20
    parity_offset: int = 0

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}, expected one of {SCHEMES}")
        if self.subset_size < 3:
            raise ValueError("subset size must be at least 3")
        if self.candidates < 1:
            raise ValueError("candidate count must be at least 1")


@dataclass(frozen=True)
class QueryOutcome:
    """One asked query: the subset shown, the tree restricted to it, and
    the respondent's triplet (None means the restriction was accepted)."""

    subset: tuple[int, ...]
    shown: Tree
    answer: Triplet | None

    def __post_init__(self):
        if self.answer is not None:
            if not set(self.answer.endpoints()) <= set(self.subset):
                raise ValueError("answer endpoints must lie inside the shown subset")


def _uniform_subset(leaves: list[int], k: int, rng: np.random.Generator) -> list[int]:
    k = min(k, len(leaves))
    idx = rng.choice(len(leaves), size=k, replace=False)
    return [leaves[i] for i in np.sort(idx)]


def select_query(
    scheme: QueryScheme,
    tree: Tree,
    trace: SampleTrace | None,
    rng: np.random.Generator,
    query_index: int = 0,
) -> list[int]:
    """Choose the leaf subset to show for one query.

    ``query_index`` drives the interleaved alternation.  Active selection
    draws ``scheme.candidates`` subsets (without replacement inside each,
    independently across them) and keeps the one with the largest
    tree-distance variance over the trace, first index winning ties.
    """
    leaves = tree.leaf_payloads()
    if len(leaves) < 3:
        raise TreeError("querying needs at least three leaves")
    kind = scheme.kind
    if kind == "interleaved":
        kind = "random" if (query_index + scheme.parity_offset) % 2 == 0 else "active"
    if kind == "simple":
        return _uniform_subset(leaves, 3, rng)
    if kind == "smart":
        return list(leaves)
    if kind == "random":
        return _uniform_subset(leaves, scheme.subset_size, rng)
    if kind == "active":
        if trace is None or len(trace) == 0:
            raise ValueError("active querying needs a nonempty snapshot trace")
        best_subset: list[int] | None = None
        best_score = -np.inf
        for _ in range(scheme.candidates):
            cand = _uniform_subset(leaves, scheme.subset_size, rng)
            score = tdv(trace, cand)
            if score > best_score:
                best_score = score
                best_subset = cand
        assert best_subset is not None
        return best_subset
    raise AssertionError(f"unhandled scheme {kind!r}")


def _preorder_ranks(tree: Tree) -> dict[int, int]:
    """Node id -> visit order of a depth-first, left-child-first walk."""
    ranks: dict[int, int] = {}
    stack = [tree.cladogram_root]
    k = 0
    while stack:
        nid = stack.pop()
        ranks[nid] = k
        k += 1
        stack.extend(reversed(tree.children(nid)))
    return ranks


def simulated_oracle(
    target: Tree, shown: Tree, rng: np.random.Generator
) -> Triplet | None:
    """Answer a subtree query from ground truth.

    Scans shown nodes shallowest-first (depth-first, left child first) for
    ground-truth triplets whose in-pair is split across the node's children
    with the out point also under the node; the first node carrying any
    yields a uniform pick.  Returns None exactly when the shown tree
    resolves every ground-truth triplet over its leaves.
    """
    shown_payloads, d_shown = leaf_lca_depths(shown)
    target_payloads, d_target = leaf_lca_depths(target)
    t_pos = {p: i for i, p in enumerate(target_payloads)}
    missing = [p for p in shown_payloads if p not in t_pos]
    if missing:
        raise TreeError(f"shown leaves {missing} are not in the ground-truth tree")
    sel = np.array([t_pos[p] for p in shown_payloads], dtype=np.int64)
    d_target_sub = d_target[np.ix_(sel, sel)]

    # positions (in shown order) of every triple the ground truth resolves
    A, B, C = resolved_triple_positions(d_target_sub)
    if A.shape[0] == 0:
        return None
    dab = d_shown[A, B]
    held = (dab > d_shown[A, C]) & (dab > d_shown[B, C])
    viol = ~held
    if not viol.any():
        return None
    A, B, C = A[viol], B[viol], C[viol]

    # a violated in-pair separates exactly at its shown LCA, with the out
    # point underneath; report at the first such node in preorder
    _, lca_nodes = leaf_lca_nodes(shown)
    ranks = _preorder_ranks(shown)
    rank_of = np.zeros(max(ranks) + 1, dtype=np.int64)
    for nid, r in ranks.items():
        rank_of[nid] = r
    pair_rank = rank_of[lca_nodes[A, B]]
    first = pair_rank.min()
    pool = np.flatnonzero(pair_rank == first)
    pick = pool[int(rng.integers(pool.shape[0]))]
    return Triplet(
        shown_payloads[A[pick]], shown_payloads[B[pick]], shown_payloads[C[pick]]
    )


def simple_oracle(target: Tree, three: tuple[int, int, int]) -> Triplet | None:
    """Odd-one-out judgement on three leaves, straight from ground truth.

    Returns the one triplet the ground-truth tree resolves over the three
    leaves, or None when it resolves none (ties at a single node).
    """
    x, y, z = three
    if len({x, y, z}) != 3:
        raise ValueError("simple queries need three distinct leaves")
    payloads, D = leaf_lca_depths(target)
    pos = {p: i for i, p in enumerate(payloads)}
    for p in (x, y, z):
        if p not in pos:
            raise TreeError(f"leaf {p} is not in the ground-truth tree")
    i, j, k = pos[x], pos[y], pos[z]
    dij, dik, djk = D[i, j], D[i, k], D[j, k]
    if dij > dik and dij > djk:
        return Triplet(x, y, z)
    if dik > dij and dik > djk:
        return Triplet(x, z, y)
    if djk > dij and djk > dik:
        return Triplet(y, z, x)
    return None


def ask(
    scheme: QueryScheme,
    tree: Tree,
    target: Tree,
    trace: SampleTrace | None,
    rng: np.random.Generator,
    query_index: int = 0,
) -> QueryOutcome:
    """One full query round: pick a subset, restrict the tree, get an answer.

    Simple-scheme turns skip the restriction semantics and judge the three
    chosen leaves directly against the ground truth.
    """
    subset = select_query(scheme, tree, trace, rng, query_index)
    shown = induce_subtree(tree, subset)
    if scheme.kind == "simple":
        answer = simple_oracle(target, (subset[0], subset[1], subset[2]))
    else:
        answer = simulated_oracle(target, shown, rng)
    return QueryOutcome(tuple(subset), shown, answer)
