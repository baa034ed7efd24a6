"""Posterior sampling over trees by constrained subtree prune-and-regraft.

Each Metropolis-Hastings step detaches a uniformly chosen non-root,
non-stem node together with its subtree, simulates an attach location on
the remaining tree with the generative walk, and accepts or rejects with
the exact posterior and proposal-density ratio.  Internal node values are
refreshed by Gibbs sweeps between structure moves.

Constraint handling: a triplet with exactly one endpoint in the detached
subtree's leaves restricts the walk.  With the detached leaves holding c,
descending into the node where a and b split would put c below lca(a, b),
so that descent is vetoed.  With the detached leaves holding a, the walk
must stay with b: while b and c sit below the same candidate child the
walk may neither diverge early nor wander off (descent is forced by
vetoing everything else), and once b and c split the c-side branch is
fully vetoed.  A vetoed decision restarts the whole walk, which makes the
proposal exactly the unconstrained walk conditioned on producing a
satisfying tree; the conditioning constant is shared by the forward and
reverse directions on the same remaining tree, so acceptance only needs
the unconstrained walk densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import check_satisfies, find_violation
from .model import (
    AttachLocation,
    DdtParams,
    attach_location_log_density,
    log_data_likelihood,
    log_prior,
    sample_attach_location,
)
from .trace import SampleTrace
from .tree import NO_NODE, NodeId, Tree, TreeError
from .triplets import TripletSet


@dataclass(frozen=True)
class PruneRecord:
    """Everything needed to undo a prune exactly (ids, slots, time)."""

    s: NodeId
    p: NodeId
    grandparent: NodeId
    sibling: NodeId
    p_slot: int
    s_slot: int
    p_time: float


def prune(tree: Tree, s: NodeId) -> PruneRecord:
    """Detach node ``s`` with its subtree; splice its parent out.

    ``s`` must be neither the stem nor the cladogram root.  After the call
    the tree is a valid tree over the remaining leaves, and ``s`` floats
    free in the same arena with its own masks intact.
    """
    root = tree.root
    if s == root:
        raise TreeError("cannot prune the stem")
    p = tree.parent(s)
    if p == root:
        raise TreeError("cannot prune the cladogram root")
    g = tree.parent(p)
    kids = tree.children(p)
    if len(kids) != 2:
        raise TreeError(f"prune expects binary nodes, parent has {len(kids)} children")
    s_slot = kids.index(s)
    sibling = kids[1 - s_slot]
    p_slot = tree.children(g).index(p)
    record = PruneRecord(s, p, g, sibling, p_slot, s_slot, tree.time(p))
    # splice: g adopts the sibling in p's slot; p and s float free
    tree._children[g][p_slot] = sibling
    tree._parent[sibling] = g
    tree._children[p] = []
    tree._parent[p] = NO_NODE
    tree._parent[s] = NO_NODE
    tree._version += 1
    tree.refresh_upward(g)
    return record


def regraft(tree: Tree, s: NodeId, p: NodeId, loc: AttachLocation) -> None:
    """Reattach floating subtree ``s`` on branch (u, v) at ``loc.time``,
    reusing the floating node ``p`` as the new divergence node."""
    if not (tree.time(loc.u) < loc.time < tree.time(loc.v)):
        raise TreeError(
            f"attach time {loc.time} outside branch ({tree.time(loc.u)}, {tree.time(loc.v)})"
        )
    if loc.time >= tree.time(s):
        raise TreeError("attach time must precede the subtree root's time")
    slot = tree.children(loc.u).index(loc.v)
    tree._children[loc.u][slot] = p
    tree._parent[p] = loc.u
    tree._children[p] = [loc.v, s]
    tree._parent[loc.v] = p
    tree._parent[s] = p
    tree._time[p] = loc.time
    tree._version += 1
    tree.refresh_upward(p)


def undo_prune(tree: Tree, record: PruneRecord) -> None:
    """Exact inverse of :func:`prune`: restores wiring, slots, and time."""
    g, p, s, sib = record.grandparent, record.p, record.s, record.sibling
    tree._children[g][record.p_slot] = p
    tree._parent[p] = g
    kids = [None, None]
    kids[record.s_slot] = s
    kids[1 - record.s_slot] = sib
    tree._children[p] = kids  # type: ignore[assignment]
    tree._parent[s] = p
    tree._parent[sib] = p
    tree._time[p] = record.p_time
    tree._version += 1
    tree.refresh_upward(p)


def eligible_prune_nodes(tree: Tree) -> list[NodeId]:
    """Every node except the stem and the cladogram root, ascending."""
    root = tree.root
    top = tree.cladogram_root
    return [n for n in tree.nodes() if n != root and n != top]


# ----------------------------------------------------------------------
# constraint rules for the regraft walk


class _TripletRules:
    """Veto function over walk decisions for one detached subtree.

    Precomputes, per active triplet, which two endpoints remain in the host
    tree.  ``detached_mask`` is the leaf mask of the floating subtree.
    """

    def __init__(self, tree: Tree, detached_mask: int, constraints: TripletSet):
        self.tree = tree
        # (kind, x, y): kind "c" means the detached leaves hold the out
        # point and x, y are the in-pair; kind "a" means they hold one of
        # the in-pair, x is the remaining in-pair point and y the out point.
        self.active: list[tuple[str, int, int]] = []
        for t in constraints:
            ina = bool((detached_mask >> t.a) & 1)
            inb = bool((detached_mask >> t.b) & 1)
            inc = bool((detached_mask >> t.c) & 1)
            k = ina + inb + inc
            if k != 1:
                # untouched triplets stay satisfied on their own; a triplet
                # with the out point and one in-pair point detached would
                # already be violated, which the chain invariant rules out
                continue
            if inc:
                self.active.append(("c", t.a, t.b))
            elif ina:
                self.active.append(("a", t.b, t.c))
            else:
                self.active.append(("a", t.a, t.c))

    def __call__(self, u: NodeId, v: NodeId, diverging: bool) -> bool:
        tree = self.tree
        mask_u = tree.mask(u)
        mask_v = tree.mask(v)
        for kind, x, y in self.active:
            if kind == "c":
                # the only fatal decision is entering lca(a, b) itself;
                # diverging on the edge above it leaves c a sibling
                if diverging:
                    continue
                if (mask_v >> x) & 1 and (mask_v >> y) & 1:
                    m0 = tree.mask(tree.children(v)[0])
                    if ((m0 >> x) & 1) != ((m0 >> y) & 1):
                        return True
            else:
                # x is the partner of the detached in-pair point, y the out
                # point; rules bind only while y is still under the walk
                if not (mask_u >> y) & 1:
                    continue
                if not (mask_v >> x) & 1:
                    return True  # leaving the partner's side locks in a violation
                if diverging and (mask_v >> y) & 1:
                    return True  # attaching above the partner/out split
        return False


def constrained_regraft_sample(
    tree: Tree,
    detached: NodeId,
    constraints: TripletSet,
    params: DdtParams,
    rng: np.random.Generator,
    time_ceiling: float | None = None,
    max_attempts: int = 200_000,
) -> tuple[AttachLocation, float]:
    """Attach-location sample for a detached subtree under triplet rules.

    Returns the location and its unconstrained walk log density.  With an
    empty constraint set this is exactly :func:`sample_attach_location`.
    """
    rules = _TripletRules(tree, tree.mask(detached), constraints)
    veto = rules if rules.active else None
    return sample_attach_location(
        tree, params, rng, time_ceiling=time_ceiling, veto=veto, max_attempts=max_attempts
    )


def rejection_regraft_sample(
    tree: Tree,
    record: PruneRecord,
    constraints: TripletSet,
    params: DdtParams,
    rng: np.random.Generator,
    time_ceiling: float | None = None,
    max_attempts: int = 200_000,
) -> tuple[AttachLocation, float]:
    """Test oracle: unconstrained walk, tentatively regraft, keep only
    satisfying trees.  Distributionally identical to
    :func:`constrained_regraft_sample`; far slower."""
    s, p = record.s, record.p
    for _ in range(max_attempts):
        loc, logq = sample_attach_location(tree, params, rng, time_ceiling=time_ceiling)
        regraft(tree, s, p, loc)
        ok = check_satisfies(tree, constraints)
        re_record = prune(tree, s)
        if re_record.p != p:
            raise TreeError("prune after tentative regraft lost the joint node")
        if ok:
            return loc, logq
    raise RuntimeError(f"rejection sampler found no satisfying location in {max_attempts} tries")


# ----------------------------------------------------------------------
# chain state and kernels


@dataclass
class SprProposal:
    """Bookkeeping for one structure move, kept for tests and debugging."""

    s: NodeId
    old_location: AttachLocation
    new_location: AttachLocation
    log_q_forward: float
    log_q_reverse: float
    log_post_delta: float
    accepted: bool


@dataclass
class ChainState:
    """Mutable sampler state: tree, constraints, params, rng, caches."""

    tree: Tree
    constraints: TripletSet
    params: DdtParams
    rng: np.random.Generator
    iteration: int = 0
    log_prior: float = field(default=math.nan)
    log_likelihood: float = field(default=math.nan)
    last_proposal: SprProposal | None = None
    walk_failures: int = 0

    def __post_init__(self):
        if math.isnan(self.log_prior):
            self.log_prior = log_prior(self.tree, self.params)
        if math.isnan(self.log_likelihood):
            self.log_likelihood = log_data_likelihood(self.tree, self.params)

    @property
    def log_posterior(self) -> float:
        return self.log_prior + self.log_likelihood

    def refresh_log_terms(self) -> None:
        self.log_prior = log_prior(self.tree, self.params)
        self.log_likelihood = log_data_likelihood(self.tree, self.params)

    def check_invariants(self) -> None:
        self.tree.validate(require_binary=True)
        violation = find_violation(self.tree, self.constraints)
        if violation is not None:
            raise TreeError(f"chain state violates constraint {violation}")


def mh_step(state: ChainState, force_accept: bool = False) -> ChainState:
    """One constrained prune-and-regraft Metropolis-Hastings step.

    Chooses the pruned node uniformly; that choice probability is equal in
    both directions and cancels, as does the walk's conditioning constant.
    On rejection the previous tree is restored exactly.  ``force_accept``
    skips the posterior ratio (used by reachability tests that flatten the
    likelihood); proposals still respect the constraints.
    """
    tree = state.tree
    candidates = eligible_prune_nodes(tree)
    if not candidates:
        state.iteration += 1
        return state
    s = candidates[int(state.rng.integers(len(candidates)))]
    record = prune(tree, s)
    old_loc = AttachLocation(record.grandparent, record.sibling, record.p_time)
    ceiling = tree.time(s)
    try:
        new_loc, log_q_fwd = constrained_regraft_sample(
            tree, s, state.constraints, state.params, state.rng, time_ceiling=ceiling
        )
    except RuntimeError:
        # an extreme ceiling can starve the restart loop; keep the chain
        # alive by treating the move as rejected (tree restored exactly)
        undo_prune(tree, record)
        state.walk_failures += 1
        state.iteration += 1
        return state
    log_q_rev = attach_location_log_density(tree, state.params, old_loc)
    regraft(tree, s, record.p, new_loc)

    if force_accept:
        state.refresh_log_terms()
        state.last_proposal = SprProposal(
            s, old_loc, new_loc, log_q_fwd, log_q_rev, math.nan, True
        )
        state.iteration += 1
        return state

    new_lp = log_prior(tree, state.params)
    new_ll = log_data_likelihood(tree, state.params)
    delta = (new_lp + new_ll) - (state.log_prior + state.log_likelihood)
    log_alpha = delta + log_q_rev - log_q_fwd
    accepted = log_alpha >= 0 or state.rng.random() < math.exp(log_alpha)
    if accepted:
        state.log_prior = new_lp
        state.log_likelihood = new_ll
    else:
        re_record = prune(tree, s)
        if re_record.p != record.p:
            raise TreeError("restore after rejection lost the joint node")
        undo_prune(tree, record)
    state.last_proposal = SprProposal(
        s, old_loc, new_loc, log_q_fwd, log_q_rev, delta, accepted
    )
    state.iteration += 1
    return state


def node_value_conditional(
    tree: Tree, nid: NodeId, params: DdtParams
) -> tuple[np.ndarray, float]:
    """Gaussian full conditional (mean vector, shared variance) of an
    internal node's value given its wired neighbors."""
    if tree.payload(nid) is not None:
        raise TreeError("leaves hold observed rows; their values are not resampled")
    precision = 0.0
    weighted = np.zeros(tree.dim)
    p = tree.parent(nid)
    neighbors = list(tree.children(nid))
    if p != NO_NODE:
        neighbors.append(p)
    if not neighbors:
        raise TreeError(f"node {nid} has no neighbors to condition on")
    t_n = tree.time(nid)
    for other in neighbors:
        dt = abs(tree.time(other) - t_n)
        if dt <= 0:
            raise TreeError("zero-length edge in value conditional")
        w = 1.0 / (params.sigma2 * dt)
        precision += w
        weighted += w * tree.value(other)
    var = 1.0 / precision
    return weighted * var, var


def gibbs_internal_values(state: ChainState, sweeps: int = 1) -> ChainState:
    """Resample every internal (non-stem) node value from its conditional.

    Fixed ascending-id traversal; the stem stays at the origin and leaves
    stay at their data rows.  Refreshes the cached likelihood.
    """
    tree = state.tree
    order = list(tree.internal_nodes())
    for _ in range(sweeps):
        for nid in order:
            mean, var = node_value_conditional(tree, nid, state.params)
            noise = state.rng.standard_normal(tree.dim)
            tree.set_value(nid, mean + math.sqrt(var) * noise)
    state.log_likelihood = log_data_likelihood(tree, state.params)
    return state


@dataclass(frozen=True)
class SamplerSchedule:
    """Per-iteration kernel mix and snapshot cadence."""

    gibbs_sweeps: int = 1
    snapshot_stride: int = 5
    resample_times: bool = False


def _resample_node_times(state: ChainState) -> None:
    """Optional extra kernel: per-node uniform time proposal, MH-corrected.

    Off by default; the regraft move already refreshes the rewired node's
    time, and every node is eventually rewired.
    """
    tree = state.tree
    for nid in list(tree.internal_nodes()):
        p = tree.parent(nid)
        lo = tree.time(p)
        hi = min(tree.time(c) for c in tree.children(nid))
        if not (lo < hi):
            raise TreeError("inverted branch interval")
        old_t = tree.time(nid)
        new_t = lo + (hi - lo) * state.rng.random()
        tree.set_time(nid, new_t)
        new_lp = log_prior(tree, state.params)
        new_ll = log_data_likelihood(tree, state.params)
        log_alpha = (new_lp + new_ll) - (state.log_prior + state.log_likelihood)
        if log_alpha >= 0 or state.rng.random() < math.exp(log_alpha):
            state.log_prior = new_lp
            state.log_likelihood = new_ll
        else:
            tree.set_time(nid, old_t)


def run(
    state: ChainState,
    iterations: int,
    schedule: SamplerSchedule = SamplerSchedule(),
    trace: SampleTrace | None = None,
    paranoid: bool = False,
    on_iteration=None,
) -> np.ndarray:
    """Advance the chain ``iterations`` steps (one MH move plus Gibbs each).

    Pushes a snapshot into ``trace`` every ``snapshot_stride`` iterations.
    Returns the per-iteration log posterior series.  ``paranoid`` validates
    the full invariant set after every step (slow; used by tests).
    """
    series = np.empty(iterations)
    for k in range(iterations):
        mh_step(state)
        gibbs_internal_values(state, sweeps=schedule.gibbs_sweeps)
        if schedule.resample_times:
            _resample_node_times(state)
        if paranoid:
            state.check_invariants()
        series[k] = state.log_posterior
        if trace is not None and (k + 1) % schedule.snapshot_stride == 0:
            trace.push(state.iteration, state.tree, state.log_prior, state.log_likelihood)
        if on_iteration is not None:
            on_iteration(state)
    return series


def initial_state(
    data: np.ndarray,
    params: DdtParams,
    rng: np.random.Generator,
    constraints: TripletSet | None = None,
) -> ChainState:
    """Fresh chain state: a prior-simulated tree when unconstrained, or a
    constraint-built tree with respaced times otherwise.  Either way the
    internal values get one Gibbs sweep before sampling starts."""
    from .constraints import build
    from .model import simulate_tree

    data = np.asarray(data, dtype=float)
    cons = constraints if constraints is not None else TripletSet()
    if len(cons) == 0:
        tree = simulate_tree(data, params, rng)
    else:
        skeleton = build(cons, range(data.shape[0]))
        tree = Tree(dim=data.shape[1])

        def clone(src: NodeId) -> NodeId:
            pay = skeleton.payload(src)
            if pay is not None:
                return tree.new_node(1.0, payload=pay, value=data[pay])
            nid = tree.new_node(skeleton.time(src))
            for c in skeleton.children(src):
                tree.link(nid, clone(c))
            return nid

        top = clone(skeleton.cladogram_root)
        stem = tree.new_node(0.0, value=np.zeros(data.shape[1]))
        tree.link(stem, top)
        tree.set_root(stem)
        tree.rebuild_caches()
        for nid in tree.postorder():
            if tree.payload(nid) is None and nid != tree.root:
                kids = tree.children(nid)
                tree.set_value(nid, np.mean([tree.value(c) for c in kids], axis=0))
    state = ChainState(tree=tree, constraints=cons, params=params, rng=rng)
    gibbs_internal_values(state)
    state.refresh_log_terms()
    return state
