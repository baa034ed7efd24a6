"""Diffusion-tree generative model: prior, likelihoods, attach-location walks.

The generative story: each data point diffuses from the origin as Brownian
motion with per-dimension variance ``sigma2`` over t in [0, 1], following
the paths of earlier points.  While sharing a path currently traversed by
m earlier points, it diverges with hazard a(t) / m where
``a(t) = c / (1 - t)``; at an existing branch point it picks a branch with
probability proportional to the number of points through that branch.

Integrating out arrival orderings gives a prior that factorizes over
internal (non-stem) nodes v with parent u, child leaf counts l and r, and
m = l + r:

    log a(t_v) + log[(l-1)! (r-1)! / (m-1)!] - (A(t_v) - A(t_u)) * H_{m-1}

with A the cumulative hazard and H_k the k-th harmonic number.  Segments
ending in leaves contribute nothing (H_0 = 0), so summing the node formula
over internal nodes covers every segment factor exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tree import NO_NODE, NodeId, Tree, TreeError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DdtParams:
    """Model parameters: diffusion variance, divergence scale, dimension."""

    sigma2: float
    c: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if not (self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not (self.c > 0):
            raise ValueError(f"c must be positive, got {self.c}")
        if self.dim < 1:
            raise ValueError(f"dim must be at least 1, got {self.dim}")


def acquisition(t: float, params: DdtParams) -> float:
    """Divergence intensity a(t) = c / (1 - t), defined on [0, 1)."""
    if not (0.0 <= t < 1.0):
        raise ValueError(f"acquisition is defined on [0, 1), got t={t}")
    return params.c / (1.0 - t)


def cumulative_hazard(t: float, params: DdtParams) -> float:
    """A(t) = -c log(1 - t), defined on [0, 1); diverges as t -> 1."""
    if not (0.0 <= t < 1.0):
        raise ValueError(f"cumulative hazard is defined on [0, 1), got t={t}")
    return -params.c * math.log1p(-t)


def inverse_cumulative_hazard(a: float, params: DdtParams) -> float:
    """t such that A(t) = a; the inverse of :func:`cumulative_hazard`."""
    if a < 0:
        raise ValueError(f"hazard mass must be nonnegative, got {a}")
    return -math.expm1(-a / params.c)


def _hazard_to(t: float, params: DdtParams) -> float:
    """A(t) extended with A(1) = +inf, for leaf-terminated segments."""
    if t >= 1.0:
        return math.inf
    return -params.c * math.log1p(-t)


_HARMONIC: list[float] = [0.0]


def harmonic(k: int) -> float:
    """H_k = sum_{i=1..k} 1/i, cached."""
    while len(_HARMONIC) <= k:
        _HARMONIC.append(_HARMONIC[-1] + 1.0 / len(_HARMONIC))
    return _HARMONIC[k]


def log_prior(tree: Tree, params: DdtParams) -> float:
    """Log density of the tree's structure and divergence times.

    Exchangeable over leaf payloads; for two leaves the cherry time is the
    divergence density a(t) exp(-A(t)) (uniform when c = 1), and summing
    over the three shapes on three leaves integrates to one.
    """
    total = 0.0
    for v in tree.internal_nodes():
        u = tree.parent(v)
        kids = tree.children(v)
        if len(kids) != 2:
            raise TreeError(f"prior requires binary divergence nodes, node {v} has {len(kids)}")
        l = tree.leaf_count(kids[0])
        r = tree.leaf_count(kids[1])
        m = l + r
        t_v = tree.time(v)
        t_u = tree.time(u)
        if not (t_u < t_v < 1.0):
            raise TreeError(f"divergence time {t_v} at node {v} outside ({t_u}, 1)")
        delta_a = cumulative_hazard(t_v, params) - cumulative_hazard(t_u, params)
        total += (
            math.log(acquisition(t_v, params))
            + math.lgamma(l)
            + math.lgamma(r)
            - math.lgamma(m)
            - delta_a * harmonic(m - 1)
        )
    return total


def log_data_likelihood(tree: Tree, params: DdtParams) -> float:
    """Log density of every node value given its parent (Brownian edges).

    Includes the stem-to-root edge; the stem's value is the origin.  Leaf
    values are the observed rows, so this is the complete-data likelihood
    used inside the sampler.
    """
    if tree.dim is None:
        raise TreeError("tree carries no values")
    ids = []
    parents = []
    for nid in tree.nodes():
        p = tree.parent(nid)
        if p != NO_NODE:
            ids.append(nid)
            parents.append(p)
    ids_arr = np.array(ids, dtype=np.intp)
    par_arr = np.array(parents, dtype=np.intp)
    times = np.array(tree._time, dtype=float)
    dt = times[ids_arr] - times[par_arr]
    if np.any(dt <= 0):
        raise TreeError("zero or negative length edge in likelihood")
    vals = tree.values_matrix()
    diff = vals[ids_arr] - vals[par_arr]
    sq = np.einsum("ij,ij->i", diff, diff)
    var = params.sigma2 * dt
    d = params.dim
    return float(np.sum(-0.5 * d * (LOG_2PI + np.log(var)) - sq / (2.0 * var)))


def _gaussian_logpdf(x: float, var: float) -> float:
    return -0.5 * (LOG_2PI + math.log(var)) - (x * x) / (2.0 * var)


def marginal_leaf_loglik(tree: Tree, data: np.ndarray, params: DdtParams) -> float:
    """Log marginal density of leaf rows with internal values integrated out.

    Upward Gaussian message passing on the tree: each node carries the
    density of its latent value given the leaves below it; Brownian edges
    widen the message, and sibling messages multiply with a closed-form
    normalizer.  ``data`` rows align with the tree's sorted leaf payloads.
    Independent of any internal values stored on the tree.
    """
    payloads = tree.leaf_payloads()
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] != len(payloads):
        raise TreeError(
            f"data has {data.shape[0]} rows for {len(payloads)} leaves"
        )
    d = data.shape[1]
    row = {p: i for i, p in enumerate(payloads)}
    logz = 0.0
    mu: dict[NodeId, np.ndarray] = {}
    var: dict[NodeId, float] = {}
    for nid in tree.postorder(tree.cladogram_root):
        pay = tree.payload(nid)
        if pay is not None:
            mu[nid] = data[row[pay]]
            var[nid] = 0.0
            continue
        acc_mu: np.ndarray | None = None
        acc_var = 0.0
        for child in tree.children(nid):
            edge = params.sigma2 * (tree.time(child) - tree.time(nid))
            m_c = mu.pop(child)
            v_c = var.pop(child) + edge
            if acc_mu is None:
                acc_mu, acc_var = m_c, v_c
            else:
                tot = acc_var + v_c
                diff = acc_mu - m_c
                logz += -0.5 * d * (LOG_2PI + math.log(tot)) - float(diff @ diff) / (2.0 * tot)
                new_var = (acc_var * v_c) / tot
                acc_mu = (acc_mu * v_c + m_c * acc_var) / tot
                acc_var = new_var
        mu[nid] = acc_mu
        var[nid] = acc_var
    top = tree.cladogram_root
    edge = params.sigma2 * tree.time(top)  # stem sits at time 0, value at the origin
    tot = var[top] + edge
    m_top = mu[top]
    logz += -0.5 * d * (LOG_2PI + math.log(tot)) - float(m_top @ m_top) / (2.0 * tot)
    return logz


def leaf_covariance(tree: Tree, params: DdtParams) -> tuple[list[int], np.ndarray]:
    """Dense marginal covariance of leaf values (one dimension).

    Cov(x_i, x_j) = sigma2 * t(lca(i, j)) off the diagonal and sigma2 on
    it, since two leaves share the diffusion path until their divergence.
    """
    payloads = tree.leaf_payloads()
    n = len(payloads)
    cov = np.empty((n, n), dtype=float)
    pos = {p: i for i, p in enumerate(payloads)}

    def rec(nid: NodeId) -> list[int]:
        pay = tree.payload(nid)
        if pay is not None:
            return [pos[pay]]
        t = tree.time(nid)
        groups = [rec(c) for c in tree.children(nid)]
        for gi in range(len(groups)):
            for gj in range(gi + 1, len(groups)):
                cov[np.ix_(groups[gi], groups[gj])] = params.sigma2 * t
                cov[np.ix_(groups[gj], groups[gi])] = params.sigma2 * t
        return [x for g in groups for x in g]

    rec(tree.cladogram_root)
    np.fill_diagonal(cov, params.sigma2)
    return payloads, cov


def marginal_leaf_loglik_dense(tree: Tree, data: np.ndarray, params: DdtParams) -> float:
    """Dense-covariance marginal likelihood; the slow counterpart used to
    cross-check :func:`marginal_leaf_loglik`."""
    payloads, cov = leaf_covariance(tree, params)
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] != len(payloads):
        raise TreeError(f"data has {data.shape[0]} rows for {len(payloads)} leaves")
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise np.linalg.LinAlgError("leaf covariance is not positive definite")
    n, d = data.shape
    solved = np.linalg.solve(cov, data)
    quad = float(np.einsum("ij,ij->", data, solved))
    return -0.5 * (d * (n * LOG_2PI + logdet) + quad)


# ----------------------------------------------------------------------
# attach-location walks


@dataclass(frozen=True)
class AttachLocation:
    """A branch (u, v) of the host tree plus a divergence time on it."""

    u: NodeId
    v: NodeId
    time: float


class WalkDeadEnd(Exception):
    """Internal signal: the current walk cannot produce a valid location."""


def _sample_branch_time(
    t_u: float, t_v: float, m: int, params: DdtParams, rng: np.random.Generator
) -> float:
    """Divergence time on a branch, conditioned on diverging before t_v."""
    a_u = _hazard_to(t_u, params)
    a_v = _hazard_to(t_v, params)
    p_div = -math.expm1(-(a_v - a_u) / m) if math.isfinite(a_v) else 1.0
    while True:
        w = rng.random()
        target = a_u - m * math.log1p(-w * p_div)
        t = inverse_cumulative_hazard(target, params)
        if t_u < t < t_v:
            return t


def _log_divergence_density(t: float, t_u: float, m: int, params: DdtParams) -> float:
    """Unconditional log density of diverging at time t on a branch entered
    at t_u and traversed by m earlier points."""
    a_u = cumulative_hazard(t_u, params)
    a_t = cumulative_hazard(t, params)
    return math.log(acquisition(t, params)) - math.log(m) - (a_t - a_u) / m


def sample_attach_location(
    tree: Tree,
    params: DdtParams,
    rng: np.random.Generator,
    time_ceiling: float | None = None,
    veto: Callable[[NodeId, NodeId, bool], bool] | None = None,
    max_attempts: int = 200_000,
) -> tuple[AttachLocation, float]:
    """Simulate where a new path diverges from the tree.

    Walks from the stem: at each node a branch is chosen with probability
    proportional to the leaf count through it, and divergence on the branch
    competes against reaching its end under the per-branch hazard
    a(t) / m.  Returns the location plus its log proposal density (branch
    choices, survival terms, and the divergence density; any rejection
    renormalization constant is deliberately omitted because it is shared
    by every location on the same host tree, so it cancels between forward
    and reverse proposals).

    ``time_ceiling`` rejects and restarts whole walks whose divergence time
    is not strictly below the ceiling, which is how regrafts keep the
    pruned subtree's root time feasible.  ``veto(u, v, diverging)`` may
    reject a decision (divergence on (u, v) when diverging, descent into v
    otherwise); a vetoed decision restarts the walk, so the returned sample
    follows the unconstrained walk law conditioned on making no vetoed
    decision.
    """
    if tree.n_leaves < 1:
        raise TreeError("cannot attach to an empty tree")
    for _ in range(max_attempts):
        try:
            loc, logq = _walk_once(tree, params, rng, time_ceiling, veto)
        except WalkDeadEnd:
            continue
        return loc, logq
    raise RuntimeError(
        f"no valid attach location found in {max_attempts} walks; "
        "constraints or ceiling leave (almost) no feasible mass"
    )


def _walk_once(
    tree: Tree,
    params: DdtParams,
    rng: np.random.Generator,
    time_ceiling: float | None,
    veto: Callable[[NodeId, NodeId, bool], bool] | None,
) -> tuple[AttachLocation, float]:
    logq = 0.0
    u = tree.root
    v = tree.cladogram_root
    while True:
        t_u = tree.time(u)
        t_v = tree.time(v)
        m = tree.leaf_count(v)
        a_u = _hazard_to(t_u, params)
        a_v = _hazard_to(t_v, params)
        p_div = -math.expm1(-(a_v - a_u) / m) if math.isfinite(a_v) else 1.0
        if rng.random() < p_div:
            if veto is not None and veto(u, v, True):
                raise WalkDeadEnd
            t = _sample_branch_time(t_u, t_v, m, params, rng)
            if time_ceiling is not None and t >= time_ceiling:
                raise WalkDeadEnd
            logq += _log_divergence_density(t, t_u, m, params)
            return AttachLocation(u, v, t), logq
        # survived the branch: enter v and pick one of its children
        if veto is not None and veto(u, v, False):
            raise WalkDeadEnd
        logq += -(a_v - a_u) / m
        kids = tree.children(v)
        if len(kids) != 2:
            raise TreeError(f"attach walks need binary nodes, node {v} has {len(kids)}")
        m0 = tree.leaf_count(kids[0])
        pick = 0 if rng.random() * m < m0 else 1
        logq += math.log(tree.leaf_count(kids[pick]) / m)
        u, v = v, kids[pick]


def attach_location_log_density(
    tree: Tree, params: DdtParams, loc: AttachLocation
) -> float:
    """Log density the unconstrained walk assigns to ``loc``.

    Mirrors :func:`sample_attach_location` decision by decision; used for
    the reverse-move term in Metropolis-Hastings acceptance.
    """
    # path of nodes from the stem down to loc.u
    path = []
    cur = loc.v
    while cur != NO_NODE:
        path.append(cur)
        cur = tree.parent(cur)
    path.reverse()
    if len(path) < 2 or path[0] != tree.root:
        raise TreeError("attach location is not wired under the root")
    logq = 0.0
    for i in range(1, len(path) - 1):
        u, v = path[i - 1], path[i]
        m = tree.leaf_count(v)
        a_u = _hazard_to(tree.time(u), params)
        a_v = _hazard_to(tree.time(v), params)
        logq += -(a_v - a_u) / m  # survived this branch
        kids = tree.children(v)
        if len(kids) != 2:
            raise TreeError(f"attach walks need binary nodes, node {v} has {len(kids)}")
        nxt = path[i + 1]
        logq += math.log(tree.leaf_count(nxt) / m)
    u, v = path[-2], path[-1]
    if u != loc.u:
        raise TreeError("location branch does not match the tree")
    if not (tree.time(u) < loc.time < tree.time(v)):
        raise TreeError(
            f"divergence time {loc.time} outside branch interval "
            f"({tree.time(u)}, {tree.time(v)})"
        )
    logq += _log_divergence_density(loc.time, tree.time(u), tree.leaf_count(v), params)
    return logq


def simulate_tree(
    data: np.ndarray, params: DdtParams, rng: np.random.Generator
) -> Tree:
    """Draw a tree over the data rows by sequential attachment.

    Structure and times follow the generative process; leaf values are the
    data rows and internal values are seeded by child means (run a Gibbs
    sweep to draw them properly).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise TreeError(f"data must be 2-d, got shape {data.shape}")
    n, d = data.shape
    if d != params.dim:
        raise TreeError(f"data dim {d} does not match params.dim {params.dim}")
    if n < 1:
        raise TreeError("need at least one data row")
    tree = Tree(dim=d)
    stem = tree.new_node(0.0, value=np.zeros(d))
    first = tree.new_node(1.0, payload=0, value=data[0])
    tree.link(stem, first)
    tree.set_root(stem)
    tree.rebuild_caches()
    for i in range(1, n):
        loc, _ = sample_attach_location(tree, params, rng)
        leaf = tree.new_node(1.0, payload=i, value=data[i])
        joint = tree.new_node(loc.time)
        tree.replace_child(loc.u, loc.v, joint)
        tree.link(joint, loc.v)
        tree.link(joint, leaf)
        tree.refresh_upward(joint)
    for nid in tree.postorder():
        if tree.payload(nid) is None and nid != tree.root:
            kids = tree.children(nid)
            tree.set_value(nid, np.mean([tree.value(c) for c in kids], axis=0))
    return tree


def estimate_sigma2(data: np.ndarray) -> float:
    """Mean over dimensions of the per-dimension sample variance."""
    data = np.asarray(data, dtype=float)
    if data.shape[0] < 2:
        raise ValueError("need at least two rows to estimate sigma2")
    return float(np.var(data, axis=0, ddof=1).mean())
