"""Steerable Bayesian hierarchical clustering over tree posteriors.

A diffusion-tree prior over binary trees with data at the leaves, sampled
by constrained subtree prune-and-regraft moves; user-supplied triplet
constraints narrow the posterior, and query selection picks the subtrees
whose resolution the chain is least sure about.
"""

from .constraints import (
    UnrealizableError,
    build,
    check_satisfies,
    find_violation,
    incorporate_triplet,
    read_triplets,
    write_triplets,
)
from .model import (
    DdtParams,
    estimate_sigma2,
    log_data_likelihood,
    log_prior,
    marginal_leaf_loglik,
    simulate_tree,
)
from .newick import NewickError, parse_newick, read_newick_file, to_newick, write_newick_file
from .sampler import ChainState, SamplerSchedule, initial_state, mh_step, run
from .trace import SampleTrace, tdv
from .tree import Tree, TreeError, induce_subtree, lca, tree_distance
from .triplets import (
    Triplet,
    TripletDistance,
    TripletSet,
    extract_triplets,
    is_refinement,
    triplet_distance,
)

__all__ = [
    "ChainState",
    "DdtParams",
    "NewickError",
    "SampleTrace",
    "SamplerSchedule",
    "Triplet",
    "TripletDistance",
    "TripletSet",
    "Tree",
    "TreeError",
    "UnrealizableError",
    "build",
    "check_satisfies",
    "estimate_sigma2",
    "extract_triplets",
    "find_violation",
    "incorporate_triplet",
    "induce_subtree",
    "initial_state",
    "is_refinement",
    "lca",
    "log_data_likelihood",
    "log_prior",
    "marginal_leaf_loglik",
    "mh_step",
    "parse_newick",
    "read_newick_file",
    "read_triplets",
    "run",
    "simulate_tree",
    "tdv",
    "to_newick",
    "tree_distance",
    "triplet_distance",
    "write_newick_file",
    "write_triplets",
]

__version__ = "0.1.0"
