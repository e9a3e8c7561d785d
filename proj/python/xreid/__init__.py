"""Graph-transport alignment and retrieval metrics for cross-modality
part features. Thin wrapper around the compiled extension."""

from ._core import (
    XreidError,
    build_adjacency,
    cost_matrix,
    default_skeleton,
    evaluate_retrieval,
    exact_ot_oracle,
    got_distance,
    gromov_wasserstein,
    gw_pseudo_cost,
    pool_parts,
    read_features,
    sinkhorn,
    synthesize,
    uniform_marginal,
    wasserstein_distance,
    write_features,
)

__all__ = [
    "XreidError",
    "build_adjacency",
    "cost_matrix",
    "default_skeleton",
    "evaluate_retrieval",
    "exact_ot_oracle",
    "got_distance",
    "gromov_wasserstein",
    "gw_pseudo_cost",
    "pool_parts",
    "read_features",
    "sinkhorn",
    "synthesize",
    "uniform_marginal",
    "wasserstein_distance",
    "write_features",
]
