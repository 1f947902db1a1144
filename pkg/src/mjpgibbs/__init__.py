"""Uniformization-based Gibbs sampling for Markov jump processes and CTBNs."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Generator,
    InitialDistribution,
    MjpPath,
    ObservationSet,
    PointMassLikelihood,
    SufficientStats,
    TableLikelihood,
    TransitionKernel,
    UniformizationPolicy,
    UniformizedPath,
    build_kernel,
    path_log_density,
    state_at,
    sufficient_stats,
)
from .ctbn import CtbnModel, CtbnPath, ctbn_gibbs_node_update, ctbn_gibbs_sweep  # noqa: E402
from .mjp import (  # noqa: E402
    MjpProblem,
    drop_virtual,
    gibbs_step,
    run_chain,
    sample_prior_path,
    sample_uniformized_prior,
    sample_virtual_jumps,
)

__all__ = [
    "CtbnModel", "CtbnPath", "Generator", "InitialDistribution", "MjpPath", "MjpProblem",
    "ObservationSet", "PointMassLikelihood", "SufficientStats", "TableLikelihood",
    "TransitionKernel", "UniformizationPolicy", "UniformizedPath", "build_kernel",
    "ctbn_gibbs_node_update", "ctbn_gibbs_sweep", "drop_virtual", "gibbs_step",
    "path_log_density", "run_chain", "sample_prior_path", "sample_uniformized_prior",
    "sample_virtual_jumps", "state_at", "sufficient_stats",
]
