"""Posterior label smoothing for transductive node classification."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .graph import Graph, build_graph, ego_edges, ego_nodes, neighbors  # noqa: F401
from .pipeline import (Ablation, ExperimentConfig, ExperimentResult, grid_sweep,  # noqa: F401
                       iterative_pseudo_label, run_postel, stratified_split)
from .smoothing import (SoftLabels, blend, closed_form_binary_posterior,  # noqa: F401
                        posterior_all, posterior_one, uniform_smooth)
from .stats import (ALL_SOURCES, ClassStats, LabelState, Source, class_homophily,  # noqa: F401
                    estimate_conditional, estimate_prior, estimate_stats,
                    joint_pair_distribution)
from .nn import Split, TrainConfig, grad_check, predict, train  # noqa: F401
