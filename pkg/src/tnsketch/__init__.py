"""Sketching tensor-network data with Gaussian tensor-network embeddings."""
from .tn import (DenseTensor, Hyperedge, RandomSource, TensorNetwork,
                 contract_pair, gaussian_tensor, load_network, save_network,
                 tn_norm)
from .plan import (ContractionTree, SketchSpec, classify_contractions,
                   cost_pair, cut, dimension_tree, validate_constrained)
from .bounds import (CostReport, cost_report, labels, lower_bound_general,
                     lower_bound_uniform, stt_cost, tree_optimal, y_cost, z_cost)
from .embed import (Embedding, SketchPlan, build, build_alg1_embedding,
                    build_khatri_rao_embedding, build_tree_embedding,
                    build_tt_embedding, check_sufficient_condition,
                    execute_plan, materialize_dense, sample_sketch,
                    zi_internal_edge)
from .apps import (TensorTrain, cp_sketch_size, cp_subproblem_trees,
                   sketched_cp_als, tt_round_sketch)

__version__ = "0.1.0"

__all__ = [
    "DenseTensor", "Hyperedge", "RandomSource", "TensorNetwork",
    "contract_pair", "gaussian_tensor", "load_network", "save_network",
    "tn_norm", "ContractionTree", "SketchSpec", "classify_contractions",
    "cost_pair", "cut", "dimension_tree", "validate_constrained",
    "CostReport", "cost_report", "labels", "lower_bound_general",
    "lower_bound_uniform", "stt_cost", "tree_optimal", "y_cost", "z_cost",
    "Embedding", "SketchPlan", "build", "build_alg1_embedding",
    "build_khatri_rao_embedding", "build_tree_embedding",
    "build_tt_embedding", "check_sufficient_condition", "execute_plan",
    "materialize_dense", "sample_sketch", "zi_internal_edge", "TensorTrain",
    "cp_sketch_size", "cp_subproblem_trees", "sketched_cp_als",
    "tt_round_sketch",
]
