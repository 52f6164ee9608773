"""Tree-based tensor formats: compression, rank diagnostics, local geometry and reduced dynamics."""

from .dense import (Frame, column_space, contract_functional, frobenius_norm, injective_norm, inner, matricize,
                    minimal_subspace, unmatricize)
from .dynamics import (HartreeState, RankDegeneracy, SumOfProductsOperator, Trajectory, apply_operator,
                       hartree_rhs, integrate_hartree, integrate_tangent_projected, mean_field)
from .geometry import (ChartParams, TangentParams, chart_decode, chart_encode, grassmann_chart, graph,
                       param_norm, project_onto_along, project_tangent, tangent_assemble, tangent_basis)
from .tbf import (TBFTensor, check_admissible, check_full_rank, evaluate, from_dense, hierarchical_svd,
                  nestedness_check, orthonormalize, tb_rank, truncate, truncate_dense)
from .tree import DimensionTree, parse_tree, serialize_tree, standard_tree, validate_tree

__all__ = [
    "ChartParams", "DimensionTree", "Frame", "HartreeState", "RankDegeneracy", "SumOfProductsOperator",
    "TBFTensor", "TangentParams", "Trajectory", "apply_operator", "chart_decode", "chart_encode",
    "check_admissible", "check_full_rank", "column_space", "contract_functional", "evaluate", "from_dense",
    "frobenius_norm", "grassmann_chart", "graph", "hartree_rhs", "hierarchical_svd", "injective_norm",
    "inner", "integrate_hartree", "integrate_tangent_projected", "matricize", "mean_field",
    "minimal_subspace", "nestedness_check", "orthonormalize", "param_norm", "parse_tree",
    "project_onto_along", "project_tangent", "serialize_tree", "standard_tree", "tangent_assemble",
    "tangent_basis", "tb_rank", "truncate", "truncate_dense", "unmatricize", "validate_tree",
]
