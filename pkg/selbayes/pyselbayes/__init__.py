"""Selection-aware Bayesian scoring of discrete causal networks."""

from __future__ import annotations

from .const import NETWORKS
from .exceptions import (
    BudgetExceededError,
    CycleError,
    DataError,
    InferenceError,
    MethodUnavailableError,
    PriorError,
    SearchError,
    SelBayesError,
    SimulationError,
    SpecError,
    StructureError,
)
from .graph import (
    GeneratingNetwork,
    NetworkStructure,
    Role,
    VariableSpec,
    ancestors,
    canonical_encoding,
    d_separated,
    descendants,
    infer_conditional,
    joint_probability,
    markov_equivalent,
    parameter_count,
    topological_order,
)
from .priors import (
    BdeSpec,
    FamilyPrior,
    PriorMode,
    PriorModel,
    SelectionPriorSpec,
    SelectionTable,
    build_bde_prior,
    build_selection_prior,
    validate_prior,
)
from .scoring import (
    Dataset,
    LogScore,
    PopulationSpec,
    SufficientCounts,
    log_ch_score,
    score_ancestral,
    tally_counts,
)
from .search import (
    PosteriorResult,
    ScoredStructure,
    SearchConstraints,
    SearchResult,
    StructurePrior,
    StructurePriorMode,
    exhaustive_posterior,
    greedy_search,
    log_structure_prior,
)
from .selection import (
    EnumerationBudget,
    SelectionProblem,
    Strategy,
    TermMode,
    marginal_likelihood,
    score_ancestral_enumeration,
    score_count_collapsed,
    score_full_enumeration,
    score_population_mixture,
    score_with_latents,
    term_count,
)
from .simulate import (
    Condition,
    GroundTruth,
    ManipulationDesign,
    ManipulationPlan,
    MechanismKind,
    Population,
    Quota,
    SelectionMechanism,
    apply_manipulation,
    apply_selection,
    forward_sample,
    project,
    selection_bias_check,
)
from .transform import (
    BicScore,
    ReversalPlan,
    bic_heuristic_score,
    make_s_root,
    reverse_arc,
    tree_fastpath_score,
)

__all__ = [
    "NETWORKS",
    "BdeSpec",
    "BicScore",
    "BudgetExceededError",
    "Condition",
    "CycleError",
    "DataError",
    "Dataset",
    "EnumerationBudget",
    "FamilyPrior",
    "GeneratingNetwork",
    "GroundTruth",
    "InferenceError",
    "LogScore",
    "ManipulationDesign",
    "ManipulationPlan",
    "MechanismKind",
    "MethodUnavailableError",
    "NetworkStructure",
    "Population",
    "PopulationSpec",
    "PosteriorResult",
    "PriorError",
    "PriorMode",
    "PriorModel",
    "Quota",
    "ReversalPlan",
    "Role",
    "ScoredStructure",
    "SearchConstraints",
    "SearchError",
    "SearchResult",
    "SelBayesError",
    "SelectionMechanism",
    "SelectionPriorSpec",
    "SelectionProblem",
    "SelectionTable",
    "SimulationError",
    "SpecError",
    "Strategy",
    "StructureError",
    "StructurePrior",
    "StructurePriorMode",
    "SufficientCounts",
    "TermMode",
    "VariableSpec",
    "ancestors",
    "apply_manipulation",
    "apply_selection",
    "bic_heuristic_score",
    "build_bde_prior",
    "build_selection_prior",
    "canonical_encoding",
    "d_separated",
    "descendants",
    "exhaustive_posterior",
    "forward_sample",
    "greedy_search",
    "infer_conditional",
    "joint_probability",
    "log_ch_score",
    "log_structure_prior",
    "make_s_root",
    "marginal_likelihood",
    "markov_equivalent",
    "parameter_count",
    "project",
    "reverse_arc",
    "score_ancestral",
    "score_ancestral_enumeration",
    "score_count_collapsed",
    "score_full_enumeration",
    "score_population_mixture",
    "score_with_latents",
    "selection_bias_check",
    "tally_counts",
    "term_count",
    "topological_order",
    "tree_fastpath_score",
    "validate_prior",
]
