"""Federated gradient matching pursuit for sparse learning over dictionaries."""
from .dictionary import DictKind, Dictionary, make_dictionary, make_gaussian_dictionary, make_standard_basis
from .federation import Algorithm, FederationConfig, federate, run_federation
from .local_engine import LocalConfig, SolverKind, Subproblem, local_stogradmp, solve_restricted
from .objectives import ClientDataset, LossKind, Objective
from .sparse_ops import SparseEstimate, approx_project, best_sparse_approx, orthogonal_project
from .synthdata import SynthSpec, generate
from .theory import ClientConstants, Variant, rate_prediction

__all__ = [
    "Algorithm", "ClientConstants", "ClientDataset", "DictKind", "Dictionary", "FederationConfig",
    "LocalConfig", "LossKind", "Objective", "SolverKind", "SparseEstimate", "Subproblem", "SynthSpec",
    "Variant", "approx_project", "best_sparse_approx", "federate", "generate", "local_stogradmp",
    "make_dictionary", "make_gaussian_dictionary", "make_standard_basis", "orthogonal_project",
    "rate_prediction", "run_federation", "solve_restricted",
]
