"""Bayesian network structure learning with nonparametric block-structured
priors over DAGs."""

from .errors import GenerationFailure, InvalidArgument, InvalidOperation, ParseError, SizeLimit
from .graph import BayesNet, Dag, Dataset, Hyperparams, is_acyclic, parent_set, toggle_edge
from .priors import ClassOrdering, Partition, PriorKind

__all__ = [
    "BayesNet",
    "ClassOrdering",
    "Dag",
    "Dataset",
    "GenerationFailure",
    "Hyperparams",
    "InvalidArgument",
    "InvalidOperation",
    "ParseError",
    "Partition",
    "PriorKind",
    "SizeLimit",
    "is_acyclic",
    "parent_set",
    "toggle_edge",
]

__version__ = "0.1.0"
