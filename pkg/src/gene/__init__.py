"""Search for index structures assembled from generic nodes.

An index is a tree of nodes, each combining a partitioning function, routing
information and data with a chosen data layout and search method. A genetic
search mutates such trees and keeps the fastest ones for a given workload.
"""

from .builder import (
    BTREE_BASELINE,
    BulkloadSpec,
    Fixed,
    Random,
    build_from_config,
    build_single_node,
    bulkload_btree,
    init_population,
    poc_hand_spec,
)
from .config import ConfigError, IndexConfig
from .core import KEY_MAX, LogicalIndex, LogicalNode, Record, check_correct, range_query
from .fitness import CorrectnessViolation, Evaluator, FitnessRecord, fitness
from .genetic import GeneticParams, Population, genetic_search, tournament_selection
from .layouts import DataLayout, SearchMethod, compatibility_matrix, compatible
from .mutations import MutationAborted, MutationDistributions, MutationKind, mutate
from .physical import BuildError, PhysicalIndex, PhysicalNode, lower_bound
from .workload import (
    Dataset,
    Workload,
    WorkloadSpec,
    gen_mix,
    gen_point_workload,
    gen_range_workload,
    gen_uni_dense,
    load_and_sample,
    preset,
)

__version__ = "0.1.0"

__all__ = [
    "BTREE_BASELINE",
    "BuildError",
    "BulkloadSpec",
    "ConfigError",
    "CorrectnessViolation",
    "DataLayout",
    "Dataset",
    "Evaluator",
    "FitnessRecord",
    "Fixed",
    "GeneticParams",
    "IndexConfig",
    "KEY_MAX",
    "LogicalIndex",
    "LogicalNode",
    "MutationAborted",
    "MutationDistributions",
    "MutationKind",
    "PhysicalIndex",
    "PhysicalNode",
    "Population",
    "Random",
    "Record",
    "SearchMethod",
    "Workload",
    "WorkloadSpec",
    "build_from_config",
    "build_single_node",
    "bulkload_btree",
    "check_correct",
    "compatibility_matrix",
    "compatible",
    "fitness",
    "gen_mix",
    "gen_point_workload",
    "gen_range_workload",
    "gen_uni_dense",
    "genetic_search",
    "init_population",
    "load_and_sample",
    "lower_bound",
    "mutate",
    "poc_hand_spec",
    "preset",
    "range_query",
    "tournament_selection",
]
