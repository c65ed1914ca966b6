"""Compressed binary search trees for approximate Hamming-space k-NN."""

from .bitcode import (
    BitCode,
    BitDataset,
    BitOrdering,
    HyperplaneSet,
    apply_ordering,
    generate_hyperplanes,
    hamming_distance,
    hash_vector,
    hash_vectors,
)
from .cluster import ClusterMessage, ClusterSearchResult, ShardPlan, cluster_build, cluster_search
from .errors import CombiError, InvalidArgument, InvalidState
from .forest import CombiForest, forest_build, forest_candidates, forest_knn, load_forest
from .ibst import HammingSearchBudget, IbstTree, build_ibst, compress, ibst_insert, ibst_knn, ibst_search
from .metrics import BenchReport, GroundTruth, bench, fdr, lambda_distribution, linear_scan_knn, precision_at_k
from .tree import CombiTree, MutateBudget, Neighbor, combi_insert, combi_search

__all__ = [
    "BitCode", "BitDataset", "BitOrdering", "HyperplaneSet", "apply_ordering",
    "generate_hyperplanes", "hamming_distance", "hash_vector", "hash_vectors",
    "ClusterMessage", "ClusterSearchResult", "ShardPlan", "cluster_build", "cluster_search",
    "CombiError", "InvalidArgument", "InvalidState",
    "CombiForest", "forest_build", "forest_candidates", "forest_knn", "load_forest",
    "HammingSearchBudget", "IbstTree", "build_ibst", "compress", "ibst_insert", "ibst_knn",
    "ibst_search",
    "BenchReport", "GroundTruth", "bench", "fdr", "lambda_distribution", "linear_scan_knn",
    "precision_at_k",
    "CombiTree", "MutateBudget", "Neighbor", "combi_insert", "combi_search",
]
