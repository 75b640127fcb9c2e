"""Graph-based nearest neighbor search with trace-level diagnostics."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .dataset import (
    DatasetError,
    NeighborList,
    VectorDataset,
    brute_force_knn,
    distance,
    generate_synthetic,
    knn_table,
    load_vectors,
    write_vectors,
)
from .graph import EdgeStrategy, KnnGraph, build_graph, load_graph, save_graph
from .search import SearchParams, SearchTrace, batch_search, search
from .analysis import (
    global_clustering,
    local_clustering,
    neighborhood_subgraph,
    pearson,
    phase_split,
    recall,
    scc_decompose,
    verify_theorem1,
)

__all__ = [
    "BACKEND",
    "DatasetError",
    "NeighborList",
    "VectorDataset",
    "brute_force_knn",
    "distance",
    "generate_synthetic",
    "knn_table",
    "load_vectors",
    "write_vectors",
    "EdgeStrategy",
    "KnnGraph",
    "build_graph",
    "load_graph",
    "save_graph",
    "SearchParams",
    "SearchTrace",
    "batch_search",
    "search",
    "global_clustering",
    "local_clustering",
    "neighborhood_subgraph",
    "pearson",
    "phase_split",
    "recall",
    "scc_decompose",
    "verify_theorem1",
]
