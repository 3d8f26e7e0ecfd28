"""Structural encoders: kernels, edit distances, Graph2Vec, GNNs, spectral maps."""

from .matrix import SimilarityMatrix, matrix_to_embeddings
from .kernels import path_kernel, random_walk_kernel, wl_features, wl_subtree_kernel
from .editdist import (
    ged_matrix,
    graph_edit_distance,
    ted_matrix,
    tree_edit_distance,
)
from .graph2vec import graph2vec
from .gnn import GnnModel, embed_structs, train_gnn

__all__ = [
    "SimilarityMatrix",
    "matrix_to_embeddings",
    "wl_subtree_kernel",
    "wl_features",
    "path_kernel",
    "random_walk_kernel",
    "graph_edit_distance",
    "tree_edit_distance",
    "ged_matrix",
    "ted_matrix",
    "graph2vec",
    "GnnModel",
    "train_gnn",
    "embed_structs",
]
