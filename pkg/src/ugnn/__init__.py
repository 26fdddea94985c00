"""Graph neural network aggregation viewed as graph signal denoising."""

from .graph import Graph, LaplacianKind, build_graph, laplacian, local_label_smoothness, normalized_adjacency

__all__ = ["Graph", "LaplacianKind", "build_graph", "laplacian", "local_label_smoothness", "normalized_adjacency"]
__version__ = "0.1.0"
