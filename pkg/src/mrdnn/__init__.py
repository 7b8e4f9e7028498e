"""Manifold-regularized training of feedforward networks.

Class-dependent kNN graphs over the input vectors add a locality penalty to
back-propagation, so that network outputs keep input-space neighbors close.
The package also covers the tandem bottleneck/PCA feature pipeline and
neighborhood-preservation diagnostics.
"""

from mrdnn.dataio import Dataset, SpliceSpec, generate_synthetic, load_dataset, save_dataset, splice
from mrdnn.graph import IntrinsicGraph, affinity, build_intrinsic_graph, graph_scatter, knn_same_class
from mrdnn.network import ForwardTrace, Network, backprop, forward, init_network, output_error_signal
from mrdnn.objective import LossBreakdown, ObjectiveConfig
from mrdnn.trainer import TrainConfig, TrainReport, classify, train, train_baseline
from mrdnn.features import PcaTransform, apply_pca, extract_bottleneck, fit_pca
from mrdnn.diagnostics import ContractionProfile, compare_runs, contraction_profile, gradient_audit

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SpliceSpec", "generate_synthetic", "load_dataset", "save_dataset", "splice",
    "IntrinsicGraph", "affinity", "build_intrinsic_graph", "graph_scatter", "knn_same_class",
    "ForwardTrace", "Network", "backprop", "forward", "init_network", "output_error_signal",
    "LossBreakdown", "ObjectiveConfig",
    "TrainConfig", "TrainReport", "classify", "train", "train_baseline",
    "PcaTransform", "apply_pca", "extract_bottleneck", "fit_pca",
    "ContractionProfile", "compare_runs", "contraction_profile", "gradient_audit",
]
