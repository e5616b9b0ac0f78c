"""Edge-conditioned graph convolution networks.

Spatial graph convolutions whose per-edge weight matrices are generated from
edge labels by small filter networks, with point-cloud and general-graph
coarsening pipelines, a training harness, and a scikit-learn style estimator
API on top.
"""

from .config import NetSpec, parse, render
from .conv import EccParams, FilterNet, ecc_forward, ecc_forward_cached, generate_weights
from .errors import (BatchingError, CoarseningError, ConfigurationError,
                     ConsistencyError, ContractError, DimensionError, EccError,
                     LoadError, StratificationError)
from .estimators import (ECCClassifier, GraphPyramidBuilder,
                         PointCloudPyramidBuilder, VoxelGridDownsampler)
from .graph import GraphPyramid, LabeledGraph, PoolingMap, finalize, neighborhood
from .network import EccNetwork, build_network
from .pointcloud import PointCloud, augment, build_graph, build_pyramid, voxelgrid
from .tensor import Tape, Tensor, backward
from .training import TrainConfig, batch, cross_validate, evaluate, test_time_average, train

__version__ = "0.1.0"

__all__ = [
    "BatchingError", "CoarseningError", "ConfigurationError", "ConsistencyError",
    "ContractError", "DimensionError", "ECCClassifier", "EccError", "EccNetwork",
    "EccParams", "FilterNet", "GraphPyramid", "GraphPyramidBuilder", "LabeledGraph",
    "LoadError", "NetSpec", "PointCloud", "PointCloudPyramidBuilder", "PoolingMap",
    "StratificationError", "Tape", "Tensor", "TrainConfig", "VoxelGridDownsampler",
    "augment", "backward", "batch", "build_graph", "build_network", "build_pyramid",
    "cross_validate", "ecc_forward", "ecc_forward_cached", "evaluate", "finalize",
    "generate_weights", "neighborhood", "parse", "render", "test_time_average",
    "train", "voxelgrid",
]
