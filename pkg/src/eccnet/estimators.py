"""Scikit-learn style estimator API.

Transformers turn raw inputs (point clouds or labeled graphs) into graph
pyramids; the classifier consumes pyramids. All of them follow the sklearn
parameter conventions (constructor stores parameters verbatim, so
``get_params`` / ``set_params`` / ``clone`` and ``Pipeline`` composition
work).

    pipe = Pipeline([
        ("pyramids", PointCloudPyramidBuilder(levels=[(1, 2.9), (2, 3.4)])),
        ("ecc", ECCClassifier(config="C(16)-MP(2,3.4)-C(32)-GAP-FC(10)")),
    ])
    pipe.fit(clouds, y)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import coarsen, pointcloud
from .config import parse
from .errors import ConfigurationError
from .graph import with_uniform_labels
from .network import (DEFAULT_HIDDEN_CONTINUOUS, build_network)
from .training import TrainConfig, predict_classes, predict_scores, train
from .validation import (as_rng, check_graphs, check_point_clouds,
                         check_pyramids, check_targets)


class VoxelGridDownsampler(BaseEstimator, TransformerMixin):
    """Replace the points in each occupied voxel by their centroid."""

    def __init__(self, resolution: float = 0.1):
        self.resolution = resolution

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        clouds = check_point_clouds(X)
        return [pointcloud.voxelgrid(pc, self.resolution)[0] for pc in clouds]


class PointCloudPyramidBuilder(BaseEstimator, TransformerMixin):
    """Point clouds to multi-resolution graph pyramids.

    ``levels`` lists (voxel resolution, neighborhood radius) per level,
    strictly increasing resolutions; level 0 includes an initial VoxelGrid
    pass at its own resolution.
    """

    def __init__(self, levels=((0.1, 0.2), (0.25, 0.5), (0.75, 1.5), (1.5, 1.5)),
                 label_scheme: str = "full6d"):
        self.levels = levels
        self.label_scheme = label_scheme

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        clouds = check_point_clouds(X)
        return [pointcloud.build_pyramid(pc, list(self.levels), self.label_scheme)
                for pc in clouds]


class GraphPyramidBuilder(BaseEstimator, TransformerMixin):
    """Labeled graphs to pyramids by spectral split, Kron reduction, and
    randomized sparsification.

    Deterministic per input index under a fixed ``random_state``; pass a
    different ``copy_index`` to draw an independently sparsified pyramid of
    the same graphs.
    """

    def __init__(self, depth: int = 2, sparsify_q: float = 4.0,
                 degree_labels: str = "none", random_state: int = 0,
                 copy_index: int = 0):
        self.depth = depth
        self.sparsify_q = sparsify_q
        self.degree_labels = degree_labels
        self.random_state = random_state
        self.copy_index = copy_index

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        graphs = check_graphs(X)
        out = []
        for i, g in enumerate(graphs):
            rng = np.random.default_rng((self.random_state, self.copy_index, i))
            out.append(coarsen.build_pyramid(g, self.depth, q=self.sparsify_q,
                                             degree_variant=self.degree_labels,
                                             rng=rng))
        return out


class ECCClassifier(BaseEstimator, ClassifierMixin):
    """Graph classifier over pyramids built by one of the pyramid builders.

    The architecture string uses the C/MP/GAP/GMP/FC/D grammar (see
    ``eccnet.config``); its pooling count must match the pyramids' depth and
    its final FC width must match the number of classes in ``y``.
    """

    def __init__(self, config: str, variant: str = "plain",
                 filter_hidden=None, filter_bias: bool = True,
                 no_edge_labels: bool = False, epochs: int = 50,
                 batch_size: int = 32, lr: float = 0.1,
                 lr_decay_epochs=(), lr_decay_factor: float = 0.1,
                 momentum: float = 0.0, conv_dropout: float = 0.0,
                 random_state: int = 0):
        self.config = config
        self.variant = variant
        self.filter_hidden = filter_hidden
        self.filter_bias = filter_bias
        self.no_edge_labels = no_edge_labels
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay_epochs = lr_decay_epochs
        self.lr_decay_factor = lr_decay_factor
        self.momentum = momentum
        self.conv_dropout = conv_dropout
        self.random_state = random_state

    def _prepare(self, X):
        pyramids = check_pyramids(X)
        if self.no_edge_labels:
            pyramids = [with_uniform_labels(p) for p in pyramids]
        return pyramids

    def fit(self, X, y):
        pyramids = self._prepare(X)
        y = check_targets(y, len(pyramids))
        self.classes_, targets = np.unique(y, return_inverse=True)
        # the ablation uses a single-layer filter net without bias
        hidden = self.filter_hidden
        if hidden is None and self.no_edge_labels:
            hidden = ()
        spec = parse(self.config, variant=self.variant,
                     filter_hidden=tuple(hidden) if hidden is not None else None)
        sample = pyramids[0]
        net = build_network(
            spec,
            input_dim=sample.levels[0].signal_dim,
            label_widths=sample.label_widths(),
            rng=as_rng(self.random_state),
            default_hidden=DEFAULT_HIDDEN_CONTINUOUS,
            conv_dropout=self.conv_dropout,
            filter_bias=self.filter_bias and not self.no_edge_labels,
        )
        if net.num_classes != len(self.classes_):
            raise ConfigurationError(
                f"config outputs {net.num_classes} classes but y has {len(self.classes_)}")
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          base_lr=self.lr,
                          lr_decay_epochs=tuple(self.lr_decay_epochs),
                          lr_decay_factor=self.lr_decay_factor,
                          momentum=self.momentum, seed=self.random_state)
        self.log_ = train(net, pyramids, targets, cfg)
        self.network_ = net
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("this ECCClassifier instance is not fitted yet")

    def predict_proba(self, X):
        self._check_fitted()
        pyramids = self._prepare(X)
        return predict_scores(self.network_, pyramids, self.batch_size)

    def predict(self, X):
        self._check_fitted()
        pyramids = self._prepare(X)
        idx = predict_classes(self.network_, pyramids, self.batch_size)
        return self.classes_[idx]
