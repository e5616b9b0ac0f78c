"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError
from .graph import GraphPyramid, LabeledGraph
from .pointcloud import PointCloud


def as_rng(random_state) -> np.random.Generator:
    """Accept an int seed, a Generator, or None (seed 0)."""
    if random_state is None:
        return np.random.default_rng(0)
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def check_point_clouds(X) -> list[PointCloud]:
    clouds = list(X)
    if not clouds:
        raise ContractError("X must contain at least one point cloud")
    out = []
    for i, pc in enumerate(clouds):
        if isinstance(pc, PointCloud):
            out.append(pc)
        elif isinstance(pc, np.ndarray) or isinstance(pc, Sequence):
            out.append(PointCloud(np.asarray(pc)))
        else:
            raise ContractError(f"X[{i}] is not a point cloud: {type(pc).__name__}")
    return out


def check_graphs(X) -> list[LabeledGraph]:
    graphs = list(X)
    if not graphs:
        raise ContractError("X must contain at least one graph")
    for i, g in enumerate(graphs):
        if not isinstance(g, LabeledGraph):
            raise ContractError(f"X[{i}] is not a LabeledGraph: {type(g).__name__}")
        if not g.finalized:
            raise ContractError(f"X[{i}] is not finalized")
    return graphs


def check_pyramids(X, depth: int | None = None) -> list[GraphPyramid]:
    pyramids = list(X)
    if not pyramids:
        raise ContractError("X must contain at least one pyramid")
    for i, p in enumerate(pyramids):
        if not isinstance(p, GraphPyramid):
            raise ContractError(f"X[{i}] is not a GraphPyramid: {type(p).__name__}")
        if depth is not None and p.depth != depth:
            raise ContractError(f"X[{i}] has depth {p.depth}, expected {depth}")
    return pyramids


def check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ContractError(f"y has shape {y.shape}, expected ({n},)")
    return y
