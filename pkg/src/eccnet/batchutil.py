"""Disjoint-union batching of graph pyramids.

The union of destination-sorted edge blocks with increasing vertex offsets
is itself destination-sorted, so merged graphs are assembled directly
without re-finalizing. Distinct edge labels are re-deduplicated across the
whole batch, which keeps the cached convolution path evaluating its filter
net once per distinct label in the union.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import BatchingError
from .graph import GraphPyramid, LabeledGraph, PoolingMap


class PyramidBatch:
    """One pyramid covering the disjoint union of a list of pyramids."""

    def __init__(self, levels: list[LabeledGraph], maps: list[PoolingMap],
                 ranges: list[tuple[np.ndarray, np.ndarray]],
                 targets: np.ndarray | None):
        self.levels = levels
        self.maps = maps
        self._ranges = ranges
        self.targets = targets

    @property
    def num_graphs(self) -> int:
        return len(self._ranges[0][0])

    def graph_ranges(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-graph (row start, row count) at one pyramid level."""
        return self._ranges[level]


def _merge_level(graphs: list[LabeledGraph]) -> tuple[LabeledGraph, np.ndarray, np.ndarray]:
    ns = np.array([g.n for g in graphs], dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(ns)[:-1]]).astype(np.intp)
    n = int(ns.sum())
    widths = {g.s for g in graphs}
    if len(widths) != 1:
        raise BatchingError(f"edge label widths differ across the batch: {sorted(widths)}")
    dims = {g.signal_dim for g in graphs}
    if len(dims) != 1:
        raise BatchingError(f"signal dimensions differ across the batch: {sorted(dims)}")
    for g in graphs:
        g._require_finalized()
    src = np.concatenate([g.src + off for g, off in zip(graphs, offsets)])
    dst = np.concatenate([g.dst + off for g, off in zip(graphs, offsets)])
    signal = np.vstack([g.vertex_signal for g in graphs])
    dst_counts = np.concatenate([g.dst_counts for g in graphs])
    dst_starts = np.concatenate([[0], np.cumsum(dst_counts)[:-1]]).astype(np.intp)

    stacked = np.vstack([g.distinct_labels for g in graphs])
    distinct, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.ravel().astype(np.intp)
    k_offsets = np.concatenate(
        [[0], np.cumsum([len(g.distinct_labels) for g in graphs])[:-1]]).astype(np.intp)
    label_index = np.concatenate(
        [inv[koff + g.label_index] for g, koff in zip(graphs, k_offsets)])

    merged = LabeledGraph._assemble(n, src, dst, signal, distinct, label_index,
                                    dst_starts, dst_counts)
    return merged, offsets, ns


def batch(pyramids: Sequence[GraphPyramid],
          targets: np.ndarray | None = None) -> PyramidBatch:
    """Disjoint union per level with vertex and pooling-map offsets."""
    if not pyramids:
        raise BatchingError("cannot batch zero pyramids")
    depths = {p.depth for p in pyramids}
    if len(depths) != 1:
        raise BatchingError(f"pyramid depths differ across the batch: {sorted(depths)}")
    depth = depths.pop()

    levels: list[LabeledGraph] = []
    ranges: list[tuple[np.ndarray, np.ndarray]] = []
    level_offsets: list[np.ndarray] = []
    for h in range(depth + 1):
        merged, offsets, ns = _merge_level([p.levels[h] for p in pyramids])
        levels.append(merged)
        ranges.append((offsets, ns))
        level_offsets.append(offsets)
    maps: list[PoolingMap] = []
    for h in range(depth):
        coarse_off = level_offsets[h + 1]
        assignment = np.concatenate(
            [p.maps[h].assignment + coff
             for p, coff in zip(pyramids, coarse_off)])
        maps.append(PoolingMap(assignment, int(levels[h + 1].n)))
    if targets is not None:
        targets = np.asarray(targets, dtype=np.intp)
        if len(targets) != len(pyramids):
            raise BatchingError(
                f"{len(targets)} targets for {len(pyramids)} pyramids")
    return PyramidBatch(levels, maps, ranges, targets)
