"""Vertex- and edge-labeled directed graphs, pooling maps, and graph pyramids.

Edges are stored destination-major (sorted by destination, then source) so
that gathering a vertex's incoming neighborhood is a contiguous scan. Edge
labels are stored deduplicated as ``distinct_labels[label_index]``; the full
per-edge matrix is materialized on demand. Graphs are immutable once
finalized.
"""

from __future__ import annotations

import warnings
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError


class LabeledGraph:
    """Directed graph with an n x d vertex signal and an m x s edge label matrix."""

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] | np.ndarray,
                 vertex_signal: np.ndarray, edge_labels: np.ndarray):
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.intp).reshape(-1, 2)
        labels = np.asarray(edge_labels, dtype=np.float64)
        if labels.ndim == 1:
            labels = labels.reshape(-1, 1)
        if labels.shape[0] != edges.shape[0]:
            raise DimensionError(
                f"edge label rows {labels.shape[0]} != edge count {edges.shape[0]}")
        signal = np.asarray(vertex_signal, dtype=np.float64)
        if signal.ndim == 1:
            signal = signal.reshape(-1, 1)
        if signal.shape[0] != n:
            raise DimensionError(f"signal rows {signal.shape[0]} != vertex count {n}")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise IndexError(f"edge endpoint out of range for n={n}")
        self.n = int(n)
        self.src = edges[:, 0].copy()
        self.dst = edges[:, 1].copy()
        self.vertex_signal = signal
        self._distinct_labels = labels
        self._label_index = np.arange(labels.shape[0], dtype=np.intp)
        self.finalized = False
        self.dst_starts: np.ndarray | None = None
        self.dst_counts: np.ndarray | None = None

    @classmethod
    def _assemble(cls, n: int, src: np.ndarray, dst: np.ndarray,
                  vertex_signal: np.ndarray, distinct_labels: np.ndarray,
                  label_index: np.ndarray, dst_starts: np.ndarray,
                  dst_counts: np.ndarray) -> "LabeledGraph":
        """Fast path for data already finalized (destination-sorted edges,
        self-loops present, index built); used by batching and deserialization."""
        g = object.__new__(cls)
        g.n = int(n)
        g.src = src
        g.dst = dst
        g.vertex_signal = vertex_signal
        g._distinct_labels = distinct_labels
        g._label_index = label_index
        g.dst_starts = dst_starts
        g.dst_counts = dst_counts
        g.finalized = True
        return g

    @property
    def m(self) -> int:
        return len(self.src)

    @property
    def s(self) -> int:
        return self._distinct_labels.shape[1]

    @property
    def signal_dim(self) -> int:
        return self.vertex_signal.shape[1]

    @property
    def edge_labels(self) -> np.ndarray:
        """Full m x s label matrix (materialized from the distinct rows)."""
        return self._distinct_labels[self._label_index]

    @property
    def distinct_labels(self) -> np.ndarray:
        return self._distinct_labels

    @property
    def label_index(self) -> np.ndarray:
        return self._label_index

    def label_plan(self):
        """Edge grouping by distinct label, built lazily and cached (the
        graph is immutable once finalized)."""
        plan = getattr(self, "_label_plan", None)
        if plan is None:
            from .tensor import GroupPlan
            plan = GroupPlan(self._label_index, len(self._distinct_labels))
            self._label_plan = plan
        return plan

    def with_signal(self, signal: np.ndarray) -> "LabeledGraph":
        """Structure-sharing copy carrying a different vertex signal."""
        signal = np.asarray(signal, dtype=np.float64)
        if signal.ndim == 1:
            signal = signal.reshape(-1, 1)
        if signal.shape[0] != self.n:
            raise DimensionError(f"signal rows {signal.shape[0]} != vertex count {self.n}")
        g = object.__new__(LabeledGraph)
        g.n = self.n
        g.src = self.src
        g.dst = self.dst
        g.vertex_signal = signal
        g._distinct_labels = self._distinct_labels
        g._label_index = self._label_index
        g.finalized = self.finalized
        g.dst_starts = self.dst_starts
        g.dst_counts = self.dst_counts
        return g

    def neighborhood_counts(self) -> np.ndarray:
        """|N(i)| for every vertex (self-loop included); graph must be finalized."""
        self._require_finalized()
        return self.dst_counts

    def _require_finalized(self) -> None:
        if not self.finalized:
            raise ContractError("graph is not finalized (self-loops/index missing)")

    def equals(self, other: "LabeledGraph") -> bool:
        return (self.n == other.n
                and np.array_equal(self.src, other.src)
                and np.array_equal(self.dst, other.dst)
                and np.array_equal(self.vertex_signal, other.vertex_signal)
                and np.array_equal(self.edge_labels, other.edge_labels))

    def __repr__(self) -> str:
        return (f"LabeledGraph(n={self.n}, m={self.m}, s={self.s}, "
                f"d={self.signal_dim}, finalized={self.finalized})")


def finalize(g: LabeledGraph, self_loop_label: Sequence[float]) -> LabeledGraph:
    """Add missing self-loops, collapse duplicate edges, and build the
    destination index. Idempotent; returns a new graph."""
    loop = np.asarray(self_loop_label, dtype=np.float64).ravel()
    if loop.shape[0] != g.s:
        raise DimensionError(
            f"self-loop label width {loop.shape[0]} != edge label width {g.s}")

    labels = g.edge_labels
    src, dst = g.src, g.dst
    has_loop = np.zeros(g.n, dtype=bool)
    has_loop[src[src == dst]] = True
    missing = np.flatnonzero(~has_loop)
    if len(missing):
        src = np.concatenate([src, missing])
        dst = np.concatenate([dst, missing])
        labels = np.vstack([labels, np.tile(loop, (len(missing), 1))])

    order = np.lexsort((src, dst))  # destination-major, stable
    src, dst, labels = src[order], dst[order], labels[order]

    dup = np.zeros(len(src), dtype=bool)
    if len(src) > 1:
        dup[1:] = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
    if dup.any():
        warnings.warn(f"collapsed {int(dup.sum())} duplicate edge(s), keeping first labels")
        keep = ~dup
        src, dst, labels = src[keep], dst[keep], labels[keep]

    out = LabeledGraph(g.n, np.column_stack([src, dst]), g.vertex_signal, labels)
    out.dst_counts = np.bincount(dst, minlength=g.n).astype(np.intp)
    out.dst_starts = np.concatenate([[0], np.cumsum(out.dst_counts)[:-1]]).astype(np.intp)
    if g.s:
        distinct, index = np.unique(labels, axis=0, return_inverse=True)
        out._distinct_labels = distinct
        out._label_index = index.ravel().astype(np.intp)
    out.finalized = True
    return out


def neighborhood(g: LabeledGraph, i: int) -> list[tuple[int, int]]:
    """All (source vertex, edge index) pairs with an edge into vertex i."""
    g._require_finalized()
    if not 0 <= i < g.n:
        raise IndexError(f"vertex {i} out of range for n={g.n}")
    lo = g.dst_starts[i]
    hi = lo + g.dst_counts[i]
    return [(int(g.src[e]), int(e)) for e in range(lo, hi)]


def with_uniform_labels(pyramid: "GraphPyramid") -> "GraphPyramid":
    """Replace every level's edge labels with the constant 1 (width 1).

    Used by the no-edge-label ablation: the graph structure is kept, the
    label information channel is removed."""
    levels = []
    for g in pyramid.levels:
        lg = LabeledGraph(g.n, np.column_stack([g.src, g.dst]), g.vertex_signal,
                          np.ones((g.m, 1)))
        levels.append(finalize(lg, [1.0]))
    return GraphPyramid(levels, pyramid.maps)


class PoolingMap:
    """Total assignment of fine vertices to coarse vertices."""

    def __init__(self, assignment: Sequence[int] | np.ndarray, n_coarse: int):
        self.assignment = np.asarray(assignment, dtype=np.intp)
        self.n_coarse = int(n_coarse)
        if self.assignment.size and (self.assignment.min() < 0
                                     or self.assignment.max() >= self.n_coarse):
            raise IndexError(
                f"assignment targets exceed coarse vertex count {self.n_coarse}")

    @property
    def n_fine(self) -> int:
        return len(self.assignment)

    def group_plan(self):
        """Fine-vertex grouping by coarse target, built lazily and cached."""
        plan = getattr(self, "_group_plan", None)
        if plan is None:
            from .tensor import GroupPlan
            plan = GroupPlan(self.assignment, self.n_coarse)
            self._group_plan = plan
        return plan

    def __repr__(self) -> str:
        return f"PoolingMap({self.n_fine} -> {self.n_coarse})"


class GraphPyramid:
    """Sequence of progressively coarser graphs plus the maps linking them."""

    def __init__(self, levels: Sequence[LabeledGraph], maps: Sequence[PoolingMap]):
        if len(maps) != len(levels) - 1:
            raise DimensionError(
                f"need one map per consecutive level pair: {len(levels)} levels, {len(maps)} maps")
        for h, mp in enumerate(maps, start=1):
            if mp.n_fine != levels[h - 1].n or mp.n_coarse != levels[h].n:
                raise DimensionError(
                    f"map {h} is {mp.n_fine}->{mp.n_coarse}, levels are "
                    f"{levels[h - 1].n}->{levels[h].n}")
        self.levels = list(levels)
        self.maps = list(maps)

    @property
    def depth(self) -> int:
        """Number of coarsening steps (h_max)."""
        return len(self.maps)

    def label_widths(self) -> list[int]:
        return [g.s for g in self.levels]

    def with_signal(self, signal: np.ndarray) -> "GraphPyramid":
        """Pyramid sharing all structure but carrying a new level-0 signal."""
        levels = [self.levels[0].with_signal(signal)] + self.levels[1:]
        return GraphPyramid(levels, self.maps)

    def __repr__(self) -> str:
        return f"GraphPyramid(levels={[g.n for g in self.levels]})"
