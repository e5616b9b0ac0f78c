"""Dense float64 tensors with a reverse-mode gradient tape.

Everything is numpy underneath; the tape records one node per operation so
``backward`` can replay the graph in reverse. A tape lives for a single
forward/backward pass and is discarded afterwards. Ops executed with no
active tape run plain numpy with zero recording overhead, which is the
inference fast path.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_state = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_state, "tape", None)


class Tensor:
    """A dense n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # row-major storage, always
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class _Node:
    # holds a reference to the output: ids key the gradient maps, so every
    # recorded tensor must stay alive for the tape's lifetime (a collected
    # tensor's id could be reused and alias another node)
    __slots__ = ("op", "out", "vjps")

    def __init__(self, op: str, out: "Tensor", vjps: Sequence[tuple["Tensor", Callable]]):
        self.op = op
        self.out = out
        self.vjps = vjps


class Tape:
    """Ordered record of operations for one forward pass.

    Usable as a context manager; only one tape may be active per thread.
    ``nodes`` stays topologically ordered because ops append as they run.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.gradients: dict[int, np.ndarray] = {}
        self._tracked: set[int] = set()
        self._watched: list[Tensor] = []  # keeps watched tensors' ids stable

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise ContractError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _state.tape = None

    def watch(self, t: Tensor) -> None:
        self._tracked.add(id(t))
        self._watched.append(t)

    def _needs_grad(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked


def record(op: str, out: Tensor, vjps: Sequence[tuple[Tensor, Callable]]) -> Tensor:
    """Append one node to the active tape, keeping only inputs that can need grad."""
    tape = _active_tape()
    if tape is None:
        return out
    live = [(t, fn) for t, fn in vjps if tape._needs_grad(t)]
    if live:
        tape.nodes.append(_Node(op, out, live))
        tape._tracked.add(id(out))
    return out


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate gradients of a scalar loss through the tape, reverse order.

    Returns gradients only for tensors with ``requires_grad``; tensors the
    loss does not reach are absent from the map.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.out))
        if g is None:
            continue
        for t, vjp in node.vjps:
            contrib = vjp(g)
            tid = id(t)
            if tid in grads:
                grads[tid] = grads[tid] + contrib
            else:
                grads[tid] = contrib
            if t.requires_grad:
                leaves[tid] = t
    tape.gradients = {tid: grads[tid] for tid in leaves}
    return {t: grads[tid] for tid, t in leaves.items()}


def _as2d(t: Tensor, op: str) -> np.ndarray:
    if t.data.ndim != 2:
        raise DimensionError(f"{op} expects a 2-d tensor, got shape {t.shape}")
    return t.data


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = _as2d(a, "matmul"), _as2d(b, "matmul")
    if ad.shape[1] != bd.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor(ad @ bd)
    return record("matmul", out, [
        (a, lambda g, bd=bd: g @ bd.T),
        (b, lambda g, ad=ad: ad.T @ g),
    ])


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    # Only scalar-vs-tensor and equal-shape broadcasting are supported.
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op} shapes incompatible: {a.shape} vs {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)  # scalar operand broadcast


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise(a, b, "add")
    out = Tensor(a.data + b.data)
    return record("add", out, [
        (a, lambda g, s=a.shape: _reduce_to(g, s)),
        (b, lambda g, s=b.shape: _reduce_to(g, s)),
    ])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_elementwise(a, b, "mul")
    out = Tensor(a.data * b.data)
    return record("mul", out, [
        (a, lambda g, bd=b.data, s=a.shape: _reduce_to(g * bd, s)),
        (b, lambda g, ad=a.data, s=b.shape: _reduce_to(g * ad, s)),
    ])


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.data * c)
    return record("scale", out, [(x, lambda g: g * c)])


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0  # subgradient 0 at exactly 0
    return record("relu", out, [(x, lambda g: g * mask)])


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast bias: x[n, d] + b[d]."""
    xd = _as2d(x, "add_bias")
    if b.data.shape != (xd.shape[1],):
        raise DimensionError(f"add_bias bias shape {b.shape} does not match columns of {x.shape}")
    out = Tensor(xd + b.data)
    return record("add_bias", out, [
        (x, lambda g: g),
        (b, lambda g: g.sum(axis=0)),
    ])


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Column-broadcast scaling: x[n, d] * s[n, 1]."""
    xd = _as2d(x, "scale_rows")
    if s.data.shape != (xd.shape[0], 1):
        raise DimensionError(f"scale_rows factor shape {s.shape} does not match rows of {x.shape}")
    out = Tensor(xd * s.data)
    return record("scale_rows", out, [
        (x, lambda g, sd=s.data: g * sd),
        (s, lambda g, xd=xd: (g * xd).sum(axis=1, keepdims=True)),
    ])


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.sum(x.data))
    return record("sum", out, [(x, lambda g, s=x.shape: np.broadcast_to(g, s).copy())])


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return record("reshape", out, [(x, lambda g, s=x.shape: g.reshape(s))])


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows (first axis) by index; backward scatter-adds into the source."""
    if x.data.ndim < 2:
        raise DimensionError(f"gather_rows expects ndim >= 2, got shape {x.shape}")
    xd = x.data
    out = Tensor(xd[idx])

    def back(g, shape=xd.shape, idx=idx):
        dx = np.zeros(shape)
        np.add.at(dx, idx, g)
        return dx

    return record("gather_rows", out, [(x, back)])


def segment_sum(x: Tensor, starts: np.ndarray, counts: np.ndarray) -> Tensor:
    """Sum contiguous row segments; segment i covers rows [starts[i], starts[i]+counts[i]).

    Empty segments yield zero rows. Rows must already be grouped by segment.
    """
    xd = _as2d(x, "segment_sum")
    out_d = _reduceat(np.add, xd, starts, counts)
    out = Tensor(out_d)

    def back(g, starts=starts, counts=counts, m=xd.shape[0]):
        return np.repeat(g, counts, axis=0) if m else np.zeros((0, g.shape[1]))

    return record("segment_sum", out, [(x, back)])


def segment_mean(x: Tensor, starts: np.ndarray, counts: np.ndarray) -> Tensor:
    s = segment_sum(x, starts, counts)
    inv = np.zeros((len(counts), 1))
    nz = counts > 0
    inv[nz, 0] = 1.0 / counts[nz]
    return scale_rows(s, Tensor(inv))


def segment_max(x: Tensor, starts: np.ndarray, counts: np.ndarray) -> Tensor:
    """Componentwise max per contiguous row segment; empty segments yield 0.

    Backward routes each output gradient to the first row attaining the max.
    """
    xd = _as2d(x, "segment_max")
    m, d = xd.shape
    out_d = _reduceat(np.maximum, xd, starts, counts)
    nonempty = counts > 0
    seg_of_row = np.repeat(np.arange(len(counts)), counts)
    # first row achieving the max in each (segment, column)
    hit = xd == out_d[seg_of_row]
    score = np.where(hit, np.arange(m)[:, None], m)
    winners = _reduceat(np.minimum, score, starts, counts, fill=m).astype(np.intp)
    out = Tensor(out_d)

    def back(g, winners=winners, nonempty=nonempty, m=m, d=d):
        dx = np.zeros((m, d))
        rows = winners[nonempty].ravel()
        cols = np.tile(np.arange(d), int(nonempty.sum()))
        np.add.at(dx, (rows, cols), g[nonempty].ravel())
        return dx

    return record("segment_max", out, [(x, back)])


def _reduceat(ufunc, x: np.ndarray, starts: np.ndarray, counts: np.ndarray, fill=0.0) -> np.ndarray:
    # starts has one entry per segment. ufunc.reduceat misbehaves on empty
    # segments, so clip the indices and mask empties out afterwards.
    n = len(counts)
    out = np.full((n, x.shape[1]), fill, dtype=np.float64)
    if x.shape[0] == 0 or n == 0:
        return out
    nonempty = counts > 0
    if not nonempty.any():
        return out
    # Reduce only at nonempty starts: those are strictly increasing, and each
    # nonempty segment runs exactly to the next nonempty start (empty segments
    # occupy no rows).
    idx = np.asarray(starts[:n], dtype=np.intp)[nonempty]
    out[nonempty] = ufunc.reduceat(x, idx, axis=0)
    return out


class GroupPlan:
    """Precomputed grouping of row indices by id: a stable sort order plus
    contiguous group boundaries. Build once per static index array."""

    __slots__ = ("order", "starts", "counts", "num_groups")

    def __init__(self, ids: np.ndarray, num_groups: int):
        ids = np.asarray(ids, dtype=np.intp)
        self.order = np.argsort(ids, kind="stable")
        self.counts = np.bincount(ids, minlength=num_groups).astype(np.intp)
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.intp)
        self.num_groups = num_groups


def grouped_edge_linear(x_src: Tensor, theta: Tensor, plan: GroupPlan) -> Tensor:
    """Per-row matrix-vector product where rows share one of K matrices:
    out[e] = theta[group(e)] @ x_src[e].

    theta has shape [K, d_out, d_in]. Forward and backward run one dense
    matrix product per group, so the per-edge weight tensor is never
    materialized; this is the hot path of the convolution.
    """
    td, xd = theta.data, x_src.data
    if td.ndim != 3 or xd.ndim != 2 or td.shape[2] != xd.shape[1]:
        raise DimensionError(
            f"grouped_edge_linear shapes incompatible: {theta.shape} vs {x_src.shape}")
    m, d_in = xd.shape
    d_out = td.shape[1]
    order, starts, counts = plan.order, plan.starts, plan.counts
    xs = xd[order]
    out_sorted = np.empty((m, d_out))
    for k in range(plan.num_groups):
        c = counts[k]
        if c:
            sl = slice(starts[k], starts[k] + c)
            out_sorted[sl] = xs[sl] @ td[k].T
    out_data = np.empty((m, d_out))
    out_data[order] = out_sorted
    out = Tensor(out_data)

    def back_theta(g):
        gs = g[order]
        dt = np.zeros_like(td)
        for k in range(plan.num_groups):
            c = counts[k]
            if c:
                sl = slice(starts[k], starts[k] + c)
                dt[k] = gs[sl].T @ xs[sl]
        return dt

    def back_x(g):
        gs = g[order]
        dxs = np.empty((m, d_in))
        for k in range(plan.num_groups):
            c = counts[k]
            if c:
                sl = slice(starts[k], starts[k] + c)
                dxs[sl] = gs[sl] @ td[k]
        dx = np.empty((m, d_in))
        dx[order] = dxs
        return dx

    return record("grouped_edge_linear", out, [(theta, back_theta), (x_src, back_x)])


def edge_linear(x_src: Tensor, theta: Tensor) -> Tensor:
    """Per-row matrix-vector product: out[e] = theta[e] @ x_src[e].

    theta has shape [m, d_out, d_in]; x_src has shape [m, d_in].
    """
    td, xd = theta.data, x_src.data
    if td.ndim != 3 or xd.ndim != 2 or td.shape[0] != xd.shape[0] or td.shape[2] != xd.shape[1]:
        raise DimensionError(f"edge_linear shapes incompatible: {theta.shape} vs {x_src.shape}")
    out = Tensor(np.einsum("moi,mi->mo", td, xd))
    return record("edge_linear", out, [
        (theta, lambda g, xd=xd: np.einsum("mo,mi->moi", g, xd)),
        (x_src, lambda g, td=td: np.einsum("moi,mo->mi", td, g)),
    ])
