"""Edge-conditioned convolution: per-edge weight matrices generated on the
fly from edge labels by a small filter-generating network.

Each convolution owns one filter net mapping an s-dimensional edge label to a
flattened d_out x d_in matrix. The aggregation averages transformed neighbor
signals over each incoming neighborhood (self-loop included). Two appendix
variants are supported: a residual skip connection and a learned per-vertex
normalization factor conditioned on neighborhood size.

``ecc_forward_cached`` exploits repeated edge labels: the filter net runs
once per distinct label row instead of once per edge, which is where all the
speed comes from on categorical or grid-structured labels.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConsistencyError, ContractError, DimensionError
from .graph import LabeledGraph
from .tensor import Tensor

VARIANTS = ("plain", "resnet", "z")


def orthogonal_init(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Orthogonal matrix from QR of a Gaussian draw, sign-fixed so R has a
    positive diagonal."""
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape)


class FilterNet:
    """MLP mapping an edge label vector to a flattened weight matrix.

    ReLU between layers, no activation after the last. Weights use
    orthogonal initialization; biases start at zero.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator,
                 use_bias: bool = True):
        if len(sizes) < 2:
            raise ContractError(f"filter net needs input and output widths, got {sizes}")
        self.sizes = tuple(int(s) for s in sizes)
        self.use_bias = use_bias
        self.weights = [Tensor(orthogonal_init(rng, (a, b)), requires_grad=True)
                        for a, b in zip(self.sizes, self.sizes[1:])]
        self.biases = ([Tensor(np.zeros(b), requires_grad=True) for b in self.sizes[1:]]
                       if use_bias else [])

    @property
    def in_width(self) -> int:
        return self.sizes[0]

    @property
    def out_width(self) -> int:
        return self.sizes[-1]

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.in_width:
            raise DimensionError(
                f"filter net expects [*, {self.in_width}] input, got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = T.matmul(h, w)
            if self.use_bias:
                h = T.add_bias(h, self.biases[i])
            if i != last:
                h = T.relu(h)
        return h

    def parameters(self) -> list[Tensor]:
        return list(self.weights) + list(self.biases)


class EccParams:
    """Learnable state of one edge-conditioned convolution."""

    def __init__(self, d_in: int, d_out: int, label_width: int,
                 rng: np.random.Generator, hidden: Sequence[int] = (16, 32),
                 variant: str = "plain", normalize: bool = True,
                 filter_bias: bool = True):
        if variant not in VARIANTS:
            raise ContractError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.variant = variant
        self.normalize = normalize
        self.filter_net = FilterNet([label_width, *hidden, d_out * d_in], rng,
                                    use_bias=filter_bias)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)
        # Learned normalization factor, a scalar function of |N(i)|.
        self.factor_net = FilterNet([1, 32, 1], rng) if variant == "z" else None
        self.identity_projection = (
            Tensor(glorot_uniform(rng, (d_in, d_out)), requires_grad=True)
            if variant == "resnet" and d_in != d_out else None)

    def parameters(self) -> list[Tensor]:
        params = self.filter_net.parameters() + [self.bias]
        if self.factor_net is not None:
            params += self.factor_net.parameters()
        if self.identity_projection is not None:
            params.append(self.identity_projection)
        return params


def generate_weights(p: EccParams, labels: Tensor | np.ndarray) -> Tensor:
    """One d_out x d_in matrix per label row: returns [rows, d_out, d_in]."""
    if not isinstance(labels, Tensor):
        labels = Tensor(labels)
    flat = p.filter_net.forward(labels)
    return T.reshape(flat, (labels.shape[0], p.d_out, p.d_in))


def ecc_forward(g: LabeledGraph, x: Tensor, p: EccParams) -> Tensor:
    """Edge-conditioned convolution over a finalized graph.

    Output row i is the neighborhood-size-normalized sum of per-edge
    transformed neighbor signals plus bias, with the variant's extra term.
    The filter net runs once per distinct label row of the graph, which makes
    "identical labels give identical weight matrices" hold exactly.
    """
    g._require_finalized()
    return _forward_with_mapping(g, x, p, g.distinct_labels, g.label_index)


def ecc_forward_cached(g: LabeledGraph, x: Tensor, p: EccParams,
                       distinct_labels: np.ndarray, edge_to_label: np.ndarray,
                       check: bool = True) -> Tensor:
    """Same result as ``ecc_forward`` using a caller-provided distinct-label
    mapping (for example one merged across a whole batch), skipping the
    per-call deduplication."""
    g._require_finalized()
    edge_to_label = np.asarray(edge_to_label, dtype=np.intp)
    if len(edge_to_label) != g.m:
        raise ConsistencyError(
            f"edge-to-label map covers {len(edge_to_label)} edges, graph has {g.m}")
    if check and not np.array_equal(distinct_labels[edge_to_label], g.edge_labels):
        raise ConsistencyError("stale label cache: mapped rows differ from edge labels")
    return _forward_with_mapping(g, x, p, distinct_labels, edge_to_label)


def _forward_with_mapping(g: LabeledGraph, x: Tensor, p: EccParams,
                          distinct_labels: np.ndarray,
                          edge_to_label: np.ndarray) -> Tensor:
    theta_distinct = generate_weights(p, distinct_labels)
    k = len(distinct_labels)
    if g.m >= 4 * k:
        # dense groups: one matrix product per distinct label
        if edge_to_label is g.label_index:
            plan = g.label_plan()
        else:
            plan = T.GroupPlan(edge_to_label, k)
        x_src = T.gather_rows(x, g.src)
        msgs = T.grouped_edge_linear(x_src, theta_distinct, plan)
        return _postprocess(g, x, p, msgs)
    theta = T.gather_rows(theta_distinct, edge_to_label)
    return _aggregate(g, x, p, theta)


def _aggregate(g: LabeledGraph, x: Tensor, p: EccParams, theta: Tensor) -> Tensor:
    g._require_finalized()
    if x.shape != (g.n, p.d_in):
        raise DimensionError(f"signal shape {x.shape} != ({g.n}, {p.d_in})")
    x_src = T.gather_rows(x, g.src)
    msgs = T.edge_linear(x_src, theta)
    return _postprocess(g, x, p, msgs)


def _postprocess(g: LabeledGraph, x: Tensor, p: EccParams, msgs: Tensor) -> Tensor:
    if x.shape != (g.n, p.d_in):
        raise DimensionError(f"signal shape {x.shape} != ({g.n}, {p.d_in})")
    if p.normalize:
        agg = T.segment_mean(msgs, g.dst_starts, g.dst_counts)
    else:
        agg = T.segment_sum(msgs, g.dst_starts, g.dst_counts)
    if p.variant == "z":
        counts = Tensor(g.dst_counts.astype(np.float64).reshape(-1, 1))
        factor = p.factor_net.forward(counts)
        agg = T.scale_rows(agg, factor)
    out = T.add_bias(agg, p.bias)
    if p.variant == "resnet":
        if p.identity_projection is not None:
            out = T.add(out, T.matmul(x, p.identity_projection))
        else:
            out = T.add(out, x)
    return out


def grid_oracle(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct centered correlation with zero-padded borders, 1-d or 2-d.

    Deliberately written as straight loops: this is the independent reference
    the graph convolution is checked against.
    """
    signal = np.asarray(signal, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if signal.ndim == 1:
        w = kernel.shape[0]
        if kernel.ndim != 1 or w % 2 == 0:
            raise ContractError(f"1-d oracle needs an odd 1-d kernel, got {kernel.shape}")
        c = w // 2
        out = np.zeros_like(signal)
        for i in range(len(signal)):
            acc = 0.0
            for d in range(-c, c + 1):
                j = i + d
                if 0 <= j < len(signal):
                    acc += kernel[c + d] * signal[j]
            out[i] = acc
        return out
    if signal.ndim == 2:
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
            raise ContractError(f"2-d oracle needs an odd square kernel, got {kernel.shape}")
        c = kernel.shape[0] // 2
        rows, cols = signal.shape
        out = np.zeros_like(signal)
        for r in range(rows):
            for q in range(cols):
                acc = 0.0
                for dr in range(-c, c + 1):
                    for dc in range(-c, c + 1):
                        rr, cc = r + dr, q + dc
                        if 0 <= rr < rows and 0 <= cc < cols:
                            acc += kernel[c + dr, c + dc] * signal[rr, cc]
                out[r, q] = acc
        return out
    raise ContractError(f"oracle handles 1-d or 2-d signals, got ndim={signal.ndim}")


def build_grid_graph(shape: int | tuple[int, int], window: int) -> LabeledGraph:
    """Chain or image grid whose edges carry one-hot labels of the neighbor's
    discrete offset, the construction under which this convolution matches a
    regular centered convolution."""
    if window % 2 == 0:
        raise ContractError(f"window must be odd, got {window}")
    c = window // 2
    if isinstance(shape, int):
        n = shape
        coords = np.arange(n)
        offsets = [(d,) for d in range(-c, c + 1)]
        index = {(i,): i for i in range(n)}
        pos = [(i,) for i in range(n)]
    else:
        rows, cols = shape
        n = rows * cols
        offsets = [(dr, dc) for dr in range(-c, c + 1) for dc in range(-c, c + 1)]
        index = {(r, q): r * cols + q for r in range(rows) for q in range(cols)}
        pos = [(r, q) for r in range(rows) for q in range(cols)]
    s = len(offsets)
    edges, labels = [], []
    for i, pi in enumerate(pos):
        for k, off in enumerate(offsets):
            pj = tuple(a + b for a, b in zip(pi, off))
            j = index.get(pj)
            if j is None:
                continue
            lab = np.zeros(s)
            lab[k] = 1.0
            edges.append((j, i))
            labels.append(lab)
    from .graph import finalize
    g = LabeledGraph(n, edges, np.zeros((n, 1)), np.asarray(labels))
    return finalize(g, np.zeros(s))  # self-loops already present via offset 0


def grid_interior_mask(shape: int | tuple[int, int], window: int) -> np.ndarray:
    """Vertices whose full window lies inside the grid."""
    c = window // 2
    if isinstance(shape, int):
        mask = np.zeros(shape, dtype=bool)
        mask[c:shape - c] = True
        return mask
    rows, cols = shape
    mask = np.zeros((rows, cols), dtype=bool)
    mask[c:rows - c, c:cols - c] = True
    return mask.ravel()
