"""Non-convolutional layers: batch normalization, graph max-pooling through a
vertex assignment map, global pooling, fully-connected, dropout, and the
softmax cross-entropy loss."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .graph import PoolingMap
from .tensor import Tensor, record


class BatchNormState:
    """Per-channel affine batch normalization state.

    Running statistics are seeded from the first training batch and then
    follow an exponential moving average; a (0, 1) prior would dominate
    eval-mode behavior for short recipes on small datasets.
    """

    def __init__(self, d: int, momentum: float = 0.1, epsilon: float = 1e-5):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.running_mean = np.zeros(d)
        self.running_var = np.ones(d)
        self.momentum = momentum
        self.epsilon = epsilon
        self.initialized = False

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]


def batchnorm(x: Tensor, st: BatchNormState, mode: str) -> Tensor:
    """Normalize per channel over all rows; train mode uses batch statistics
    (biased variance) and updates running stats, eval mode uses running stats."""
    xd = x.data
    if xd.ndim != 2 or xd.shape[1] != st.gamma.size:
        raise DimensionError(f"batchnorm expects [*, {st.gamma.size}], got {x.shape}")
    if mode == "train":
        n = xd.shape[0]
        if n < 2:
            raise ContractError(f"train-mode batchnorm needs >= 2 rows, got {n}")
        mean = xd.mean(axis=0)
        var = xd.var(axis=0)
        if st.initialized:
            st.running_mean = (1 - st.momentum) * st.running_mean + st.momentum * mean
            st.running_var = (1 - st.momentum) * st.running_var + st.momentum * var
        else:
            st.running_mean = mean.copy()
            st.running_var = var.copy()
            st.initialized = True
    elif mode == "eval":
        mean, var = st.running_mean, st.running_var
    else:
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    invstd = 1.0 / np.sqrt(var + st.epsilon)
    xhat = (xd - mean) * invstd
    out = Tensor(st.gamma.data * xhat + st.beta.data)

    gamma_d = st.gamma.data

    def back_x(g):
        if mode == "eval":
            return g * gamma_d * invstd
        n = xd.shape[0]
        gsum = g.sum(axis=0)
        gx = (g * xhat).sum(axis=0)
        return (gamma_d * invstd / n) * (n * g - gsum - xhat * gx)

    return record("batchnorm", out, [
        (x, back_x),
        (st.gamma, lambda g: (g * xhat).sum(axis=0)),
        (st.beta, lambda g: g.sum(axis=0)),
    ])


def max_pool(x: Tensor, pool_map: PoolingMap) -> Tensor:
    """Componentwise max over each coarse vertex's preimage; coarse vertices
    with no preimage output zero. Gradient routes to the argmax rows."""
    if x.shape[0] != pool_map.n_fine:
        raise DimensionError(
            f"signal has {x.shape[0]} rows, map covers {pool_map.n_fine} fine vertices")
    plan = pool_map.group_plan()
    grouped = T.gather_rows(x, plan.order)
    return T.segment_max(grouped, plan.starts, plan.counts)


def global_pool(x: Tensor, kind: str) -> Tensor:
    """Column-wise mean or max over all rows, as a 1 x d tensor."""
    if x.shape[0] == 0:
        raise ContractError("global pooling over an empty signal")
    starts = np.zeros(1, dtype=np.intp)
    counts = np.array([x.shape[0]], dtype=np.intp)
    return global_pool_segments(x, starts, counts, kind)


def global_pool_segments(x: Tensor, starts: np.ndarray, counts: np.ndarray,
                         kind: str) -> Tensor:
    """Per-segment global pooling; segments are contiguous row ranges (one per
    graph in a batch)."""
    if kind == "average":
        return T.segment_mean(x, starts, counts)
    if kind == "max":
        return T.segment_max(x, starts, counts)
    raise ContractError(f"kind must be 'average' or 'max', got {kind!r}")


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero entries with probability p and scale survivors
    by 1/(1-p) in train mode; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise ContractError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return T.mul(x, Tensor(mask))


class LinearParams:
    """Fully-connected layer parameters."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        from .conv import glorot_uniform
        self.weight = Tensor(glorot_uniform(rng, (d_in, d_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def linear(x: Tensor, p: LinearParams) -> Tensor:
    return T.add_bias(T.matmul(x, p.weight), p.bias)


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the target classes, stabilized by
    max-subtraction."""
    ld = logits.data
    if ld.ndim != 2:
        raise DimensionError(f"logits must be 2-d, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.intp)
    b, c = ld.shape
    if targets.shape != (b,):
        raise DimensionError(f"targets shape {targets.shape} != ({b},)")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise IndexError(f"target class out of range for {c} classes")
    shifted = ld - ld.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = Tensor(-logp[np.arange(b), targets].mean())

    def back(g):
        grad = np.exp(logp)
        grad[np.arange(b), targets] -= 1.0
        return grad * (g / b)

    return record("softmax_cross_entropy", loss, [(logits, back)])


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain softmax on raw arrays (prediction-time scores)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
