"""Instantiation of parsed configurations into runnable networks.

Each descriptor becomes a layer object with its own parameters (filter nets
are never shared between convolutions). Convolutions and pools are bound to
pyramid levels in order: a convolution runs on the level reached so far, a
pooling descriptor advances one level. Networks run on batched pyramids
(disjoint unions built by the trainer); global pooling reduces each graph's
vertex range separately so the classifier stage sees one row per graph.

If a configuration ends in fully-connected layers without an explicit global
pooling token, a global average pooling is inserted in front of the first
one; the classifier stage needs one row per graph either way.
"""

from __future__ import annotations

import numpy as np

from . import config as C
from . import layers as L
from .conv import EccParams, ecc_forward_cached
from .errors import ConfigurationError
from .tensor import Tensor, relu

DEFAULT_HIDDEN_CONTINUOUS = (16, 32)
DEFAULT_HIDDEN_CATEGORICAL = (64,)


class _ConvLayer:
    def __init__(self, params: EccParams, bn: L.BatchNormState, level: int,
                 dropout: float):
        self.params = params
        self.bn = bn
        self.level = level
        self.dropout = dropout

    def forward(self, x: Tensor, batch, mode: str, rng) -> Tensor:
        g = batch.levels[self.level]
        out = ecc_forward_cached(g, x, self.params, g.distinct_labels,
                                 g.label_index, check=False)
        out = L.batchnorm(out, self.bn, mode)
        out = relu(out)
        if self.dropout:
            out = L.dropout(out, self.dropout, mode, rng)
        return out

    def parameters(self):
        return self.params.parameters() + self.bn.parameters()


class _PoolLayer:
    def __init__(self, map_index: int):
        self.map_index = map_index

    def forward(self, x: Tensor, batch, mode: str, rng) -> Tensor:
        return L.max_pool(x, batch.maps[self.map_index])

    def parameters(self):
        return []


class _GlobalPoolLayer:
    def __init__(self, kind: str, level: int):
        self.kind = kind
        self.level = level

    def forward(self, x: Tensor, batch, mode: str, rng) -> Tensor:
        starts, counts = batch.graph_ranges(self.level)
        return L.global_pool_segments(x, starts, counts, self.kind)

    def parameters(self):
        return []


class _FCLayer:
    def __init__(self, params: L.LinearParams, activation: bool):
        self.params = params
        self.activation = activation

    def forward(self, x: Tensor, batch, mode: str, rng) -> Tensor:
        out = L.linear(x, self.params)
        if self.activation:
            out = relu(out)
        return out

    def parameters(self):
        return self.params.parameters()


class _DropoutLayer:
    def __init__(self, p: float):
        self.p = p

    def forward(self, x: Tensor, batch, mode: str, rng) -> Tensor:
        return L.dropout(x, self.p, mode, rng)

    def parameters(self):
        return []


class EccNetwork:
    """Runnable network: ordered layers bound to pyramid levels."""

    def __init__(self, spec: C.NetSpec, layers: list, input_dim: int,
                 label_widths: list[int], num_classes: int):
        self.spec = spec
        self.layers = layers
        self.input_dim = input_dim
        self.label_widths = list(label_widths)
        self.num_classes = num_classes

    def forward(self, batch, mode: str = "eval",
                rng: np.random.Generator | None = None) -> Tensor:
        x = Tensor(batch.levels[0].vertex_signal)
        for layer in self.layers:
            x = layer.forward(x, batch, mode, rng)
        return x

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every learnable and running array, keyed by a stable name."""
        arrays: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            prefix = f"layer{i}.{type(layer).__name__.lstrip('_')}"
            if isinstance(layer, _ConvLayer):
                fn = layer.params.filter_net
                for j, w in enumerate(fn.weights):
                    arrays[f"{prefix}.filter.w{j}"] = w.data
                for j, b in enumerate(fn.biases):
                    arrays[f"{prefix}.filter.b{j}"] = b.data
                arrays[f"{prefix}.bias"] = layer.params.bias.data
                if layer.params.factor_net is not None:
                    zn = layer.params.factor_net
                    for j, w in enumerate(zn.weights):
                        arrays[f"{prefix}.factor.w{j}"] = w.data
                    for j, b in enumerate(zn.biases):
                        arrays[f"{prefix}.factor.b{j}"] = b.data
                if layer.params.identity_projection is not None:
                    arrays[f"{prefix}.proj"] = layer.params.identity_projection.data
                arrays[f"{prefix}.bn.gamma"] = layer.bn.gamma.data
                arrays[f"{prefix}.bn.beta"] = layer.bn.beta.data
                arrays[f"{prefix}.bn.running_mean"] = layer.bn.running_mean
                arrays[f"{prefix}.bn.running_var"] = layer.bn.running_var
            elif isinstance(layer, _FCLayer):
                arrays[f"{prefix}.weight"] = layer.params.weight.data
                arrays[f"{prefix}.bias"] = layer.params.bias.data
        return arrays

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        current = self.state_arrays()
        if set(current) != set(arrays):
            missing = set(current) ^ set(arrays)
            raise ConfigurationError(f"checkpoint does not match network: {sorted(missing)[:4]}")
        for i, layer in enumerate(self.layers):
            prefix = f"layer{i}.{type(layer).__name__.lstrip('_')}"
            if isinstance(layer, _ConvLayer):
                fn = layer.params.filter_net
                for j, w in enumerate(fn.weights):
                    w.data = np.array(arrays[f"{prefix}.filter.w{j}"])
                for j, b in enumerate(fn.biases):
                    b.data = np.array(arrays[f"{prefix}.filter.b{j}"])
                layer.params.bias.data = np.array(arrays[f"{prefix}.bias"])
                if layer.params.factor_net is not None:
                    zn = layer.params.factor_net
                    for j, w in enumerate(zn.weights):
                        w.data = np.array(arrays[f"{prefix}.factor.w{j}"])
                    for j, b in enumerate(zn.biases):
                        b.data = np.array(arrays[f"{prefix}.factor.b{j}"])
                if layer.params.identity_projection is not None:
                    layer.params.identity_projection.data = np.array(arrays[f"{prefix}.proj"])
                layer.bn.gamma.data = np.array(arrays[f"{prefix}.bn.gamma"])
                layer.bn.beta.data = np.array(arrays[f"{prefix}.bn.beta"])
                layer.bn.running_mean = np.array(arrays[f"{prefix}.bn.running_mean"])
                layer.bn.running_var = np.array(arrays[f"{prefix}.bn.running_var"])
                layer.bn.initialized = True  # loaded stats come from training
            elif isinstance(layer, _FCLayer):
                layer.params.weight.data = np.array(arrays[f"{prefix}.weight"])
                layer.params.bias.data = np.array(arrays[f"{prefix}.bias"])


def build_network(spec: C.NetSpec, input_dim: int, label_widths: list[int],
                  rng: np.random.Generator,
                  default_hidden: tuple[int, ...] = DEFAULT_HIDDEN_CONTINUOUS,
                  conv_dropout: float = 0.0,
                  filter_bias: bool = True) -> EccNetwork:
    """Instantiate independent parameters for every descriptor.

    label_widths gives the edge-label dimension of each pyramid level; the
    pyramid must provide exactly one level per pooling descriptor plus one.
    """
    depth = len(label_widths) - 1
    if spec.num_pools() != depth:
        raise ConfigurationError(
            f"config has {spec.num_pools()} pooling layer(s) but the pyramid "
            f"provides {depth} coarsening step(s)")
    hidden = spec.filter_hidden if spec.filter_hidden is not None else tuple(default_hidden)

    layers: list = []
    level = 0
    width = input_dim
    saw_global = any(isinstance(d, (C.GlobalAvgPool, C.GlobalMaxPool)) for d in spec.layers)
    num_classes = 0
    for d in spec.layers:
        if isinstance(d, C.Conv):
            params = EccParams(width, d.channels, label_widths[level], rng,
                               hidden=hidden, variant=spec.variant,
                               filter_bias=filter_bias)
            layers.append(_ConvLayer(params, L.BatchNormState(d.channels), level,
                                     conv_dropout))
            width = d.channels
        elif isinstance(d, (C.MaxPoolGrid, C.MaxPoolLevel)):
            layers.append(_PoolLayer(level))
            level += 1
        elif isinstance(d, C.GlobalAvgPool):
            layers.append(_GlobalPoolLayer("average", level))
        elif isinstance(d, C.GlobalMaxPool):
            layers.append(_GlobalPoolLayer("max", level))
        elif isinstance(d, C.FullyConnected):
            if not saw_global:
                layers.append(_GlobalPoolLayer("average", level))
                saw_global = True
            layers.append(_FCLayer(L.LinearParams(width, d.channels, rng),
                                   activation=True))
            width = d.channels
            num_classes = d.channels
        elif isinstance(d, C.Dropout):
            layers.append(_DropoutLayer(d.p))
    # logits come out raw: strip the activation from the final FC
    for layer in reversed(layers):
        if isinstance(layer, _FCLayer):
            layer.activation = False
            break
    if num_classes == 0:
        raise ConfigurationError("configuration has no fully-connected output layer")
    return EccNetwork(spec, layers, input_dim, label_widths, num_classes)
