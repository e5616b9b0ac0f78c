"""Shared test oracles: finite differences, naive per-vertex convolution,
and random graph generators. Everything here is deliberately straight-line
and independent of the library's vectorized paths."""

from __future__ import annotations

import numpy as np

from eccnet.graph import LabeledGraph, finalize
from eccnet.tensor import Tape, backward


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def perturb_params(params, rng, scale=0.1):
    """Move parameters off special points (zero biases sit exactly on the
    ReLU kink for zero-label edges, where finite differences are invalid)."""
    for p in params:
        p.data = p.data + rng.uniform(-scale, scale, size=p.data.shape)


def check_gradients(make_loss, params, eps=1e-6, rtol=1e-4, max_probes=6,
                    rng=None):
    """Analytic gradients vs central finite differences on probe coordinates.

    make_loss() must rebuild the loss tensor from the current parameter
    values (it runs under a tape once, then tapelessly for the probes).
    """
    rng = rng or np.random.default_rng(0)
    with Tape() as tape:
        loss = make_loss()
    grads = backward(tape, loss)
    worst = 0.0
    for p in params:
        g = grads.get(p)
        assert g is not None, "parameter missing from gradient map"
        flat = p.data.reshape(-1)
        assert flat.base is not None or flat is p.data, "need a view to probe in place"
        gflat = np.asarray(g).reshape(-1)
        k = len(flat)
        probes = range(k) if k <= max_probes else \
            sorted(set(rng.choice(k, size=max_probes, replace=False).tolist()))
        for idx in probes:
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = float(make_loss().data)
            flat[idx] = orig - eps
            lm = float(make_loss().data)
            flat[idx] = orig
            fd = (lp - lm) / (2 * eps)
            worst = max(worst, rel_err(gflat[idx], fd))
    return worst


def random_graph(rng, n, p=0.4, s=3, d=2, directed=True):
    """Random finalized graph with continuous labels and signal."""
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    if not directed:
        mask = np.triu(mask, 1)
        mask = mask | mask.T
    src, dst = np.nonzero(mask)
    edges = np.column_stack([src, dst])
    labels = rng.uniform(-1, 1, size=(len(edges), s))
    signal = rng.uniform(-1, 1, size=(n, d))
    g = LabeledGraph(n, edges, signal, labels)
    return finalize(g, np.zeros(s))


def random_connected_graph(rng, n, p=None, s=1):
    """Connected undirected graph (both edge directions), unit labels."""
    p = p if p is not None else min(1.0, 2.5 * np.log(max(n, 2)) / max(n, 2))
    while True:
        mask = np.triu(rng.random((n, n)) < p, 1)
        iu, iv = np.nonzero(mask)
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(iu, iv):
            parent[find(a)] = find(b)
        if len(iu) and len({find(i) for i in range(n)}) == 1:
            edges = np.vstack([np.column_stack([iu, iv]), np.column_stack([iv, iu])])
            g = LabeledGraph(n, edges, np.zeros((n, 1)), np.ones((len(edges), s)))
            return finalize(g, np.zeros(s))


def filter_net_apply(fn, labels):
    """Plain-numpy forward of a FilterNet (no tape, loop per layer)."""
    h = np.asarray(labels, dtype=float)
    last = len(fn.weights) - 1
    for i, w in enumerate(fn.weights):
        h = h @ w.data
        if fn.use_bias:
            h = h + fn.biases[i].data
        if i != last:
            h = np.maximum(h, 0.0)
    return h


def naive_ecc(g, x, params):
    """Per-vertex straight-line implementation of the convolution.

    Builds each edge's weight matrix one at a time and loops over incoming
    neighborhoods explicitly; supports all variants and the normalization
    switch.
    """
    x = np.asarray(x, dtype=float)
    n, d_out, d_in = g.n, params.d_out, params.d_in
    labels = g.edge_labels
    out = np.zeros((n, d_out))
    for i in range(n):
        acc = np.zeros(d_out)
        count = 0
        for e in range(g.m):
            if g.dst[e] != i:
                continue
            theta = filter_net_apply(params.filter_net,
                                     labels[e].reshape(1, -1)).reshape(d_out, d_in)
            acc = acc + theta @ x[g.src[e]]
            count += 1
        if params.normalize:
            acc = acc / count
        if params.variant == "z":
            z = filter_net_apply(params.factor_net, np.array([[float(count)]]))[0, 0]
            acc = acc * z
        acc = acc + params.bias.data
        if params.variant == "resnet":
            if params.identity_projection is not None:
                acc = acc + params.identity_projection.data.T @ x[i]
            else:
                acc = acc + x[i]
        out[i] = acc
    return out
