"""General-graph pyramid construction.

Each coarsening level: split the vertices by the sign of the largest
Laplacian eigenvector (graphs are treated as unweighted here), Kron-reduce
onto the kept set, then randomly sparsify the reduced Laplacian with edge
probabilities proportional to weight times effective resistance. The
magnitudes of the reduced off-diagonals become the coarse scalar edge
labels, and because sparsification is randomized, several distinct pyramids
can be generated from one input graph.

All matrices are dense; benchmark-sized graphs make O(n^3) reductions cheap.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CoarseningError, ContractError
from .graph import GraphPyramid, LabeledGraph, PoolingMap, finalize

DEGREE_VARIANTS = ("none", "inv_sqrt", "inv", "sqrt", "raw")


def undirected_pairs(g: LabeledGraph) -> np.ndarray:
    """Unique undirected vertex pairs (u < v), self-loops dropped."""
    u = np.minimum(g.src, g.dst)
    v = np.maximum(g.src, g.dst)
    keep = u != v
    pairs = np.unique(np.column_stack([u[keep], v[keep]]), axis=0)
    return pairs.reshape(-1, 2)


def unweighted_laplacian(g: LabeledGraph) -> np.ndarray:
    """Combinatorial Laplacian of the graph's symmetrized support."""
    pairs = undirected_pairs(g)
    return laplacian_from_pairs(g.n, pairs, np.ones(len(pairs)))


def laplacian_from_pairs(n: int, pairs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    L = np.zeros((n, n))
    for (u, v), w in zip(pairs, weights):
        L[u, v] -= w
        L[v, u] -= w
        L[u, u] += w
        L[v, v] += w
    return L


def pairs_from_laplacian(L: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Off-diagonal support as (pairs, weights); weights are the magnitudes."""
    n = len(L)
    iu, iv = np.triu_indices(n, k=1)
    w = -L[iu, iv]
    keep = w > tol
    return np.column_stack([iu[keep], iv[keep]]), w[keep]


@dataclass
class SplitResult:
    keep: np.ndarray
    drop: np.ndarray
    fallback: bool


def power_iteration_top(L: np.ndarray, rng: np.random.Generator,
                        tol: float = 1e-8, max_iter: int = 10000) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric PSD matrix by power iteration.

    PSD means the largest eigenvalue is also largest in magnitude, so no
    spectral shift is needed to make it dominate."""
    n = len(L)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = L @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
        lam = float(v @ (L @ v))
        if np.linalg.norm(L @ v - lam * v) < tol:
            break
    return lam, v


def largest_eigvec_split(g: LabeledGraph, rng: np.random.Generator | None = None,
                         balance: bool = True) -> SplitResult:
    """Partition vertices by the sign of the Laplacian's largest eigenvector.

    Vertices with a nonnegative component are kept. With ``balance`` on, the
    kept set is adjusted to ceil(n/2) vertices by moving the entries closest
    to zero across the sign boundary, which pins the pooling strength at one
    half per level. If a side still comes out empty the even-indexed
    vertices are kept (fallback)."""
    if g.n < 2:
        raise ContractError(f"cannot split a graph with {g.n} vertex/vertices")
    rng = rng if rng is not None else np.random.default_rng(0)
    L = unweighted_laplacian(g)
    _, vec = power_iteration_top(L, rng)
    keep_mask = vec >= 0
    target = -(-g.n // 2)  # ceil(n/2)
    fallback = False
    if balance and keep_mask.sum() != target:
        # move the smallest-magnitude components across the boundary
        order = np.argsort(np.abs(vec), kind="stable")
        keep_mask = keep_mask.copy()
        for idx in order:
            k = int(keep_mask.sum())
            if k == target:
                break
            keep_mask[idx] = k < target
    if keep_mask.all() or not keep_mask.any():
        keep_mask = (np.arange(g.n) % 2) == 0
        fallback = True
    keep = np.flatnonzero(keep_mask)
    drop = np.flatnonzero(~keep_mask)
    return SplitResult(keep, drop, fallback)


def _components(n: int, adjacency: list[list[int]], vertices: np.ndarray) -> list[list[int]]:
    """Connected components of the induced subgraph on ``vertices``."""
    inset = np.zeros(n, dtype=bool)
    inset[vertices] = True
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in vertices:
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            u = queue.popleft()
            comp.append(int(u))
            for w in adjacency[u]:
                if inset[w] and not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(comp)
    return comps


def _adjacency(n: int, pairs: np.ndarray) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in pairs:
        adj[u].append(int(v))
        adj[v].append(int(u))
    return adj


def shrink_drop_set(L: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Grow ``keep`` until every dropped component touches a kept vertex, the
    condition under which the drop block of the Laplacian is nonsingular."""
    n = len(L)
    keep = np.asarray(sorted(keep), dtype=np.intp)
    pairs, _ = pairs_from_laplacian(L)
    adj = _adjacency(n, pairs)
    keep_mask = np.zeros(n, dtype=bool)
    keep_mask[keep] = True
    drop = np.flatnonzero(~keep_mask)
    moved = []
    for comp in _components(n, adj, drop):
        touches = any(keep_mask[w] for u in comp for w in adj[u])
        if not touches:
            moved.append(min(comp))
    if moved:
        keep_mask[moved] = True
    return np.flatnonzero(keep_mask)


def kron_reduce(L: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Schur complement of the Laplacian onto the kept vertices.

    Result is symmetrized exactly; it preserves effective resistances among
    kept vertices and stays a valid Laplacian."""
    n = len(L)
    keep = np.asarray(sorted(keep), dtype=np.intp)
    keep_adj = shrink_drop_set(L, keep)
    if len(keep_adj) != len(keep):
        keep = keep_adj
    mask = np.zeros(n, dtype=bool)
    mask[keep] = True
    drop = np.flatnonzero(~mask)
    if len(drop) == 0:
        return L.copy()
    Lkk = L[np.ix_(keep, keep)]
    Lkd = L[np.ix_(keep, drop)]
    Ldd = L[np.ix_(drop, drop)]
    Ldk = L[np.ix_(drop, keep)]
    try:
        reduced = Lkk - Lkd @ np.linalg.solve(Ldd, Ldk)
    except np.linalg.LinAlgError as exc:
        raise CoarseningError(
            f"drop block singular even after shrinking (|drop|={len(drop)}): {exc}") from exc
    return 0.5 * (reduced + reduced.T)


def effective_resistances(L: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """R_uv = P_uu + P_vv - 2 P_uv with P the Laplacian pseudoinverse."""
    P = np.linalg.pinv(L)
    u, v = pairs[:, 0], pairs[:, 1]
    return P[u, u] + P[v, v] - 2.0 * P[u, v]


def _connected(n: int, pairs: np.ndarray) -> bool:
    if n <= 1:
        return True
    adj = _adjacency(n, pairs)
    seen = np.zeros(n, dtype=bool)
    queue = deque([0])
    seen[0] = True
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    return bool(seen.all())


def sparsify(L: np.ndarray, q: float, rng: np.random.Generator,
             max_retries: int = 5) -> np.ndarray:
    """Randomized spectral sparsification of a Laplacian.

    Samples ceil(q * m * log m) edges with replacement with probability
    proportional to weight times effective resistance, reweighting each
    sampled edge by 1 / (probability * sample count). Retries until the
    output keeps the input's connectivity, returning the input unchanged
    after ``max_retries`` failures. Disconnected inputs are sparsified one
    component at a time."""
    if q <= 0:
        raise ContractError(f"sparsification strength q must be positive, got {q}")
    n = len(L)
    pairs, weights = pairs_from_laplacian(L)
    comps = _components(n, _adjacency(n, pairs), np.arange(n))
    if len(comps) > 1:
        out = np.zeros_like(L)
        for comp in comps:
            idx = np.asarray(sorted(comp), dtype=np.intp)
            sub = sparsify(L[np.ix_(idx, idx)], q, rng, max_retries)
            out[np.ix_(idx, idx)] += sub
        return out
    m = len(pairs)
    if m <= 1:
        return L.copy()
    resist = effective_resistances(L, pairs)
    scores = weights * resist
    probs = scores / scores.sum()
    num_samples = int(np.ceil(q * m * np.log(m)))
    for _ in range(max_retries):
        counts = rng.multinomial(num_samples, probs)
        support = counts > 0
        if not _connected(n, pairs[support]):
            continue
        new_w = weights[support] * counts[support] / (probs[support] * num_samples)
        return laplacian_from_pairs(n, pairs[support], new_w)
    return L.copy()


def degree_label(deg: np.ndarray, variant: str) -> np.ndarray:
    if variant == "inv_sqrt":
        return 1.0 / np.sqrt(deg)
    if variant == "inv":
        return 1.0 / deg
    if variant == "sqrt":
        return np.sqrt(deg)
    if variant == "raw":
        return deg.astype(np.float64)
    raise ContractError(f"unknown degree-label variant {variant!r}")


def append_degree_labels(g: LabeledGraph, variant: str) -> LabeledGraph:
    """Append the transformed degrees of both endpoints to every edge label
    (self-loops included); degrees count the self-loop."""
    if variant == "none":
        return g
    g._require_finalized()
    deg = degree_label(g.dst_counts.astype(np.float64), variant)
    labels = np.column_stack([g.edge_labels, deg[g.src], deg[g.dst]])
    out = LabeledGraph(g.n, np.column_stack([g.src, g.dst]), g.vertex_signal, labels)
    # already self-looped and destination-sorted; re-finalize to rebuild the
    # index and the distinct-label cache
    return finalize(out, labels[0] * 0.0)


def _nearest_kept_map(n: int, pairs: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Assign every vertex to its nearest kept vertex in hops (ties: lowest
    kept index); kept vertices map to themselves."""
    adj = _adjacency(n, pairs)
    owner = np.full(n, -1, dtype=np.intp)
    dist = np.full(n, -1, dtype=np.intp)
    frontier = sorted(int(k) for k in keep)
    for k in frontier:
        owner[k] = k
        dist[k] = 0
    d = 0
    while frontier:
        nxt: dict[int, int] = {}
        for u in frontier:
            for w in adj[u]:
                if dist[w] == -1:
                    cand = nxt.get(w)
                    nxt[w] = owner[u] if cand is None else min(cand, owner[u])
        d += 1
        for w, own in nxt.items():
            dist[w] = d
            owner[w] = own
        frontier = sorted(nxt)
    if (owner < 0).any():
        raise CoarseningError("pooling map is not total: some vertex cannot reach a kept vertex")
    pos = {int(k): i for i, k in enumerate(sorted(int(k) for k in keep))}
    return np.asarray([pos[int(o)] for o in owner], dtype=np.intp)


def build_pyramid(g: LabeledGraph, h_max: int, q: float = 4.0,
                  degree_variant: str = "none",
                  rng: np.random.Generator | None = None,
                  balance: bool = True) -> GraphPyramid:
    """Pyramid for a general graph: split, Kron-reduce, sparsify per level.

    Level 0 is the (finalized) input graph; coarse levels carry the scalar
    Kron weights as edge labels with a zero self-loop label. If the current
    level shrinks below 2 vertices the pyramid terminates early. Degree
    labels, when enabled, are appended at every level."""
    if h_max < 0:
        raise ContractError(f"h_max must be >= 0, got {h_max}")
    if degree_variant not in DEGREE_VARIANTS:
        raise ContractError(f"unknown degree-label variant {degree_variant!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    levels = [append_degree_labels(g, degree_variant)]
    maps: list[PoolingMap] = []
    current = g
    for _ in range(h_max):
        if current.n < 2:
            break
        split = largest_eigvec_split(current, rng, balance=balance)
        L = unweighted_laplacian(current)
        keep = shrink_drop_set(L, split.keep)
        reduced = kron_reduce(L, keep)
        sparse = sparsify(reduced, q, rng)
        pairs, weights = pairs_from_laplacian(sparse)
        nc = len(keep)
        edges = np.vstack([np.column_stack([pairs[:, 0], pairs[:, 1]]),
                           np.column_stack([pairs[:, 1], pairs[:, 0]]),
                           np.column_stack([np.arange(nc), np.arange(nc)])])
        labels = np.concatenate([weights, weights, np.zeros(nc)]).reshape(-1, 1)
        coarse = finalize(LabeledGraph(nc, edges, np.zeros((nc, 1)), labels), [0.0])
        coarse = append_degree_labels(coarse, degree_variant)
        fine_pairs, _ = pairs_from_laplacian(L)
        assignment = _nearest_kept_map(current.n, fine_pairs, keep)
        maps.append(PoolingMap(assignment, nc))
        levels.append(coarse)
        current = coarse
    return GraphPyramid(levels, maps)
