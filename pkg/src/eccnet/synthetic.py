"""Synthetic desk-scale datasets.

Real benchmark corpora cannot be bundled or downloaded here, so tests and
demos use generated stand-ins: a raster digit corpus (stroke glyphs with
random shift, rotation, thickness, and noise) and a molecule-style graph
classification set whose class signal lives purely in the categorical edge
labels. The graph generator reproduces the headline statistics of the
classic mutagenicity benchmark: 188 graphs, 3371 vertices, and 3721
undirected edges in total (means 17.93 and 19.79), 7 vertex and 11 edge
categories, two imbalanced classes (125 / 63).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

# polyline glyphs on the unit square, y growing downward
_GLYPHS: dict[int, list[list[tuple[float, float]]]] = {
    0: [[(0.5, 0.08), (0.82, 0.3), (0.82, 0.7), (0.5, 0.92), (0.18, 0.7),
         (0.18, 0.3), (0.5, 0.08)]],
    1: [[(0.35, 0.25), (0.55, 0.08), (0.55, 0.92)], [(0.3, 0.92), (0.8, 0.92)]],
    2: [[(0.2, 0.25), (0.5, 0.08), (0.8, 0.28), (0.3, 0.65), (0.2, 0.92),
         (0.82, 0.92)]],
    3: [[(0.2, 0.12), (0.75, 0.12), (0.45, 0.45), (0.8, 0.7), (0.5, 0.92),
         (0.2, 0.8)]],
    4: [[(0.68, 0.92), (0.68, 0.08), (0.18, 0.62), (0.85, 0.62)]],
    5: [[(0.78, 0.08), (0.25, 0.08), (0.22, 0.45), (0.65, 0.42), (0.8, 0.68),
         (0.55, 0.92), (0.2, 0.85)]],
    6: [[(0.7, 0.1), (0.35, 0.3), (0.22, 0.65), (0.45, 0.92), (0.75, 0.75),
         (0.6, 0.5), (0.25, 0.6)]],
    7: [[(0.18, 0.08), (0.82, 0.08), (0.45, 0.92)]],
    8: [[(0.5, 0.08), (0.75, 0.26), (0.5, 0.48), (0.25, 0.26), (0.5, 0.08)],
        [(0.5, 0.48), (0.8, 0.72), (0.5, 0.92), (0.2, 0.72), (0.5, 0.48)]],
    9: [[(0.75, 0.4), (0.4, 0.5), (0.25, 0.25), (0.5, 0.08), (0.75, 0.2),
         (0.75, 0.4), (0.68, 0.92)]],
}


def _render_digit(digit: int, rng: np.random.Generator, size: int) -> np.ndarray:
    angle = rng.uniform(-0.25, 0.25)
    shift = rng.uniform(-0.09, 0.09, size=2)
    scale = rng.uniform(0.85, 1.05)
    thickness = rng.uniform(0.045, 0.075)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])

    segs_a, segs_b = [], []
    for stroke in _GLYPHS[digit]:
        pts = np.asarray(stroke)
        pts = (pts - 0.5) * scale @ rot.T + 0.5 + shift
        segs_a.append(pts[:-1])
        segs_b.append(pts[1:])
    a = np.vstack(segs_a)
    b = np.vstack(segs_b)

    coords = (np.stack(np.meshgrid(np.arange(size), np.arange(size),
                                   indexing="xy"), axis=-1) + 0.5) / size
    p = coords.reshape(-1, 1, 2)
    ab = b - a
    denom = np.maximum((ab ** 2).sum(axis=1), 1e-12)
    t = np.clip(((p - a) * ab).sum(axis=2) / denom, 0.0, 1.0)
    near = a + t[..., None] * ab
    dist = np.sqrt(((p - near) ** 2).sum(axis=2)).min(axis=1).reshape(size, size)

    img = np.clip((thickness - dist) / thickness * 1.6 + 0.2, 0.0, 1.0)
    img[dist > thickness] = 0.0
    img *= rng.uniform(0.75, 1.0)
    img += rng.normal(0.0, 0.02, size=img.shape)
    img[img < 0.05] = 0.0  # keep the background exactly black
    return (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def synthetic_digits(count: int, rng: np.random.Generator,
                     size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Labeled raster digit corpus, shape (count, size, size) uint8."""
    labels = rng.integers(0, 10, size=count)
    images = np.stack([_render_digit(int(d), rng, size) for d in labels])
    return images, labels.astype(np.intp)


# class-conditional edge category distributions (11 categories); the class
# signal is carried by edge labels only, so stripping them leaves chance
_EDGE_DIST_0 = np.array([5.0, 5, 4, 3, 2, 1, 0.5, 0.3, 0.2, 0.1, 0.1])
_EDGE_DIST_1 = _EDGE_DIST_0[::-1].copy()


def synthetic_tu(directory: str | Path, seed: int = 0, name: str | None = None,
                 num_graphs: int = 188, total_vertices: int = 3371,
                 total_edges: int = 3721, vertex_categories: int = 7,
                 edge_categories: int = 11,
                 class_counts: tuple[int, int] = (125, 63)) -> Path:
    """Write a synthetic TU-format dataset; returns the dataset directory.

    Graph topology is class-independent (random connected graphs with a few
    extra cycle edges); only the categorical edge labels carry the class.
    """
    rng = np.random.default_rng(seed)
    directory = Path(directory)
    name = name or directory.name
    directory.mkdir(parents=True, exist_ok=True)

    sizes = np.full(num_graphs, total_vertices // num_graphs, dtype=np.int64)
    sizes[: total_vertices - int(sizes.sum())] += 1
    perm = rng.permutation(num_graphs)
    sizes = sizes[perm]
    extra_total = total_edges - (total_vertices - num_graphs)
    extras = np.zeros(num_graphs, dtype=np.int64)
    capacity = sizes * (sizes - 1) // 2 - (sizes - 1)
    for _ in range(extra_total):
        while True:
            gi = int(rng.integers(num_graphs))
            if extras[gi] < capacity[gi]:
                extras[gi] += 1
                break

    classes = np.array([1] * class_counts[0] + [-1] * class_counts[1])
    rng.shuffle(classes)

    a_rows: list[str] = []
    indicator: list[str] = []
    node_rows: list[str] = []
    edge_rows: list[str] = []
    offset = 0
    dists = {1: _EDGE_DIST_0 / _EDGE_DIST_0.sum(), -1: _EDGE_DIST_1 / _EDGE_DIST_1.sum()}
    for gi in range(num_graphs):
        n = int(sizes[gi])
        pairs = set()
        for v in range(1, n):
            u = int(rng.integers(v))
            pairs.add((u, v))
        attempts = 0
        want = len(pairs) + int(extras[gi])
        while len(pairs) < want and attempts < 500:
            u, v = rng.integers(n), rng.integers(n)
            attempts += 1
            if u == v:
                continue
            pairs.add((min(int(u), int(v)), max(int(u), int(v))))
        if len(pairs) < want:  # deterministic completion keeps totals exact
            for u in range(n):
                for v in range(u + 1, n):
                    if len(pairs) == want:
                        break
                    pairs.add((u, v))
        cat_p = dists[int(classes[gi])]
        for (u, v) in sorted(pairs):
            cat = int(rng.choice(edge_categories, p=cat_p))
            a_rows.append(f"{offset + u + 1}, {offset + v + 1}")
            a_rows.append(f"{offset + v + 1}, {offset + u + 1}")
            edge_rows.append(str(cat))
            edge_rows.append(str(cat))
        for _ in range(n):
            indicator.append(str(gi + 1))
            node_rows.append(str(int(rng.integers(vertex_categories))))
        offset += n

    (directory / f"{name}_A.txt").write_text("\n".join(a_rows) + "\n")
    (directory / f"{name}_graph_indicator.txt").write_text("\n".join(indicator) + "\n")
    (directory / f"{name}_graph_labels.txt").write_text(
        "\n".join(str(int(c)) for c in classes) + "\n")
    (directory / f"{name}_node_labels.txt").write_text("\n".join(node_rows) + "\n")
    (directory / f"{name}_edge_labels.txt").write_text("\n".join(edge_rows) + "\n")
    return directory
