"""Point-cloud ingestion: radius graphs with geometric edge labels, VoxelGrid
downsampling, multi-resolution pyramids, and training-time augmentation.

Edges connect every ordered pair of points within a fixed metric radius
(closed ball, excluding coincident points). The label of edge (j, i) is a
function of the offset delta = p_j - p_i; several label schemes of varying
richness are supported, from the full Cartesian-plus-spherical 6-vector down
to isotropic distance-only labels. Self-loops carry all-zero labels, the one
symmetric choice (spherical angles are undefined at delta = 0).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError
from .graph import GraphPyramid, LabeledGraph, PoolingMap, finalize

# label scheme -> width s
LABEL_SCHEMES = {
    "full6d": 6,
    "cartesian3d": 3,
    "spherical3d": 3,
    "cyl4d": 4,
    "cyl2d": 2,
    "sph2d": 2,
    "iso1d": 1,
    "none": 1,
}

# schemes invariant to rotation about the z axis
IRZ_SCHEMES = ("cyl4d", "cyl2d", "sph2d", "iso1d", "none")


class PointCloud:
    """Points in 3-space with optional per-point features."""

    def __init__(self, points: np.ndarray, features: np.ndarray | None = None):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DimensionError(f"points must be (n, 3), got {points.shape}")
        if points.shape[0] < 1:
            raise ContractError("point cloud must contain at least one point")
        if not np.isfinite(points).all():
            raise ContractError("point coordinates must be finite")
        self.points = points
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim == 1:
                features = features.reshape(-1, 1)
            if features.shape[0] != points.shape[0]:
                raise DimensionError(
                    f"features rows {features.shape[0]} != point count {points.shape[0]}")
        self.features = features

    @property
    def n(self) -> int:
        return self.points.shape[0]


def edge_labels_from_offsets(delta: np.ndarray, scheme: str) -> np.ndarray:
    """Label rows for offset vectors delta = p_source - p_destination."""
    if scheme not in LABEL_SCHEMES:
        raise ConfigurationError(f"unknown label scheme {scheme!r}")
    delta = np.asarray(delta, dtype=np.float64).reshape(-1, 3)
    dist = np.linalg.norm(delta, axis=1)
    if scheme == "cartesian3d":
        return delta.copy()
    if scheme == "iso1d":
        return dist.reshape(-1, 1)
    if scheme == "none":
        return np.zeros((len(delta), 1))
    # polar angle; guard the (never-connected) zero offset for safety
    safe = np.where(dist > 0, dist, 1.0)
    polar = np.arccos(np.clip(delta[:, 2] / safe, -1.0, 1.0))
    if scheme == "sph2d":
        return np.column_stack([dist, polar])
    radial_xy = np.linalg.norm(delta[:, :2], axis=1)
    if scheme == "cyl2d":
        return np.column_stack([radial_xy, delta[:, 2]])
    if scheme == "cyl4d":
        return np.column_stack([radial_xy, delta[:, 2], dist, polar])
    # two-argument arctangent: full-circle azimuth without quadrant ambiguity
    azimuth = np.arctan2(delta[:, 1], delta[:, 0])
    if scheme == "spherical3d":
        return np.column_stack([dist, polar, azimuth])
    return np.column_stack([delta, dist.reshape(-1, 1),
                            polar.reshape(-1, 1), azimuth.reshape(-1, 1)])


def radius_pairs(points: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs (i, j), i != j, with ||p_i - p_j|| <= rho (closed ball).

    Uniform hash grid with cell size rho; exact, returns both directions.
    """
    if rho <= 0:
        raise ContractError(f"radius must be positive, got {rho}")
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    cells = np.floor(points / rho).astype(np.int64)
    cells -= cells.min(axis=0)
    dims = cells.max(axis=0) + 1
    key = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    order = np.argsort(key, kind="stable")
    sorted_keys = key[order]
    uniq, starts = np.unique(sorted_keys, return_index=True)
    counts = np.diff(np.append(starts, n))

    out_i: list[np.ndarray] = []
    out_j: list[np.ndarray] = []
    rho2 = rho * rho
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                nc = cells + (dx, dy, dz)
                valid = ((nc >= 0) & (nc < dims)).all(axis=1)
                if not valid.any():
                    continue
                pts_idx = np.flatnonzero(valid)
                nkey = (nc[valid, 0] * dims[1] + nc[valid, 1]) * dims[2] + nc[valid, 2]
                pos = np.searchsorted(uniq, nkey)
                found = (pos < len(uniq)) & (uniq[np.minimum(pos, len(uniq) - 1)] == nkey)
                if not found.any():
                    continue
                pts_idx = pts_idx[found]
                pos = pos[found]
                c = counts[pos]
                total = int(c.sum())
                ends = np.cumsum(c)
                flat = np.repeat(starts[pos] - (ends - c), c) + np.arange(total)
                cand_j = order[flat]
                cand_i = np.repeat(pts_idx, c)
                d2 = np.sum((points[cand_i] - points[cand_j]) ** 2, axis=1)
                keep = (d2 > 0) & (d2 <= rho2)
                out_i.append(cand_i[keep])
                out_j.append(cand_j[keep])
    if not out_i:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    return np.concatenate(out_i), np.concatenate(out_j)


def build_graph(pc: PointCloud, rho: float, scheme: str = "full6d") -> LabeledGraph:
    """Radius graph over a point cloud with direction-dependent edge labels.

    Edge (j, i) exists iff 0 < ||p_j - p_i|| <= rho; its label is computed
    from delta = p_j - p_i. The vertex signal is the point features, or a
    zero column when there are none.
    """
    centers, sources = radius_pairs(pc.points, rho)
    delta = pc.points[sources] - pc.points[centers]
    labels = edge_labels_from_offsets(delta, scheme)
    signal = pc.features if pc.features is not None else np.zeros((pc.n, 1))
    edges = np.column_stack([sources, centers])
    g = LabeledGraph(pc.n, edges, signal, labels)
    return finalize(g, np.zeros(LABEL_SCHEMES[scheme]))


def voxelgrid(pc: PointCloud, r: float) -> tuple[PointCloud, np.ndarray]:
    """Replace all points in each occupied voxel with their centroid.

    Voxel ids come from floor(coordinate / r) per axis, so points exactly on
    a boundary belong to the higher cell. Features are averaged. Returns the
    downsampled cloud plus each input point's output-point index.
    """
    if r <= 0:
        raise ContractError(f"voxel resolution must be positive, got {r}")
    ids = np.floor(pc.points / r).astype(np.int64)
    _, member, inv_counts = np.unique(ids, axis=0, return_inverse=True,
                                      return_counts=True)
    member = member.ravel()
    k = len(inv_counts)
    sums = np.zeros((k, 3))
    np.add.at(sums, member, pc.points)
    centroids = sums / inv_counts[:, None]
    feats = None
    if pc.features is not None:
        fs = np.zeros((k, pc.features.shape[1]))
        np.add.at(fs, member, pc.features)
        feats = fs / inv_counts[:, None]
    return PointCloud(centroids, feats), member


def nearest_assignment(fine: np.ndarray, coarse: np.ndarray) -> np.ndarray:
    """Index of the nearest coarse point for each fine point; ties go to the
    lowest index."""
    # chunked to bound the distance matrix size
    out = np.empty(len(fine), dtype=np.intp)
    step = max(1, 2_000_000 // max(1, len(coarse)))
    for lo in range(0, len(fine), step):
        block = fine[lo:lo + step]
        d2 = ((block[:, None, :] - coarse[None, :, :]) ** 2).sum(axis=2)
        out[lo:lo + step] = np.argmin(d2, axis=1)
    return out


def build_pyramid(pc: PointCloud, levels: Sequence[tuple[float, float]],
                  scheme: str = "full6d") -> GraphPyramid:
    """Multi-resolution pyramid: VoxelGrid at strictly increasing resolutions,
    an independent radius graph per level, and nearest-point pooling maps.

    Level 0 is built after an initial VoxelGrid pass at the first resolution
    (this breaks up overly dense clusters in raw scans)."""
    if not levels:
        raise ConfigurationError("pyramid needs at least one (resolution, radius) level")
    res = [r for r, _ in levels]
    if any(b <= a for a, b in zip(res, res[1:])):
        raise ConfigurationError(f"voxel resolutions must be strictly increasing: {res}")
    clouds: list[PointCloud] = []
    graphs: list[LabeledGraph] = []
    maps: list[PoolingMap] = []
    current = pc
    for h, (r, rho) in enumerate(levels):
        coarse, _ = voxelgrid(current, r)
        if h > 0:
            assignment = nearest_assignment(current.points, coarse.points)
            maps.append(PoolingMap(assignment, coarse.n))
        clouds.append(coarse)
        graphs.append(build_graph(coarse, rho, scheme))
        current = coarse
    return GraphPyramid(graphs, maps)


AUGMENT_OPS = ("rotate_z", "scale_jitter", "mirror", "delete_points", "gaussian_noise")


def augment(pc: PointCloud, ops: Sequence[str], rng: np.random.Generator,
            delete_fraction: float = 0.1, noise_sigma: float = 0.0,
            scale_range: tuple[float, float] = (0.9, 1.1)) -> PointCloud:
    """Random training-time transforms, applied in the listed order."""
    if delete_fraction >= 1.0:
        raise ContractError(f"deletion fraction must be < 1, got {delete_fraction}")
    pts = pc.points.copy()
    feats = None if pc.features is None else pc.features.copy()
    for op in ops:
        if op == "rotate_z":
            theta = rng.uniform(0.0, 2.0 * np.pi)
            c, s = np.cos(theta), np.sin(theta)
            rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            pts = pts @ rot.T
        elif op == "scale_jitter":
            pts = pts * rng.uniform(*scale_range)
        elif op == "mirror":
            if rng.random() < 0.5:
                pts = pts * np.array([-1.0, 1.0, 1.0])
        elif op == "delete_points":
            while True:
                keep = rng.random(len(pts)) >= delete_fraction
                if keep.any():
                    break
            pts = pts[keep]
            if feats is not None:
                feats = feats[keep]
        elif op == "gaussian_noise":
            pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
        else:
            raise ConfigurationError(f"unknown augmentation op {op!r}")
    return PointCloud(pts, feats)


def sample_mesh(vertices: np.ndarray, faces: np.ndarray, n: int,
                rng: np.random.Generator) -> PointCloud:
    """Sample n points uniformly by area over triangle faces."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.intp)
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise ContractError("mesh has zero total face area")
    choice = rng.choice(len(faces), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    pts = (a[choice] + u[:, None] * (b[choice] - a[choice])
           + v[:, None] * (c[choice] - a[choice]))
    return PointCloud(pts)
