"""Dataset loaders: TU-style graph benchmarks, IDX raster digits as point
clouds, and point-cloud files (CSV and binary little-endian PLY).

The TU text format is the community interchange for graph classification:
``<name>_A.txt`` holds 1-based directed edge pairs, ``_graph_indicator.txt``
assigns vertices to graphs, ``_graph_labels.txt`` gives one class per graph,
and optional ``_node_labels.txt`` / ``_edge_labels.txt`` carry categorical
labels. Categorical labels become one-hot vectors; edge labels get one extra
category reserved for self-loops.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LoadError
from .graph import LabeledGraph, finalize
from .pointcloud import PointCloud


@dataclass
class TuDataset:
    graphs: list[LabeledGraph]
    targets: np.ndarray
    vertex_categories: int
    edge_categories: int  # input categories, excluding the self-loop slot
    name: str

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def label_width(self) -> int:
        """Edge label width s: input categories plus the self-loop category."""
        return self.edge_categories + 1

    def summary(self) -> dict:
        nv = [g.n for g in self.graphs]
        # undirected edge count: directed edges without self-loops, halved
        ne = [(g.m - int(np.sum(g.src == g.dst))) / 2 for g in self.graphs]
        return {
            "graphs": len(self.graphs),
            "mean_vertices": float(np.mean(nv)),
            "mean_edges": float(np.mean(ne)),
            "classes": int(len(np.unique(self.targets))),
            "vertex_categories": self.vertex_categories,
            "edge_categories": self.edge_categories,
        }


def _read_int_rows(path: Path, what: str) -> np.ndarray:
    if not path.exists():
        raise LoadError(f"missing required file: {path}")
    try:
        return np.loadtxt(path, dtype=np.int64, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise LoadError(f"cannot parse {what} file {path}: {exc}") from exc


def load_tu(directory: str | Path) -> TuDataset:
    """Load a TU-format dataset directory named after its file prefix."""
    directory = Path(directory)
    name = directory.name
    edges = _read_int_rows(directory / f"{name}_A.txt", "edge list")
    indicator = _read_int_rows(directory / f"{name}_graph_indicator.txt",
                               "graph indicator").ravel()
    graph_labels = _read_int_rows(directory / f"{name}_graph_labels.txt",
                                  "graph labels").ravel()

    n_total = len(indicator)
    if edges.size and (edges.min() < 1 or edges.max() > n_total):
        raise LoadError(f"edge list references vertex ids outside 1..{n_total}")
    if np.any(np.diff(indicator) < 0):
        raise LoadError("graph indicator must assign contiguous vertex blocks")
    edges = edges - 1  # to 0-based
    graph_ids = np.unique(indicator)
    if not np.array_equal(graph_ids, np.arange(1, len(graph_ids) + 1)):
        raise LoadError("graph indicator ids must be contiguous starting at 1")
    num_graphs = len(graph_ids)
    if len(graph_labels) != num_graphs:
        raise LoadError(
            f"{len(graph_labels)} graph labels for {num_graphs} graphs")

    node_label_path = directory / f"{name}_node_labels.txt"
    if node_label_path.exists():
        node_labels = _read_int_rows(node_label_path, "node labels").ravel()
        if len(node_labels) != n_total:
            raise LoadError(f"{len(node_labels)} node labels for {n_total} vertices")
        node_cats = np.unique(node_labels)
        node_map = {c: i for i, c in enumerate(node_cats)}
        v_cat = np.array([node_map[c] for c in node_labels])
        d0 = len(node_cats)
    else:
        v_cat = np.zeros(n_total, dtype=np.int64)
        d0 = 1

    edge_label_path = directory / f"{name}_edge_labels.txt"
    if edge_label_path.exists():
        edge_labels = _read_int_rows(edge_label_path, "edge labels").ravel()
        if len(edge_labels) != len(edges):
            raise LoadError(f"{len(edge_labels)} edge labels for {len(edges)} edges")
        edge_cats = np.unique(edge_labels)
        edge_map = {c: i for i, c in enumerate(edge_cats)}
        e_cat = np.array([edge_map[c] for c in edge_labels])
        n_edge_cats = len(edge_cats)
    else:
        e_cat = np.zeros(len(edges), dtype=np.int64)
        n_edge_cats = 1

    # edge direction in the file is (row -> column); both directions of an
    # undirected edge appear as two rows
    s = n_edge_cats + 1  # extra category for self-loops
    classes = np.unique(graph_labels)
    class_map = {c: i for i, c in enumerate(classes)}
    targets = np.array([class_map[c] for c in graph_labels], dtype=np.intp)

    first_vertex = np.searchsorted(indicator, graph_ids)
    vertex_graph = indicator - 1
    edge_graph = vertex_graph[edges[:, 0]]
    if np.any(edge_graph != vertex_graph[edges[:, 1]]):
        raise LoadError("an edge crosses two graphs")

    graphs: list[LabeledGraph] = []
    loop_label = np.zeros(s)
    loop_label[-1] = 1.0
    for gi in range(num_graphs):
        vmask = vertex_graph == gi
        base = first_vertex[gi]
        n = int(vmask.sum())
        emask = edge_graph == gi
        local = edges[emask] - base
        if local.size and (local.min() < 0 or local.max() >= n):
            raise LoadError(f"graph {gi + 1} has a dangling vertex id")
        labels = np.zeros((int(emask.sum()), s))
        labels[np.arange(len(labels)), e_cat[emask]] = 1.0
        signal = np.zeros((n, d0))
        signal[np.arange(n), v_cat[vmask]] = 1.0
        g = LabeledGraph(n, local, signal, labels)
        graphs.append(finalize(g, loop_label))
    return TuDataset(graphs, targets, d0, n_edge_cats, name)


def _read_idx(path: str | Path, expect_magic: int) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(4)
        if len(header) != 4:
            raise LoadError(f"{path}: truncated IDX header")
        magic = struct.unpack(">i", header)[0]
        if magic != expect_magic:
            raise LoadError(f"{path}: bad IDX magic {magic}, expected {expect_magic}")
        ndim = magic % 256
        dims = struct.unpack(f">{ndim}i", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    if data.size != int(np.prod(dims)):
        raise LoadError(f"{path}: payload size {data.size} != header dims {dims}")
    return data.reshape(dims)


def load_mnist(images_path: str | Path, labels_path: str | Path,
               sparse: bool = False) -> tuple[list[PointCloud], np.ndarray]:
    """Raster digits as point clouds: one point (x, y, 0) per pixel with the
    intensity as the vertex signal.

    With ``sparse`` the zero-intensity points are discarded; images that end
    up empty are skipped with a warning.
    """
    images = _read_idx(images_path, 2051)
    labels = _read_idx(labels_path, 2049).astype(np.intp)
    if images.shape[0] != labels.shape[0]:
        raise LoadError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    rows, cols = images.shape[1], images.shape[2]
    ys, xs = np.divmod(np.arange(rows * cols), cols)
    base = np.column_stack([xs, ys, np.zeros(rows * cols)]).astype(np.float64)
    clouds: list[PointCloud] = []
    kept: list[int] = []
    for i in range(images.shape[0]):
        intens = images[i].reshape(-1).astype(np.float64)
        if sparse:
            nz = intens > 0
            if not nz.any():
                warnings.warn(f"image {i} is empty in sparse mode; skipped")
                continue
            clouds.append(PointCloud(base[nz], intens[nz]))
        else:
            clouds.append(PointCloud(base, intens))
        kept.append(i)
    return clouds, labels[kept]


def write_idx_images(path: str | Path, images: np.ndarray) -> None:
    """Inverse of the IDX image reader (fixtures and synthetic corpora)."""
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">i", 2051))
        fh.write(struct.pack(">3i", *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">i", 2049))
        fh.write(struct.pack(">i", len(labels)))
        fh.write(labels.tobytes())


def read_cloud_csv(path: str | Path) -> PointCloud:
    """CSV rows of x,y,z with an optional fourth intensity column."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] not in (3, 4):
        raise LoadError(f"{path}: expected 3 or 4 columns, got {data.shape[1]}")
    feats = data[:, 3:] if data.shape[1] == 4 else None
    return PointCloud(data[:, :3], feats)


def write_cloud_csv(path: str | Path, pc: PointCloud) -> None:
    cols = pc.points if pc.features is None else np.column_stack(
        [pc.points, pc.features[:, 0]])
    np.savetxt(path, cols, delimiter=",", fmt="%.9g")


def read_cloud_ply(path: str | Path) -> PointCloud:
    """Binary little-endian PLY with float32 x, y, z and optional uchar
    intensity vertex properties."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise LoadError(f"{path}: not a PLY file")
        fmt = fh.readline().strip()
        if fmt != b"format binary_little_endian 1.0":
            raise LoadError(f"{path}: unsupported PLY format line {fmt!r}")
        count = None
        props: list[tuple[str, str]] = []
        while True:
            line = fh.readline()
            if not line:
                raise LoadError(f"{path}: unterminated PLY header")
            line = line.strip()
            if line == b"end_header":
                break
            parts = line.decode("ascii", "replace").split()
            if parts[:2] == ["element", "vertex"]:
                count = int(parts[2])
            elif parts[0] == "property" and count is not None:
                props.append((parts[1], parts[2]))
            elif parts[0] == "element":
                count = None  # properties of later elements are ignored
        names = [name for _, name in props]
        if count is None or names[:3] != ["x", "y", "z"]:
            raise LoadError(f"{path}: need a vertex element with x, y, z properties")
        np_types = {"float": "<f4", "float32": "<f4", "uchar": "u1", "uint8": "u1",
                    "double": "<f8", "int": "<i4", "int32": "<i4"}
        try:
            dtype = np.dtype([(name, np_types[t]) for t, name in props])
        except KeyError as exc:
            raise LoadError(f"{path}: unsupported property type {exc}") from exc
        raw = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype, count=count)
    pts = np.column_stack([raw["x"], raw["y"], raw["z"]]).astype(np.float64)
    feats = raw["intensity"].astype(np.float64) if "intensity" in names else None
    return PointCloud(pts, feats)


def write_cloud_ply(path: str | Path, pc: PointCloud) -> None:
    has_int = pc.features is not None
    with open(path, "wb") as fh:
        fh.write(b"ply\n")
        fh.write(b"format binary_little_endian 1.0\n")
        fh.write(f"element vertex {pc.n}\n".encode())
        fh.write(b"property float x\nproperty float y\nproperty float z\n")
        if has_int:
            fh.write(b"property uchar intensity\n")
        fh.write(b"end_header\n")
        fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
        if has_int:
            fields.append(("intensity", "u1"))
        rec = np.empty(pc.n, dtype=np.dtype(fields))
        rec["x"], rec["y"], rec["z"] = pc.points.T.astype(np.float32)
        if has_int:
            rec["intensity"] = np.clip(pc.features[:, 0], 0, 255).astype(np.uint8)
        fh.write(rec.tobytes())


def load_cloud_directory(root: str | Path) -> tuple[list[PointCloud], np.ndarray, list[str]]:
    """Directory-of-files point-cloud dataset: one subdirectory per class,
    containing .csv or .ply clouds."""
    root = Path(root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise LoadError(f"{root}: no class subdirectories")
    clouds, targets = [], []
    names = [p.name for p in class_dirs]
    for ci, cdir in enumerate(class_dirs):
        files = sorted(list(cdir.glob("*.csv")) + list(cdir.glob("*.ply")))
        for f in files:
            clouds.append(read_cloud_csv(f) if f.suffix == ".csv" else read_cloud_ply(f))
            targets.append(ci)
    if not clouds:
        raise LoadError(f"{root}: no .csv or .ply files found")
    return clouds, np.asarray(targets, dtype=np.intp), names
