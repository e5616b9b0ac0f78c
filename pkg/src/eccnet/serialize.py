"""Binary containers for pyramid caches and model checkpoints.

Both formats are little-endian throughout.

Pyramid container (magic ``ECCPYR1\\0``)::

    u32 pyramid_count
    per pyramid:
        u32 level_count
        per level: u32 n, m, s, d
                   i32 src[m], i32 dst[m]      (destination-sorted, self-loops present)
                   f8  labels[m*s] row-major
                   f8  signal[n*d] row-major
        u32 map_count                          (level_count - 1)
        per map:   u32 n_fine, u32 n_coarse, i32 assignment[n_fine]

Checkpoint (magic ``ECCCKPT1``)::

    u32 array_count
    per array: u16 name_len, name utf-8, u8 ndim, u32 dims[ndim], f8 data row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import LoadError
from .graph import GraphPyramid, LabeledGraph, PoolingMap

_PYR_MAGIC = b"ECCPYR1\x00"
_CKPT_MAGIC = b"ECCCKPT1"


def _u32(v: int) -> bytes:
    return struct.pack("<I", v)


def save_pyramids(path: str | Path, pyramids: list[GraphPyramid]) -> None:
    with open(path, "wb") as fh:
        fh.write(_PYR_MAGIC)
        fh.write(_u32(len(pyramids)))
        for pyr in pyramids:
            fh.write(_u32(len(pyr.levels)))
            for g in pyr.levels:
                g._require_finalized()
                fh.write(struct.pack("<4I", g.n, g.m, g.s, g.signal_dim))
                fh.write(g.src.astype("<i4").tobytes())
                fh.write(g.dst.astype("<i4").tobytes())
                fh.write(g.edge_labels.astype("<f8").tobytes())
                fh.write(g.vertex_signal.astype("<f8").tobytes())
            fh.write(_u32(len(pyr.maps)))
            for mp in pyr.maps:
                fh.write(struct.pack("<2I", mp.n_fine, mp.n_coarse))
                fh.write(mp.assignment.astype("<i4").tobytes())


def _take(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise LoadError(f"truncated pyramid container while reading {what}")
    return data


def load_pyramids(path: str | Path) -> list[GraphPyramid]:
    with open(path, "rb") as fh:
        if fh.read(8) != _PYR_MAGIC:
            raise LoadError(f"{path}: not a pyramid container")
        (count,) = struct.unpack("<I", _take(fh, 4, "count"))
        pyramids = []
        for _ in range(count):
            (nlevels,) = struct.unpack("<I", _take(fh, 4, "level count"))
            levels = []
            for _ in range(nlevels):
                n, m, s, d = struct.unpack("<4I", _take(fh, 16, "level header"))
                src = np.frombuffer(_take(fh, 4 * m, "src"), dtype="<i4").astype(np.intp)
                dst = np.frombuffer(_take(fh, 4 * m, "dst"), dtype="<i4").astype(np.intp)
                labels = np.frombuffer(_take(fh, 8 * m * s, "labels"),
                                       dtype="<f8").reshape(m, s).copy()
                signal = np.frombuffer(_take(fh, 8 * n * d, "signal"),
                                       dtype="<f8").reshape(n, d).copy()
                dst_counts = np.bincount(dst, minlength=n).astype(np.intp)
                dst_starts = np.concatenate([[0], np.cumsum(dst_counts)[:-1]]).astype(np.intp)
                if s:
                    distinct, index = np.unique(labels, axis=0, return_inverse=True)
                    index = index.ravel().astype(np.intp)
                else:
                    distinct, index = labels, np.arange(m, dtype=np.intp)
                levels.append(LabeledGraph._assemble(
                    n, src, dst, signal, distinct, index, dst_starts, dst_counts))
            (nmaps,) = struct.unpack("<I", _take(fh, 4, "map count"))
            maps = []
            for _ in range(nmaps):
                nf, nc = struct.unpack("<2I", _take(fh, 8, "map header"))
                assignment = np.frombuffer(_take(fh, 4 * nf, "assignment"),
                                           dtype="<i4").astype(np.intp)
                maps.append(PoolingMap(assignment, nc))
            pyramids.append(GraphPyramid(levels, maps))
    return pyramids


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(_u32(len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(8) != _CKPT_MAGIC:
            raise LoadError(f"{path}: not a checkpoint file")
        (count,) = struct.unpack("<I", _take(fh, 4, "count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _take(fh, 2, "name length"))
            name = _take(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _take(fh, 1, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _take(fh, 4 * ndim, "shape"))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_take(fh, 8 * size, name), dtype="<f8")
            arrays[name] = data.reshape(shape).copy()
    return arrays
