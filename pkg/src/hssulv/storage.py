"""Versioned binary container for compressed matrices (test fixtures).

Layout (little endian, 8-byte alignment not required):

    magic   4 bytes   b"HSSB"
    version u32       currently 1
    header  3 x u64   n, nleaf, max_level
    leaf diagonal blocks, node order:    each block as [u64 rows, u64 cols, f64 data]
    bases, level max_level..1, node order: [u64 size, u64 redundant_dim,
                                            u64 skeleton_dim, f64 data (size*size)]
    couplings, level max_level..1, left sibling per pair:
                                          [u64 rows, u64 cols, f64 data]

Matrix data is row major.  The sibling's transposed coupling is rebuilt on
load, matching how construction stores it.
"""

from __future__ import annotations

import struct

import numpy as np

from .construct import BlockBasis, HssMatrix

__all__ = ["save_hss", "load_hss", "FORMAT_VERSION"]

MAGIC = b"HSSB"
FORMAT_VERSION = 1


def _write_matrix(fh, a: np.ndarray):
    a = np.ascontiguousarray(a, dtype=np.float64)
    fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
    fh.write(a.tobytes())


def _read_matrix(fh) -> np.ndarray:
    rows, cols = struct.unpack("<QQ", fh.read(16))
    data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError("truncated matrix payload")
    return data.reshape(rows, cols).copy()


def save_hss(h: HssMatrix, path):
    """Write a multi-level compressed matrix to the binary container."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<QQQ", h.n, h.nleaf, h.max_level))
        for block in h.leaf_diag:
            _write_matrix(fh, block)
        for level in range(h.max_level, 0, -1):
            for node in range(1 << level):
                basis = h.bases[(level, node)]
                fh.write(struct.pack("<QQQ", basis.size, basis.redundant_dim,
                                     basis.skeleton_dim))
                _write_matrix(fh, basis.q)
        for level in range(h.max_level, 0, -1):
            for parent in range(1 << (level - 1)):
                _write_matrix(fh, h.coupling[(level, 2 * parent)])


def load_hss(path) -> HssMatrix:
    """Read a multi-level compressed matrix from the binary container."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("not an HSS container (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported container version {version}")
        n, nleaf, max_level = struct.unpack("<QQQ", fh.read(24))
        leaf_diag = tuple(_read_matrix(fh) for _ in range(1 << max_level))
        bases = {}
        for level in range(max_level, 0, -1):
            for node in range(1 << level):
                size, rd, sk = struct.unpack("<QQQ", fh.read(24))
                q = _read_matrix(fh)
                if q.shape != (size, size):
                    raise ValueError("basis payload shape mismatch")
                bases[(level, node)] = BlockBasis(q, rd, sk)
        coupling = {}
        for level in range(max_level, 0, -1):
            for parent in range(1 << (level - 1)):
                block = _read_matrix(fh)
                left, right = 2 * parent, 2 * parent + 1
                coupling[(level, left)] = block
                coupling[(level, right)] = np.ascontiguousarray(block.T)
        h = HssMatrix(int(nleaf), int(max_level), leaf_diag, bases, coupling)
        if h.n != n:
            raise ValueError("container header inconsistent with payload")
        return h
