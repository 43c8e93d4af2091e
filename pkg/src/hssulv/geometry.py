"""Uniform 2D grids ordered by recursive coordinate bisection.

The solver operates on contiguous index blocks, so the point ordering is
what makes off-diagonal blocks low rank: points are sorted by recursively
splitting the longest bounding-box axis at the median.  Sibling index
ranges are then spatially disjoint and every node of the implicit binary
index tree covers a compact patch of the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PointSet", "generate_grid"]


def _bisection_order(points: np.ndarray) -> np.ndarray:
    """Permutation ordering ``points`` by recursive median bisection.

    Each even-sized subset is split into two equal halves along its longer
    bounding-box axis (ties prefer x).  Sorting is stable, so the result
    is deterministic.
    """
    out = []

    def rec(sel):
        if sel.size <= 1 or sel.size % 2 == 1:
            out.append(sel)
            return
        sub = points[sel]
        extent = sub.max(axis=0) - sub.min(axis=0)
        axis = 0 if extent[0] >= extent[1] else 1
        srt = sel[np.argsort(sub[:, axis], kind="stable")]
        half = sel.size // 2
        rec(srt[:half])
        rec(srt[half:])

    rec(np.arange(len(points)))
    return np.concatenate(out)


@dataclass(frozen=True)
class PointSet:
    """Ordered 2D geometry with an implicit binary index tree.

    ``points`` are stored in bisection order, so tree node ``(level, i)``
    owns the contiguous index range ``[i*w, (i+1)*w)`` with
    ``w = n / 2**level`` whenever ``n`` is divisible by ``2**level``.
    Immutable after construction; safe to share across threads.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n

    def num_nodes(self, level: int) -> int:
        return 1 << level

    def node_range(self, level: int, node: int) -> tuple[int, int]:
        """Index range owned by tree node ``(level, node)``."""
        width, rem = divmod(self.n, 1 << level)
        if rem:
            raise ValueError(
                f"n={self.n} has no complete level {level}: not divisible by {1 << level}"
            )
        if not 0 <= node < (1 << level):
            raise ValueError(f"node {node} out of range at level {level}")
        return node * width, (node + 1) * width

    def tree_depth(self, nleaf: int) -> int:
        """Level count L satisfying ``n == nleaf * 2**L`` with L >= 1."""
        if nleaf <= 0:
            raise ValueError("nleaf must be positive")
        ratio, rem = divmod(self.n, nleaf)
        level = ratio.bit_length() - 1
        if rem or (1 << level) != ratio or level < 1:
            valid = [nleaf << k for k in range(1, 15)]
            lo = max((v for v in valid if v <= self.n), default=valid[0])
            hi = min((v for v in valid if v >= self.n), default=valid[-1])
            raise ValueError(
                f"n={self.n} is not nleaf * 2**L for nleaf={nleaf}; "
                f"nearest valid sizes are {lo} and {hi}"
            )
        return level


def _grid_shape(n: int) -> tuple[int, int] | None:
    root = math.isqrt(n)
    if root * root == n:
        return root, root
    if n % 2 == 0:
        half_root = math.isqrt(n // 2)
        if 2 * half_root * half_root == n:
            return 2 * half_root, half_root
    return None


def _nearest_grid_sizes(n: int) -> tuple[int, int]:
    valid = sorted(
        {m * m for m in range(1, math.isqrt(2 * n) + 2)}
        | {2 * m * m for m in range(1, math.isqrt(n) + 2)}
    )
    below = max((v for v in valid if v < n), default=1)
    above = min((v for v in valid if v > n), default=valid[-1])
    return below, above


def generate_grid(n: int, side: float = 1.0) -> PointSet:
    """Uniform grid with equal spacing in both axes, bisection ordered.

    ``n`` must be a perfect square (square grid) or twice one (2:1 grid,
    which keeps power-of-two sizes like 512 or 2048 uniform).  The grid
    spans ``[0, side]`` along x; a 2:1 grid spans half that along y with
    the same spacing.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if side <= 0:
        raise ValueError("side must be positive")
    shape = _grid_shape(n)
    if shape is None:
        below, above = _nearest_grid_sizes(n)
        raise ValueError(
            f"n={n} does not form a uniform near-square grid; "
            f"nearest valid sizes are {below} and {above}"
        )
    nx, ny = shape
    h = side if nx == 1 else side / (nx - 1)
    xs = np.arange(nx) * h
    ys = np.arange(ny) * h
    pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    order = _bisection_order(pts)
    return PointSet(pts[order])
