"""Shared-basis block low-rank (BLR2) and multi-level HSS construction.

Both formats keep exact dense diagonal blocks and compress everything off
the block diagonal (weak admissibility).  Each block row shares one
orthonormal basis, split into redundant and skeleton columns; off-diagonal
blocks are stored only through their small skeleton coupling
``S_ij = Us_i^T A_ij Us_j``.

The multi-level format nests bases across levels: an upper-level basis is
a transfer matrix acting on the stacked skeleton coefficients of its two
children, so a raw-coordinate basis is never materialized.  Upper-level
bases are built by compressing the admissible interactions restricted to
the children's skeletons on both sides, which keeps construction memory
at O(N * nleaf) plus the skeleton interaction table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointSet
from .kernels import KernelSpec, kernel_matrix
from .linalg import pivoted_qr_full

__all__ = [
    "BlockBasis",
    "Blr2Matrix",
    "HssMatrix",
    "build_shared_basis",
    "build_blr2",
    "build_hss",
    "matvec",
    "construct_error",
]

DENSE_STREAM_LIMIT = 65536


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BlockBasis:
    """Orthonormal square basis of one block row, columns ``[redundant | skeleton]``."""

    q: np.ndarray
    redundant_dim: int
    skeleton_dim: int

    def __post_init__(self):
        q = _freeze(self.q)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"basis must be square, got {q.shape}")
        if self.redundant_dim + self.skeleton_dim != q.shape[1]:
            raise ValueError("redundant_dim + skeleton_dim must equal the basis size")
        object.__setattr__(self, "q", q)

    @property
    def size(self) -> int:
        return self.q.shape[0]

    @property
    def redundant(self) -> np.ndarray:
        return self.q[:, : self.redundant_dim]

    @property
    def skeleton(self) -> np.ndarray:
        return self.q[:, self.redundant_dim :]


def build_shared_basis(row_block: np.ndarray, max_rank: int) -> BlockBasis:
    """Shared basis of one block row from its stacked admissible blocks.

    ``row_block`` holds the admissible blocks of the row stacked as an
    ``(m, block_size)`` matrix (each block transposed, equivalently the
    matching block column stacked).  A column-pivoted QR of its transpose
    yields the skeleton columns; the remaining columns of the full square
    Q complete the orthonormal basis.
    """
    row_block = np.asarray(row_block, dtype=np.float64)
    if row_block.ndim != 2 or row_block.size == 0:
        raise ValueError("row_block is empty: no admissible blocks to compress")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    q, rank = pivoted_qr_full(row_block.T)
    size = q.shape[0]
    rank = min(rank, max_rank, size)
    # Reorder to [redundant | skeleton].
    ordered = np.hstack([q[:, rank:], q[:, :rank]])
    return BlockBasis(ordered, size - rank, rank)


def _identity_basis(n: int) -> BlockBasis:
    # Degenerate single-block case: everything is skeleton, nothing to compress.
    return BlockBasis(np.eye(n), 0, n)


@dataclass(frozen=True)
class Blr2Matrix:
    """Single-level shared-basis format: dense diagonal, coupled skeletons.

    ``coupling[(i, j)]`` holds ``S_ij`` for every ordered pair ``i != j``
    with ``coupling[(j, i)]`` the exact transpose.
    """

    nleaf: int
    diag: tuple
    bases: tuple
    coupling: dict

    @property
    def nblocks(self) -> int:
        return len(self.diag)

    @property
    def n(self) -> int:
        return sum(d.shape[0] for d in self.diag)

    def block_range(self, i: int) -> tuple[int, int]:
        return i * self.nleaf, (i + 1) * self.nleaf


@dataclass(frozen=True)
class HssMatrix:
    """Multi-level nested-basis format.

    ``bases[(level, i)]`` is the shared basis of node ``i`` at ``level``
    (levels run 1..max_level, leaves at max_level).  Leaf bases act on raw
    coordinates; upper bases are transfer matrices on the stacked skeleton
    coefficients of the node's two children.  ``coupling[(level, i)]``
    couples node ``i`` to its sibling, with the sibling entry the exact
    transpose.
    """

    nleaf: int
    max_level: int
    leaf_diag: tuple
    bases: dict
    coupling: dict

    @property
    def n(self) -> int:
        return self.nleaf * (1 << self.max_level)

    def num_nodes(self, level: int) -> int:
        return 1 << level

    def skeleton_dim(self, level: int, node: int) -> int:
        return self.bases[(level, node)].skeleton_dim

    def node_width(self, level: int, node: int) -> int:
        return self.bases[(level, node)].size


def _leaf_pass(spec: KernelSpec, ps: PointSet, nleaf: int, max_rank: int,
               both_orientations: bool = True):
    """Exact diagonals, leaf bases and all skeleton couplings at the leaf cut.

    Kernel rows are materialized one block row at a time.  Couplings for
    pairs (i, j) with j < i are projected while row i is in memory, which
    avoids a second kernel pass; (j, i) is the exact transpose and is
    stored only when ``both_orientations`` is set.
    """
    n = ps.n
    nb = n // nleaf
    pts = ps.points
    diags, bases = [], []
    coupling = {}
    for i in range(nb):
        r0, r1 = i * nleaf, (i + 1) * nleaf
        row = kernel_matrix(spec, pts[r0:r1], pts)
        diags.append(_freeze(row[:, r0:r1]))
        adm = np.hstack([row[:, :r0], row[:, r1:]])
        basis = build_shared_basis(adm.T, max_rank)
        bases.append(basis)
        proj = basis.skeleton.T @ row
        for j in range(i):
            c0, c1 = j * nleaf, (j + 1) * nleaf
            block = proj[:, c0:c1] @ bases[j].skeleton
            coupling[(i, j)] = _freeze(block)
            if both_orientations:
                coupling[(j, i)] = _freeze(block.T)
    return diags, bases, coupling


def build_blr2(spec: KernelSpec, ps: PointSet, nleaf: int, max_rank: int) -> Blr2Matrix:
    """Compress a kernel matrix into the single-level shared-basis format."""
    n = ps.n
    if nleaf <= 0 or n % nleaf:
        raise ValueError(f"n={n} is not divisible by nleaf={nleaf}")
    if max_rank > nleaf:
        raise ValueError(f"max_rank={max_rank} exceeds nleaf={nleaf}")
    if n == nleaf:
        block = kernel_matrix(spec, ps.points, ps.points)
        return Blr2Matrix(nleaf, (_freeze(block),), (_identity_basis(n),), {})
    diags, bases, coupling = _leaf_pass(spec, ps, nleaf, max_rank)
    return Blr2Matrix(nleaf, tuple(diags), tuple(bases), coupling)


def _coupling_table(bases: list, coupling: dict) -> tuple[np.ndarray, np.ndarray]:
    """Pack pairwise couplings into one matrix indexed by skeleton offsets."""
    ranks = np.array([b.skeleton_dim for b in bases])
    offs = np.concatenate([[0], np.cumsum(ranks)])
    table = np.zeros((offs[-1], offs[-1]))
    for (i, j), block in coupling.items():
        table[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = block
        if (j, i) not in coupling:
            table[offs[j]:offs[j + 1], offs[i]:offs[i + 1]] = block.T
    return table, offs


def _transfer_pass(table: np.ndarray, offs: np.ndarray, max_rank: int):
    """One level of nested-basis construction on the skeleton interactions.

    For each parent, the stacked rows of its two children (restricted to
    all non-descendant skeleton columns) are compressed into a transfer
    basis; the interaction table is then projected onto the new skeletons
    on both sides.
    """
    nb = len(offs) - 1
    nparents = nb // 2
    bases = []
    for p in range(nparents):
        r0, r1 = offs[2 * p], offs[2 * p + 2]
        z = np.hstack([table[r0:r1, :r0], table[r0:r1, r1:]])
        bases.append(build_shared_basis(z.T, max_rank))
    new_ranks = np.array([b.skeleton_dim for b in bases])
    new_offs = np.concatenate([[0], np.cumsum(new_ranks)])
    rows = np.empty((new_offs[-1], table.shape[1]))
    for p in range(nparents):
        r0, r1 = offs[2 * p], offs[2 * p + 2]
        rows[new_offs[p]:new_offs[p + 1]] = bases[p].skeleton.T @ table[r0:r1]
    new_table = np.empty((new_offs[-1], new_offs[-1]))
    for p in range(nparents):
        r0, r1 = offs[2 * p], offs[2 * p + 2]
        new_table[:, new_offs[p]:new_offs[p + 1]] = rows[:, r0:r1] @ bases[p].skeleton
    for p in range(nparents):
        new_table[new_offs[p]:new_offs[p + 1], new_offs[p]:new_offs[p + 1]] = 0.0
    return bases, new_table, new_offs


def _sibling_couplings(level: int, table: np.ndarray, offs: np.ndarray, out: dict):
    nb = len(offs) - 1
    for p in range(nb // 2):
        left, right = 2 * p, 2 * p + 1
        block = table[offs[left]:offs[left + 1], offs[right]:offs[right + 1]]
        out[(level, left)] = _freeze(block)
        out[(level, right)] = _freeze(block.T)


def build_hss(spec: KernelSpec, ps: PointSet, nleaf: int, max_rank: int) -> HssMatrix:
    """Compress a kernel matrix into the multi-level nested-basis format.

    Requires ``n == nleaf * 2**L`` with ``L >= 1``.  The same rank cap is
    applied at every level; with ``max_rank == nleaf`` (and caps never
    binding above) the representation is exact up to rounding.
    """
    if max_rank > nleaf:
        raise ValueError(f"max_rank={max_rank} exceeds nleaf={nleaf}")
    max_level = ps.tree_depth(nleaf)
    diags, leaf_bases, leaf_coupling = _leaf_pass(spec, ps, nleaf, max_rank,
                                                  both_orientations=False)
    bases = {(max_level, i): b for i, b in enumerate(leaf_bases)}
    coupling: dict = {}
    table, offs = _coupling_table(leaf_bases, leaf_coupling)
    del leaf_coupling
    _sibling_couplings(max_level, table, offs, coupling)
    for level in range(max_level - 1, 0, -1):
        lvl_bases, table, offs = _transfer_pass(table, offs, max_rank)
        for i, b in enumerate(lvl_bases):
            bases[(level, i)] = b
        _sibling_couplings(level, table, offs, coupling)
    return HssMatrix(nleaf, max_level, tuple(diags), bases, coupling)


def _matvec_blr2(m: Blr2Matrix, x: np.ndarray) -> np.ndarray:
    nb = m.nblocks
    segs = [x[m.block_range(i)[0]:m.block_range(i)[1]] for i in range(nb)]
    coeffs = [m.bases[i].skeleton.T @ segs[i] for i in range(nb)]
    y = np.empty_like(x)
    for i in range(nb):
        acc = np.zeros_like(coeffs[i])
        for j in range(nb):
            if j != i:
                acc += m.coupling[(i, j)] @ coeffs[j]
        r0, r1 = m.block_range(i)
        y[r0:r1] = m.diag[i] @ segs[i] + m.bases[i].skeleton @ acc
    return y


def _matvec_hss(h: HssMatrix, x: np.ndarray) -> np.ndarray:
    L = h.max_level
    nleaf = h.nleaf
    # Upward sweep: skeleton coefficients per node, leaves first.
    coeffs = {}
    for i in range(1 << L):
        coeffs[(L, i)] = h.bases[(L, i)].skeleton.T @ x[i * nleaf:(i + 1) * nleaf]
    for level in range(L - 1, 0, -1):
        for i in range(1 << level):
            stacked = np.concatenate([coeffs[(level + 1, 2 * i)],
                                      coeffs[(level + 1, 2 * i + 1)]])
            coeffs[(level, i)] = h.bases[(level, i)].skeleton.T @ stacked
    # Sibling couplings at every level.
    partial = {}
    for level in range(1, L + 1):
        for i in range(1 << level):
            sib = i ^ 1
            partial[(level, i)] = h.coupling[(level, i)] @ coeffs[(level, sib)]
    # Downward sweep: push accumulated skeleton results to the children.
    for level in range(1, L):
        for i in range(1 << level):
            down = h.bases[(level, i)].skeleton @ partial[(level, i)]
            k = coeffs[(level + 1, 2 * i)].shape[0]
            partial[(level + 1, 2 * i)] += down[:k]
            partial[(level + 1, 2 * i + 1)] += down[k:]
    y = np.empty_like(x)
    for i in range(1 << L):
        r0, r1 = i * nleaf, (i + 1) * nleaf
        y[r0:r1] = h.leaf_diag[i] @ x[r0:r1] + h.bases[(L, i)].skeleton @ partial[(L, i)]
    return y


def matvec(m, x: np.ndarray) -> np.ndarray:
    """Apply the compressed operator to a vector or a block of vectors."""
    x = np.asarray(x, dtype=np.float64)
    n = m.n
    if x.shape[0] != n:
        raise ValueError(f"operand has leading dimension {x.shape[0]}, expected {n}")
    flat = x.ndim == 1
    work = x.reshape(n, -1)
    if isinstance(m, Blr2Matrix):
        out = _matvec_blr2(m, work)
    elif isinstance(m, HssMatrix):
        if m.max_level == 0:
            out = m.leaf_diag[0] @ work
        else:
            out = _matvec_hss(m, work)
    else:
        raise TypeError(f"unsupported operand type {type(m)!r}")
    return out[:, 0] if flat else out


def construct_error(m, spec: KernelSpec, ps: PointSet, seed: int) -> float:
    """Relative compression error measured with a random probe vector.

    Returns ``||A b - M b|| / ||A b||`` where ``A`` is the exact kernel
    matrix (applied row-streaming, never fully materialized), ``M`` the
    compressed operator and ``b`` standard normal from ``seed``.
    """
    n = ps.n
    if n > DENSE_STREAM_LIMIT:
        raise ValueError(f"n={n} exceeds the streaming dense guard {DENSE_STREAM_LIMIT}")
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n)
    width = m.nleaf
    exact = np.empty(n)
    pts = ps.points
    for start in range(0, n, width):
        stop = start + width
        exact[start:stop] = kernel_matrix(spec, pts[start:stop], pts) @ b
    approx = matvec(m, b)
    return float(np.linalg.norm(exact - approx) / np.linalg.norm(exact))
