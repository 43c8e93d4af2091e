"""Small dense building blocks: Cholesky, triangular solves, pivoted QR,
partial Cholesky and permutations.

Everything here is a deterministic pure function backed by LAPACK through
scipy; the value added is the contracts (explicit pivot failures, rank
truncation, block splits) that the factorization layers rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import dpotrf

__all__ = [
    "NotPositiveDefiniteError",
    "PartialFactorResult",
    "cholesky",
    "tri_solve_lower",
    "pivoted_qr_truncated",
    "pivoted_qr_full",
    "partial_cholesky",
    "apply_permutation",
]

SYMMETRY_RTOL = 1e-12
RANK_RTOL = 1e-14


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky hit a non-positive pivot; the operator is not SPD."""

    def __init__(self, pivot_index: int, pivot_value: float, context: str = ""):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        self.context = context
        where = f" in {context}" if context else ""
        super().__init__(
            f"non-positive pivot {pivot_value:.6e} at index {pivot_index}{where}"
        )


def _require_square(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def _require_symmetric(a: np.ndarray, name: str):
    # inputs symmetric to 1e-12 relative must pass; allow slack above that
    if a.size == 0:
        return
    scale = np.abs(a).max()
    if scale == 0:
        return
    if np.abs(a - a.T).max() > 10 * SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric (beyond {SYMMETRY_RTOL:g} relative)")


def _failed_pivot_value(a: np.ndarray, k: int) -> float:
    # Recompute the failing pivot from the leading minor that did succeed.
    if k == 0:
        return float(a[0, 0])
    low, _ = dpotrf(a[:k, :k], lower=1, clean=1)
    w = scipy.linalg.solve_triangular(low, a[:k, k], lower=True)
    return float(a[k, k] - w @ w)


def cholesky(a: np.ndarray, context: str = "") -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises :class:`NotPositiveDefiniteError` with pivot index and value on
    failure; there is no automatic diagonal shift.
    """
    a = _require_square(a, "a")
    _require_symmetric(a, "a")
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    c, info = dpotrf(a, lower=1, clean=1)
    if info > 0:
        k = info - 1
        raise NotPositiveDefiniteError(k, _failed_pivot_value(a, k), context)
    if info < 0:
        raise ValueError(f"invalid input to Cholesky (lapack info={info})")
    return c


def tri_solve_lower(low: np.ndarray, b: np.ndarray, side: str = "left",
                    transposed: bool = False) -> np.ndarray:
    """Solve with a lower-triangular factor on either side.

    side="left":  L   X = B   (or L^T X = B when transposed)
    side="right": X L   = B   (or X L^T = B when transposed)
    """
    low = _require_square(low, "low")
    b = np.asarray(b, dtype=np.float64)
    if low.shape[0] == 0:
        return b.copy()
    if np.any(np.diag(low) == 0.0):
        raise ValueError("triangular factor has a zero diagonal entry")
    if side == "left":
        return scipy.linalg.solve_triangular(low, b, lower=True,
                                             trans="T" if transposed else "N")
    if side == "right":
        # X L = B  <=>  L^T X^T = B^T, and X L^T = B  <=>  L X^T = B^T.
        out = scipy.linalg.solve_triangular(low, b.T, lower=True,
                                            trans="N" if transposed else "T")
        return np.ascontiguousarray(out.T)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _numerical_rank(r_diag: np.ndarray) -> int:
    if r_diag.size == 0:
        return 0
    mags = np.abs(r_diag)
    top = mags[0]
    if top == 0:
        return 0
    return int(np.count_nonzero(mags > RANK_RTOL * top))


def pivoted_qr_full(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Complete orthonormal basis from a column-pivoted QR.

    Returns the full square Q (shape ``m x m``) whose leading columns span
    the dominant column space of ``a``, plus the numerical rank detected
    from the R diagonal at relative tolerance ``RANK_RTOL``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("a must be 2-D")
    m, n = a.shape
    if m == 0 or n == 0:
        return np.eye(m), 0
    q, r, _ = scipy.linalg.qr(a, mode="full", pivoting=True)
    return q, _numerical_rank(np.diag(r))


def pivoted_qr_truncated(a: np.ndarray, max_rank: int) -> tuple[np.ndarray, int]:
    """Greedy rank-capped column basis via column-pivoted QR.

    The achieved rank is ``min(max_rank, numerical rank, min(a.shape))``;
    the returned Q holds exactly that many orthonormal columns.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    q, rank = pivoted_qr_full(a)
    rank = min(rank, max_rank)
    return np.ascontiguousarray(q[:, :rank]), rank


@dataclass(frozen=True)
class PartialFactorResult:
    """Partial Cholesky of a 2x2-split SPD block.

    ``l_rr`` is the lower factor of the leading redundant block, ``l_sr``
    the skeleton rows of the factor, and ``ss_remainder`` the Schur
    complement left on the skeleton block.
    """

    l_rr: np.ndarray
    l_sr: np.ndarray
    ss_remainder: np.ndarray

    @property
    def redundant_dim(self) -> int:
        return self.l_rr.shape[0]

    @property
    def skeleton_dim(self) -> int:
        return self.ss_remainder.shape[0]


def partial_cholesky(a_hat: np.ndarray, redundant_dim: int,
                     context: str = "") -> PartialFactorResult:
    """Eliminate the leading ``redundant_dim`` block of a symmetric matrix.

    Computes ``l_rr = chol(A^RR)``, ``l_sr = A^SR (l_rr^T)^-1`` and the
    skeleton Schur complement ``A^SS - l_sr l_sr^T``.
    """
    a_hat = _require_square(a_hat, "a_hat")
    _require_symmetric(a_hat, "a_hat")
    n = a_hat.shape[0]
    if not 0 <= redundant_dim <= n:
        raise ValueError(f"redundant_dim {redundant_dim} outside [0, {n}]")
    rd = redundant_dim
    if rd == 0:
        return PartialFactorResult(np.zeros((0, 0)), np.zeros((n, 0)), a_hat.copy())
    l_rr = cholesky(a_hat[:rd, :rd], context)
    if rd == n:
        return PartialFactorResult(l_rr, np.zeros((0, rd)), np.zeros((0, 0)))
    l_sr = tri_solve_lower(l_rr, a_hat[rd:, :rd], side="right", transposed=True)
    ss = a_hat[rd:, rd:] - l_sr @ l_sr.T
    return PartialFactorResult(l_rr, l_sr, ss)


def apply_permutation(a: np.ndarray, perm, side: str = "rows") -> np.ndarray:
    """Gather rows and/or columns of ``a`` by a permutation vector.

    ``out[i] = a[perm[i]]`` for rows (likewise for columns); applying the
    inverse permutation (``np.argsort(perm)``) restores ``a`` exactly.
    """
    a = np.asarray(a)
    perm = np.asarray(perm, dtype=np.intp)
    dim = a.shape[0] if side in ("rows", "both") else a.shape[1]
    if perm.shape != (dim,) or not np.array_equal(np.sort(perm), np.arange(dim)):
        raise ValueError("perm is not a bijection on the permuted dimension")
    if side == "rows":
        return a[perm].copy()
    if side == "cols":
        return a[:, perm].copy()
    if side == "both":
        return a[np.ix_(perm, perm)].copy()
    raise ValueError(f"side must be 'rows', 'cols' or 'both', got {side!r}")
