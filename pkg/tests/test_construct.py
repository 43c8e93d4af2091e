import numpy as np
import pytest

from hssulv import (KernelSpec, build_blr2, build_hss, build_shared_basis,
                    construct_error, generate_grid, kernel_matrix, load_hss,
                    matvec, save_hss)


def stacked_admissible_row(dense, nleaf, i):
    """Admissible blocks of block row i, stacked tall (column layout)."""
    lo, hi = i * nleaf, (i + 1) * nleaf
    return np.vstack([dense[:lo, lo:hi], dense[hi:, lo:hi]])


class TestSharedBasis:
    def test_exact_rank_detected(self):
        rng = np.random.default_rng(0)
        left = rng.standard_normal((100, 7))
        right = rng.standard_normal((7, 24))
        stacked = left @ right  # rank 7 by construction
        basis = build_shared_basis(stacked, max_rank=20)
        assert basis.skeleton_dim == 7
        proj = stacked @ basis.skeleton @ basis.skeleton.T
        assert np.linalg.norm(stacked - proj) <= 1e-12 * np.linalg.norm(stacked)

    def test_dimension_bookkeeping(self):
        rng = np.random.default_rng(1)
        stacked = rng.standard_normal((40, 12))
        basis = build_shared_basis(stacked, max_rank=12)
        assert basis.q.shape == (12, 12)
        assert basis.redundant_dim == 12 - basis.skeleton_dim
        assert np.linalg.norm(basis.q.T @ basis.q - np.eye(12)) <= 1e-12

    def test_laplace_row_projection_error(self):
        # Oracle: singular value tail of the same admissible row.
        spec = KernelSpec("laplace2d")
        ps = generate_grid(512)
        dense = kernel_matrix(spec, ps.points, ps.points)
        stacked = stacked_admissible_row(dense, 256, 0)
        basis = build_shared_basis(stacked, max_rank=100)
        err = np.linalg.norm(stacked - stacked @ basis.skeleton @ basis.skeleton.T)
        assert err <= 1e-5 * np.linalg.norm(stacked)
        tail = np.linalg.norm(np.linalg.svd(stacked, compute_uv=False)[100:])
        assert err <= 10 * tail + 1e-12 * np.linalg.norm(stacked)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="admissible"):
            build_shared_basis(np.zeros((0, 8)), 4)


class TestBlr2:
    def test_lossless_matches_dense(self):
        spec = KernelSpec("yukawa")
        ps = generate_grid(512)
        m = build_blr2(spec, ps, nleaf=128, max_rank=128)
        dense = kernel_matrix(spec, ps.points, ps.points)
        rng = np.random.default_rng(2)
        x = rng.standard_normal(512)
        ref = dense @ x
        assert np.linalg.norm(matvec(m, x) - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_single_block_degenerates_to_dense(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(64)
        m = build_blr2(spec, ps, nleaf=64, max_rank=64)
        assert m.nblocks == 1 and not m.coupling
        dense = kernel_matrix(spec, ps.points, ps.points)
        assert np.array_equal(m.diag[0], dense)

    def test_compressed_error_small(self):
        spec = KernelSpec("yukawa")
        ps = generate_grid(1024)
        m = build_blr2(spec, ps, nleaf=256, max_rank=100)
        assert construct_error(m, spec, ps, seed=0) <= 1e-6

    def test_coupling_symmetry_exact(self):
        spec = KernelSpec("matern")
        ps = generate_grid(256)
        m = build_blr2(spec, ps, nleaf=64, max_rank=20)
        for (i, j), block in m.coupling.items():
            assert np.array_equal(block, m.coupling[(j, i)].T)

    def test_diag_blocks_exact_bitwise(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(256)
        m = build_blr2(spec, ps, nleaf=64, max_rank=32)
        dense = kernel_matrix(spec, ps.points, ps.points)
        for i in range(m.nblocks):
            lo, hi = m.block_range(i)
            assert np.array_equal(m.diag[i], dense[lo:hi, lo:hi])


class TestHss:
    def test_lossless_matches_dense(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(512)
        h = build_hss(spec, ps, nleaf=128, max_rank=128)
        dense = kernel_matrix(spec, ps.points, ps.points)
        rng = np.random.default_rng(3)
        x = rng.standard_normal(512)
        ref = dense @ x
        assert np.linalg.norm(matvec(h, x) - ref) <= 1e-11 * np.linalg.norm(ref)
        assert construct_error(h, spec, ps, seed=0) <= 1e-11

    def test_single_level_agrees_with_blr2_bitwise(self):
        spec = KernelSpec("matern")
        ps = generate_grid(512)
        h = build_hss(spec, ps, nleaf=256, max_rank=60)
        m = build_blr2(spec, ps, nleaf=256, max_rank=60)
        rng = np.random.default_rng(4)
        x = rng.standard_normal(512)
        assert np.array_equal(matvec(h, x), matvec(m, x))

    def test_nested_identity_reproduces_admissible_blocks(self):
        # raw-coordinate bases recovered by telescoping the transfers
        spec = KernelSpec("yukawa")
        ps = generate_grid(256)
        h = build_hss(spec, ps, nleaf=64, max_rank=64)
        dense = kernel_matrix(spec, ps.points, ps.points)
        raw = {}
        L = h.max_level
        for i in range(1 << L):
            raw[(L, i)] = h.bases[(L, i)].skeleton
        for level in range(L - 1, 0, -1):
            for i in range(1 << level):
                top, bot = raw[(level + 1, 2 * i)], raw[(level + 1, 2 * i + 1)]
                stacked = np.zeros((top.shape[0] + bot.shape[0],
                                    top.shape[1] + bot.shape[1]))
                stacked[:top.shape[0], :top.shape[1]] = top
                stacked[top.shape[0]:, top.shape[1]:] = bot
                raw[(level, i)] = stacked @ h.bases[(level, i)].skeleton
        ps_n = ps.n
        scale = np.linalg.norm(dense)
        for level in range(1, L + 1):
            width = ps_n >> level
            for i in range(1 << level):
                j = i ^ 1
                block = dense[i * width:(i + 1) * width, j * width:(j + 1) * width]
                approx = raw[(level, i)] @ h.coupling[(level, i)] @ raw[(level, j)].T
                # error measured at operator scale: tiny far-field blocks may
                # carry the rank-detection noise of the whole admissible row
                assert np.linalg.norm(block - approx) <= 1e-10 * scale

    def test_construct_error_at_desk_scale(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(4096)
        h = build_hss(spec, ps, nleaf=256, max_rank=100)
        assert construct_error(h, spec, ps, seed=0) <= 1e-5

    def test_invalid_sizes_named(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(256)
        with pytest.raises(ValueError, match="nearest valid"):
            build_hss(spec, ps, nleaf=100, max_rank=50)
        with pytest.raises(ValueError, match="exceeds nleaf"):
            build_hss(spec, ps, nleaf=64, max_rank=65)


class TestMatvec:
    def test_zero_vector(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(256)
        h = build_hss(spec, ps, nleaf=64, max_rank=30)
        assert np.array_equal(matvec(h, np.zeros(256)), np.zeros(256))

    def test_dimension_mismatch(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(256)
        h = build_hss(spec, ps, nleaf=64, max_rank=30)
        with pytest.raises(ValueError, match="leading dimension"):
            matvec(h, np.zeros(100))

    def test_operator_is_symmetric(self):
        spec = KernelSpec("matern")
        ps = generate_grid(256)
        h = build_hss(spec, ps, nleaf=64, max_rank=25)
        dense_op = matvec(h, np.eye(256))
        assert np.abs(dense_op - dense_op.T).max() <= 1e-12 * np.abs(dense_op).max()

    def test_matches_construct_error_definition(self):
        # construct_error is exactly the probe-vector residual of matvec
        spec = KernelSpec("yukawa")
        ps = generate_grid(1024)
        h = build_hss(spec, ps, nleaf=256, max_rank=64)
        rng = np.random.default_rng(0)
        b = rng.standard_normal(1024)
        dense = kernel_matrix(spec, ps.points, ps.points)
        ref = dense @ b
        expected = np.linalg.norm(ref - matvec(h, b)) / np.linalg.norm(ref)
        assert construct_error(h, spec, ps, seed=0) == pytest.approx(expected, rel=1e-12)


class TestInvariants:
    def test_basis_orthonormality_everywhere(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(512)
        h = build_hss(spec, ps, nleaf=128, max_rank=50)
        for basis in h.bases.values():
            gram = basis.q.T @ basis.q
            assert np.linalg.norm(gram - np.eye(basis.size)) <= 1e-12

    def test_skeleton_dims_capped(self):
        spec = KernelSpec("matern")
        ps = generate_grid(512)
        h = build_hss(spec, ps, nleaf=128, max_rank=40)
        assert all(b.skeleton_dim <= 40 for b in h.bases.values())

    def test_error_monotone_in_rank(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(1024)
        errs = [construct_error(build_hss(spec, ps, 256, rank), spec, ps, 0)
                for rank in (25, 50, 100)]
        assert errs[1] <= errs[0] + 1e-13
        assert errs[2] <= errs[1] + 1e-13

    def test_construct_error_deterministic(self):
        spec = KernelSpec("yukawa")
        ps = generate_grid(256)
        h = build_hss(spec, ps, nleaf=64, max_rank=30)
        assert construct_error(h, spec, ps, 7) == construct_error(h, spec, ps, 7)

    def test_leaf_diag_bitwise_exact(self):
        spec = KernelSpec("laplace2d")
        ps = generate_grid(512)
        h = build_hss(spec, ps, nleaf=128, max_rank=50)
        dense = kernel_matrix(spec, ps.points, ps.points)
        for i, block in enumerate(h.leaf_diag):
            lo = i * 128
            assert np.array_equal(block, dense[lo:lo + 128, lo:lo + 128])


class TestStorage:
    def test_round_trip_bitwise(self, tmp_path):
        spec = KernelSpec("matern")
        ps = generate_grid(512)
        h = build_hss(spec, ps, nleaf=128, max_rank=40)
        path = tmp_path / "m.hss"
        save_hss(h, path)
        back = load_hss(path)
        assert back.nleaf == h.nleaf and back.max_level == h.max_level
        rng = np.random.default_rng(5)
        x = rng.standard_normal(512)
        assert np.array_equal(matvec(back, x), matvec(h, x))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.hss"
        path.write_bytes(b"nope" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_hss(path)
