import numpy as np
import pytest

from hssulv import (KernelEvaluationError, KernelSpec, dense_block,
                    generate_grid, kernel_eval, kernel_matrix)

# Arbitrary-precision reference for the matern formula at d = mu = 0.03
# (mpmath, 40 digits); recomputed live below when mpmath is available.
MATERN_AT_003 = 0.48025248600998968446


def test_laplace_zero_distance():
    spec = KernelSpec("laplace2d")
    assert kernel_eval(spec, (0.2, 0.3), (0.2, 0.3)) == pytest.approx(
        20.72326583694641, rel=1e-12)


def test_yukawa_zero_distance():
    spec = KernelSpec("yukawa")
    assert kernel_eval(spec, (0.5, 0.5), (0.5, 0.5)) == pytest.approx(
        9.99999999e8, rel=1e-9)


def test_matern_zero_distance_is_variance():
    spec = KernelSpec("matern", sigma=1.3)
    assert kernel_eval(spec, (0.1, 0.1), (0.1, 0.1)) == pytest.approx(1.69, rel=1e-13)


def test_matern_against_high_precision_reference():
    spec = KernelSpec("matern")
    got = kernel_eval(spec, (0.0, 0.0), (0.03, 0.0))
    assert got == pytest.approx(MATERN_AT_003, rel=1e-13)
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    sigma, mu, rho, d = map(mp.mpf, ("1", "0.03", "0.5", "0.03"))
    live = sigma**2 / (2 ** (rho - 1) * mp.gamma(rho)) \
        * (d / mu) ** sigma * mp.besselk(sigma, d / mu)
    assert got == pytest.approx(float(live), rel=1e-13)


@pytest.mark.parametrize("kind", ["laplace2d", "yukawa", "matern"])
def test_kernel_symmetry_exact(kind):
    spec = KernelSpec(kind)
    rng = np.random.default_rng(7)
    for _ in range(50):
        x, y = rng.random(2), rng.random(2)
        assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)


@pytest.mark.parametrize("kind", ["laplace2d", "yukawa", "matern"])
def test_kernel_finite_on_grid(kind):
    spec = KernelSpec(kind)
    pts = generate_grid(64).points
    assert np.all(np.isfinite(kernel_matrix(spec, pts, pts)))


def test_dense_block_diagonal_is_symmetric_bitwise():
    spec = KernelSpec("laplace2d")
    ps = generate_grid(64)
    block = dense_block(spec, ps, (0, 32), (0, 32))
    assert np.array_equal(block, block.T)


def test_dense_block_transpose_identity_exact():
    spec = KernelSpec("matern")
    ps = generate_grid(64)
    a = dense_block(spec, ps, (0, 16), (32, 64))
    b = dense_block(spec, ps, (32, 64), (0, 16))
    assert np.array_equal(a, b.T)


def test_dense_block_single_matern_point():
    spec = KernelSpec("matern")
    ps = generate_grid(16)
    assert np.array_equal(dense_block(spec, ps, (3, 4), (3, 4)), [[1.0]])


def test_yukawa_matrix_is_spd():
    # Oracle: dense eigensolve of the full N=64 matrix.
    spec = KernelSpec("yukawa")
    pts = generate_grid(64).points
    a = kernel_matrix(spec, pts, pts)
    assert np.linalg.eigvalsh(a).min() > 0


def test_dense_block_rejects_out_of_range():
    spec = KernelSpec("laplace2d")
    ps = generate_grid(16)
    with pytest.raises(ValueError, match="rows"):
        dense_block(spec, ps, (0, 20), (0, 4))


def test_bessel_overflow_reports_distance():
    # huge order overflows kv; the error must name the offending distance
    spec = KernelSpec("matern", sigma=600.0)
    with pytest.raises(KernelEvaluationError, match="0.5"):
        kernel_eval(spec, (0.0, 0.0), (0.5, 0.0))


def test_spec_validation():
    with pytest.raises(ValueError, match="kind"):
        KernelSpec("gauss")
    with pytest.raises(ValueError, match="positive"):
        KernelSpec("matern", mu=0.0)
    with pytest.raises(ValueError, match="positive"):
        KernelSpec("laplace2d", epsilon=-1e-9)
