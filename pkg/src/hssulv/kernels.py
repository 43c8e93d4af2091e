"""Green's-function kernels that generate dense matrix blocks on demand.

Three radial kernels are supported, each regularized so that coincident
points stay finite:

* ``laplace2d``: ``-log(epsilon + d)``
* ``yukawa``:    ``exp(-alpha * (theta + d)) / (theta + d)``
* ``matern``:    ``sigma^2 / (2^(rho-1) Gamma(rho)) * (d/mu)^sigma * K_sigma(d/mu)``
  for ``d > 0`` and ``sigma^2`` at ``d == 0``.

Note the matern form is intentionally nonstandard: ``sigma`` acts both as
the variance and as the order of the modified Bessel function of the
second kind, while ``rho`` only enters the normalizing prefactor.  Callers
wanting the textbook Matern covariance must remap parameters themselves.

All evaluations are pure functions of immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma, kv

from .geometry import PointSet

__all__ = [
    "KERNEL_KINDS",
    "KernelSpec",
    "KernelEvaluationError",
    "kernel_eval",
    "kernel_matrix",
    "dense_block",
]

KERNEL_KINDS = ("laplace2d", "yukawa", "matern")


class KernelEvaluationError(ArithmeticError):
    """A kernel evaluation produced a non-finite value."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selector plus constants; unused constants keep their defaults."""

    kind: str
    epsilon: float = 1e-9
    alpha: float = 1.0
    theta: float = 1e-9
    sigma: float = 1.0
    mu: float = 0.03
    rho: float = 0.5

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {KERNEL_KINDS}")
        for name in ("epsilon", "alpha", "theta", "sigma", "mu", "rho"):
            if getattr(self, name) <= 0:
                raise ValueError(f"kernel constant {name} must be strictly positive")


def _eval_distances(spec: KernelSpec, d: np.ndarray) -> np.ndarray:
    if spec.kind == "laplace2d":
        return -np.log(spec.epsilon + d)
    if spec.kind == "yukawa":
        shifted = spec.theta + d
        return np.exp(-spec.alpha * shifted) / shifted
    # matern, with the zero-distance branch handled exactly
    out = np.full(d.shape, spec.sigma**2)
    pos = d > 0
    if np.any(pos):
        t = d[pos] / spec.mu
        pref = spec.sigma**2 / (2.0 ** (spec.rho - 1.0) * gamma(spec.rho))
        with np.errstate(over="ignore", invalid="ignore"):
            # non-finite results are caught explicitly below
            vals = pref * t**spec.sigma * kv(spec.sigma, t)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            offending = d[pos][bad][0]
            raise KernelEvaluationError(
                f"modified Bessel evaluation is non-finite at distance {offending!r} "
                f"(sigma={spec.sigma}, mu={spec.mu})"
            )
        out[pos] = vals
    return out


def kernel_matrix(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Dense kernel block ``K[a, b] = f(x[a], y[b])`` with Euclidean distance."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    return _eval_distances(spec, cdist(x, y))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Single kernel entry ``f(x, y)``."""
    return float(kernel_matrix(spec, [x], [y])[0, 0])


def _as_range(r, n: int, name: str) -> tuple[int, int]:
    if isinstance(r, range):
        if r.step != 1:
            raise ValueError(f"{name} range must be contiguous")
        start, stop = r.start, r.stop
    else:
        start, stop = int(r[0]), int(r[1])
    if not 0 <= start <= stop <= n:
        raise ValueError(f"{name} range [{start}, {stop}) outside [0, {n})")
    return start, stop


def dense_block(spec: KernelSpec, ps: PointSet, rows, cols) -> np.ndarray:
    """Materialize the kernel block for two contiguous index ranges.

    ``rows`` and ``cols`` are ``(start, stop)`` pairs or ``range`` objects
    into the point set's bisection ordering.
    """
    r0, r1 = _as_range(rows, ps.n, "rows")
    c0, c1 = _as_range(cols, ps.n, "cols")
    return kernel_matrix(spec, ps.points[r0:r1], ps.points[c0:c1])
