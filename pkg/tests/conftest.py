import numpy as np
import pytest

from hssulv import (KernelSpec, build_hss, generate_grid, kernel_matrix,
                    ulv_factor_hss)


class BuildCache:
    """Session-wide cache of grids, compressed matrices and factors.

    Everything cached is immutable, so tests can share builds safely;
    this keeps the acceptance suite inside its runtime budgets.
    """

    def __init__(self):
        self._grids = {}
        self._hss = {}
        self._factors = {}
        self._dense = {}

    def grid(self, n):
        if n not in self._grids:
            self._grids[n] = generate_grid(n)
        return self._grids[n]

    def hss(self, kind, n, nleaf, max_rank):
        key = (kind, n, nleaf, max_rank)
        if key not in self._hss:
            spec = KernelSpec(kind)
            self._hss[key] = build_hss(spec, self.grid(n), nleaf, max_rank)
        return self._hss[key]

    def factors(self, kind, n, nleaf, max_rank):
        key = (kind, n, nleaf, max_rank)
        if key not in self._factors:
            self._factors[key] = ulv_factor_hss(self.hss(*key))
        return self._factors[key]

    def dense(self, kind, n):
        key = (kind, n)
        if key not in self._dense:
            pts = self.grid(n).points
            self._dense[key] = kernel_matrix(KernelSpec(kind), pts, pts)
        return self._dense[key]


@pytest.fixture(scope="session")
def cache():
    return BuildCache()


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)
