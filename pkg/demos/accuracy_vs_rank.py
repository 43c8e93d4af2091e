"""Accuracy of the compressed solver as the rank cap and leaf size vary.

Reproduces the shape of the rank/accuracy sweep at desk scale: for each
kernel and (max_rank, nleaf) pair, report the construction error and the
forward/backward solve error.  Construction error falls as the cap rises;
solve error stays near machine precision because the factorization is
exact on the compressed operator.

Run from the repository root:  python3 demos/accuracy_vs_rank.py
"""

from hssulv import (KernelSpec, build_hss, construct_error, generate_grid,
                    solve_error, ulv_factor_hss)

N = 4096
GRID = [(100, 256), (200, 256), (200, 512), (400, 512)]

ps = generate_grid(N)
print(f"N = {N}")
print(f"{'kernel':<10} {'rank':>5} {'leaf':>5} {'construct':>12} {'solve':>12}")
for kind in ("laplace2d", "yukawa", "matern"):
    spec = KernelSpec(kind)
    for max_rank, nleaf in GRID:
        h = build_hss(spec, ps, nleaf=nleaf, max_rank=max_rank)
        f = ulv_factor_hss(h)
        ce = construct_error(h, spec, ps, seed=0)
        se = solve_error(f, h, seed=0)
        print(f"{kind:<10} {max_rank:>5} {nleaf:>5} {ce:>12.3e} {se:>12.3e}")
