"""The constructive decomposition: bounded part plus a swept measure.

Given a compactly supported f of bounded adapted mean oscillation, the
stopping-time construction produces g bounded and a finite Carleson
measure mu with f = g + sweep(mu).  This script walks the pipeline on a
sign jump: threshold selection, generations, sawtooth regions, boundary
tiles, and the final reconstruction residual.
"""

import numpy as np

from schrodinger_bmo import (
    Grid,
    PoissonSemigroup,
    SpectralDecomposition,
    constant_potential,
    critical_radius_field,
    decompose,
    reconstruction_residual,
)
from schrodinger_bmo.bmo import BmoContext, build_cube_family
from schrodinger_bmo.corpus import dyadic_martingale, sign_bump

grid = Grid(1, 512, 2.0)
V = constant_potential(grid, 1.0)
dec = SpectralDecomposition.compute(grid, V)
ctx = BmoContext(build_cube_family(grid), critical_radius_field(V))

for name, f in (("sign jump", sign_bump(grid)),
                ("dyadic martingale", dyadic_martingale(grid, levels=5, seed=1))):
    result = decompose(f, dec, V, ctx)
    d = result.diagnostics
    print(f"--- {name} ---")
    print(f"adapted BMO norm  {d.bmoL_norm:.4f}; threshold A = {d.A:.4f} "
          f"(2^{d.doublings} * norm)")
    print(f"stopping cubes    {d.stopping_count} in {d.generation_count} generations; "
          f"packing {d.packing:.3f} (<= 1/2)")
    print(f"bounded part      |g|_inf = {d.g_sup:.3f} "
          f"(floor jumps {d.h_sup:.3f}, interior V-terms {d.interior_abs_sup:.4f})")
    print(f"measure           {result.mu.count} atoms, Carleson norm {d.mu_carleson:.3f}; "
          f"surface measure norm {d.sigma_carleson:.3f}")
    print(f"size ratio        (|g|_inf + |||mu|||) / norm = {d.size_ratio:.2f}")
    print(f"reconstruction    relative L1 residual {d.residual_l1:.3%}")
    # double the masses: the whole construction is exactly equivariant
    scaled = decompose(2.0 * f, dec, V, ctx)
    drift = np.abs(scaled.g.values - 2 * result.g.values).max()
    print(f"equivariance      |g(2f) - 2 g(f)|_inf = {drift:.2e}\n")

# reconstruction can be recomputed from the result object alone
f = sign_bump(grid)
result = decompose(f, dec, V, ctx)
l1, l2 = reconstruction_residual(f, result, PoissonSemigroup(dec))
print(f"recomputed residuals: L1 {l1:.3%}, L2 {l2:.3%}")
