"""Kernel estimate fits, the reproducing identity, and duality pairings.

All the classical envelopes are checked by fitting the smallest constant
over sampled lattices: heat size and Holder bounds, Poisson size and
gradient bounds, approximation-to-identity axioms.  The reproducing
formula and Green identity close the loop, and the Hardy-space pairing
bounds the duality constant empirically.
"""

import math

import numpy as np

from schrodinger_bmo import (
    Grid,
    PoissonSemigroup,
    SpectralDecomposition,
    constant_potential,
    critical_radius_field,
    decompose,
    green_identity_residual,
    reproducing_formula_residual,
    verify_aoi_axioms,
    verify_kernel_bounds,
    verify_V_integrals,
)
from schrodinger_bmo.bmo import BmoContext, build_cube_family
from schrodinger_bmo.corpus import hardy_atoms, sign_bump, smooth_bump
from schrodinger_bmo.hardy import carleson_embedding_check, duality_pairing_check, hardy_norm
from schrodinger_bmo.spectral import GreenQuadrature, reproducing_formula_quadrature_gap

grid = Grid(1, 128, 2.0)
V = constant_potential(grid, 1.0)
dec = SpectralDecomposition.compute(grid, V)
rho = critical_radius_field(V)

print("fitted envelope constants (N = 2, beta = 0.5):")
rep = verify_kernel_bounds(dec, rho, N=2.0, beta=0.5)
for fit in rep.fits:
    print(f"  {fit.estimate_id:24s} C = {fit.fitted_C:.4g}")

repv = verify_V_integrals(dec, V, rho, delta=0.5)
print("\npotential integral envelopes:")
for fit in repv.fits:
    print(f"  {fit.estimate_id:24s} {fit.fitted_C:.4g}")

repa = verify_aoi_axioms(PoissonSemigroup(dec), eps=1.0, eps_prime=1.0)
print("\napproximation-to-identity axioms (Poisson family):")
for fit in repa.fits:
    print(f"  {fit.estimate_id:24s} {fit.fitted_C:.3g}")

# reproducing identity: truncating the time integral leaves a geometric tail
f = smooth_bump(grid)
T = 10.0 / math.sqrt(dec.eigenvalues[0])
print(f"\nreproducing residual at T = 10/sqrt(lambda_min): "
      f"{reproducing_formula_residual(dec, f, T):.2e}")
print(f"quadrature vs exact antiderivative (200 log nodes): "
      f"{reproducing_formula_quadrature_gap(dec, f, T, 200):.2e}")
print(f"Green identity residual, window [h/2, 8]: "
      f"{green_identity_residual(dec, f, V, GreenQuadrature(grid.h / 2, 8.0, 100)):.4f}")

# duality: pair Hardy atoms against a decomposed BMO function
ctx = BmoContext(build_cube_family(grid), critical_radius_field(V))
g_fn = sign_bump(grid)
result = decompose(g_fn, dec, V, ctx)
ratios = []
for atom in hardy_atoms(grid, float(rho.fn.values.min()), count=8, seed=5):
    pairing = duality_pairing_check(atom, g_fn, result, dec, ctx)
    ratios.append(pairing.ratio)
print(f"\nduality pairing ratio over Hardy atoms: max {max(ratios):.3f}")

# the one-atom Carleson embedding inequality, verbatim
from schrodinger_bmo import AtomicMeasure

mu = AtomicMeasure(np.array([[0.25]]), np.array([1.0]), np.array([0.7]))
pstar = hardy_norm(dec, f)
emb = carleson_embedding_check(dec, f, mu, pstar)
bound = 0.7 * pstar.pstar.values[grid.flat_index([0.25])]
print(f"one-atom pairing {abs(emb.pairing):.4f} <= mass * P*f(x0) = {bound:.4f}")
