"""The critical radius field and the adapted BMO norm.

rho(x) is the scale below which the operator behaves like the plain
Laplacian; cubes larger than rho must control plain averages, not just
oscillation.  This script reads off rho for a few potentials and compares
the classical, adapted and semigroup BMO norms on a small corpus.
"""

from schrodinger_bmo import (
    Grid,
    PoissonSemigroup,
    SpectralDecomposition,
    bmo_A_norm,
    bmo_classical_norm,
    bmo_L_norm,
    build_cube_family,
    check_rho_comparability,
    constant_potential,
    critical_radius,
    critical_radius_field,
    quadratic_potential,
)
from schrodinger_bmo.corpus import bmo_corpus

grid = Grid(1, 256, 2.0)

# Closed forms for constant potentials: rho = 1/sqrt(2c) in one dimension.
for c in (1.0, 4.0):
    rho = critical_radius(constant_potential(grid, c), [0.0])
    print(f"V = {c}: rho = {rho:.6f}   (1/sqrt(2c) = {(2 * c) ** -0.5:.6f})")

# A growing potential gives a radius that shrinks away from the origin.
Vq = quadratic_potential(grid, 1.0)
rho_field = critical_radius_field(Vq)
vals = rho_field.fn.values
print(f"\nV = x^2 + 1: rho ranges over [{vals.min():.4f}, {vals.max():.4f}]")
pairs = [((a,), (b,)) for a in grid.axis[::32] for b in grid.axis[::32]]
comp = check_rho_comparability(rho_field, pairs)
print(f"two-sided comparability fit: C = {comp.C:.3f}, k0 = {comp.k0:g}")

# Norms across a corpus: the adapted norm dominates the oscillation norm
# because supercritical cubes must also control plain averages.
V = constant_potential(grid, 1.0)
dec = SpectralDecomposition.compute(grid, V)
family = build_cube_family(grid)
rho1 = critical_radius_field(V)
poisson = PoissonSemigroup(dec)

print(f"\n{'function':18s} {'classical':>10s} {'adapted':>10s} {'semigroup':>10s}")
for name, f in bmo_corpus(grid, dec, seed=7):
    rep = bmo_L_norm(f, family, rho1)
    print(f"{name:18s} {bmo_classical_norm(f, family):10.4f} "
          f"{rep.bmoL_norm:10.4f} {bmo_A_norm(f, poisson, family):10.4f}")
