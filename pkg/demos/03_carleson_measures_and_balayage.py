"""Carleson measures, sweeps, and the bounded-sweep direction.

A finite atomic measure on the upper half-space is Carleson when boxes
carry mass proportional to their base volume.  Sweeping such a measure
with the Poisson kernel lands in adapted BMO with norm controlled by the
Carleson norm; the empirical constant over a random corpus is the point
of this experiment.
"""

import numpy as np

from schrodinger_bmo import (
    AtomicMeasure,
    Grid,
    PoissonSemigroup,
    SpectralDecomposition,
    SquaredHeatSemigroup,
    balayage,
    balayage_bmo_ratio,
    carleson_norm,
    constant_potential,
    critical_radius_field,
    heat_balayage_transform,
    smeared_dirac_measure,
)
from schrodinger_bmo.bmo import BmoContext, build_cube_family
from schrodinger_bmo.corpus import random_carleson_measures

grid = Grid(1, 256, 2.0)
V = constant_potential(grid, 1.0)
dec = SpectralDecomposition.compute(grid, V)
poisson = PoissonSemigroup(dec)
ctx = BmoContext(build_cube_family(grid), critical_radius_field(V))

# one atom: the optimal box sits right on top of it
mu = AtomicMeasure(np.array([[0.0]]), np.array([0.5]), np.array([1.0]))
rep = carleson_norm(mu)
print(f"single atom at height 0.5: norm = {rep.norm} (cube side {rep.cube_side})")

# the empirical constant of the sweep-into-BMO direction
ratios = []
for m in random_carleson_measures(grid, count=50, atoms=20, seed=11):
    ratios.append(balayage_bmo_ratio(m, poisson, ctx).ratio)
print(f"sweep BMO / Carleson over 50 random measures: "
      f"max {max(ratios):.3f}, median {np.median(ratios):.3f}")

# the Poisson sweep rewritten as a squared-time heat sweep
mu_r = random_carleson_measures(grid, count=1, atoms=16, seed=3)[0]
res = heat_balayage_transform(mu_r, n_nodes=256)
S_p = balayage(poisson, mu_r)
S_h = balayage(SquaredHeatSemigroup(dec), res.measure)
print(f"\nheight-mixing transform: mass defect {res.mass_defect:.1e}, "
      f"sweep mismatch {np.abs(S_p.values - S_h.values).max():.1e}")
print(f"Carleson norms: mu {carleson_norm(mu_r).norm:.3f} -> "
      f"nu {carleson_norm(res.measure).norm:.3f}")

# smearing a Dirac mass onto its height plane keeps the Carleson norm tame
wide = Grid(1, 512, 8.0)
sm = smeared_dirac_measure([((0.0,), 1.0, 1.0)], wide, tail_tol=2e-3)
print(f"\nsmeared unit atom at height 1: plane mass {sm.measure.masses.sum():.4f} "
      f"(exact value 2), norm ratio {sm.ratio:.3f}")
