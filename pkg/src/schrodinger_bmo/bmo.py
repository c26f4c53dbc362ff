"""BMO norms: classical, adapted to the critical radius, and semigroup-based.

The supremum over all cubes is replaced by a supremum over a computable
surrogate family: every dyadic cube of the root tree plus the same tree
shifted by a third of the sidelength in each coordinate at every level
(the three-grid trick), restricted to the domain.  Any cube is comparable
to a member of this family up to a dimensional factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .grid import Grid, GridFunction, default_t_lattice
from .potential import CriticalRadiusField
from .spectral import SpectralDecomposition


@dataclass(frozen=True)
class FamilyCube:
    center: tuple
    side: float
    cells: np.ndarray = field(repr=False)
    level: int = 0
    shifted: bool = False


class CubeFamily:
    """Finite cube family: dyadic tree plus its third-shifted copy."""

    def __init__(self, grid: Grid, cubes: list):
        self.grid = grid
        self.cubes = cubes
        self._rho_cache = {}

    def __len__(self):
        return len(self.cubes)

    def rho_at_centers(self, rho: CriticalRadiusField) -> np.ndarray:
        key = id(rho)
        if key not in self._rho_cache:
            self._rho_cache[key] = np.asarray(
                [rho.at(c.center) for c in self.cubes], dtype=float
            )
        return self._rho_cache[key]


def _cells_in_box(grid: Grid, lower, side: float) -> np.ndarray:
    """Flat indices of cell centers in the half-open box [lower, lower+side)."""
    ranges = []
    for a in range(grid.n):
        lo = lower[a]
        i_lo = int(math.ceil((lo + grid.half_width) / grid.h - 0.5 - 1e-12))
        i_hi = int(math.ceil((lo + side + grid.half_width) / grid.h - 0.5 - 1e-12))
        i_lo, i_hi = max(i_lo, 0), min(i_hi, grid.m)
        if i_hi <= i_lo:
            return np.empty(0, dtype=int)
        ranges.append(np.arange(i_lo, i_hi))
    mesh = np.meshgrid(*ranges, indexing="ij")
    return np.ravel_multi_index(tuple(r.ravel() for r in mesh), grid.shape)


def build_cube_family(grid: Grid, max_level: int = None,
                      include_shifted: bool = True) -> CubeFamily:
    top = grid.max_level if max_level is None else min(max_level, grid.max_level)
    L = grid.half_width
    cubes = []
    for k in range(top + 1):
        side = 2.0 * L / 2**k
        for shifted in ((False, True) if include_shifted else (False,)):
            offset = side / 3.0 if shifted else 0.0
            last = 2**k - (2 if shifted else 1)
            if last < 0:
                continue
            for idx in np.ndindex(*([last + 1] * grid.n)):
                lower = np.asarray(idx, dtype=float) * side - L + offset
                cells = _cells_in_box(grid, lower, side)
                if cells.size == 0:
                    continue
                cubes.append(FamilyCube(
                    center=tuple(lower + side / 2.0),
                    side=side, cells=cells, level=k, shifted=shifted,
                ))
    return CubeFamily(grid, cubes)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BmoReport:
    oscillation_norm: float
    average_norm: float
    bmoL_norm: float
    oscillation_cube: FamilyCube
    average_cube: FamilyCube
    average_part_vacuous: bool = False


def bmo_classical_norm(f: GridFunction, fam: CubeFamily) -> float:
    best = 0.0
    for cube in fam.cubes:
        v = f.values[cube.cells]
        best = max(best, float(np.abs(v - v.mean()).mean()))
    return best


def bmo_L_norm(f: GridFunction, fam: CubeFamily, rho: CriticalRadiusField) -> BmoReport:
    """Oscillation over every cube plus plain averages over supercritical cubes.

    A cube enters the average part iff its sidelength exceeds rho at the
    cube center.  The combined norm is the maximum of both parts and
    vanishes only for f identically zero.
    """
    rho_centers = fam.rho_at_centers(rho)
    osc_best, osc_cube = 0.0, fam.cubes[0]
    avg_best, avg_cube = 0.0, fam.cubes[0]
    any_large = False
    for cube, rho_c in zip(fam.cubes, rho_centers):
        v = f.values[cube.cells]
        osc = float(np.abs(v - v.mean()).mean())
        if osc > osc_best:
            osc_best, osc_cube = osc, cube
        if cube.side > rho_c:
            any_large = True
            avg = float(np.abs(v).mean())
            if avg > avg_best:
                avg_best, avg_cube = avg, cube
    vacuous = not any_large and bool(np.ptp(f.values) > 0)
    return BmoReport(
        oscillation_norm=osc_best,
        average_norm=avg_best,
        bmoL_norm=max(osc_best, avg_best),
        oscillation_cube=osc_cube,
        average_cube=avg_cube,
        average_part_vacuous=vacuous,
    )


def bmo_A_norm(f: GridFunction, family, fam: CubeFamily) -> float:
    """sup over cubes of the mean of |f - A_{side} f| over the cube."""
    sides = sorted({c.side for c in fam.cubes})
    smoothed = {}
    for side in sides:
        if hasattr(family, "apply"):
            smoothed[side] = family.apply(side, f.values)
        else:
            smoothed[side] = family.matrix(side).apply(f.values)
    best = 0.0
    for cube in fam.cubes:
        diff = f.values[cube.cells] - smoothed[cube.side][cube.cells]
        best = max(best, float(np.abs(diff).mean()))
    return best


@dataclass(frozen=True)
class AverageGrowthReport:
    log_growth_C: float
    log_growth_cube: FamilyCube
    p_mean_osc: dict
    p_mean_avg: dict
    bmoL_norm: float


def check_average_growth(f: GridFunction, rho: CriticalRadiusField, fam: CubeFamily,
                  ps=(1, 2, 4)) -> AverageGrowthReport:
    """Logarithmic growth of doubled-cube averages and p-mean oscillation fits.

    For subcritical cubes the average over 2Q may only grow like
    1 + log(rho/side); for each p the p-mean oscillation (and the plain
    p-mean over supercritical cubes) is fitted against the norm.
    """
    grid = f.grid
    report = bmo_L_norm(f, fam, rho)
    norm = report.bmoL_norm
    if norm == 0:
        raise DegenerateInputError("BMO norm vanishes; lemma fits are undefined")
    rho_centers = fam.rho_at_centers(rho)

    growth_best, growth_cube = 0.0, fam.cubes[0]
    for cube, rho_c in zip(fam.cubes, rho_centers):
        if cube.side >= rho_c:
            continue
        lower2 = np.asarray(cube.center) - cube.side
        cells2 = _cells_in_box(grid, lower2, 2.0 * cube.side)
        if cells2.size == 0:
            continue
        # compact support: mass outside the domain is zero; |2Q| is geometric
        avg2 = abs(float(f.values[cells2].sum()) * grid.cell_volume()
                   / (2.0 * cube.side) ** grid.n)
        fit = avg2 / ((1.0 + math.log(rho_c / cube.side)) * norm)
        if fit > growth_best:
            growth_best, growth_cube = fit, cube

    p_osc, p_avg = {}, {}
    for p in ps:
        best_o, best_a = 0.0, 0.0
        for cube, rho_c in zip(fam.cubes, rho_centers):
            v = f.values[cube.cells]
            best_o = max(best_o, float(np.mean(np.abs(v - v.mean()) ** p) ** (1.0 / p)))
            if cube.side >= rho_c:
                best_a = max(best_a, float(np.mean(np.abs(v) ** p) ** (1.0 / p)))
        p_osc[p] = best_o / norm
        p_avg[p] = best_a / norm
    return AverageGrowthReport(growth_best, growth_cube, p_osc, p_avg, norm)


@dataclass(frozen=True)
class NormComparison:
    ratio: float
    bmoA_norm: float
    bmoL_norm: float
    degenerate: bool


def compare_bmoL_bmoP(f: GridFunction, poisson_family, fam: CubeFamily,
                      rho: CriticalRadiusField) -> NormComparison:
    """Ratio of the Poisson-semigroup norm to the critical-radius norm."""
    bl = bmo_L_norm(f, fam, rho).bmoL_norm
    if bl == 0:
        return NormComparison(float("nan"), 0.0, 0.0, True)
    ba = bmo_A_norm(f, poisson_family, fam)
    return NormComparison(ba / bl, ba, bl, False)


def check_smoothed_oscillation(f: GridFunction, dec: SpectralDecomposition, fam: CubeFamily,
                  rho: CriticalRadiusField, x_stride: int = 4,
                  t_lattice=None) -> float:
    """Fitted constant in |P_t (f - f_{Q(x,t)})(x)| <= C * norm.

    Q(x, t) is the cube centered at x with sidelength t; the smoothed
    oscillation is evaluated as u(x, t) - f_Q * (P_t 1)(x) on a lattice of
    cells and heights.
    """
    grid = f.grid
    norm = bmo_L_norm(f, fam, rho).bmoL_norm
    if norm == 0:
        return 0.0
    if t_lattice is None:
        t_lattice = default_t_lattice(grid, t_min=grid.h)
    coeffs = dec.project(f.values)
    root = np.sqrt(dec.eigenvalues)
    ones_coeffs = dec.project(np.ones(grid.size))
    hn = grid.cell_volume()
    xs = np.arange(grid.size)[::x_stride]
    best = 0.0
    for t in t_lattice:
        decay = np.exp(-t * root)
        u_t = dec.synthesize(decay * coeffs)
        mass_t = dec.synthesize(decay * ones_coeffs)
        for i in xs:
            lower = grid.points[i] - t / 2.0
            cells = _cells_in_box(grid, lower, t)
            f_q = float(f.values[cells].sum()) * hn / t**grid.n if cells.size else 0.0
            best = max(best, abs(u_t[i] - f_q * mass_t[i]))
    return best / norm


@dataclass
class BmoContext:
    """Bundle of the cube family and critical radius used for norm queries."""

    family: CubeFamily
    rho: CriticalRadiusField

    def report(self, f: GridFunction) -> BmoReport:
        return bmo_L_norm(f, self.family, self.rho)

    def norm(self, f: GridFunction) -> float:
        return self.report(f).bmoL_norm
