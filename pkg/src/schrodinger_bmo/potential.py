"""Nonnegative potentials, reverse Holder diagnostics and the critical radius.

The critical radius rho(x) is the largest r such that
F(r) = r^(2-n) * integral of V over the ball B(x, r) stays <= 1.  For a
constant potential the ball integral has the closed form c * omega_n * r^n
(omega_n the unit-ball volume) and the solve is exact to bisection
tolerance; for sampled potentials balls are discretized as sets of cell
centers, consistent with all other quadrature in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GeometryError
from .grid import Grid, GridFunction

KIND_CONSTANT = "constant"
KIND_POLYNOMIAL = "polynomial"
KIND_CUSTOM = "custom"


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class Potential:
    """A potential V >= 0 with a symbolic tag enabling closed-form ball masses.

    V == 0 is allowed only with allow_zero=True (the free Laplacian limit,
    used as a regression anchor); in that case rho is reported as the
    domain scale with a truncation flag.
    """

    fn: GridFunction
    kind: str = KIND_CUSTOM
    params: dict = field(default_factory=dict)
    allow_zero: bool = False

    def __post_init__(self):
        if np.any(self.fn.values < 0):
            raise DomainError("potential must be nonnegative")
        if not self.allow_zero and not np.any(self.fn.values > 0):
            raise DomainError("potential must not vanish identically")

    @property
    def grid(self) -> Grid:
        return self.fn.grid

    @property
    def is_zero(self) -> bool:
        return not np.any(self.fn.values > 0)

    def scaled(self, factor: float) -> "Potential":
        if factor < 0:
            raise DomainError("scaling factor must be nonnegative")
        params = dict(self.params)
        if self.kind == KIND_CONSTANT:
            params["c"] = params.get("c", 1.0) * factor
        return Potential(
            GridFunction(self.grid, self.fn.values * factor),
            kind=self.kind,
            params=params,
            allow_zero=self.allow_zero or factor == 0.0,
        )

    def ball_mass(self, center, r: float) -> float:
        """Integral of V over B(center, r).

        Constant tag: closed form c * omega_n * r^n on all of R^n.
        Otherwise: cell quadrature over centers within distance r.
        """
        if self.kind == KIND_CONSTANT:
            return self.params["c"] * unit_ball_volume(self.grid.n) * r**self.grid.n
        center = np.atleast_1d(np.asarray(center, dtype=float))
        d2 = ((self.grid.points - center) ** 2).sum(axis=1)
        mask = d2 <= r * r
        return float(self.fn.values[mask].sum() * self.grid.cell_volume())


def constant_potential(grid: Grid, c: float) -> Potential:
    if c < 0:
        raise DomainError("constant potential must be nonnegative")
    return Potential(
        GridFunction(grid, np.full(grid.size, float(c))),
        kind=KIND_CONSTANT,
        params={"c": float(c)},
        allow_zero=(c == 0.0),
    )


def zero_potential(grid: Grid) -> Potential:
    return constant_potential(grid, 0.0)


def quadratic_potential(grid: Grid, offset: float = 0.0) -> Potential:
    """V(x) = |x|^2 + offset."""
    vals = (grid.points**2).sum(axis=1) + offset
    return Potential(GridFunction(grid, vals), kind=KIND_POLYNOMIAL,
                     params={"offset": float(offset)})


def well_potential(grid: Grid, depth: float, width: float) -> Potential:
    """Flat well of the given width: V = depth outside |x|_inf <= width/2."""
    if depth <= 0 or width <= 0:
        raise DomainError("well depth and width must be positive")
    inside = np.all(np.abs(grid.points) <= width / 2.0, axis=1)
    vals = np.where(inside, 0.0, float(depth))
    return Potential(GridFunction(grid, vals), kind=KIND_CUSTOM,
                     params={"depth": float(depth), "width": float(width)})


def potential_from_samples(grid: Grid, values) -> Potential:
    return Potential(GridFunction(grid, np.asarray(values, dtype=float)))


# ---------------------------------------------------------------------------
# Reverse Holder diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RevHolderReport:
    q: float
    c_fit: float
    attaining_ball: tuple  # (center, radius)
    meets_q_ge_n: bool
    meets_q_ge_half_n: bool


def default_ball_family(grid: Grid, centers_per_axis: int = 5, radii_count: int = 6):
    """Coarse lattice of centers crossed with a geometric ladder of radii."""
    stride = max(grid.m // centers_per_axis, 1)
    picks = grid.axis[stride // 2::stride]
    mesh = np.meshgrid(*([picks] * grid.n), indexing="ij")
    centers = np.stack([c.ravel() for c in mesh], axis=-1)
    radii = grid.half_width * 0.75 * (0.5 ** np.arange(radii_count))
    radii = radii[radii >= grid.h]
    return [(tuple(c), float(r)) for c in centers for r in radii]


def _ball_cells(grid: Grid, center, r: float) -> np.ndarray:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if np.any(np.abs(center) - r > grid.half_width):
        raise GeometryError("ball lies outside the domain")
    d2 = ((grid.points - center) ** 2).sum(axis=1)
    cells = np.nonzero(d2 <= r * r)[0]
    if cells.size == 0:
        raise GeometryError("ball contains no cell centers")
    return cells


def reverse_holder_constant(V: Potential, q: float, balls) -> RevHolderReport:
    """Fitted smallest constant in the q-mean vs 1-mean ball inequality."""
    if q < 1:
        raise DomainError("exponent q must be >= 1")
    grid = V.grid
    best = 0.0
    best_ball = balls[0]
    for center, r in balls:
        cells = _ball_cells(grid, center, r)
        v = V.fn.values[cells]
        mean_v = v.mean()
        if mean_v <= 0:
            continue
        ratio = (np.mean(v**q)) ** (1.0 / q) / mean_v
        if ratio > best:
            best, best_ball = float(ratio), (tuple(np.atleast_1d(center)), float(r))
    best = max(best, 1.0)  # power-mean inequality floor, exact for constant V
    return RevHolderReport(
        q=q,
        c_fit=best,
        attaining_ball=best_ball,
        meets_q_ge_n=q >= grid.n,
        meets_q_ge_half_n=q >= grid.n / 2.0,
    )


def doubling_constant(V: Potential, centers=None, radii=None) -> float:
    """Fitted doubling constant: max over sampled balls of mass(2B)/mass(B)."""
    grid = V.grid
    if centers is None:
        stride = max(grid.m // 4, 1)
        picks = grid.axis[stride // 2::stride]
        mesh = np.meshgrid(*([picks] * grid.n), indexing="ij")
        centers = np.stack([c.ravel() for c in mesh], axis=-1)
    if radii is None:
        radii = grid.half_width * 0.5 * (0.5 ** np.arange(4))
    best = 1.0
    for c in centers:
        for r in radii:
            m1 = V.ball_mass(c, r)
            m2 = V.ball_mass(c, 2 * r)
            if m1 > 0:
                best = max(best, m2 / m1)
    return float(best)


# ---------------------------------------------------------------------------
# Critical radius
# ---------------------------------------------------------------------------

def _sublevel_sup(F, r_lo: float, r_hi: float, scan_points: int, rtol: float):
    """sup{r in [r_lo, r_hi]: F(r) <= 1} by geometric scan plus bisection.

    Returns (radius, truncated).  The scan locates the last crossing of the
    level 1 (F may be non-monotone for rough potentials); bisection then
    refines the crossing radius to relative tolerance rtol.
    """
    rs = np.geomspace(r_lo, r_hi, scan_points)
    vals = np.asarray([F(r) for r in rs])
    below = vals <= 1.0
    if below[-1]:
        return float(r_hi), True
    if not below.any():
        # sub-level set is below the scan floor; refine towards r_lo
        lo, hi = 0.0, rs[0]
    else:
        k = int(np.nonzero(below)[0][-1])
        lo, hi = rs[k], rs[k + 1]
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if F(mid) <= 1.0:
            lo = mid
        else:
            hi = mid
    return float(lo), False


def critical_radius(V: Potential, x, rtol: float = 1e-8, scan_points: int = 200,
                    with_flag: bool = False):
    """sup{r > 0: r^(2-n) * ballmass(V; x, r) <= 1}.

    If F never exceeds 1 within the domain scale 2L the domain scale is
    returned and the truncation flag is set.
    """
    grid = V.grid
    n = grid.n
    r_max = 2.0 * grid.half_width
    if V.is_zero:
        return (r_max, True) if with_flag else r_max

    if V.kind == KIND_CONSTANT:
        c = V.params["c"]
        omega = unit_ball_volume(n)

        def F(r):
            return r ** (2 - n) * c * omega * r**n
    else:
        # sorted-distance representation: F on any r is a lookup
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        d = np.sqrt(((grid.points - x_arr) ** 2).sum(axis=1))
        order = np.argsort(d)
        d_sorted = d[order]
        mass_cum = np.concatenate(
            [[0.0], np.cumsum(V.fn.values[order]) * grid.cell_volume()]
        )

        def F(r):
            k = int(np.searchsorted(d_sorted, r, side="right"))
            return r ** (2 - n) * mass_cum[k]

    rho, truncated = _sublevel_sup(F, grid.h / 4.0, r_max, scan_points, rtol)
    return (rho, truncated) if with_flag else rho


@dataclass(frozen=True)
class CriticalRadiusField:
    """rho sampled at every cell center, plus the potential for point queries."""

    fn: GridFunction
    truncated: np.ndarray = field(repr=False)
    potential: Potential = None
    rtol: float = 1e-8

    @property
    def grid(self) -> Grid:
        return self.fn.grid

    def at(self, x) -> float:
        """rho at an arbitrary point (re-solved, not interpolated)."""
        return critical_radius(self.potential, x, rtol=self.rtol)


def critical_radius_field(V: Potential, rtol: float = 1e-8,
                          scan_points: int = 200) -> CriticalRadiusField:
    grid = V.grid
    if V.kind == KIND_CONSTANT:
        rho, tr = critical_radius(V, grid.points[0], rtol, scan_points, with_flag=True)
        values = np.full(grid.size, rho)
        flags = np.full(grid.size, tr)
    else:
        values = np.empty(grid.size)
        flags = np.empty(grid.size, dtype=bool)
        for i, p in enumerate(grid.points):
            values[i], flags[i] = critical_radius(V, p, rtol, scan_points, with_flag=True)
    return CriticalRadiusField(GridFunction(grid, values), flags, V, rtol)


# ---------------------------------------------------------------------------
# Comparability of rho at nearby points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparabilityReport:
    C: float
    k0: float
    max_ratio_quarter_ball: float  # max of rho(x)/rho(y) over y in B(x, rho(x)/4)


def check_rho_comparability(rho: CriticalRadiusField, pairs,
                            k0_lattice=(1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)) -> ComparabilityReport:
    """Smallest (C, k0) on the lattice making both two-sided bounds hold.

    The bounds relate rho(y) to rho(x) through powers of 1 + |x-y|/rho(x);
    the fit scans the k0 lattice and, per k0, computes the minimal C over all
    sampled pairs, returning the lattice point with the smallest C.
    """
    grid = rho.grid
    L = grid.half_width
    xs = np.atleast_2d(np.asarray([p[0] for p in pairs], dtype=float).reshape(len(pairs), -1))
    ys = np.atleast_2d(np.asarray([p[1] for p in pairs], dtype=float).reshape(len(pairs), -1))
    if np.any(np.abs(xs) > L) or np.any(np.abs(ys) > L):
        raise GeometryError("comparability pairs must lie in the domain")
    rho_x = rho.fn.values[grid.flat_indices(xs)]
    rho_y = rho.fn.values[grid.flat_indices(ys)]
    dist = np.sqrt(((xs - ys) ** 2).sum(axis=1))
    base = 1.0 + dist / rho_x

    best_C, best_k0 = np.inf, k0_lattice[0]
    for k0 in k0_lattice:
        upper_C = np.max(rho_y / (rho_x * base ** (k0 / (k0 + 1.0))))
        lower_C = np.max(rho_x * base ** (-k0) / rho_y)
        C = max(upper_C, lower_C, 1.0)
        if C < best_C - 1e-15:
            best_C, best_k0 = float(C), float(k0)

    # corollary check: rho is flat across quarter-critical balls
    max_ratio = 1.0
    idx = grid.flat_indices(xs)
    for i, x in enumerate(xs):
        r = rho.fn.values[idx[i]] / 4.0
        d2 = ((grid.points - x) ** 2).sum(axis=1)
        nearby = rho.fn.values[d2 <= r * r]
        if nearby.size:
            max_ratio = max(max_ratio,
                            float(rho.fn.values[idx[i]] / nearby.min()),
                            float(nearby.max() / rho.fn.values[idx[i]]))
    return ComparabilityReport(C=best_C, k0=best_k0, max_ratio_quarter_ball=max_ratio)
