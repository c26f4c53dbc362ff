"""Atomic measures on the upper half-space, Carleson norms and balayages.

Measures are finite and atomic throughout: every measure arising in the
constructive decomposition (surface measures on tile boundaries, smeared
planes, subordinated transforms) is discretized to weighted point masses,
which makes the Carleson norm an exactly computable finite maximum.

Exactness of the candidate family (one-dimensional case; the product
version is analogous per axis).  The box value |mu|(Q-hat)/|Q| changes,
as the base interval [a, b] moves, only when an atom enters or leaves.
Shrinking an interval raises the value until either a face crosses an
atom coordinate or the sidelength reaches the height of a captured atom;
translating at fixed length changes nothing until a face crosses an atom
coordinate.  Every local maximum therefore has a face at some atom
coordinate y_i, and with the left face at y_i the value as a function of
the right face b is piecewise decreasing with upward jumps exactly at the
breakpoints s_j = max(y_j, y_i + t_j); the candidate set
{[y_i, s_j]} plus its mirror image is exhaustive.  This is verified
against brute force in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, GeometryError, ResolutionError
from .grid import Grid, GridFunction

SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite signed atomic measure on the upper half-space."""

    positions: np.ndarray = field(repr=False)  # (N, n)
    heights: np.ndarray = field(repr=False)    # (N,)
    masses: np.ndarray = field(repr=False)     # (N,), signed

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.size == 0:
            pos = pos.reshape(0, max(pos.shape[-1], 1) if pos.ndim > 1 else 1)
        hts = np.asarray(self.heights, dtype=float).ravel()
        ms = np.asarray(self.masses, dtype=float).ravel()
        if pos.shape[0] != hts.size or hts.size != ms.size:
            raise GeometryError("positions, heights and masses must align")
        if hts.size and not np.all(hts > 0):
            raise GeometryError("atom heights must be positive")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(hts))
                and np.all(np.isfinite(ms))):
            raise GeometryError("measure data must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "heights", hts)
        object.__setattr__(self, "masses", ms)

    @classmethod
    def empty(cls, n: int) -> "AtomicMeasure":
        return cls(np.empty((0, n)), np.empty(0), np.empty(0))

    @classmethod
    def from_atoms(cls, atoms) -> "AtomicMeasure":
        """Build from a sequence of ((x...), t, mass) triples or HalfSpacePoint pairs."""
        pos, hts, ms = [], [], []
        for atom in atoms:
            if len(atom) == 2:  # (HalfSpacePoint, mass)
                point, mass = atom
                pos.append(np.atleast_1d(point.x))
                hts.append(point.t)
                ms.append(mass)
            else:
                x, t, mass = atom
                pos.append(np.atleast_1d(x))
                hts.append(t)
                ms.append(mass)
        if not pos:
            return cls.empty(1)
        return cls(np.asarray(pos, dtype=float), np.asarray(hts), np.asarray(ms))

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def count(self) -> int:
        return self.heights.size

    def total_variation(self) -> float:
        return float(np.abs(self.masses).sum())

    def scaled(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(self.positions, self.heights, self.masses * factor)

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        return AtomicMeasure(
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.heights, other.heights]),
            np.concatenate([self.masses, other.masses]),
        )

    def consolidate(self, drop_tol: float = 0.0) -> "AtomicMeasure":
        """Merge atoms at identical (position, height); drop negligible masses."""
        if self.count == 0:
            return self
        keys = np.column_stack([self.positions, self.heights])
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inverse, self.masses)
        floor = drop_tol * max(np.abs(merged).max(), 1e-300)
        keep = np.abs(merged) > floor
        return AtomicMeasure(uniq[keep, :-1], uniq[keep, -1], merged[keep])

    def pruned(self, rel_tol: float = 1e-13) -> "AtomicMeasure":
        if self.count == 0:
            return self
        floor = rel_tol * np.abs(self.masses).max()
        keep = np.abs(self.masses) > floor
        return AtomicMeasure(self.positions[keep], self.heights[keep], self.masses[keep])


@dataclass(frozen=True)
class CarlesonReport:
    norm: float
    cube_lower: tuple
    cube_side: float
    atom_indices: np.ndarray = field(repr=False)
    atom_masses: np.ndarray = field(repr=False)


def _box_atoms(mu: AtomicMeasure, lower: np.ndarray, side: float) -> np.ndarray:
    inside = np.all(
        (mu.positions >= lower - 1e-12) & (mu.positions <= lower + side + 1e-12),
        axis=1,
    )
    inside &= mu.heights <= side + 1e-12
    return np.nonzero(inside)[0]


def _carleson_norm_1d(ys, ts, ws):
    best, best_lo, best_side = 0.0, 0.0, 1.0
    anchors = np.unique(ys)
    # left-anchored sweep and its mirror image
    for a in anchors:
        sel = ys >= a
        s = np.maximum(ys[sel], a + ts[sel])
        order = np.argsort(s, kind="stable")
        s_sorted = s[order]
        cum = np.cumsum(ws[sel][order])
        lengths = s_sorted - a
        ok = lengths > 0
        if ok.any():
            vals = cum[ok] / lengths[ok]
            k = int(np.argmax(vals))
            if vals[k] > best:
                best = float(vals[k])
                best_lo, best_side = float(a), float(lengths[ok][k])
    for b in anchors:
        sel = ys <= b
        s = np.minimum(ys[sel], b - ts[sel])
        order = np.argsort(-s, kind="stable")
        s_sorted = s[order]
        cum = np.cumsum(ws[sel][order])
        lengths = b - s_sorted
        ok = lengths > 0
        if ok.any():
            vals = cum[ok] / lengths[ok]
            k = int(np.argmax(vals))
            if vals[k] > best:
                best = float(vals[k])
                best_lo, best_side = float(b - lengths[ok][k]), float(lengths[ok][k])
    return best, np.asarray([best_lo]), best_side


def _carleson_norm_nd(pos, ts, ws):
    n = pos.shape[1]
    sides = set(ts.tolist())
    for a in range(n):
        coords = np.unique(pos[:, a])
        diffs = np.abs(coords[:, None] - coords[None, :]).ravel()
        sides.update(diffs[diffs > 0].tolist())
    sides = sorted(sides)
    total = ws.sum()
    best, best_lo, best_side = 0.0, np.zeros(n), 1.0
    for side in sides:
        if total / side**n <= best:
            continue
        axis_anchors = []
        for a in range(n):
            cand = np.unique(np.concatenate([pos[:, a], pos[:, a] - side]))
            axis_anchors.append(cand)
        height_ok = ts <= side + 1e-12
        masks = []
        for a in range(n):
            anchors = axis_anchors[a]
            m = (pos[None, :, a] >= anchors[:, None] - 1e-12) & (
                pos[None, :, a] <= anchors[:, None] + side + 1e-12
            )
            masks.append(m)
        # combine axes; loop the leading axis, vectorize the rest
        for i0, lead in enumerate(masks[0]):
            combo = lead & height_ok
            if n == 1:
                vals = ws[combo].sum() / side
                if vals > best:
                    best = float(vals)
                    best_lo = np.asarray([axis_anchors[0][i0]])
                    best_side = side
                continue
            rest = masks[1] & combo
            if n == 2:
                vals = rest @ ws / side**n
                k = int(np.argmax(vals))
                if vals[k] > best:
                    best = float(vals[k])
                    best_lo = np.asarray([axis_anchors[0][i0], axis_anchors[1][k]])
                    best_side = side
            else:
                for i1, row in enumerate(rest):
                    vals = (masks[2] & row) @ ws / side**n
                    k = int(np.argmax(vals))
                    if vals[k] > best:
                        best = float(vals[k])
                        best_lo = np.asarray([
                            axis_anchors[0][i0], axis_anchors[1][i1], axis_anchors[2][k]
                        ])
                        best_side = side
    return best, best_lo, best_side


def carleson_norm(mu: AtomicMeasure) -> CarlesonReport:
    """Exact supremum of |mu|(box)/|base| over the candidate cube family.

    Boxes are closed at the top face, so the supremum over finitely many
    atoms is attained.  Signed measures enter through their total
    variation.
    """
    if mu.count == 0 or np.all(mu.masses == 0):
        return CarlesonReport(0.0, (0.0,) * max(mu.n, 1), 0.0,
                              np.empty(0, dtype=int), np.empty(0))
    ws = np.abs(mu.masses)
    if mu.n == 1:
        best, lo, side = _carleson_norm_1d(mu.positions[:, 0], mu.heights, ws)
    else:
        best, lo, side = _carleson_norm_nd(mu.positions, mu.heights, ws)
    idx = _box_atoms(mu, lo, side)
    return CarlesonReport(best, tuple(map(float, lo)), side, idx, mu.masses[idx])


# ---------------------------------------------------------------------------
# Balayage
# ---------------------------------------------------------------------------

def balayage(kernels, mu: AtomicMeasure, grid: Grid = None) -> GridFunction:
    """Sweep of mu: sum over atoms of mass * K_t(., nearest grid point to y).

    kernels is a time-indexed provider; spectral semigroups are applied
    through one synthesis per distinct atom height.
    """
    if grid is None:
        grid = kernels.grid
    out = np.zeros(grid.size)
    if mu.count == 0:
        return GridFunction(grid, out)
    floor = getattr(kernels, "min_resolvable_height", grid.h / 4.0)
    if np.any(mu.heights < floor):
        raise ResolutionError(f"atom height below {floor:.3g} is not resolvable")
    cells = grid.flat_indices(mu.positions)
    heights = np.round(mu.heights, 15)
    for t in np.unique(heights):
        sel = heights == t
        if hasattr(kernels, "apply_to_point_masses"):
            out += kernels.apply_to_point_masses(float(t), cells[sel], mu.masses[sel])
        else:
            K = kernels.matrix(float(t))
            for j, mass in zip(cells[sel], mu.masses[sel]):
                out += mass * K.matrix[:, j]
    return GridFunction(grid, out)


@dataclass(frozen=True)
class BalayageRatio:
    ratio: float
    sweep_bmoL: float
    carleson: float
    degenerate: bool


def balayage_bmo_ratio(mu: AtomicMeasure, kernels, bmo_ctx) -> BalayageRatio:
    """Adapted-BMO norm of the sweep divided by the Carleson norm of mu."""
    report = carleson_norm(mu)
    if report.norm == 0:
        return BalayageRatio(float("nan"), 0.0, 0.0, True)
    sweep = balayage(kernels, mu)
    norm = bmo_ctx.norm(sweep)
    return BalayageRatio(norm / report.norm, norm, report.norm, False)


# ---------------------------------------------------------------------------
# Heat balayage transform
# ---------------------------------------------------------------------------

def _heat_transform_weights(ts: np.ndarray, s_nodes: np.ndarray,
                            log_step: float) -> np.ndarray:
    """omega_j(t_i): log-trapezoid weights of the height-mixing kernel.

    Row i integrates (1/sqrt(pi)) t e^{-t^2/(4 s^2)} / s^2 ds to unit mass.
    """
    w = np.full(s_nodes.size, log_step)
    w[0] *= 0.5
    w[-1] *= 0.5
    t = ts[:, None]
    s = s_nodes[None, :]
    return (t / SQRT_PI) * np.exp(-(t * t) / (4.0 * s * s)) / (s * s) * s * w[None, :]


@dataclass(frozen=True)
class HeatTransformResult:
    measure: AtomicMeasure
    mass_defect: float
    s_nodes: np.ndarray = field(repr=False)


def heat_balayage_transform(mu: AtomicMeasure, n_nodes: int = 256,
                            s_lo: float = None, s_hi: float = None,
                            mass_tol: float = 1e-5,
                            prune_rel: float = 1e-14) -> HeatTransformResult:
    """Rewrite a Poisson sweep as a squared-time heat sweep.

    Each atom (y, t, m) spreads over heights s with weights
    omega_j(t) = (1/sqrt(pi)) t e^{-t^2/(4 s_j^2)} s_j^{-2} ds_j, so that
    sweeping the result with s -> heat kernel at s^2 reproduces the Poisson
    sweep of mu.  Total variation is preserved to quadrature tolerance;
    exceeding mass_tol raises a convergence error.
    """
    if mu.count == 0:
        return HeatTransformResult(mu, 0.0, np.empty(0))
    t_lo, t_hi = float(mu.heights.min()), float(mu.heights.max())
    if s_lo is None:
        s_lo = t_lo / 14.0
    if s_hi is None:
        s_hi = 10.0 * t_hi / (SQRT_PI * mass_tol)
    v = np.linspace(math.log(s_lo), math.log(s_hi), n_nodes)
    s_nodes = np.exp(v)
    omega = _heat_transform_weights(mu.heights, s_nodes, v[1] - v[0])
    defect = float(np.abs(omega.sum(axis=1) - 1.0).max())
    if defect > mass_tol:
        raise ConvergenceError(
            f"height-mixing quadrature mass defect {defect:.2e} exceeds {mass_tol:.1e}"
        )
    masses = mu.masses[:, None] * omega
    floor = prune_rel * np.abs(masses).max()
    keep = np.abs(masses) > floor
    i_idx, j_idx = np.nonzero(keep)
    nu = AtomicMeasure(mu.positions[i_idx], s_nodes[j_idx], masses[keep])
    return HeatTransformResult(nu, defect, s_nodes)


# ---------------------------------------------------------------------------
# Smearing of Dirac masses onto hyperplanes
# ---------------------------------------------------------------------------

def smear_profile(n: int, t: float, x, center) -> np.ndarray:
    """Phi_t(x, center) = t / (t + |x - center|)^(n+1)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    center = np.atleast_1d(np.asarray(center, dtype=float))
    dist = np.sqrt(((x - center) ** 2).sum(axis=1))
    return t / (t + dist) ** (n + 1)


def _plane_quadrature(grid: Grid, center: np.ndarray, t: float, tail_tol: float):
    """Cell centers and volumes covering the smear plane around an atom.

    Inside the domain the grid cells are used as-is; beyond it the lattice
    continues with dyadically coarsening shells until the omitted tail of
    the smear profile falls below tail_tol of the plane mass.
    """
    pts = [grid.points]
    vols = [np.full(grid.size, grid.cell_volume())]
    # dyadic shells beyond the box: radius and spacing double each ring
    R_needed = t * (1.0 / tail_tol - 1.0)
    R = grid.half_width
    level = 0
    while R < R_needed:
        h_k = grid.h * 2**level
        hi = 2 * R
        coarse_axis = np.arange(-hi + h_k / 2.0, hi, h_k)
        mesh = np.meshgrid(*([coarse_axis] * grid.n), indexing="ij")
        coarse = np.stack([c.ravel() for c in mesh], axis=-1)
        inf_norm = np.abs(coarse).max(axis=1)
        in_shell = (inf_norm >= R) & (inf_norm < hi)
        pts.append(coarse[in_shell])
        vols.append(np.full(int(in_shell.sum()), h_k**grid.n))
        R = hi
        level += 1
    return np.vstack(pts), np.concatenate(vols)


@dataclass(frozen=True)
class SmearResult:
    measure: AtomicMeasure
    normalization: float
    input_norm: float
    output_norm: float
    ratio: float


def smeared_dirac_measure(atoms, grid: Grid, tail_tol: float = 5e-3) -> SmearResult:
    """Replace point masses by smeared densities on their height planes.

    Input atoms are ((x...), t, mass) triples, (HalfSpacePoint, mass) pairs
    or an AtomicMeasure; the input is normalized so its Carleson norm is at
    most one (the factor is recorded).  Each atom becomes a plane measure
    with density mass * Phi_t(., x) sampled on (an extension of) the cell
    lattice; the ratio of output to input Carleson norms is reported.
    """
    mu_in = atoms if isinstance(atoms, AtomicMeasure) else AtomicMeasure.from_atoms(atoms)
    if mu_in.count == 0:
        return SmearResult(AtomicMeasure.empty(grid.n), 1.0, 0.0, 0.0, float("nan"))
    in_report = carleson_norm(mu_in)
    scale = 1.0 / in_report.norm if in_report.norm > 1.0 else 1.0
    mu_in = mu_in.scaled(scale)

    pos_list, h_list, m_list = [], [], []
    for i in range(mu_in.count):
        t = float(mu_in.heights[i])
        center = mu_in.positions[i]
        plane_pts, plane_vols = _plane_quadrature(grid, center, t, tail_tol)
        dens = smear_profile(grid.n, t, plane_pts, center)
        pos_list.append(plane_pts)
        h_list.append(np.full(plane_pts.shape[0], t))
        m_list.append(mu_in.masses[i] * dens * plane_vols)
    out = AtomicMeasure(np.vstack(pos_list), np.concatenate(h_list),
                        np.concatenate(m_list)).pruned()
    out_report = carleson_norm(out)
    in_norm = in_report.norm * scale
    ratio = out_report.norm / in_norm if in_norm > 0 else float("nan")
    return SmearResult(out, scale, in_norm, out_report.norm, ratio)
