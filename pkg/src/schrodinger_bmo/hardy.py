"""Nontangential maximal function, Hardy norm and duality diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .carleson import AtomicMeasure
from .grid import GridFunction, default_t_lattice
from .spectral import ExtensionTable, SpectralDecomposition, harmonic_extension


@dataclass(frozen=True)
class MaximalReport:
    pstar: GridFunction
    l1_norm: float
    attaining_level: np.ndarray = field(repr=False)  # per cell, index into t_levels
    t_levels: np.ndarray = field(repr=False)


def _cone_max_at_level(values: np.ndarray, grid, t: float) -> np.ndarray:
    """max of |u(., t)| over the cone slice |x - y| <= t (cell metric)."""
    k = int(np.floor(t / grid.h + 1e-12))
    shaped = np.abs(values).reshape(grid.shape)
    if grid.n == 1:
        out = ndimage.maximum_filter1d(shaped, size=2 * k + 1, mode="nearest")
    else:
        # Euclidean ball footprint of radius t in cell units
        ax = np.arange(-k, k + 1)
        mesh = np.meshgrid(*([ax] * grid.n), indexing="ij")
        footprint = sum(m**2 for m in mesh) <= (t / grid.h) ** 2 + 1e-12
        out = ndimage.maximum_filter(shaped, footprint=footprint, mode="nearest")
    return out.ravel()


def nontangential_maximal(ext: ExtensionTable) -> MaximalReport:
    """P* f(x): sup of |u(y, t)| over lattice heights and |x - y| <= t.

    The lattice sup under-approximates the true sup and grows monotonically
    under lattice refinement.
    """
    grid = ext.grid
    best = np.full(grid.size, -np.inf)
    level = np.zeros(grid.size, dtype=int)
    for i, t in enumerate(ext.t_levels):
        cand = _cone_max_at_level(ext.values[i], grid, t)
        take = cand > best
        best[take] = cand[take]
        level[take] = i
    pstar = GridFunction(grid, best)
    return MaximalReport(pstar, pstar.norm_l1(), level, np.asarray(ext.t_levels))


def hardy_norm(dec: SpectralDecomposition, f: GridFunction,
               t_lattice=None) -> MaximalReport:
    if t_lattice is None:
        t_lattice = default_t_lattice(f.grid)
    ext = harmonic_extension(dec, f, t_lattice)
    return nontangential_maximal(ext)


@dataclass(frozen=True)
class EmbeddingReport:
    ratio: float
    pairing: float
    carleson: float
    pstar_l1: float
    degenerate: bool


def carleson_embedding_check(dec: SpectralDecomposition, f: GridFunction,
                             mu: AtomicMeasure, pstar: MaximalReport = None) -> EmbeddingReport:
    """|sum of mass * u(y, t)| against the Carleson norm times the Hardy norm."""
    from .carleson import carleson_norm

    grid = f.grid
    if pstar is None:
        pstar = hardy_norm(dec, f)
    c_norm = carleson_norm(mu).norm
    if c_norm == 0 or pstar.l1_norm == 0:
        return EmbeddingReport(float("nan"), 0.0, c_norm, pstar.l1_norm, True)
    coeffs = dec.project(f.values)
    root = np.sqrt(dec.eigenvalues)
    cells = grid.flat_indices(mu.positions)
    heights = np.round(mu.heights, 15)
    pairing = 0.0
    for t in np.unique(heights):
        sel = heights == t
        u_t = dec.synthesize(np.exp(-float(t) * root) * coeffs)
        pairing += float(u_t[cells[sel]] @ mu.masses[sel])
    ratio = abs(pairing) / (c_norm * pstar.l1_norm)
    return EmbeddingReport(ratio, pairing, c_norm, pstar.l1_norm, False)


@dataclass(frozen=True)
class DualityReport:
    ratio: float
    pairing: float
    bounded_term: float
    sweep_term: float
    hardy_norm: float
    bmo_norm: float
    degenerate: bool


def duality_pairing_check(f: GridFunction, g: GridFunction, decomposition,
                          dec: SpectralDecomposition, bmo_ctx) -> DualityReport:
    """Pairing |integral of f g| split along the decomposition of g.

    The bounded part pairs in L1 x Linf; the sweep part reduces to the
    Carleson embedding of the extension of f against the decomposition
    measure.  The reported ratio divides by the Hardy norm of f and the
    adapted BMO norm of g.
    """
    grid = f.grid
    hn = grid.cell_volume()
    bmo = bmo_ctx.norm(g)
    pstar = hardy_norm(dec, f)
    if bmo == 0 or pstar.l1_norm == 0:
        return DualityReport(float("nan"), 0.0, 0.0, 0.0, pstar.l1_norm, bmo, True)
    pairing = float(f.values @ g.values) * hn
    bounded = float(f.values @ decomposition.g.values) * hn
    embed = carleson_embedding_check(dec, f, decomposition.mu, pstar)
    ratio = abs(pairing) / (pstar.l1_norm * bmo)
    return DualityReport(ratio, pairing, bounded, embed.pairing,
                         pstar.l1_norm, bmo, False)
