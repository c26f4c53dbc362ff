"""Test-function and random-measure corpora for the norm experiments.

The function corpus spans oscillation-dominant and average-dominant
regimes: sign bumps, truncated logarithms, dyadic martingale steps and
random eigenvector mixtures, all cut off to the unit cube.
"""

from __future__ import annotations

import numpy as np

from .carleson import AtomicMeasure
from .grid import Grid, GridFunction
from .spectral import SpectralDecomposition


def _unit_support_mask(grid: Grid) -> np.ndarray:
    return np.all(np.abs(grid.points) <= 1.0, axis=1)


def sign_bump(grid: Grid) -> GridFunction:
    vals = np.sign(grid.points[:, 0]) * _unit_support_mask(grid)
    return GridFunction(grid, vals)


def smooth_bump(grid: Grid, center=None, width: float = 1.0) -> GridFunction:
    center = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    r2 = ((grid.points - center) ** 2).sum(axis=1) / width**2
    vals = np.where(r2 < 1.0, np.exp(-1.0 / (1.0 - np.minimum(r2, 1.0 - 1e-12))), 0.0)
    vals = vals / max(vals.max(), 1e-300) * _unit_support_mask(grid)
    return GridFunction(grid, vals)


def truncated_log(grid: Grid) -> GridFunction:
    r = np.maximum(np.sqrt((grid.points**2).sum(axis=1)), grid.h)
    vals = np.log(1.0 / r) * _unit_support_mask(grid)
    return GridFunction(grid, vals)


def dyadic_martingale(grid: Grid, levels: int = 5, seed: int = 0) -> GridFunction:
    rng = np.random.default_rng(seed)
    vals = np.zeros(grid.size)
    L = grid.half_width
    for k in range(1, levels + 1):
        side = 2.0 * L / 2**k
        idx = np.floor((grid.points + L) / side).astype(int)
        idx = np.clip(idx, 0, 2**k - 1)
        flat = np.ravel_multi_index(tuple(idx[:, a] for a in range(grid.n)),
                                    (2**k,) * grid.n)
        signs = rng.choice([-1.0, 1.0], size=2 ** (grid.n * k))
        vals += signs[flat]
    return GridFunction(grid, vals * _unit_support_mask(grid))


def eigen_mixture(grid: Grid, dec: SpectralDecomposition, modes: int = 8,
                  seed: int = 0) -> GridFunction:
    rng = np.random.default_rng(seed)
    pick = rng.choice(min(4 * modes, dec.size), size=modes, replace=False)
    weights = rng.normal(size=modes) / np.sqrt(1.0 + dec.eigenvalues[pick])
    vals = dec.eigenvectors[:, pick] @ weights
    vals = vals * _unit_support_mask(grid)
    peak = np.abs(vals).max()
    return GridFunction(grid, vals / max(peak, 1e-300))


def bmo_corpus(grid: Grid, dec: SpectralDecomposition = None, seed: int = 0) -> list:
    """Named corpus used by the stopping-time and balayage experiments."""
    out = [
        ("sign_bump", sign_bump(grid)),
        ("truncated_log", truncated_log(grid)),
        ("dyadic_martingale", dyadic_martingale(grid, levels=5, seed=seed)),
    ]
    if dec is not None:
        out.append(("eigen_mixture", eigen_mixture(grid, dec, seed=seed)))
    return out


def random_carleson_measures(grid: Grid, count: int = 50, atoms: int = 24,
                             seed: int = 2024, t_min: float = 0.02) -> list:
    """Random positive atomic measures with atoms in the root Carleson box."""
    rng = np.random.default_rng(seed)
    L = grid.half_width
    out = []
    for _ in range(count):
        k = int(rng.integers(max(atoms // 2, 1), atoms + 1))
        pos = rng.uniform(-L, L, size=(k, grid.n))
        hts = rng.uniform(t_min, 2.0 * L, size=k)
        ms = rng.uniform(0.0, 1.0, size=k)
        out.append(AtomicMeasure(pos, hts, ms))
    return out


def upsample(f: GridFunction, fine: Grid) -> GridFunction:
    """Resample to a finer grid, constant on each coarse cell.

    The refined function is the same BMO test function: coarse cells split
    into equal fine cells carrying the parent value.
    """
    coarse = f.grid
    if fine.n != coarse.n or fine.m % coarse.m != 0 \
            or fine.half_width != coarse.half_width:
        raise ValueError("fine grid must refine the coarse grid")
    factor = fine.m // coarse.m
    shaped = f.values.reshape(coarse.shape)
    for axis in range(coarse.n):
        shaped = np.repeat(shaped, factor, axis=axis)
    return GridFunction(fine, shaped.ravel())


def hardy_atoms(grid: Grid, rho_scale: float, count: int = 12,
                seed: int = 11) -> list:
    """Bump atoms: mean-zero below the critical scale, plain at or above it."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        scale = float(rng.uniform(0.1, 1.0))
        center = rng.uniform(-0.5, 0.5, size=grid.n)
        bump = smooth_bump(grid, center=center, width=scale)
        vals = bump.values.copy()
        if scale < rho_scale:
            support = vals != 0
            if support.any():
                vals[support] -= vals[support].mean()
        norm = np.abs(vals).sum() * grid.cell_volume()
        if norm > 0:
            vals /= norm
        out.append(GridFunction(grid, vals))
    return out
