import numpy as np
import pytest

from schrodinger_bmo.bmo import BmoContext, build_cube_family
from schrodinger_bmo.carleson import AtomicMeasure
from schrodinger_bmo.corpus import hardy_atoms, sign_bump, smooth_bump
from schrodinger_bmo.decomposition import decompose
from schrodinger_bmo.grid import Grid, GridFunction, default_t_lattice
from schrodinger_bmo.hardy import (
    carleson_embedding_check,
    duality_pairing_check,
    hardy_norm,
    nontangential_maximal,
)
from schrodinger_bmo.potential import constant_potential, critical_radius_field
from schrodinger_bmo.spectral import SpectralDecomposition, harmonic_extension


@pytest.fixture(scope="module")
def lab():
    g = Grid(1, 128, 2.0)
    V = constant_potential(g, 1.0)
    dec = SpectralDecomposition.compute(g, V)
    fam = build_cube_family(g)
    rho = critical_radius_field(V)
    return g, V, dec, BmoContext(fam, rho)


def test_maximal_function_bounds_below(lab):
    g, V, dec, ctx = lab
    f = smooth_bump(g)
    ts = default_t_lattice(g)
    ext = harmonic_extension(dec, f, ts)
    rep = nontangential_maximal(ext)
    assert np.all(rep.pstar.values >= np.abs(ext.values[0]) - 1e-14)
    assert rep.l1_norm >= float(np.abs(ext.values[0]).sum() * g.h) - 1e-12


def test_maximal_function_zero(lab):
    g, V, dec, ctx = lab
    zero = GridFunction(g, np.zeros(g.size))
    rep = hardy_norm(dec, zero)
    assert rep.l1_norm == 0.0


def test_maximal_function_monotone_under_lattice_refinement(lab):
    g, V, dec, ctx = lab
    f = sign_bump(g)
    coarse = default_t_lattice(g, ratio=2.0)
    fine = default_t_lattice(g)  # sqrt(2) steps refine the factor-2 lattice
    p_coarse = nontangential_maximal(harmonic_extension(dec, f, coarse)).pstar.values
    p_fine = nontangential_maximal(harmonic_extension(dec, f, fine)).pstar.values
    assert np.all(p_fine >= p_coarse - 1e-14)


def test_embedding_one_atom_inequality(lab):
    # single atom: the pairing is |mass| u(y0, t0), and any cone containing
    # (y0, t0) gives P*f(x) >= |u(y0, t0)|
    g, V, dec, ctx = lab
    f = smooth_bump(g)
    y0, t0 = 0.25, 1.0
    mu = AtomicMeasure(np.array([[y0]]), np.array([t0]), np.array([0.7]))
    pstar = hardy_norm(dec, f)
    rep = carleson_embedding_check(dec, f, mu, pstar)
    i0 = g.flat_index([y0])  # x = y0 satisfies |x - y0| <= t0
    assert abs(rep.pairing) <= 0.7 * pstar.pstar.values[i0] + 1e-12
    assert not rep.degenerate


def test_embedding_scale_invariance_and_corpus(lab):
    g, V, dec, ctx = lab
    f = smooth_bump(g)
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(10):
        k = int(rng.integers(4, 12))
        mu = AtomicMeasure(rng.uniform(-2, 2, (k, 1)), rng.uniform(0.05, 4, k),
                           rng.uniform(0, 1, k))
        rep = carleson_embedding_check(dec, f, mu)
        rep5 = carleson_embedding_check(dec, f, mu.scaled(5.0))
        assert rep5.ratio == pytest.approx(rep.ratio, rel=1e-12)
        ratios.append(rep.ratio)
    assert np.isfinite(max(ratios))


def test_embedding_degenerate_flag(lab):
    g, V, dec, ctx = lab
    f = smooth_bump(g)
    rep = carleson_embedding_check(dec, f, AtomicMeasure.empty(1))
    assert rep.degenerate


def test_duality_pairing_corpus(lab):
    g, V, dec, ctx = lab
    g_fn = sign_bump(g)
    result = decompose(g_fn, dec, V, ctx)
    rho_scale = float(ctx.rho.fn.values.min())
    ratios = []
    for f in hardy_atoms(g, rho_scale, count=6, seed=4):
        rep = duality_pairing_check(f, g_fn, result, dec, ctx)
        assert not rep.degenerate
        # the split reproduces the pairing within the reconstruction residual
        recon_gap = abs(rep.pairing - rep.bounded_term - rep.sweep_term)
        assert recon_gap <= 0.1 * max(abs(rep.pairing), 1e-6) + 0.05
        ratios.append(rep.ratio)
    assert np.isfinite(max(ratios))


def test_duality_zero_function_flagged(lab):
    g, V, dec, ctx = lab
    g_fn = sign_bump(g)
    result = decompose(g_fn, dec, V, ctx)
    zero = GridFunction(g, np.zeros(g.size))
    rep = duality_pairing_check(zero, g_fn, result, dec, ctx)
    assert rep.degenerate
