import math

import numpy as np
import pytest

from schrodinger_bmo.errors import ConvergenceError, DomainError
from schrodinger_bmo.grid import Grid, GridFunction, default_t_lattice
from schrodinger_bmo.potential import constant_potential, zero_potential
from schrodinger_bmo.spectral import (
    GreenQuadrature,
    HeatSemigroup,
    PoissonSemigroup,
    SpectralDecomposition,
    SquaredHeatSemigroup,
    assemble_operator,
    dt_poisson_kernel,
    extension_t_gradient_sup,
    extension_wave_defect,
    gradient_kernels,
    green_identity_residual,
    green_window_tail,
    harmonic_extension,
    heat_kernel,
    poisson_kernel_spectral,
    poisson_kernel_subordination,
    reproducing_formula_quadrature_gap,
    reproducing_formula_residual,
    subordination_scalar,
)


@pytest.fixture(scope="module")
def dec_free():
    g = Grid(1, 128, 2.0)
    return SpectralDecomposition.compute(g, zero_potential(g))


@pytest.fixture(scope="module")
def dec_v1():
    g = Grid(1, 128, 2.0)
    return SpectralDecomposition.compute(g, constant_potential(g, 1.0))


def smooth_bump(grid):
    x = grid.points[:, 0]
    vals = np.where(np.abs(x) < 1, np.exp(-1 / (1 - np.minimum(x**2, 1 - 1e-12))), 0.0)
    return GridFunction(grid, vals / vals.max())


def test_operator_stencil_diagonal_and_negativity_check():
    g = Grid(1, 16)
    V = constant_potential(g, 2.0)
    op = assemble_operator(g, V)
    assert np.allclose(np.diag(op.matrix), 2.0 / g.h**2 + 2.0)
    assert np.allclose(op.matrix, op.matrix.T)
    with pytest.raises(DomainError):
        assemble_operator(g, -np.ones(g.size))


def test_free_eigenvalues_match_closed_form():
    g = Grid(1, 64)
    dec = SpectralDecomposition.compute(g, zero_potential(g))
    m, h = g.m, g.h
    k = np.arange(1, m + 1)
    exact = (4.0 / h**2) * np.sin(k * math.pi / (2 * (m + 1))) ** 2
    assert np.abs(np.sort(exact) - dec.eigenvalues).max() < 1e-9


def test_constant_potential_shifts_spectrum():
    g = Grid(1, 32)
    dec0 = SpectralDecomposition.compute(g, zero_potential(g))
    dec3 = SpectralDecomposition.compute(g, constant_potential(g, 3.0))
    assert np.allclose(dec3.eigenvalues, dec0.eigenvalues + 3.0, atol=1e-9)


def test_gram_matrix_is_identity(dec_v1):
    assert dec_v1.gram_defect() < 1e-10


def test_heat_kernel_constant_shift_identity():
    g = Grid(1, 32)
    dec0 = SpectralDecomposition.compute(g, zero_potential(g))
    dec2 = SpectralDecomposition.compute(g, constant_potential(g, 2.0))
    t = 0.7
    K0 = heat_kernel(dec0, t).matrix
    K2 = heat_kernel(dec2, t).matrix
    assert np.abs(K2 - math.exp(-2.0 * t) * K0).max() < 1e-10


def test_semigroup_property_heat_and_poisson(dec_v1):
    g = dec_v1.grid
    hn = g.cell_volume()
    for maker in (heat_kernel, poisson_kernel_spectral):
        Ks = maker(dec_v1, 0.4).matrix
        Kt = maker(dec_v1, 0.6).matrix
        Kst = maker(dec_v1, 1.0).matrix
        assert np.abs(Ks @ Kt * hn - Kst).max() < 1e-10


def test_kernel_positivity_symmetry_and_mass(dec_v1):
    for t in (0.1, 1.0, 4.0):
        for K in (heat_kernel(dec_v1, t), poisson_kernel_spectral(dec_v1, t)):
            assert K.matrix.min() >= -1e-12
            assert K.symmetry_defect() < 1e-12
            mass = K.mass()
            assert mass.max() <= 1 + 1e-10
            assert mass[K.grid.m // 2] < 1.0  # strict: the potential eats mass


def test_free_kernels_dominate_discrete_kernels(dec_free):
    g = dec_free.grid
    pts = g.points[:, 0]
    diff = pts[:, None] - pts[None, :]
    for t in (0.25, 1.0):
        H = heat_kernel(dec_free, t).matrix
        free_h = np.exp(-(diff**2) / (4 * t)) / math.sqrt(4 * math.pi * t)
        assert (H - free_h).max() <= 1e-3
        P = poisson_kernel_spectral(dec_free, t).matrix
        free_p = t / (t**2 + diff**2) / math.pi
        assert (P - free_p).max() <= 1e-3


def test_subordination_scalar_identities():
    assert subordination_scalar(0.0, 1.0) == pytest.approx(1.0, abs=1e-9)
    assert subordination_scalar(1.0, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert subordination_scalar(4.0, 0.5) == pytest.approx(math.exp(-0.5 * 2.0), rel=1e-12)


def test_subordination_matrix_matches_spectral(dec_v1):
    heat = HeatSemigroup(dec_v1)
    for t in (0.1, 1.0, 4.0):
        Ps = poisson_kernel_spectral(dec_v1, t)
        Pq = poisson_kernel_subordination(heat, t, n_nodes=400)
        rel = np.abs(Pq.matrix - Ps.matrix).max() / np.abs(Ps.matrix).max()
        assert rel < 1e-6


def test_subordination_drift_control(dec_v1):
    heat = HeatSemigroup(dec_v1)
    K = poisson_kernel_subordination(heat, 1.0, n_nodes=400, check_drift=True)
    assert K.kind == "poisson"
    with pytest.raises(ConvergenceError):
        poisson_kernel_subordination(heat, 1.0, n_nodes=6, check_drift=True)


def test_gradient_kernel_dt_matches_finite_differences(dec_v1):
    t, eps = 1.0, 1e-4
    exact = dt_poisson_kernel(dec_v1, t)
    fd = (poisson_kernel_spectral(dec_v1, t + eps).matrix
          - poisson_kernel_spectral(dec_v1, t - eps).matrix) / (2 * eps)
    assert np.abs(exact - fd).max() < 1e-6


def test_free_poisson_dt_closed_form():
    # d/dt of the free kernel at the diagonal: d/dt [1/(pi t)] = -1/(pi t^2);
    # needs a wide box since the Poisson tails feel the Dirichlet truncation
    g = Grid(1, 256, 8.0)
    dec = SpectralDecomposition.compute(g, zero_potential(g))
    i0 = g.flat_index([0.0])
    val = dt_poisson_kernel(dec, 1.0)[i0, i0]
    assert val == pytest.approx(-1.0 / math.pi, rel=0.02)


def test_gradient_kernels_bounded_by_size_envelope(dec_v1):
    g = dec_v1.grid
    t = 0.5
    gx, gt = gradient_kernels(dec_v1, t)
    pts = g.points[:, 0]
    mod = np.sqrt(t**2 + (pts[:, None] - pts[None, :]) ** 2)
    envelope = t / mod**2
    fit = (t * (gx.matrix + np.abs(gt.matrix)) / envelope).max()
    assert np.isfinite(fit)


def test_harmonic_extension_eigenvector_and_contraction(dec_v1):
    g = dec_v1.grid
    k = 2
    lam = dec_v1.eigenvalues[k]
    psi = GridFunction(g, dec_v1.eigenvectors[:, k])
    ext = harmonic_extension(dec_v1, psi, [0.5])
    expected = math.exp(-0.5 * math.sqrt(lam)) * psi.values
    assert np.abs(ext.values[0] - expected).max() < 1e-12

    f = smooth_bump(g)
    norms = []
    for t in (0.2, 0.1, 0.05, 0.025):
        u = harmonic_extension(dec_v1, f, [t]).values[0]
        norms.append(np.sqrt(((u - f.values) ** 2).sum() * g.h))
    assert norms == sorted(norms, reverse=True)
    assert extension_wave_defect(dec_v1, f, 1.0) < 1e-10


def test_extension_gradient_sup_finite(dec_v1):
    g = dec_v1.grid
    f = smooth_bump(g)
    ext = harmonic_extension(dec_v1, f, default_t_lattice(g))
    assert np.isfinite(extension_t_gradient_sup(dec_v1, ext))


def test_reproducing_formula_residuals(dec_v1):
    g = dec_v1.grid
    f = smooth_bump(g)
    lam_min = dec_v1.eigenvalues[0]
    T = 10.0 / math.sqrt(lam_min)
    assert reproducing_formula_residual(dec_v1, f, T) <= math.exp(-20) * f.norm_l2() * (1 + 1e-9)
    assert reproducing_formula_residual(dec_v1, f, 0.0) == pytest.approx(f.norm_l2())
    assert reproducing_formula_quadrature_gap(dec_v1, f, T, n_nodes=200) < 1e-6


def test_green_identity_single_eigenvector_matches_window_tail(dec_v1):
    # on a short window the residual of one mode is the closed-form window
    # truncation error; the O(h^2) spatial defect is negligible against it
    g = dec_v1.grid
    V = constant_potential(g, 1.0)
    for k, t_hi in ((0, 0.5), (1, 0.5), (0, 1.0)):
        psi = GridFunction(g, dec_v1.eigenvectors[:, k])
        quad = GreenQuadrature(g.h / 2, t_hi, 160)
        res = green_identity_residual(dec_v1, psi, V, quad,
                                      require_unit_support=False)
        tail = green_window_tail(dec_v1, psi, quad.t_lo, quad.t_hi) / psi.norm_l2()
        assert res == pytest.approx(tail, rel=0.02)


def test_green_identity_smooth_bump_and_window_monotonicity(dec_v1):
    g = dec_v1.grid
    f = smooth_bump(g)
    V = constant_potential(g, 1.0)
    residuals = [
        green_identity_residual(dec_v1, f, V, GreenQuadrature(g.h / 2, hi, 100))
        for hi in (2.0, 4.0, 8.0)
    ]
    assert residuals[0] >= residuals[1] >= residuals[2]
    assert residuals[-1] < 0.02


def test_green_identity_requires_unit_support(dec_v1):
    g = dec_v1.grid
    bad = GridFunction(g, np.ones(g.size))
    with pytest.raises(Exception):
        green_identity_residual(dec_v1, bad, constant_potential(g, 1.0))


def test_squared_heat_family_is_heat_at_squared_times(dec_v1):
    fam = SquaredHeatSemigroup(dec_v1)
    s = 0.8
    direct = heat_kernel(dec_v1, s * s).matrix
    assert np.abs(fam.matrix(s).matrix - direct).max() < 1e-12


def test_poisson_semigroup_column_consistency(dec_v1):
    pois = PoissonSemigroup(dec_v1)
    t = 0.7
    K = pois.matrix(t).matrix
    col = pois.column(t, 17)
    assert np.abs(col - K[:, 17]).max() < 1e-12
    masses = pois.apply_to_point_masses(t, np.asarray([3, 17]), np.asarray([2.0, -1.0]))
    assert np.abs(masses - (2 * K[:, 3] - K[:, 17])).max() < 1e-12
