import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schrodinger_bmo.carleson import (
    AtomicMeasure,
    balayage,
    balayage_bmo_ratio,
    carleson_norm,
    heat_balayage_transform,
    smear_profile,
    smeared_dirac_measure,
)
from schrodinger_bmo.bmo import BmoContext, build_cube_family
from schrodinger_bmo.errors import ConvergenceError, ResolutionError
from schrodinger_bmo.grid import Grid
from schrodinger_bmo.potential import constant_potential, critical_radius_field
from schrodinger_bmo.spectral import (
    PoissonSemigroup,
    SpectralDecomposition,
    SquaredHeatSemigroup,
)


def brute_force_norm_1d(mu: AtomicMeasure) -> float:
    """All cubes with a face at an atom coordinate or a side equal to a height."""
    ys, ts, ws = mu.positions[:, 0], mu.heights, np.abs(mu.masses)
    best = 0.0
    candidates = []
    for yi in ys:
        for yj in ys:
            if yj > yi:
                candidates.append((yi, yj - yi))
        for tk in ts:
            candidates.append((yi, tk))
            candidates.append((yi - tk, tk))
    for a, side in candidates:
        if side <= 0:
            continue
        mass = ws[(ys >= a - 1e-12) & (ys <= a + side + 1e-12)
                  & (ts <= side + 1e-12)].sum()
        best = max(best, mass / side)
    return best


def test_single_atom_norm():
    mu = AtomicMeasure(np.array([[0.0]]), np.array([0.5]), np.array([1.0]))
    rep = carleson_norm(mu)
    assert rep.norm == pytest.approx(2.0)
    assert rep.cube_side == pytest.approx(0.5)
    assert list(rep.atom_indices) == [0]


def test_empty_and_scaling():
    assert carleson_norm(AtomicMeasure.empty(1)).norm == 0.0
    mu = AtomicMeasure(np.array([[0.1], [-0.4]]), np.array([0.5, 1.0]),
                       np.array([1.0, -2.0]))
    assert carleson_norm(mu.scaled(3.0)).norm == pytest.approx(
        3.0 * carleson_norm(mu).norm
    )


def test_norm_subadditive_on_shared_support():
    rng = np.random.default_rng(8)
    pos = rng.uniform(-1, 1, (6, 1))
    hts = rng.uniform(0.1, 2.0, 6)
    a = AtomicMeasure(pos, hts, rng.uniform(-1, 1, 6))
    b = AtomicMeasure(pos, hts, rng.uniform(-1, 1, 6))
    ab = AtomicMeasure(pos, hts, a.masses + b.masses)
    assert carleson_norm(ab).norm <= carleson_norm(a).norm + carleson_norm(b).norm + 1e-12


@settings(max_examples=120, deadline=None)
@given(st.integers(1, 7), st.integers(0, 10_000))
def test_sweep_matches_brute_force(k, seed):
    rng = np.random.default_rng(seed)
    mu = AtomicMeasure(rng.uniform(-2, 2, (k, 1)), rng.uniform(0.05, 4.0, k),
                       rng.uniform(-1, 1, k))
    assert carleson_norm(mu).norm == pytest.approx(brute_force_norm_1d(mu), rel=1e-9)


def test_norm_dominates_random_boxes():
    # the candidate family dominates arbitrary cubes
    rng = np.random.default_rng(123)
    mu = AtomicMeasure(rng.uniform(-2, 2, (12, 1)), rng.uniform(0.05, 4.0, 12),
                       rng.uniform(0, 1, 12))
    norm = carleson_norm(mu).norm
    ys, ts, ws = mu.positions[:, 0], mu.heights, np.abs(mu.masses)
    for _ in range(4000):
        a = rng.uniform(-3, 3)
        side = rng.uniform(0.01, 5.0)
        mass = ws[(ys >= a) & (ys <= a + side) & (ts <= side)].sum()
        assert mass / side <= norm + 1e-12


def test_norm_2d_single_atom_and_pair():
    mu = AtomicMeasure(np.array([[0.0, 0.0]]), np.array([0.5]), np.array([1.0]))
    assert carleson_norm(mu).norm == pytest.approx(1.0 / 0.25)
    mu2 = AtomicMeasure(np.array([[0.0, 0.0], [0.3, 0.0]]), np.array([0.5, 0.5]),
                        np.array([1.0, 1.0]))
    # both atoms fit in a 0.5-cube; the pair dominates single-atom boxes
    assert carleson_norm(mu2).norm == pytest.approx(2.0 / 0.25)


def test_consolidate_merges_and_cancels():
    mu = AtomicMeasure(np.array([[0.2], [0.2], [0.5]]), np.array([1.0, 1.0, 2.0]),
                       np.array([1.0, -1.0, 3.0]))
    out = mu.consolidate()
    assert out.count == 1
    assert out.masses[0] == pytest.approx(3.0)


@pytest.fixture(scope="module")
def lab():
    g = Grid(1, 128, 2.0)
    V = constant_potential(g, 1.0)
    dec = SpectralDecomposition.compute(g, V)
    pois = PoissonSemigroup(dec)
    fam = build_cube_family(g)
    rho = critical_radius_field(V)
    return g, dec, pois, BmoContext(fam, rho)


def test_balayage_single_atom_is_kernel_column(lab):
    g, dec, pois, ctx = lab
    j = 40
    mu = AtomicMeasure(g.points[[j]], np.array([0.7]), np.array([1.0]))
    S = balayage(pois, mu)
    assert np.abs(S.values - pois.matrix(0.7).matrix[:, j]).max() < 1e-12


def test_balayage_linearity_and_l1_bound(lab):
    g, dec, pois, ctx = lab
    rng = np.random.default_rng(4)
    mu1 = AtomicMeasure(rng.uniform(-1, 1, (8, 1)), rng.uniform(0.1, 3, 8),
                        rng.uniform(0, 1, 8))
    mu2 = AtomicMeasure(rng.uniform(-1, 1, (5, 1)), rng.uniform(0.1, 3, 5),
                        rng.uniform(0, 1, 5))
    S12 = balayage(pois, mu1 + mu2)
    assert np.abs(S12.values - balayage(pois, mu1).values
                  - balayage(pois, mu2).values).max() < 1e-12
    # kernel columns have sub-unit mass, so the sweep L1 norm is below the
    # total variation (up to the stated slack)
    assert S12.norm_l1() <= (mu1.total_variation() + mu2.total_variation()) * (1 + 1e-3)
    # positive measures sweep to nonnegative functions
    assert S12.values.min() >= -1e-14


def test_balayage_resolution_error(lab):
    g, dec, pois, ctx = lab
    mu = AtomicMeasure(np.array([[0.0]]), np.array([g.h / 8]), np.array([1.0]))
    with pytest.raises(ResolutionError):
        balayage(pois, mu)


def test_balayage_bmo_ratio_scale_invariant_and_degenerate(lab):
    g, dec, pois, ctx = lab
    rng = np.random.default_rng(9)
    mu = AtomicMeasure(rng.uniform(-2, 2, (10, 1)), rng.uniform(0.05, 4, 10),
                       rng.uniform(0, 1, 10))
    r1 = balayage_bmo_ratio(mu, pois, ctx)
    r2 = balayage_bmo_ratio(mu.scaled(5.0), pois, ctx)
    assert not r1.degenerate
    assert r2.ratio == pytest.approx(r1.ratio, rel=1e-12)
    r0 = balayage_bmo_ratio(AtomicMeasure.empty(1), pois, ctx)
    assert r0.degenerate


def test_heat_transform_mass_and_sweep(lab):
    g, dec, pois, ctx = lab
    rng = np.random.default_rng(1)
    mu = AtomicMeasure(rng.uniform(-1.5, 1.5, (12, 1)), rng.uniform(0.1, 3.5, 12),
                       rng.uniform(0, 1, 12))
    res = heat_balayage_transform(mu, n_nodes=256)
    assert res.mass_defect < 1e-5
    assert res.measure.total_variation() == pytest.approx(
        mu.total_variation(), rel=1e-5
    )
    hsq = SquaredHeatSemigroup(dec)
    S_p = balayage(pois, mu)
    S_h = balayage(hsq, res.measure)
    assert np.abs(S_p.values - S_h.values).max() <= 1e-4
    # transform commutes with mass scaling exactly
    res3 = heat_balayage_transform(mu.scaled(3.0), n_nodes=256)
    assert np.abs(np.sort(res3.measure.masses) - 3 * np.sort(res.measure.masses)).max() < 1e-12


def test_heat_transform_carleson_ratio_bounded(lab):
    g, dec, pois, ctx = lab
    rng = np.random.default_rng(6)
    ratios = []
    for _ in range(5):
        k = int(rng.integers(5, 15))
        mu = AtomicMeasure(rng.uniform(-2, 2, (k, 1)), rng.uniform(0.05, 4, k),
                           rng.uniform(0, 1, k))
        res = heat_balayage_transform(mu, n_nodes=256)
        ratios.append(carleson_norm(res.measure).norm / carleson_norm(mu).norm)
    assert max(ratios) < 10.0


def test_heat_transform_convergence_error():
    mu = AtomicMeasure(np.array([[0.0]]), np.array([1.0]), np.array([1.0]))
    with pytest.raises(ConvergenceError):
        heat_balayage_transform(mu, n_nodes=8)


def test_smeared_dirac_closed_form_mass():
    # plane mass of one unit atom at height 1: integral of (1+|x|)^{-2} = 2
    g = Grid(1, 512, 8.0)
    res = smeared_dirac_measure([((0.0,), 1.0, 1.0)], g, tail_tol=2e-3)
    assert res.measure.masses.sum() == pytest.approx(2.0, rel=0.01)
    assert res.normalization <= 1.0  # input norm was 1/1 = ... normalized once


def test_smeared_dirac_normalization_and_ratio_corpus():
    g = Grid(1, 256, 2.0)
    rng = np.random.default_rng(12)
    ratios = []
    for _ in range(20):
        k = int(rng.integers(1, 6))
        atoms = [(tuple(rng.uniform(-1, 1, 1)), float(rng.uniform(0.2, 2.0)),
                  float(rng.uniform(0.2, 1.0))) for _ in range(k)]
        res = smeared_dirac_measure(atoms, g, tail_tol=2e-2)
        assert res.input_norm <= 1.0 + 1e-9
        ratios.append(res.ratio)
    assert max(ratios) < 10.0


def test_smeared_dirac_empty():
    g = Grid(1, 64, 2.0)
    res = smeared_dirac_measure([], g)
    assert res.measure.count == 0


def test_smear_profile_values():
    vals = smear_profile(1, 1.0, np.array([[0.0], [1.0]]), np.array([0.0]))
    assert vals[0] == pytest.approx(1.0)
    assert vals[1] == pytest.approx(1.0 / 4.0)
