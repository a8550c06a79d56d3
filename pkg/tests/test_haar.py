"""Product Haar calculus: orthonormality, round trips, corrections."""
import numpy as np
import pytest

from bisquare.grids import (DyadicGrid, GridParams, ShiftSequence, ancestor,
                            make_shifted_grid)
from bisquare.haar import (cube_average, cube_fits, cube_indicator,
                           haar_function, haar_polynomial, haar_value_on,
                           inverse_transform, martingale_difference,
                           product_haar_transform, s_k_correction,
                           slice_pairing, variable_basis)
from bisquare.mesh import MeshFunction, MeshSpec, domain_mesh


P = GridParams(n=1, alpha=1.0, r=6, level_min=0, level_max=6)
SPEC1 = domain_mesh(6, 1)
SPEC2 = MeshSpec(6, (64, 64), (0.0, 0.0))


def std_grid():
    return DyadicGrid(P, ShiftSequence.zero(P))


def test_haar_normalization_and_mean_zero():
    g = std_grid()
    for (j, i) in ((0, 0), (2, 1), (4, 9)):
        c = g.cube(j, (i,))
        h = haar_function(c, (1,), SPEC1)
        assert h.norm2() == pytest.approx(1.0, abs=1e-12)
        assert h.integral() == pytest.approx(0.0, abs=1e-13)
        ind = haar_function(c, (0,), SPEC1)
        assert ind.norm2() == pytest.approx(1.0, abs=1e-12)
        assert ind.integral() == pytest.approx(np.sqrt(c.side), abs=1e-13)


def test_variable_basis_orthonormal_complete():
    g = std_grid()
    B, keys = variable_basis(g, SPEC1)
    gram = B.T @ B * SPEC1.cell_width
    assert np.abs(gram - np.eye(len(keys))).max() < 1e-12
    # standard grid: complete on the box
    assert len(keys) == 64


def test_round_trip_and_parseval():
    g1, g2 = std_grid(), std_grid()
    rng = np.random.default_rng(0)
    f = MeshFunction(SPEC2, rng.standard_normal(SPEC2.shape))
    co = product_haar_transform(f, g1, g2)
    back = inverse_transform(co)
    assert np.abs(back.values - f.values).max() < 1e-10
    assert co.total_energy() == pytest.approx(f.norm2() ** 2, rel=1e-10)


def test_shifted_grid_partial_span_round_trip():
    g1 = make_shifted_grid(P, seed=7)
    g2 = make_shifted_grid(P, seed=8)
    # synthesize inside the span: round trip must be exact there
    coeffs = [((3, 1, 1), (2, 1, 1), 1.5), ((5, 3, 1), (4, 2, 1), -0.7)]
    f = haar_polynomial(coeffs, g1, g2, SPEC2)
    co = product_haar_transform(f, g1, g2)
    back = inverse_transform(co)
    assert np.abs(back.values - f.values).max() < 1e-10


def test_haar_value_on_matches_samples():
    g = make_shifted_grid(P, seed=11)
    rng = np.random.default_rng(3)
    for _ in range(50):
        j = int(rng.integers(0, 5))
        i = int(rng.integers(0, 2 ** j))
        c = g.cube(j, (i,))
        h = haar_function(c, (1,), SPEC1)
        k = int(rng.integers(j + 1, 7))
        sub = ancestor(g.cube(6, (int(rng.integers(0, 64)),)), 6 - k)
        v = haar_value_on(c, (1,), sub)
        if cube_fits(sub, SPEC1):
            lo = float(sub.lower()[0])
            cell = int(round(lo * 64))
            w = 1 << (6 - sub.level)
            samples = h.values[cell:cell + w]
            assert np.allclose(samples, v, atol=1e-12)


def test_s_k_correction_identity():
    # ancestor Haar = correction + its value on the next ancestor, globally
    g = make_shifted_grid(P, seed=13)
    rng = np.random.default_rng(5)
    for _ in range(100):
        j = int(rng.integers(2, 6))
        i = int(rng.integers(0, 2 ** j))
        c = g.cube(j, (i,))
        k = int(rng.integers(1, j + 1))
        corr = s_k_correction(c, k, (1,), SPEC1)
        h = haar_function(ancestor(c, k), (1,), SPEC1)
        avg = haar_value_on(ancestor(c, k), (1,), ancestor(c, k - 1))
        assert np.abs(h.values - (corr.values + avg)).max() < 1e-12


def test_cube_average_and_martingale_difference():
    g = std_grid()
    rng = np.random.default_rng(6)
    f = MeshFunction(SPEC1, rng.standard_normal(SPEC1.shape))
    c = g.cube(2, (1,))
    assert cube_average(f, c) == pytest.approx(f.values[16:32].mean())
    d = martingale_difference(f, c)
    # supported on the cube, mean zero there, constant on children
    assert np.allclose(d.values[:16], 0) and np.allclose(d.values[32:], 0)
    assert d.values[16:32].mean() == pytest.approx(0.0, abs=1e-13)
    assert np.ptp(d.values[16:24]) == 0 and np.ptp(d.values[24:32]) == 0


def test_slice_pairing_oracle():
    g2 = std_grid()
    rng = np.random.default_rng(8)
    f = MeshFunction(SPEC2, rng.standard_normal(SPEC2.shape))
    J = g2.cube(2, (3,))
    out = slice_pairing(f, J, (1,), 1)
    h2 = haar_function(J, (1,), SPEC1)
    want = f.values @ h2.values * SPEC1.cell_width
    assert np.allclose(out.values, want, atol=1e-13)


def test_cube_indicator():
    g = std_grid()
    c = g.cube(3, (5,))
    ind = cube_indicator(c, SPEC1)
    assert ind.values[40:48].min() == 1.0
    assert ind.values.sum() == 8
