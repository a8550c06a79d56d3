"""Rectangle combinatorics against brute-force enumeration on small meshes."""
import numpy as np
import pytest

from bisquare.grids import (DyadicGrid, GridParams, ShiftSequence, ancestor,
                            make_shifted_grid)
from bisquare.kernels import builtin_cancellative, builtin_paraproduct
from bisquare.mesh import MeshFunction, MeshSpec, domain_mesh
from bisquare import combinatorics as C


P4 = GridParams(n=1, alpha=1.0, r=6, level_min=0, level_max=4)
SPEC4 = MeshSpec(4, (16, 16), (0.0, 0.0))
P6 = GridParams(n=1, alpha=1.0, r=6, level_min=0, level_max=6)
SPEC6 = MeshSpec(6, (64, 64), (0.0, 0.0))


def std(params):
    return DyadicGrid(params, ShiftSequence.zero(params))


def brute_rect_average(f, I, J, dilate):
    """Zero-extended average over the (possibly 3-dilated) rectangle."""
    n = f.shape[0]
    s1 = int(I.upper_units()[0] - I.lower_units()[0])
    s2 = int(J.upper_units()[0] - J.lower_units()[0])
    lo1, lo2 = int(I.lower_units()[0]), int(J.lower_units()[0])
    if dilate:
        lo1, lo2 = lo1 - s1, lo2 - s2
        w1, w2 = 3 * s1, 3 * s2
    else:
        w1, w2 = s1, s2
    a0, a1 = max(lo1, 0), min(lo1 + w1, n)
    b0, b1 = max(lo2, 0), min(lo2 + w2, f.shape[1])
    tot = f[a0:a1, b0:b1].sum() if a0 < a1 and b0 < b1 else 0.0
    return tot / (w1 * w2)


def all_rects(g1, g2, pad=2):
    for a in P4.levels():
        for b in P4.levels():
            for i in range(-pad, 2 ** a + pad):
                for j in range(-pad, 2 ** b + pad):
                    yield g1.cube(a, (i,)), g2.cube(b, (j,))


def test_maximal_functions_brute_force():
    g1 = make_shifted_grid(P4, seed=1)
    g2 = make_shifted_grid(P4, seed=2)
    rng = np.random.default_rng(0)
    f = MeshFunction(SPEC4, rng.random(SPEC4.shape))
    MD = C.dyadic_strong_maximal(f, g1, g2).values
    MG = C.dilated_strong_maximal(f, g1, g2).values
    BD = np.zeros(SPEC4.shape)
    BG = np.zeros(SPEC4.shape)
    for I, J in all_rects(g1, g2):
        a0 = max(int(I.lower_units()[0]), 0)
        a1 = min(int(I.upper_units()[0]), 16)
        b0 = max(int(J.lower_units()[0]), 0)
        b1 = min(int(J.upper_units()[0]), 16)
        if a0 < a1 and b0 < b1:
            BD[a0:a1, b0:b1] = np.maximum(
                BD[a0:a1, b0:b1], brute_rect_average(f.values, I, J, False))
        s1 = int(I.upper_units()[0] - I.lower_units()[0])
        s2 = int(J.upper_units()[0] - J.lower_units()[0])
        a0 = max(int(I.lower_units()[0]) - s1, 0)
        a1 = min(int(I.upper_units()[0]) + s1, 16)
        b0 = max(int(J.lower_units()[0]) - s2, 0)
        b1 = min(int(J.upper_units()[0]) + s2, 16)
        if a0 < a1 and b0 < b1:
            BG[a0:a1, b0:b1] = np.maximum(
                BG[a0:a1, b0:b1], brute_rect_average(f.values, I, J, True))
    assert np.abs(MD - BD).max() < 1e-12
    assert np.abs(MG - BG).max() < 1e-12


def test_maximal_rejects_negative_input():
    g = std(P4)
    f = MeshFunction.constant(SPEC4, -1.0)
    with pytest.raises(C.CombinatoricsError):
        C.dyadic_strong_maximal(f, g, g)


def test_open_set_indicator_measure_and_errors():
    g = std(P4)
    om = C.OpenSetOmega([(g.cube(1, (0,)), g.cube(2, (3,)))], SPEC4, g, g)
    assert om.measure() == pytest.approx(0.5 * 0.25)
    assert om.cells.sum() == 8 * 4
    gs = make_shifted_grid(P4, seed=5)
    # a straddling cube does not fit inside the box
    straddler = next(gs.cube(2, (i,)) for i in range(-1, 5)
                     if gs.cube(2, (i,)).lower_units()[0] < 0
                     < gs.cube(2, (i,)).upper_units()[0])
    with pytest.raises(C.CombinatoricsError):
        C.OpenSetOmega([(straddler, gs.cube(2, (1,)))], SPEC4, gs, gs)


def test_shadow_chain_and_single_rectangle():
    g = std(P4)
    om = C.OpenSetOmega([(g.cube(2, (1,)), g.cube(2, (2,)))], SPEC4, g, g)
    sh = C.build_shadows(om)
    assert np.all(sh.tilde >= om.cells)
    assert np.all(sh.hat >= sh.tilde)
    assert np.array_equal(sh.tilde, om.cells)  # dyadic single rectangle
    assert sh.measures["omega"] == pytest.approx(om.measure())


def brute_in_tilde(shadows, I, J):
    a0, a1 = int(I.lower_units()[0]), int(I.upper_units()[0])
    b0, b1 = int(J.lower_units()[0]), int(J.upper_units()[0])
    n1, n2 = shadows.tilde.shape
    if a0 < 0 or b0 < 0 or a1 > n1 or b1 > n2:
        return False
    return bool(shadows.tilde[a0:a1, b0:b1].all())


def test_families_match_brute_force_enumeration():
    # maximal families, partner cubes, 2-maximal rectangles, embeddedness
    rng = np.random.default_rng(3)
    for seed1, seed2, os in ((None, None, 10), (8, 9, 11), (12, 13, 14)):
        g1 = make_shifted_grid(P4, seed1)
        g2 = make_shifted_grid(P4, seed2)
        om = C.random_rectangle_union(g1, g2, SPEC4, 3,
                                      np.random.default_rng(os))
        sh = C.build_shadows(om)
        geo = C._RectGeometry(sh)
        in_omega = {}
        for I, J in all_rects(g1, g2):
            a0 = max(int(I.lower_units()[0]), 0)
            a1 = min(int(I.upper_units()[0]), 16)
            b0 = max(int(J.lower_units()[0]), 0)
            b1 = min(int(J.upper_units()[0]), 16)
            fits = (int(I.lower_units()[0]) >= 0
                    and int(I.upper_units()[0]) <= 16
                    and int(J.lower_units()[0]) >= 0
                    and int(J.upper_units()[0]) <= 16)
            inside = fits and bool(om.cells[a0:a1, b0:b1].all())
            in_omega[(I.key(), J.key())] = (I, J, inside)

        # 2-maximal enumeration: inside rectangles whose second-factor
        # parent leaves the set (or has no parent in the window)
        brute = {}
        for (ik, jk), (I, J, inside) in in_omega.items():
            if not inside:
                continue
            if J.level > P4.level_min:
                pj = ancestor(J, 1)
                if in_omega[(ik, pj.key())][2]:
                    continue
            emb, cur, capped = 0, I, False
            while True:
                if cur.level == P4.level_min:
                    capped = True
                    break
                pa = ancestor(cur, 1)
                if not brute_in_tilde(sh, pa, J):
                    break
                emb, cur = emb + 1, pa
            brute[(ik, jk)] = (emb, capped)

        got = {(I.key(), J.key()): (emb, capped)
               for I, J, emb, capped in C.two_maximal_rectangles(sh, geo)}
        assert got == brute

        # maximal families F per second factor appearing in the set
        for jk in {jk for (_, jk) in brute}:
            J = g2.cube(jk[0], jk[1])
            want = set()
            capped_want = False
            for a in P4.levels():
                for i in range(-2, 2 ** a + 2):
                    F = g1.cube(a, (i,))
                    if not brute_in_tilde(sh, F, J):
                        continue
                    if a == P4.level_min:
                        capped_want = True
                        want.add(F.key())
                    elif not brute_in_tilde(sh, ancestor(F, 1), J):
                        want.add(F.key())
            F_cubes, capped = C.maximal_family_F(sh, J, geo)
            assert {F.key() for F in F_cubes} == want
            assert capped == capped_want

        # partner cubes for rectangles inside the set
        for (ik, jk), (I, J, inside) in in_omega.items():
            if not inside:
                continue
            cur, capped_want = I, False
            while True:
                if cur.level == P4.level_min:
                    capped_want = True
                    break
                pa = ancestor(cur, 1)
                if not brute_in_tilde(sh, pa, J):
                    break
                cur = pa
            PG, capped = C.partner_cube_IG(sh, I, J, geo)
            assert PG.key() == cur.key() and capped == capped_want


def test_partner_cube_requires_containment():
    g = std(P4)
    om = C.OpenSetOmega([(g.cube(2, (1,)), g.cube(2, (2,)))], SPEC4, g, g)
    sh = C.build_shadows(om)
    with pytest.raises(C.CombinatoricsError):
        C.partner_cube_IG(sh, g.cube(2, (3,)), g.cube(2, (2,)))


def test_journe_inequality_random_and_weights():
    g1 = make_shifted_grid(P6, seed=31)
    g2 = make_shifted_grid(P6, seed=32)
    rng = np.random.default_rng(7)
    for _ in range(10):
        om = C.random_rectangle_union(g1, g2, SPEC6, 4, rng)
        lhs, rhs, ok = C.journe_check(om, lambda k: 2.0 ** (-k))
        assert ok and lhs >= 0
    om = C.staircase_omega(std(P6), std(P6), SPEC6, 7)
    _, _, ok = C.journe_check(om, lambda k: (1.0 + k) ** -2)
    assert ok
    with pytest.raises(C.CombinatoricsError):
        C.journe_check(om, lambda k: float(k))
    with pytest.raises(C.CombinatoricsError):
        C.journe_check(om, lambda k: -1.0)


def test_journe_single_rectangle_enumeration():
    g = std(P6)
    I, J = g.cube(2, (1,)), g.cube(3, (5,))
    om = C.OpenSetOmega([(I, J)], SPEC6, g, g)
    lhs, rhs, ok = C.journe_check(om, lambda k: 2.0 ** (-k))
    # 2-maximal rectangles are I' x J with I' a subcube of I; emb counts
    # the ancestors up to I
    want = sum((1 << (l - 2)) * 2.0 ** (-l) * J.side * 2.0 ** (-(l - 2))
               for l in range(2, 7))
    assert lhs == pytest.approx(want)
    assert ok


def test_omega_csv_round_trip(tmp_path):
    g = std(P6)
    om = C.staircase_omega(g, g, SPEC6, 5)
    path = tmp_path / "om.csv"
    om.save_csv(path)
    om2 = C.OpenSetOmega.load_csv(path, SPEC6, g, g)
    assert np.array_equal(om.cells, om2.cells)


def test_necessity_check_finite_and_diagnostics():
    g = std(P6)
    spec1 = domain_mesh(6, 1)
    b1 = MeshFunction(spec1, np.cos(np.pi * spec1.centers(0)) ** 2)
    b2 = MeshFunction(spec1, np.sin(np.pi * spec1.centers(0)) ** 2)
    kp = builtin_paraproduct(1, 1, 1.0, 1.0, (b1, b2))
    om = C.random_rectangle_union(g, g, SPEC6, 4, np.random.default_rng(2))
    out = C.necessity_check(kp, om, q=3, diagnostics=True)
    assert np.isfinite(out["ratio"]) and out["ratio"] >= 0
    assert out["s1"] >= 0 and out["s2"] >= 0
    kc = builtin_cancellative(1, 1, 1.0, 1.0)
    out2 = C.necessity_check(kc, om, q=3)
    # cancellative: only truncation tails remain
    assert out2["ratio"] < 1e-2
