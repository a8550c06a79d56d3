"""Kernel classes: envelopes, mass, tabulation, quadrature application."""
import numpy as np
import pytest

from bisquare.kernels import (BumpDifferenceKernel, MeshMultiplier,
                              MultipliedOneParam, TabulatedOneParam,
                              TensorKernel, builtin_cancellative,
                              builtin_paraproduct, envelope_integral,
                              envelope_tail, load_tabulated, theta_apply,
                              theta_one, theta_one_report)
from bisquare.mesh import MeshFunction, MeshSpec, domain_mesh, enlarged_mesh


def test_envelope_integral_n1():
    # integral of t^a/(t+|u|)^(1+a) du over R = 2/a, independent of t
    for a in (0.5, 1.0):
        assert envelope_integral(1, a) == pytest.approx(2.0 / a)
    # numeric cross-check at a = 1 (tail past the truncation is ~2/L)
    u = np.linspace(-2000, 2000, 4_000_001)
    v = (1.0 / (1.0 + np.abs(u)) ** 2).sum() * (u[1] - u[0])
    assert v == pytest.approx(2.0, rel=2e-3)


def test_envelope_tail_dominates():
    # numeric tail is below the analytic bound and decreasing in d
    a, t = 1.0, 0.25
    for d in (0.5, 2.0, 8.0):
        u = np.linspace(d, d + 500, 2_000_001)
        tail = 2 * (t ** a / (t + u) ** (1 + a)).sum() * (u[1] - u[0])
        assert tail <= envelope_tail(1, a, t, d) * (1 + 1e-6)


def test_bump_difference_mass_and_size():
    k = BumpDifferenceKernel(1, 1.0)
    u = np.linspace(-300, 300, 1_200_001)
    du = u[1] - u[0]
    for t in (0.1, 0.5):
        mass = k.eval(t, 0.0, u).sum() * du
        assert mass == pytest.approx(0.0, abs=5e-3)
        vals = np.abs(k.eval(t, 0.0, u))
        env = t / (t + np.abs(u)) ** 2
        assert (vals <= k.size_bound * env * (1 + 1e-12)).all()


def test_multiplied_kernel_and_mesh_multiplier():
    spec = domain_mesh(4, 1)
    b = MeshFunction(spec, np.linspace(0, 1, 16))
    mult = MeshMultiplier(b)
    assert mult.sup() == 1.0
    assert mult(np.array([-0.5, 2.0]))[0] == 0.0  # zero outside
    per = MeshMultiplier(b, periodic=True)
    assert per(np.array([1.0 + 1 / 32]))[0] == pytest.approx(b.values[0])
    k = MultipliedOneParam(BumpDifferenceKernel(1, 1.0), mult)
    y = spec.centers(0)
    assert np.allclose(k.eval(0.3, 0.5, y),
                       BumpDifferenceKernel(1, 1.0).eval(0.3, 0.5, y)
                       * b.values)


def test_tabulated_round_trip(tmp_path):
    base = BumpDifferenceKernel(1, 1.0)
    t_grid = 2.0 ** np.linspace(-7, 1, 33)
    u_grid = np.linspace(-3, 3, 601)
    table = np.stack([base.eval(t, 0.0, -u_grid) for t in t_grid])
    path = tmp_path / "k.csv"
    with open(path, "w") as fh:
        fh.write("t,u,value\n")
        for i, t in enumerate(t_grid):
            for j, u in enumerate(u_grid):
                fh.write(f"{float(t)!r},{float(u)!r},{float(table[i, j])!r}\n")
    k = load_tabulated(path, 1, 1.0)
    rng = np.random.default_rng(0)
    t = np.exp(rng.uniform(np.log(2.0 ** -6), 0.0, size=200))
    x = rng.uniform(0, 1, size=200)
    y = rng.uniform(-1, 2, size=200)
    got = k.eval(t, x, y)
    want = base.eval(t, x, y)
    # interpolation error scales with the peak height ~ size_bound / t
    assert (np.abs(got - want) <= 0.06 * base.size_bound / t + 2e-3).all()
    assert np.isfinite(k.size_bound)


def test_theta_apply_oracle():
    kern = builtin_cancellative(1, 1, 1.0, 1.0)
    spec = MeshSpec(5, (32, 32), (0.0, 0.0))
    rng = np.random.default_rng(1)
    f = MeshFunction(spec, rng.standard_normal(spec.shape))
    t1, t2, x = 0.3, 0.2, (0.4, 0.6)
    got = theta_apply(kern, f, t1, t2, x)
    y1 = spec.centers(0)
    y2 = spec.centers(1)
    acc = 0.0
    for i, a in enumerate(y1):
        for j, b in enumerate(y2):
            acc += kern.eval(t1, t2, x[0], x[1], a, b) * f.values[i, j]
    acc *= spec.cell_volume
    assert got == pytest.approx(acc, rel=1e-12)


def test_theta_one_cancellative_small():
    kern = builtin_cancellative(1, 1, 1.0, 1.0)
    spec = MeshSpec(6, (64, 64), (0.0, 0.0))
    val, bound = theta_one_report(kern, 0.1, 0.15, (0.5, 0.5), spec)
    # exact value is 0; the quadrature sees only the truncation tail
    assert abs(val) <= bound + 1e-9


def test_theta_one_paraproduct_compact_support_exact():
    spec1 = domain_mesh(6, 1)
    b1 = MeshFunction(spec1, np.cos(np.pi * spec1.centers(0)) ** 2)
    b2 = MeshFunction(spec1, np.sin(np.pi * spec1.centers(0)) ** 2)
    kern = builtin_paraproduct(1, 1, 1.0, 1.0, (b1, b2))
    spec = MeshSpec(6, (64, 64), (0.0, 0.0))
    # b vanishes outside the box, so enlarging the integration box is a
    # no-op and the reported tail is pessimistic
    v3 = theta_one(kern, 0.2, 0.3, (0.5, 0.5), spec, enlargement=3)
    v5 = theta_one(kern, 0.2, 0.3, (0.5, 0.5), spec, enlargement=5)
    assert v3 == pytest.approx(v5, abs=1e-14)
    assert v3 != 0.0


def test_quadrature_convergence_at_whitney_scale():
    # doubling the mesh changes theta_apply by < 5% at t >= cell size
    kern = builtin_cancellative(1, 1, 1.0, 1.0)
    vals = []
    for lev in (5, 6):
        spec = MeshSpec(lev, (2 ** lev, 2 ** lev), (0.0, 0.0))
        c1 = spec.centers(0)
        f = MeshFunction(spec, np.outer(np.sin(2 * np.pi * c1),
                                        np.cos(2 * np.pi * c1)))
        vals.append(theta_apply(kern, f, 0.25, 0.25, (0.3, 0.7)))
    assert abs(vals[1] - vals[0]) <= 0.05 * max(abs(vals[1]), 1e-12)


def test_tensor_kernel_flags():
    k = builtin_cancellative(1, 1, 1.0, 1.0)
    assert k.separable and k.tensor_factors[2] is None
    spec = MeshSpec(4, (16, 16), (0.0, 0.0))
    b = MeshFunction.constant(spec, 1.0)
    kp = builtin_paraproduct(1, 1, 1.0, 1.0, b)
    assert not kp.separable and kp.tensor_factors[2] is not None
