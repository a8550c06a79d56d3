"""Empirical constants for the kernel estimates, and the rectangle
Carleson condition over generated open sets.

All checks are sampling-based: they report the sup of tested ratios (a
lower bound for the true constant) together with the witness achieving
it.  Ratios compare the kernel quantity against the corresponding
envelope right-hand side with constant 1.
"""
from __future__ import annotations

import numpy as np

from .grids import DyadicGrid, GridError
from .kernels import BiParamKernel
from .mesh import MeshFunction, MeshSpec, enlarged_mesh
from .quadrature import AxisQuadrature
from .reports import EstimateReport


class VerifierError(Exception):
    pass


def _sample_points(kernel: BiParamKernel, samples: int, seed: int,
                   t_range=(1.0 / 64.0, 1.0), ratio_range=(1e-2, 1e2)):
    """Stratified (t1, t2, x, y) draws: log-uniform in each t and in each
    offset-to-t ratio, uniform in x over the unit box."""
    rng = np.random.default_rng(seed)
    lt = np.log(t_range)
    lr = np.log(ratio_range)
    t1 = np.exp(rng.uniform(lt[0], lt[1], samples))
    t2 = np.exp(rng.uniform(lt[0], lt[1], samples))
    x1 = rng.uniform(0.0, 1.0, samples)
    x2 = rng.uniform(0.0, 1.0, samples)
    s1 = np.exp(rng.uniform(lr[0], lr[1], samples)) * rng.choice([-1, 1], samples)
    s2 = np.exp(rng.uniform(lr[0], lr[1], samples)) * rng.choice([-1, 1], samples)
    y1 = x1 - t1 * s1
    y2 = x2 - t2 * s2
    return rng, t1, t2, x1, x2, y1, y2


def _report(assumption_id, ratios, samples, witness_fn) -> EstimateReport:
    i = int(np.argmax(ratios))
    return EstimateReport(assumption_id=assumption_id,
                          empirical_constant=float(ratios[i]),
                          sample_count=len(ratios),
                          worst_case_witness=witness_fn(i))


def check_size(kernel: BiParamKernel, samples: int, seed: int = 0) -> EstimateReport:
    """Sup of |kernel| divided by the product size envelope."""
    if samples < 1:
        raise VerifierError("need at least one sample")
    _, t1, t2, x1, x2, y1, y2 = _sample_points(kernel, samples, seed)
    n, m, a, b = kernel.n, kernel.m, kernel.alpha, kernel.beta
    v = np.abs(kernel.eval(t1, t2, x1, x2, y1, y2))
    env = (t1 ** a / (t1 + np.abs(x1 - y1)) ** (n + a)
           * t2 ** b / (t2 + np.abs(x2 - y2)) ** (m + b))
    r = v / env
    return _report("size", r, samples,
                   lambda i: {"t1": t1[i], "t2": t2[i], "x": (x1[i], x2[i]),
                              "y": (y1[i], y2[i])})


def _perturb(rng, t, y, frac=0.5):
    """z with |y - z| < t * frac / ... strictly inside the allowed ball."""
    u = np.exp(rng.uniform(np.log(1e-3), np.log(0.999), len(t)))
    return y + 0.5 * t * u * rng.choice([-1, 1], len(t))


def check_holder(kernel: BiParamKernel, samples: int, seed: int = 0) -> EstimateReport:
    """Double difference in (y1, y2) against the product of increment
    envelopes, with both increments inside the half-t balls."""
    if samples < 1:
        raise VerifierError("need at least one sample")
    rng, t1, t2, x1, x2, y1, y2 = _sample_points(kernel, samples, seed)
    z1 = _perturb(rng, t1, y1)
    z2 = _perturb(rng, t2, y2)
    n, m, a, b = kernel.n, kernel.m, kernel.alpha, kernel.beta
    num = np.abs(kernel.eval(t1, t2, x1, x2, y1, y2)
                 - kernel.eval(t1, t2, x1, x2, z1, y2)
                 - kernel.eval(t1, t2, x1, x2, y1, z2)
                 + kernel.eval(t1, t2, x1, x2, z1, z2))
    env = (np.abs(y1 - z1) ** a / (t1 + np.abs(x1 - y1)) ** (n + a)
           * np.abs(y2 - z2) ** b / (t2 + np.abs(x2 - y2)) ** (m + b))
    r = num / env
    return _report("holder", r, samples,
                   lambda i: {"t1": t1[i], "t2": t2[i], "x": (x1[i], x2[i]),
                              "y": (y1[i], y2[i]), "z": (z1[i], z2[i])})


def _check_mixed(kernel, samples, seed, vary_second: bool) -> EstimateReport:
    rng, t1, t2, x1, x2, y1, y2 = _sample_points(kernel, samples, seed)
    n, m, a, b = kernel.n, kernel.m, kernel.alpha, kernel.beta
    if vary_second:
        z2 = _perturb(rng, t2, y2)
        num = np.abs(kernel.eval(t1, t2, x1, x2, y1, y2)
                     - kernel.eval(t1, t2, x1, x2, y1, z2))
        env = (t1 ** a / (t1 + np.abs(x1 - y1)) ** (n + a)
               * np.abs(y2 - z2) ** b / (t2 + np.abs(x2 - y2)) ** (m + b))
        wit = lambda i: {"t1": t1[i], "t2": t2[i], "x": (x1[i], x2[i]),
                         "y": (y1[i], y2[i]), "z2": z2[i]}
        name = "mixed-size-holder"
    else:
        z1 = _perturb(rng, t1, y1)
        num = np.abs(kernel.eval(t1, t2, x1, x2, y1, y2)
                     - kernel.eval(t1, t2, x1, x2, z1, y2))
        env = (np.abs(y1 - z1) ** a / (t1 + np.abs(x1 - y1)) ** (n + a)
               * t2 ** b / (t2 + np.abs(x2 - y2)) ** (m + b))
        wit = lambda i: {"t1": t1[i], "t2": t2[i], "x": (x1[i], x2[i]),
                         "y": (y1[i], y2[i]), "z1": z1[i]}
        name = "mixed-holder-size"
    return _report(name, num / env, samples, wit)


def check_mixed_1(kernel: BiParamKernel, samples: int, seed: int = 0):
    """Size in variable 1, increment in variable 2."""
    if samples < 1:
        raise VerifierError("need at least one sample")
    return _check_mixed(kernel, samples, seed, vary_second=True)


def check_mixed_2(kernel: BiParamKernel, samples: int, seed: int = 0):
    """Increment in variable 1, size in variable 2."""
    if samples < 1:
        raise VerifierError("need at least one sample")
    return _check_mixed(kernel, samples, seed, vary_second=False)


# ----------------------------------------------------------------------
# Carleson x standard estimates


def check_carleson_standard(kernel: BiParamKernel, cubes, direction: str,
                            samples: int, seed: int = 0, q: int = 4,
                            product_spec: MeshSpec = None) -> EstimateReport:
    """One of the four scale-column estimates: the square root of the
    column quadrature of the cube-integrated kernel, divided by the
    matching envelope.

    direction: "size-1" (column in variable 1, size envelope in variable
    2), "size-2" (mirrored), "holder-1" (column in variable 1, increment
    envelope in variable 2), "holder-2" (mirrored).  The t-integral over
    (0, side) is truncated at the finest window scale.
    """
    if not cubes:
        raise VerifierError("empty cube sample")
    if direction not in ("size-1", "size-2", "holder-1", "holder-2"):
        raise VerifierError(f"unknown direction {direction}")
    fac = kernel.tensor_factors
    if fac is None:
        raise VerifierError("tensor kernels only")
    k1, k2, mult = fac
    if product_spec is None:
        raise VerifierError("product_spec required")
    spec1, spec2 = (MeshSpec(product_spec.level, (product_spec.shape[0],),
                             (product_spec.origin[0],)),
                    MeshSpec(product_spec.level, (product_spec.shape[1],),
                             (product_spec.origin[1],)))
    mirrored = direction.endswith("2")
    if mirrored:
        k1, k2 = k2, k1
        spec1, spec2 = spec2, spec1
    holder = direction.startswith("holder")
    a_col = k1.alpha
    a_env = k2.alpha
    dim_env = k2.n
    espec1 = enlarged_mesh(spec1, 3)
    espec2 = enlarged_mesh(spec2, 3)
    y1e = espec1.centers(0)
    y2e = espec2.centers(0)
    rng = np.random.default_rng(seed)
    params = cubes[0].grid.params
    ratios, wits = [], []
    for _ in range(samples):
        I = cubes[rng.integers(len(cubes))]
        t2 = float(np.exp(rng.uniform(np.log(2.0 ** (-params.level_max)),
                                      np.log(1.0))))
        x2 = float(rng.uniform(0.0, 1.0))
        y2 = float(x2 - t2 * np.exp(rng.uniform(np.log(1e-2), np.log(1e2)))
                   * rng.choice([-1, 1]))
        k2y = k2.eval(t2, x2, y2)
        if holder:
            z2 = float(_perturb(rng, np.array([t2]), np.array([y2]))[0])
            k2z = k2.eval(t2, x2, z2)
            env = (np.abs(y2 - z2) ** a_env
                   / (t2 + abs(x2 - y2)) ** (dim_env + a_env))
        else:
            env = t2 ** a_env / (t2 + abs(x2 - y2)) ** (dim_env + a_env)
        # y-profile over the column variable, inside the cube I
        lo, up = float(I.lower()[0]), float(I.upper()[0])
        ymask = (y1e > lo) & (y1e < up)
        if mult is None:
            m1 = ymask.astype(float) * (k2y - k2z if holder else k2y)
        else:
            # the multiplier couples the variables; fold it at the fixed
            # second-variable points
            if mirrored:
                bvals = mult(y2e[:, None], y1e[None, :])
                by = bvals[_nearest(y2e, y2), :]
                bz = bvals[_nearest(y2e, z2), :] if holder else None
            else:
                bvals = mult(y1e[:, None], y2e[None, :])
                by = bvals[:, _nearest(y2e, y2)]
                bz = bvals[:, _nearest(y2e, z2)] if holder else None
            m1 = ymask * (k2y * by - k2z * bz if holder else k2y * by)
        # column quadrature over the scale column of I, x inside I
        xmask = ymask
        lhs2 = 0.0
        w1 = espec1.cell_width * np.log(2.0) / q
        for j in range(I.level, params.level_max + 1):
            t1 = 2.0 ** (-j) * 2.0 ** (-(np.arange(q) + 0.5) / q)
            K = k1.eval(t1[:, None, None], y1e[None, xmask, None],
                        y1e[None, None, :]) * espec1.cell_width
            g = K @ m1
            lhs2 += float((g ** 2).sum()) * w1
        lhs = np.sqrt(lhs2)
        rhs = np.sqrt(I.side ** k1.n) * env
        ratios.append(lhs / rhs)
        wits.append({"cube": (I.level, I.index), "t2": t2, "x2": x2, "y2": y2})
    ratios = np.array(ratios)
    return _report(f"carleson-{direction}", ratios, samples,
                   lambda i: wits[i])


def _nearest(centers: np.ndarray, v: float) -> int:
    return int(np.clip(np.argmin(np.abs(centers - v)), 0, len(centers) - 1))


# ----------------------------------------------------------------------
# the rectangle Carleson condition


class AxisCubeIndex:
    """Registry of the cubes of one grid owning mesh cells, with per-level
    owner maps and domain-fit flags."""

    def __init__(self, grid: DyadicGrid, spec: MeshSpec, q: int = 4):
        self.grid = grid
        self.aq = AxisQuadrature(grid.params, spec, q)
        self.levels = list(grid.params.levels())
        nx = spec.shape[0]
        self.cube_list = []
        self.cube_id = {}
        rows = []
        for j in self.levels:
            owners = self.aq.owner_indices(grid, j)
            for axidx in np.unique(owners):
                self.cube_id[(j, int(axidx))] = len(self.cube_list)
                self.cube_list.append((j, int(axidx)))
            rows.append(np.array([self.cube_id[(j, int(i))] for i in owners]))
        self.cell_owner = np.stack(rows)  # (L, nx)
        # cell range and whole-cube fit per cube
        ncubes = len(self.cube_list)
        self.start = np.zeros(ncubes, dtype=np.int64)
        self.stop = np.zeros(ncubes, dtype=np.int64)
        self.fits = np.zeros(ncubes, dtype=bool)
        for (j, axidx), cid in self.cube_id.items():
            cells = np.nonzero(rows[self.levels.index(j)] == cid)[0]
            self.start[cid] = cells[0]
            self.stop[cid] = cells[-1] + 1
            self.fits[cid] = (cells.size == 1 << (spec.level - j))

    def cube(self, cid: int):
        j, axidx = self.cube_list[cid]
        return self.grid.cube(j, (axidx,))


def carleson_table(kernel: BiParamKernel, grid1: DyadicGrid, grid2: DyadicGrid,
                   product_spec: MeshSpec, q: int = 4):
    """Region-pair quadratures of |theta 1|^2 for every in-window rectangle.

    Returns (axis index 1, axis index 2, table) with table[cid1, cid2] the
    scale-band quadrature over the rectangle's region pair.  The constant
    function is integrated over 3x enlarged boxes.
    """
    fac = kernel.tensor_factors
    if fac is None:
        raise VerifierError("tensor kernels only")
    k1, k2, mult = fac
    spec1 = MeshSpec(product_spec.level, (product_spec.shape[0],),
                     (product_spec.origin[0],))
    spec2 = MeshSpec(product_spec.level, (product_spec.shape[1],),
                     (product_spec.origin[1],))
    ax1 = AxisCubeIndex(grid1, spec1, q)
    ax2 = AxisCubeIndex(grid2, spec2, q)
    espec1 = enlarged_mesh(spec1, 3)
    espec2 = enlarged_mesh(spec2, 3)
    K1 = np.vstack([ax1.aq.factor_matrix(k1, j, espec1) for j in ax1.levels])
    K2 = np.vstack([ax2.aq.factor_matrix(k2, j, espec2) for j in ax2.levels])
    if mult is None:
        G = np.outer(K1.sum(axis=1), K2.sum(axis=1))
    else:
        B = mult(espec1.centers(0)[:, None], espec2.centers(0)[None, :])
        G = K1 @ B @ K2.T
    L1, L2 = len(ax1.levels), len(ax2.levels)
    n1, n2 = spec1.shape[0], spec2.shape[0]
    G2 = (G ** 2).reshape(L1, q, n1, L2, q, n2).sum(axis=(1, 4))
    w = ax1.aq.node_weight * ax2.aq.node_weight
    table = np.zeros((len(ax1.cube_list), len(ax2.cube_list)))
    # scatter cell sums onto owning cubes
    for a in range(L1):
        for b in range(L2):
            block = G2[a, :, b, :]
            o1 = ax1.cell_owner[a]
            o2 = ax2.cell_owner[b]
            np.add.at(table, (o1[:, None], o2[None, :]), block)
    return ax1, ax2, table * w


def rectangle_contained(ax1: AxisCubeIndex, ax2: AxisCubeIndex,
                        indicator: np.ndarray) -> np.ndarray:
    """Boolean [cid1, cid2]: the rectangle lies inside the indicator set
    (and inside the domain box)."""
    comp = (~indicator.astype(bool)).astype(np.int64)
    S = np.zeros((comp.shape[0] + 1, comp.shape[1] + 1), dtype=np.int64)
    S[1:, 1:] = comp.cumsum(axis=0).cumsum(axis=1)
    a0, a1 = ax1.start, ax1.stop
    b0, b1 = ax2.start, ax2.stop
    bad = (S[a1[:, None], b1[None, :]] - S[a0[:, None], b1[None, :]]
           - S[a1[:, None], b0[None, :]] + S[a0[:, None], b0[None, :]])
    return (bad == 0) & ax1.fits[:, None] & ax2.fits[None, :]


def check_biparam_carleson(kernel: BiParamKernel, grid1: DyadicGrid,
                           grid2: DyadicGrid, omega_family,
                           product_spec: MeshSpec, q: int = 4) -> EstimateReport:
    """Sup over the family of (sum of rectangle quadratures of |theta 1|^2
    over rectangles inside Omega) / |Omega|."""
    ax1, ax2, table = carleson_table(kernel, grid1, grid2, product_spec, q)
    best = (0.0, None)
    sums = []
    for idx, omega in enumerate(omega_family):
        measure = omega.measure()
        if measure == 0.0:
            sums.append(0.0)
            continue
        inside = rectangle_contained(ax1, ax2, omega.indicator.values)
        total = float(table[inside].sum())
        sums.append(total)
        ratio = total / measure
        if ratio > best[0]:
            best = (ratio, {"omega_index": idx, "sum": total,
                            "measure": measure})
    return EstimateReport(assumption_id="biparam-carleson",
                          empirical_constant=best[0],
                          sample_count=len(sums), worst_case_witness=best[1],
                          extra={"sums": sums})
