"""Scale-space square-function quadrature and its cube-by-cube anatomy.

Everything here is for one-dimensional variables on the unit square: the
square norm as a sum over scale-band regions, the random-grid averaging
identity with exact per-level goodness probabilities, the decomposition of
the good-cube sum by scale and position classes of the Haar support
relative to the region's cube, the long-distance coefficient matrix norm,
and the Carleson-number scale-stability measurements.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import (Cube, DyadicGrid, GridError, GridParams, ShiftSequence,
                    a_coefficient, ancestor, goodness_flags, is_good, locate)
from .haar import haar_function, haar_value_on, product_haar_transform, variable_basis
from .kernels import BiParamKernel
from .mesh import MeshFunction, MeshSpec, enlarged_mesh
from .quadrature import AxisQuadrature, t_nodes
from .reports import EstimateReport


class EngineError(Exception):
    pass


def _split_specs(spec: MeshSpec):
    if spec.dim != 2:
        raise EngineError("engine expects a two-variable product mesh")
    return (MeshSpec(spec.level, (spec.shape[0],), (spec.origin[0],)),
            MeshSpec(spec.level, (spec.shape[1],), (spec.origin[1],)))


def _tensor_parts(kernel: BiParamKernel):
    fac = kernel.tensor_factors
    if fac is None:
        raise EngineError("engine requires tensor-form kernels")
    k1, k2, mult = fac
    if k1.n != 1 or k2.n != 1:
        raise EngineError("engine supports one-dimensional variables only")
    return k1, k2, mult


# ----------------------------------------------------------------------
# exact goodness probabilities


def exact_pi_good(params: GridParams) -> np.ndarray:
    """Per-level probability that a cube is good, exactly.

    Goodness of a level-j cube depends only on the shift bits between the
    coarsest window level and j, and its distribution does not depend on
    the cube's lattice index, so enumerating those bit patterns gives the
    exact probability as a dyadic rational.
    """
    out = []
    for j in params.levels():
        if j - params.r < params.level_min:
            out.append(1.0)
            continue
        depth = j - params.level_min
        npat = 2 ** (params.n * depth)
        hits = 0
        for code in range(npat):
            bits = {}
            c = code
            for i in range(params.level_min + 1, j + 1):
                w = []
                for _ in range(params.n):
                    w.append(c & 1)
                    c >>= 1
                bits[i] = tuple(w)
            for i in range(j + 1, params.level_max + 1):
                bits[i] = (0,) * params.n
            grid = DyadicGrid(params, ShiftSequence(bits))
            if is_good(grid.cube(j, (0,) * params.n), grid):
                hits += 1
        out.append(hits / npat)
    return np.array(out)


# ----------------------------------------------------------------------
# the square-norm quadrature


class SquareContext:
    """Precomputed smoothed field of one input over all scale-band nodes.

    The field does not depend on any grid; grids only enter through the
    goodness masks, so one context serves every Monte-Carlo trial.
    """

    def __init__(self, kernel: BiParamKernel, f: MeshFunction,
                 params1: GridParams, params2: GridParams, q: int = 4):
        k1, k2, mult = _tensor_parts(kernel)
        spec1, spec2 = _split_specs(f.spec)
        self.aq1 = AxisQuadrature(params1, spec1, q)
        self.aq2 = AxisQuadrature(params2, spec2, q)
        self.levels1 = list(params1.levels())
        self.levels2 = list(params2.levels())
        vals = f.values
        if mult is not None:
            vals = vals * mult(spec1.centers(0)[:, None], spec2.centers(0)[None, :])
        K1 = np.vstack([self.aq1.factor_matrix(k1, j, spec1) for j in self.levels1])
        K2 = np.vstack([self.aq2.factor_matrix(k2, j, spec2) for j in self.levels2])
        G = K1 @ vals @ K2.T
        L1, L2 = len(self.levels1), len(self.levels2)
        n1, n2 = spec1.shape[0], spec2.shape[0]
        # squared field with the t-samples folded in, per (level, cell)
        self.G2 = (G ** 2).reshape(L1, q, n1, L2, q, n2).sum(axis=(1, 4))
        self.w = self.aq1.node_weight * self.aq2.node_weight

    def full(self) -> float:
        return float(self.G2.sum() * self.w)

    def full_by_level(self) -> np.ndarray:
        return self.G2.sum(axis=(1, 3)) * self.w

    def good_by_level(self, grid1: DyadicGrid, grid2: DyadicGrid) -> np.ndarray:
        m1 = np.stack([self.aq1.cell_good_mask(grid1, j) for j in self.levels1])
        m2 = np.stack([self.aq2.cell_good_mask(grid2, j) for j in self.levels2])
        mat = np.einsum("ajbk,aj,bk->ab", self.G2, m1.astype(float),
                        m2.astype(float))
        return mat * self.w

    def good_sum(self, grid1: DyadicGrid, grid2: DyadicGrid) -> float:
        return float(self.good_by_level(grid1, grid2).sum())


def full_square_norm(kernel: BiParamKernel, f: MeshFunction,
                     params1: GridParams, params2: GridParams, q: int = 4) -> float:
    """Window truncation of the full square norm: the squared smoothed field
    integrated over all in-window scales and the whole domain."""
    return SquareContext(kernel, f, params1, params2, q).full()


def good_whitney_sum(kernel: BiParamKernel, f: MeshFunction,
                     grid1: DyadicGrid, grid2: DyadicGrid, q: int = 4) -> float:
    """Same quadrature restricted to region pairs whose cubes are both good."""
    ctx = SquareContext(kernel, f, grid1.params, grid2.params, q)
    return ctx.good_sum(grid1, grid2)


def whitney_integral(kernel: BiParamKernel, g: MeshFunction, I: Cube, J: Cube,
                     q: int = 4) -> float:
    """Quadrature of the squared smoothed field over the scale-band region
    pair of two cubes (x clipped to the domain box)."""
    k1, k2, mult = _tensor_parts(kernel)
    spec1, spec2 = _split_specs(g.spec)
    aq1 = AxisQuadrature(I.grid.params, spec1, q)
    aq2 = AxisQuadrature(J.grid.params, spec2, q)
    nd1 = aq1.cube_nodes(I)
    nd2 = aq2.cube_nodes(J)
    if nd1 is None or nd2 is None:
        return 0.0
    t1, x1, _ = nd1
    t2, x2, _ = nd2
    vals = g.values
    if mult is not None:
        vals = vals * mult(spec1.centers(0)[:, None], spec2.centers(0)[None, :])
    T1 = np.repeat(t1, len(x1))
    X1 = np.tile(x1, len(t1))
    T2 = np.repeat(t2, len(x2))
    X2 = np.tile(x2, len(t2))
    K1 = k1.eval(T1[:, None], X1[:, None], spec1.centers(0)[None, :]) * spec1.cell_width
    K2 = k2.eval(T2[:, None], X2[:, None], spec2.centers(0)[None, :]) * spec2.cell_width
    G = K1 @ vals @ K2.T
    w = spec1.cell_width * np.log(2.0) / q * spec2.cell_width * np.log(2.0) / q
    return float((G ** 2).sum() * w)


# ----------------------------------------------------------------------
# the random-grid averaging identity


@dataclass
class AveragingResult:
    lhs: float
    rhs_mean: float
    rhs_se: float
    trial_values: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray
    exact: bool  # all probabilities 1: per-trial equality expected

    def passes(self, n_se: float = 3.0) -> bool:
        if self.exact or self.rhs_se == 0.0:
            return abs(self.lhs - self.rhs_mean) < 1e-10 * max(1.0, abs(self.lhs))
        return abs(self.lhs - self.rhs_mean) <= n_se * self.rhs_se


def averaging_identity_mc(kernel: BiParamKernel, f: MeshFunction,
                          params1: GridParams, params2: GridParams,
                          trials: int, seed: int, q: int = 4) -> AveragingResult:
    """Monte-Carlo check that the expected good-region sum, corrected by the
    per-level goodness probabilities, recovers the grid-free square norm.

    The correction divides each level pair's good sum by the exact
    probabilities from exact_pi_good, making the estimator unbiased; the
    quadrature itself is shared between both sides, so the identity holds
    in expectation without discretization slack.
    """
    if trials < 30:
        raise EngineError("need at least 30 trials")
    ctx = SquareContext(kernel, f, params1, params2, q)
    lhs = ctx.full()
    pi1 = exact_pi_good(params1)
    pi2 = exact_pi_good(params2)
    if np.any(pi1 == 0.0) or np.any(pi2 == 0.0):
        raise EngineError(
            "some level has goodness probability 0 (separation parameter too "
            "small for the goodness threshold); the identity is untestable")
    denom = np.outer(pi1, pi2)
    vals = np.empty(trials)
    for trial in range(trials):
        g1 = DyadicGrid(params1, ShiftSequence.random(
            params1, np.random.default_rng([int(seed), trial, 0])))
        g2 = DyadicGrid(params2, ShiftSequence.random(
            params2, np.random.default_rng([int(seed), trial, 1])))
        vals[trial] = (ctx.good_by_level(g1, g2) / denom).sum()
    rhs = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(trials))
    return AveragingResult(lhs, rhs, se, vals, pi1, pi2,
                           exact=bool(np.all(denom == 1.0)))


# ----------------------------------------------------------------------
# term decomposition


SCALE_KEYS = ("lt_lt", "ge_lt", "lt_ge", "ge_ge")
POSITION_CLASSES = ("sep", "contain", "near")
SPLIT_PARTS = ("corrected", "averaged")


@dataclass
class DecompositionLedger:
    """All pieces of the good-region sum split by how the Haar supports sit
    relative to the region cubes.

    Per axis, with Q the region's cube and P the Haar cube: "lt" means P is
    strictly finer than Q; among coarser-or-equal P, "sep" means P is far
    from Q (beyond the goodness threshold), "contain" means P strictly
    contains Q, "near" means P equals Q or is disjoint but close.  The
    contain classes split further into the "corrected" part (ancestor Haar
    minus its constant value near Q) and the "averaged" part (that constant
    times the kernel's action on 1).
    """

    total: float
    scale: dict
    coarse_fine: dict
    fine_coarse: dict
    coarse_coarse: dict
    contain_fine_split: dict
    fine_contain_split: dict
    contain_contain_split: dict
    residual_energy: float
    near_width_bound: int = 0  # max side ratio log seen in the near class

    def all_values(self):
        vals = [("total", self.total)]
        vals += [(k, v) for k, v in self.scale.items()]
        vals += [(f"{a}_lt", v) for a, v in self.coarse_fine.items()]
        vals += [(f"lt_{a}", v) for a, v in self.fine_coarse.items()]
        vals += [(f"{a}_{b}", v) for (a, b), v in self.coarse_coarse.items()]
        vals += [(f"contain_lt.{u}", v) for u, v in self.contain_fine_split.items()]
        vals += [(f"lt_contain.{u}", v) for u, v in self.fine_contain_split.items()]
        vals += [(f"contain_contain.{u}_{v2}", v)
                 for (u, v2), v in self.contain_contain_split.items()]
        return vals

    def as_dict(self) -> dict:
        return dict(self.all_values()) | {"residual_energy": self.residual_energy}


class _AxisDecomp:
    """Per-variable machinery: basis responses at the quadrature nodes,
    region-cube registry with goodness, position-class masks, and the
    ancestor-correction columns."""

    def __init__(self, grid: DyadicGrid, spec: MeshSpec, kernel1p, q: int):
        params = grid.params
        self.params = params
        self.aq = AxisQuadrature(params, spec, q)
        self.levels = list(params.levels())
        nx = spec.shape[0]
        B, keys = variable_basis(grid, spec)
        sel = [i for i, k in enumerate(keys) if any(k[2])]
        self.keys = [keys[i] for i in sel]
        self.keycol = {(k[0], k[1]): c for c, k in enumerate(self.keys)}
        Bc = B[:, sel]

        # region-cube registry: every cube owning at least one mesh cell
        self.cube_list = []
        cube_id = {}
        owner_rows = []
        for j in self.levels:
            owners = self.aq.owner_indices(grid, j)
            for axidx in np.unique(owners):
                cube_id[(j, int(axidx))] = len(self.cube_list)
                self.cube_list.append((j, int(axidx)))
            owner_rows.append(np.array([cube_id[(j, int(i))] for i in owners]))
        self.cell_owner = np.stack(owner_rows)  # (L, nx)
        self.node_owner = np.concatenate([np.tile(r, q) for r in owner_rows])
        ncubes = len(self.cube_list)

        good = np.zeros(ncubes, dtype=bool)
        for (j, axidx), cid in cube_id.items():
            good[cid] = bool(goodness_flags(grid, j, np.array([[axidx]]))[0])
        self.cube_good = good
        self.node_good = good[self.node_owner].astype(float)

        # position classes of each (Haar cube P, region cube Q) pair
        Lmax = params.level_max
        unit = 2.0 ** (-Lmax)
        gamma = params.gamma
        ncols = len(self.keys)
        self.mask = {a: np.zeros((ncubes, ncols), dtype=bool)
                     for a in ("lt",) + POSITION_CLASSES}
        self.near_width_bound = 0
        for cid, (j, iQ) in enumerate(self.cube_list):
            sQ = 1 << (Lmax - j)
            loQ = iQ * sQ + int(grid.shift_units(j)[0])
            upQ = loQ + sQ
            for col, (j1, idx1, _) in enumerate(self.keys):
                if j1 > j:
                    self.mask["lt"][cid, col] = True
                    continue
                s1 = 1 << (Lmax - j1)
                lo1 = idx1[0] * s1 + int(grid.shift_units(j1)[0])
                up1 = lo1 + s1
                if lo1 <= loQ and upQ <= up1:
                    cls = "contain" if j1 < j else "near"
                else:
                    d = max(lo1 - upQ, loQ - up1) * unit
                    thr = (2.0 ** (-j)) ** gamma * (2.0 ** (-j1)) ** (1.0 - gamma)
                    cls = "sep" if d > thr else "near"
                self.mask[cls][cid, col] = True
                if cls == "near" and good[cid]:
                    self.near_width_bound = max(self.near_width_bound, j - j1)
        self.mask["ge"] = (self.mask["sep"] | self.mask["contain"]
                           | self.mask["near"])
        self.mask["all"] = self.mask["ge"] | self.mask["lt"]

        # kernel responses
        Kdom = np.vstack([self.aq.factor_matrix(kernel1p, j, spec)
                          for j in self.levels])
        self.U = Kdom @ Bc
        espec = enlarged_mesh(spec, 3)
        Ke = np.vstack([self.aq.factor_matrix(kernel1p, j, espec)
                        for j in self.levels])
        self.lam_good = Ke.sum(axis=1) * self.node_good

        # ancestor-correction columns: one per (region cube, ancestor step)
        svecs, self.mod_cube, self.mod_anc, self.mod_avg = [], [], [], []
        for cid, (j, iQ) in enumerate(self.cube_list):
            cube = grid.cube(j, (iQ,))
            for k in range(1, j - params.level_min + 1):
                anc = ancestor(cube, k)
                col = self.keycol.get((anc.level, anc.index))
                if col is None:
                    continue  # ancestor straddles the box: no coefficient
                avg = haar_value_on(anc, (1,), ancestor(cube, k - 1))
                svecs.append(haar_function(anc, (1,), espec).values - avg)
                self.mod_cube.append(cid)
                self.mod_anc.append(col)
                self.mod_avg.append(avg)
        self.mod_cube = np.array(self.mod_cube, dtype=np.int64)
        self.mod_anc = np.array(self.mod_anc, dtype=np.int64)
        self.mod_avg = np.array(self.mod_avg)
        S = np.array(svecs).T if svecs else np.zeros((espec.shape[0], 0))
        Xmod = (Ke @ S) * self.node_good[:, None]
        Xmod *= (self.node_owner[:, None] == self.mod_cube[None, :])
        self.Amod = Xmod.T @ Xmod

        # helpers for the averaged parts
        self.d_lam = np.bincount(self.node_owner, weights=self.lam_good ** 2,
                                 minlength=ncubes)
        self.grams = {}
        for a in ("all", "lt", "ge") + POSITION_CLASSES:
            X = self.U * (self.mask[a][self.node_owner, :]
                          * self.node_good[:, None])
            self.grams[a] = X.T @ X

    def car_matrix(self, C: np.ndarray, axis_first: bool) -> np.ndarray:
        """Fold the coefficient matrix over ancestor chains: entry
        [region cube, other-axis column] sums coefficient times the
        ancestor's constant value near the cube."""
        ncubes = len(self.cube_list)
        if axis_first:
            rows = C[self.mod_anc, :] * self.mod_avg[:, None]
            out = np.zeros((ncubes, C.shape[1]))
        else:
            rows = C[:, self.mod_anc].T * self.mod_avg[:, None]
            out = np.zeros((ncubes, C.shape[0]))
        np.add.at(out, self.mod_cube, rows)
        return out


def term_decomposition(kernel: BiParamKernel, f: MeshFunction,
                       grid1: DyadicGrid, grid2: DyadicGrid,
                       q: int = 4) -> DecompositionLedger:
    """Split the good-region sum of f by the position classes of its Haar
    expansion relative to each region cube, on both axes.

    The kernel must be a tensor of one-variable kernels (per-variable
    multipliers are fine; a coupled two-variable multiplier is not, since
    the class restrictions act per variable).  f is expanded on the given
    grid pair; energy outside the cancellative-pair span is reported as
    residual_energy and excluded from the class sums.
    """
    fac = kernel.tensor_factors
    if fac is None or fac[2] is not None:
        raise EngineError("decomposition needs a tensor kernel without a "
                          "coupled two-variable multiplier")
    k1, k2, _ = fac
    if k1.n != 1 or k2.n != 1:
        raise EngineError("engine supports one-dimensional variables only")
    spec1, spec2 = _split_specs(f.spec)
    coeffs = product_haar_transform(f, grid1, grid2)
    sel1 = [i for i, k in enumerate(coeffs.keys1) if any(k[2])]
    sel2 = [i for i, k in enumerate(coeffs.keys2) if any(k[2])]
    C = coeffs.matrix[np.ix_(sel1, sel2)]
    residual = coeffs.total_energy() - float((C ** 2).sum())

    ax1 = _AxisDecomp(grid1, spec1, k1, q)
    ax2 = _AxisDecomp(grid2, spec2, k2, q)
    w = ax1.aq.node_weight * ax2.aq.node_weight

    def value(a: str, b: str) -> float:
        return float(((C.T @ ax1.grams[a] @ C) * ax2.grams[b]).sum() * w)

    total = value("all", "all")
    scale = {"lt_lt": value("lt", "lt"), "ge_lt": value("ge", "lt"),
             "lt_ge": value("lt", "ge"), "ge_ge": value("ge", "ge")}
    coarse_fine = {a: value(a, "lt") for a in POSITION_CLASSES}
    fine_coarse = {a: value("lt", a) for a in POSITION_CLASSES}
    coarse_coarse = {(a, b): value(a, b)
                     for a in POSITION_CLASSES for b in POSITION_CLASSES}

    # contain-class splits
    C1m = C[ax1.mod_anc, :]            # (nmod1, ncol2)
    C2m = C[:, ax2.mod_anc]            # (ncol1, nmod2)
    Acar1 = ax1.car_matrix(C, axis_first=True)    # (ncubes1, ncol2)
    Acar2 = ax2.car_matrix(C, axis_first=False)   # (ncubes2, ncol1)
    R1 = Acar1.T @ (Acar1 * ax1.d_lam[:, None])   # (ncol2, ncol2)
    R2 = Acar2.T @ (Acar2 * ax2.d_lam[:, None])   # (ncol1, ncol1)
    contain_fine_split = {
        "corrected": float(((C1m.T @ ax1.Amod @ C1m) * ax2.grams["lt"]).sum() * w),
        "averaged": float((R1 * ax2.grams["lt"]).sum() * w),
    }
    fine_contain_split = {
        "corrected": float(((C2m @ ax2.Amod @ C2m.T) * ax1.grams["lt"]).sum() * w),
        "averaged": float((R2 * ax1.grams["lt"]).sum() * w),
    }

    Cmm = C[np.ix_(ax1.mod_anc, ax2.mod_anc)]     # (nmod1, nmod2)
    cc = {}
    cc[("corrected", "corrected")] = float(
        ((Cmm.T @ ax1.Amod @ Cmm) * ax2.Amod).sum() * w)
    # axis-2 averaged: fold the second index over ancestor chains
    D = np.zeros((len(ax2.cube_list), Cmm.shape[0]))
    np.add.at(D, ax2.mod_cube, ax2.mod_avg[:, None] * Cmm.T)
    D = D.T                                        # (nmod1, ncubes2)
    M = ax1.Amod @ D
    cc[("corrected", "averaged")] = float(
        (ax2.d_lam * (D * M).sum(axis=0)).sum() * w)
    E = np.zeros((len(ax1.cube_list), Cmm.shape[1]))
    np.add.at(E, ax1.mod_cube, ax1.mod_avg[:, None] * Cmm)
    cc[("averaged", "corrected")] = float(
        (ax1.d_lam * (E * (E @ ax2.Amod)).sum(axis=1)).sum() * w)
    Ecc = np.zeros((len(ax1.cube_list), len(ax2.cube_list)))
    np.add.at(Ecc.T, ax2.mod_cube, ax2.mod_avg[:, None] * E.T)
    cc[("averaged", "averaged")] = float(
        (np.outer(ax1.d_lam, ax2.d_lam) * Ecc ** 2).sum() * w)

    return DecompositionLedger(
        total=total, scale=scale, coarse_fine=coarse_fine,
        fine_coarse=fine_coarse, coarse_coarse=coarse_coarse,
        contain_fine_split=contain_fine_split,
        fine_contain_split=fine_contain_split,
        contain_contain_split=cc, residual_energy=residual,
        near_width_bound=max(ax1.near_width_bound, ax2.near_width_bound))


def classify_pair(haar_cube: Cube, region_cube: Cube) -> str:
    """Position class of an ordered cube pair of one grid: lt / sep /
    contain / near, as used by the decomposition."""
    gamma = region_cube.grid.params.gamma
    if haar_cube.level > region_cube.level:
        return "lt"
    if haar_cube.contains_cube(region_cube):
        return "contain" if haar_cube.level < region_cube.level else "near"
    from .grids import cube_distance
    d = cube_distance(haar_cube, region_cube)
    thr = region_cube.side ** gamma * haar_cube.side ** (1.0 - gamma)
    return "sep" if d > thr else "near"


# ----------------------------------------------------------------------
# the long-distance coefficient matrix


def window_cube_family(grid: DyadicGrid, lo: float = 0.0, hi: float = 1.0):
    """All in-window cubes of the grid meeting the interval [lo, hi)."""
    p = grid.params
    unit = 2 ** p.level_max
    lo_u, hi_u = int(round(lo * unit)), int(round(hi * unit))
    out = []
    for j in p.levels():
        s = 1 << (p.level_max - j)
        sh = int(grid.shift_units(j)[0])
        # smallest i with (i + 1) * s + sh > lo_u
        i = (lo_u - sh - s) // s + 1
        while i * s + sh < hi_u:
            out.append(grid.cube(j, (i,)))
            i += 1
    return out


def schur_matrix(cubes, alpha: float) -> np.ndarray:
    n = len(cubes)
    A = np.empty((n, n))
    for i, ci in enumerate(cubes):
        for j in range(i, n):
            A[i, j] = A[j, i] = a_coefficient(ci, cubes[j], alpha)
    return A


def schur_test(cubes, alpha: float, tol: float = 1e-12,
               max_iter: int = 10000) -> float:
    """Operator norm of the long-distance coefficient matrix over the cube
    family, by power iteration (the matrix is symmetric with positive
    entries, so the iteration converges to the norm)."""
    if len(cubes) == 0:
        raise EngineError("empty cube family")
    if len(cubes) > 4096:
        raise EngineError("cube family too large")
    A = schur_matrix(cubes, alpha)
    x = np.full(len(cubes), 1.0 / np.sqrt(len(cubes)))
    lam = 0.0
    for _ in range(max_iter):
        y = A @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        x = y / new
        if abs(new - lam) <= tol * new:
            return new
        lam = new
    return lam


# ----------------------------------------------------------------------
# Carleson-number scale stability


def carleson_numbers_check(kernel: BiParamKernel, h_factor, base_cubes,
                           samples, product_spec: MeshSpec,
                           q: int = 4) -> EstimateReport:
    """Ratio of the scale-column quadrature over sampled base cubes to the
    predicted Carleson bound, for a fixed second-variable factor.

    h_factor is ("haar", J1) for the Haar function of J1, with the bound
    (coefficient(J1, J2) / sqrt|J2|)^2 |I|, J2 being the cube whose scale
    band holds the sampled (x2, t2); or ("correction", J, l) for the l-step
    ancestor correction of a good cube J, with the bound
    2^(-beta l) / |ancestor| * |I|.  samples is a list of (x2, t2); the
    t1-column is truncated at the finest window scale.
    """
    k1, k2, mult = _tensor_parts(kernel)
    spec1, spec2 = _split_specs(product_spec)
    if not base_cubes:
        raise EngineError("no base cubes sampled")
    grid1 = base_cubes[0].grid
    aq1 = AxisQuadrature(grid1.params, spec1, q)
    espec1 = enlarged_mesh(spec1, 3)
    espec2 = enlarged_mesh(spec2, 3)
    y1e = espec1.centers(0)
    y2e = espec2.centers(0)
    levels1 = list(grid1.params.levels())
    Ke1 = np.vstack([aq1.factor_matrix(k1, j, espec1) for j in levels1])

    kind = h_factor[0]
    if kind == "haar":
        J1 = h_factor[1]
        g2 = haar_function(J1, (1,), espec2).values
        grid2 = J1.grid
    elif kind == "correction":
        J, l = h_factor[1], h_factor[2]
        if l < 1:
            raise EngineError("ancestor step must be >= 1")
        if not is_good(J, J.grid):
            raise EngineError("the base cube of the correction must be good")
        anc = ancestor(J, l)
        avg = haar_value_on(anc, (1,), ancestor(J, l - 1))
        g2 = haar_function(anc, (1,), espec2).values - avg
        grid2 = J.grid
        rhs_density = 2.0 ** (-kernel.beta * l) / anc.side
    else:
        raise EngineError("unknown h_factor kind")

    best = (0.0, None)
    by_level = {}
    count = 0
    for (x2, t2) in samples:
        if t2 <= 0:
            raise EngineError("t must be positive")
        if kind == "haar":
            j2 = int(np.floor(-np.log2(t2)))
            if j2 >= J1.level:
                raise EngineError("sampled scale must be coarser than the "
                                  "Haar cube")
            J2 = locate(grid2, x2, j2)
            rhs_density = (a_coefficient(J1, J2, kernel.beta)
                           / np.sqrt(J2.side)) ** 2
        w2 = k2.eval(t2, x2, y2e) * espec2.cell_width
        z = w2 * g2
        if mult is None:
            field = Ke1.sum(axis=1) * z.sum()
        else:
            m1 = mult(y1e[:, None], y2e[None, :]) @ z
            field = Ke1 @ m1
        F2 = (field ** 2).reshape(len(levels1), q, spec1.shape[0]).sum(axis=1)
        w1 = spec1.cell_width * np.log(2.0) / q
        for I in base_cubes:
            nd = aq1.cube_nodes(I)
            if nd is None:
                continue
            cells = nd[2]
            li = levels1.index(I.level)
            lhs = float(F2[li:, cells].sum() * w1)
            rhs = rhs_density * I.side
            ratio = lhs / rhs if rhs > 0 else 0.0
            count += 1
            by_level[I.level] = max(by_level.get(I.level, 0.0), ratio)
            if ratio > best[0]:
                best = (ratio, {"cube": (I.level, I.index), "x2": float(x2),
                                "t2": float(t2)})
    return EstimateReport(
        assumption_id=f"carleson-number-{kind}",
        empirical_constant=best[0], sample_count=count,
        worst_case_witness=best[1],
        extra={"by_level": {str(k): v for k, v in sorted(by_level.items())}})
