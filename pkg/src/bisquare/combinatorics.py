"""Rectangle combinatorics on the product mesh: strong maximal functions,
shadow enlargements of open sets, maximal cube families, 2-maximal
rectangles with embeddedness numbers, the Journe-type packing inequality,
and the end-to-end Carleson-sum-over-open-sets measurement.

Open sets are finite unions of grid rectangles that fit inside the
domain box; on the finite mesh these are exactly the admissible sets
(every point sits in a member rectangle contained in the set).
"""
from __future__ import annotations

import numpy as np

from .grids import Cube, DyadicGrid, ancestor
from .kernels import BiParamKernel
from .mesh import MeshFunction, MeshSpec, enlarged_mesh
from .verifier import AxisCubeIndex, carleson_table, rectangle_contained


class CombinatoricsError(Exception):
    pass


def _cube_cell_range(cube: Cube, spec: MeshSpec):
    """(start, stop) finest-cell range of the cube along its axis, clipped
    to the mesh; None if outside."""
    lo = int(cube.lower_units()[0])
    up = int(cube.upper_units()[0])
    o = int(round(spec.origin[0] * 2 ** spec.level))
    start, stop = max(lo - o, 0), min(up - o, spec.shape[0])
    if start >= stop:
        return None
    return start, stop


class OpenSetOmega:
    """A finite union of grid rectangles I x J, all fitting inside the
    domain box, with its cell indicator on the product mesh."""

    def __init__(self, rect_pairs, product_spec: MeshSpec,
                 grid1: DyadicGrid, grid2: DyadicGrid):
        self.grid1, self.grid2 = grid1, grid2
        self.product_spec = product_spec
        self.rect_pairs = list(rect_pairs)
        vals = np.zeros(product_spec.shape, dtype=bool)
        spec1 = MeshSpec(product_spec.level, (product_spec.shape[0],),
                         (product_spec.origin[0],))
        spec2 = MeshSpec(product_spec.level, (product_spec.shape[1],),
                         (product_spec.origin[1],))
        for I, J in self.rect_pairs:
            r1 = _cube_cell_range(I, spec1)
            r2 = _cube_cell_range(J, spec2)
            if r1 is None or r2 is None \
                    or r1[1] - r1[0] != 1 << (spec1.level - I.level) \
                    or r2[1] - r2[0] != 1 << (spec2.level - J.level):
                raise CombinatoricsError(
                    "member rectangle does not fit inside the domain box")
            vals[r1[0]:r1[1], r2[0]:r2[1]] = True
        self.cells = vals

    @property
    def indicator(self) -> MeshFunction:
        return MeshFunction(self.product_spec, self.cells.astype(float))

    def measure(self) -> float:
        return float(self.cells.sum()) * self.product_spec.cell_volume

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write("level1,index1,level2,index2\n")
            for I, J in self.rect_pairs:
                fh.write(f"{I.level},{I.index[0]},{J.level},{J.index[0]}\n")

    @classmethod
    def load_csv(cls, path, product_spec, grid1, grid2) -> "OpenSetOmega":
        pairs = []
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("level1"):
                raise CombinatoricsError("bad rectangle CSV header")
            for line in fh:
                if not line.strip():
                    continue
                l1, i1, l2, i2 = (int(v) for v in line.split(","))
                pairs.append((grid1.cube(l1, (i1,)), grid2.cube(l2, (i2,))))
        return cls(pairs, product_spec, grid1, grid2)


# ----------------------------------------------------------------------
# generators


def fitting_cubes(grid: DyadicGrid, spec: MeshSpec, levels=None):
    """All cubes of the given levels lying entirely inside the mesh box."""
    out = []
    p = grid.params
    for j in (levels if levels is not None else p.levels()):
        s = 1 << (p.level_max - j)
        sh = int(grid.shift_units(j)[0])
        o = int(round(spec.origin[0] * 2 ** spec.level))
        hi = o + spec.shape[0]
        i = -((sh - o) // s)
        while i * s + sh < o:
            i += 1
        while (i + 1) * s + sh <= hi:
            out.append(grid.cube(j, (i,)))
            i += 1
    return out


def random_rectangle_union(grid1, grid2, product_spec, k, rng,
                           levels1=None, levels2=None) -> OpenSetOmega:
    spec1 = MeshSpec(product_spec.level, (product_spec.shape[0],),
                     (product_spec.origin[0],))
    spec2 = MeshSpec(product_spec.level, (product_spec.shape[1],),
                     (product_spec.origin[1],))
    c1 = fitting_cubes(grid1, spec1, levels1)
    c2 = fitting_cubes(grid2, spec2, levels2)
    pairs = [(c1[rng.integers(len(c1))], c2[rng.integers(len(c2))])
             for _ in range(k)]
    return OpenSetOmega(pairs, product_spec, grid1, grid2)


def staircase_omega(grid1, grid2, product_spec, steps) -> OpenSetOmega:
    """Dyadic staircase: at step s, the rectangle [0, 2^-s) x [0, 2^-(steps-1-s))."""
    p1, p2 = grid1.params, grid2.params
    pairs = []
    for s in range(steps):
        l1 = min(s, p1.level_max)
        l2 = min(steps - 1 - s, p2.level_max)
        pairs.append((grid1.cube(l1, (0,)), grid2.cube(l2, (0,))))
    return OpenSetOmega(pairs, product_spec, grid1, grid2)


# ----------------------------------------------------------------------
# strong maximal functions


def _axis_segments(ax: AxisCubeIndex, level_pos: int):
    """Per-level contiguous owner labels along one axis (0..nseg-1)."""
    owners = ax.cell_owner[level_pos]
    uniq, inv = np.unique(owners, return_inverse=True)
    return uniq, inv


def dyadic_strong_maximal(f: MeshFunction, grid1: DyadicGrid,
                          grid2: DyadicGrid) -> MeshFunction:
    """Pointwise sup over grid rectangles containing the cell of the
    average of f (extended by zero) over the full rectangle."""
    if np.any(f.values < 0):
        raise CombinatoricsError("maximal function input must be nonnegative")
    spec1, spec2 = _split(f.spec)
    ax1 = AxisCubeIndex(grid1, spec1, q=1)
    ax2 = AxisCubeIndex(grid2, spec2, q=1)
    out = np.zeros(f.spec.shape)
    L = f.spec.level
    for a, j1 in enumerate(ax1.levels):
        full1 = 1 << (L - j1)
        u1, inv1 = _axis_segments(ax1, a)
        rows = np.zeros((len(u1), f.spec.shape[1]))
        np.add.at(rows, inv1, f.values)
        for b, j2 in enumerate(ax2.levels):
            full2 = 1 << (L - j2)
            u2, inv2 = _axis_segments(ax2, b)
            rect = np.zeros((len(u1), len(u2)))
            np.add.at(rect.T, inv2, rows.T)
            avg = rect / (full1 * full2)
            np.maximum(out, avg[inv1][:, inv2], out=out)
    return MeshFunction(f.spec, out)


def dilated_strong_maximal(f: MeshFunction, grid1: DyadicGrid,
                           grid2: DyadicGrid) -> MeshFunction:
    """Grid realization of the general strong maximal function: sup of
    averages over concentric 3-dilates of grid rectangles, taken over all
    rectangles whose dilate contains the cell.  The 3-dilate of a cube is
    exactly the union of the cube and its two same-level neighbours."""
    if np.any(f.values < 0):
        raise CombinatoricsError("maximal function input must be nonnegative")
    spec1, spec2 = _split(f.spec)
    ax1 = AxisCubeIndex(grid1, spec1, q=1)
    ax2 = AxisCubeIndex(grid2, spec2, q=1)
    out = np.zeros(f.spec.shape)
    L = f.spec.level
    for a, j1 in enumerate(ax1.levels):
        full1 = 1 << (L - j1)
        u1, inv1 = _axis_segments(ax1, a)
        rows = np.zeros((len(u1), f.spec.shape[1]))
        np.add.at(rows, inv1, f.values)
        for b, j2 in enumerate(ax2.levels):
            full2 = 1 << (L - j2)
            u2, inv2 = _axis_segments(ax2, b)
            rect = np.zeros((len(u1), len(u2)))
            np.add.at(rect.T, inv2, rows.T)
            # 3x3 window sums (rectangles outside the box hold zero mass)
            P = np.pad(rect, 2)
            win = sum(P[2 + di:2 + di + len(u1), 2 + dj:2 + dj + len(u2)]
                      for di in (-1, 0, 1) for dj in (-1, 0, 1))
            avg = win / (9.0 * full1 * full2)
            # a cell is covered by the dilate of its owner and neighbours:
            # take the max over the surrounding 3x3 of window averages
            Q = np.pad(avg, 1)
            best = np.maximum.reduce([
                Q[1 + di:1 + di + len(u1), 1 + dj:1 + dj + len(u2)]
                for di in (-1, 0, 1) for dj in (-1, 0, 1)])
            np.maximum(out, best[inv1][:, inv2], out=out)
    return MeshFunction(f.spec, out)


def _split(spec: MeshSpec):
    if spec.dim != 2:
        raise CombinatoricsError("product mesh expected")
    return (MeshSpec(spec.level, (spec.shape[0],), (spec.origin[0],)),
            MeshSpec(spec.level, (spec.shape[1],), (spec.origin[1],)))


# ----------------------------------------------------------------------
# shadow sets


DEFAULT_SHADOW_C = None  # per (n, m): 2 ** -(n + m + 2)


class ShadowSets:
    """The set, its dyadic enlargement (maximal function above 1/2), and
    the further enlargement by the dilated maximal function above c."""

    def __init__(self, omega: OpenSetOmega, c: float = None):
        n = omega.grid1.params.n
        m = omega.grid2.params.n
        self.c = c if c is not None else 2.0 ** (-(n + m + 2))
        self.omega = omega
        ind = omega.indicator
        md = dyadic_strong_maximal(ind, omega.grid1, omega.grid2)
        self.tilde = md.values > 0.5
        mg = dilated_strong_maximal(
            MeshFunction(ind.spec, self.tilde.astype(float)),
            omega.grid1, omega.grid2)
        self.hat = mg.values > self.c
        vol = ind.spec.cell_volume
        self.measures = {"omega": float(omega.cells.sum()) * vol,
                         "tilde": float(self.tilde.sum()) * vol,
                         "hat": float(self.hat.sum()) * vol}


def build_shadows(omega: OpenSetOmega, c: float = None) -> ShadowSets:
    return ShadowSets(omega, c)


# ----------------------------------------------------------------------
# maximal families


class _RectGeometry:
    """Axis indices and the containment tables of a shadow set."""

    def __init__(self, shadows: ShadowSets, q: int = 1):
        omega = shadows.omega
        spec1, spec2 = _split(omega.product_spec)
        self.ax1 = AxisCubeIndex(omega.grid1, spec1, q)
        self.ax2 = AxisCubeIndex(omega.grid2, spec2, q)
        self.in_omega = rectangle_contained(self.ax1, self.ax2, omega.cells)
        self.in_tilde = rectangle_contained(self.ax1, self.ax2, shadows.tilde)

    def parent_cid(self, ax: AxisCubeIndex, cid: int):
        j, axidx = ax.cube_list[cid]
        if j == ax.grid.params.level_min:
            return None
        anc = ancestor(ax.grid.cube(j, (axidx,)), 1)
        return ax.cube_id.get((anc.level, anc.index[0]))


def maximal_family_F(shadows: ShadowSets, J: Cube, geometry: _RectGeometry = None):
    """Maximal first-axis cubes F with F x J inside the dyadic enlargement.

    Returns (cubes, capped): capped is True when some member sits at the
    coarsest window level (maximality cut off by the window top)."""
    geo = geometry if geometry is not None else _RectGeometry(shadows)
    ax1, ax2 = geo.ax1, geo.ax2
    jc = ax2.cube_id.get((J.level, J.index[0]))
    if jc is None:
        raise CombinatoricsError("second-axis cube owns no domain cells")
    col = geo.in_tilde[:, jc]
    out, capped = [], False
    for cid in np.nonzero(col)[0]:
        pid = geo.parent_cid(ax1, cid)
        if pid is None:
            capped = True
        elif col[pid]:
            continue
        out.append(ax1.cube(cid))
    return out, capped


def f_union_indicator(F_cubes, spec1: MeshSpec) -> np.ndarray:
    """Cell indicator of the union of concentric double dilates of the
    cubes, clipped to the domain box."""
    out = np.zeros(spec1.shape[0], dtype=bool)
    h = spec1.cell_width
    for F in F_cubes:
        half = (1 << (spec1.level - F.level)) // 2
        r = _cube_cell_range(F, spec1)
        if r is None:
            continue
        lo = max(int(F.lower_units()[0]
                     - round(spec1.origin[0] / h)) - half, 0)
        hi = min(int(F.upper_units()[0]
                     - round(spec1.origin[0] / h)) + half, spec1.shape[0])
        out[lo:hi] = True
    return out


def partner_cube_IG(shadows: ShadowSets, I: Cube, G: Cube,
                    geometry: _RectGeometry = None):
    """Maximal ancestor of I whose product with G stays inside the dyadic
    enlargement; requires I x G inside the base set.  Returns (cube,
    capped)."""
    geo = geometry if geometry is not None else _RectGeometry(shadows)
    ax1, ax2 = geo.ax1, geo.ax2
    ic = ax1.cube_id.get((I.level, I.index[0]))
    gc = ax2.cube_id.get((G.level, G.index[0]))
    if ic is None or gc is None or not geo.in_omega[ic, gc]:
        raise CombinatoricsError("rectangle not inside the base set")
    best = ic
    while True:
        pid = geo.parent_cid(ax1, best)
        if pid is None:
            return ax1.cube(best), True
        if not geo.in_tilde[pid, gc]:
            return ax1.cube(best), False
        best = pid


def two_maximal_rectangles(shadows: ShadowSets, geometry: _RectGeometry = None):
    """All rectangles inside the set that are maximal in the second axis,
    each with its first-axis embeddedness: the number of times the first
    factor can be replaced by an ancestor while staying inside the dyadic
    enlargement.  Returns a list of (I, J, emb1, capped)."""
    geo = geometry if geometry is not None else _RectGeometry(shadows)
    ax1, ax2 = geo.ax1, geo.ax2
    out = []
    for ic, jc in zip(*np.nonzero(geo.in_omega)):
        pj = geo.parent_cid(ax2, jc)
        if pj is not None and geo.in_omega[ic, pj]:
            continue
        emb = 0
        cur = ic
        capped = False
        while True:
            pid = geo.parent_cid(ax1, cur)
            if pid is None:
                capped = True
                break
            if not geo.in_tilde[pid, jc]:
                break
            emb += 1
            cur = pid
        out.append((ax1.cube(ic), ax2.cube(jc), emb, capped))
    return out


def journe_check(omega: OpenSetOmega, weight, c: float = None):
    """Packing inequality for 2-maximal rectangles: the weighted rectangle
    measures, with weights evaluated at the embeddedness, against twice
    the summed weights times the set's measure.

    weight is a callable on nonnegative integers, decreasing over the
    window depth (checked).  Returns (lhs, rhs, passed)."""
    depth = omega.grid1.params.depth
    w = [float(weight(k)) for k in range(depth + 1)]
    if any(w[i] < w[i + 1] for i in range(depth)):
        raise CombinatoricsError("weight sequence must be decreasing")
    if any(v < 0 for v in w):
        raise CombinatoricsError("weights must be nonnegative")
    shadows = build_shadows(omega, c)
    rects = two_maximal_rectangles(shadows)
    lhs = sum(w[min(emb, depth)] * I.side * J.side
              for I, J, emb, _ in rects)
    rhs = 2.0 * sum(w) * omega.measure()
    return lhs, rhs, bool(lhs <= rhs * (1.0 + 1e-12))


# ----------------------------------------------------------------------
# the end-to-end Carleson sum over open sets


def necessity_check(kernel: BiParamKernel, omega: OpenSetOmega,
                    q: int = 4, diagnostics: bool = False,
                    table_cache=None) -> dict:
    """Sum of rectangle quadratures of |theta 1|^2 over rectangles inside
    the set, divided by the set's measure.

    With diagnostics=True also computes the split of the sum obtained by
    multiplying the input with the complement of the double enlargement
    and with the first-axis union indicator or its complement, per second
    factor.  table_cache, if given, must be the (ax1, ax2, table) triple
    from a previous call with the same kernel/grids/mesh.
    """
    fac = kernel.tensor_factors
    if fac is None:
        raise CombinatoricsError("the measurement needs a tensor kernel")
    if table_cache is None:
        table_cache = carleson_table(kernel, omega.grid1, omega.grid2,
                                     omega.product_spec, q)
    ax1, ax2, table = table_cache
    inside = rectangle_contained(ax1, ax2, omega.cells)
    total = float(table[inside].sum())
    measure = omega.measure()
    out = {"sum": total, "measure": measure,
           "ratio": total / measure if measure > 0 else 0.0}
    if diagnostics:
        out.update(_necessity_diagnostics(kernel, omega, inside, ax1, ax2, q))
    return out


def _necessity_diagnostics(kernel, omega, inside, ax1, ax2, q):
    """The two partial sums with the input cut by the enlargement
    complement and the first-axis union or its complement."""
    k1, k2, mult = kernel.tensor_factors
    shadows = build_shadows(omega)
    geo = _RectGeometry(shadows)
    spec1, spec2 = _split(omega.product_spec)
    espec1 = enlarged_mesh(spec1, 3)
    espec2 = enlarged_mesh(spec2, 3)
    n1, n2 = spec1.shape[0], spec2.shape[0]
    # complement of the double enlargement on the enlarged product mesh
    hat_c = np.ones((espec1.shape[0], espec2.shape[0]), dtype=bool)
    hat_c[n1:2 * n1, n2:2 * n2] = ~shadows.hat
    B = np.ones_like(hat_c, dtype=float)
    if mult is not None:
        B = mult(espec1.centers(0)[:, None], espec2.centers(0)[None, :])
    K1 = np.vstack([ax1.aq.factor_matrix(k1, j, espec1) for j in ax1.levels])
    w = ax1.aq.node_weight * ax2.aq.node_weight
    qq = ax1.aq.q
    s1 = s2 = 0.0
    for jc in np.unique(np.nonzero(inside)[1]):
        J = ax2.cube(int(jc))
        F_cubes, _ = maximal_family_F(shadows, J, geo)
        funion = f_union_indicator(F_cubes, spec1)
        fmask = np.zeros(espec1.shape[0], dtype=bool)
        fmask[n1:2 * n1] = funion
        K2J = ax2.aq.factor_matrix(k2, J.level, espec2)
        cells2 = np.arange(ax2.start[jc], ax2.stop[jc])
        rows2 = np.concatenate([cells2 + r * n2 for r in range(qq)])
        K2J = K2J[rows2]
        ics = np.nonzero(inside[:, jc])[0]
        for side, m1 in ((1, fmask), (2, ~fmask)):
            vals = B * hat_c * m1[:, None]
            G = K1 @ vals @ K2J.T
            G2 = (G ** 2).reshape(len(ax1.levels), qq, n1, -1).sum(axis=(1, 3))
            contrib = 0.0
            for ic in ics:
                li = ax1.levels.index(ax1.cube_list[ic][0])
                contrib += G2[li, ax1.start[ic]:ax1.stop[ic]].sum()
            if side == 1:
                s1 += contrib * w
            else:
                s2 += contrib * w
    return {"s1": s1, "s2": s2}
