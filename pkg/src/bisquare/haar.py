"""Haar functions, product expansions, martingale differences, and the
ancestor-correction functions on mesh-sampled data.

The per-variable orthonormal system is the usual one: normalized
indicators of the coarsest window cubes plus the cancellative Haar
functions of every coarser-than-mesh cube.  On the standard grid these
span all mesh functions on the box, so round trips are exact; shifted
grids give a partial system (cubes straddling the box edge are dropped)
and callers are expected to work inside its span.
"""
from __future__ import annotations

import numpy as np

from .grids import Cube, DyadicGrid, GridError, ancestor, children
from .mesh import MeshFunction, MeshSpec


def _cube_slices(cube: Cube, spec: MeshSpec):
    """Per-axis (start, stop) cell ranges of the cube inside the mesh, or
    None if the cube misses the box entirely."""
    if spec.level != cube.grid.params.level_max:
        raise GridError("mesh level must match the grid's finest level")
    h = spec.cell_width
    lo = cube.lower()
    width_cells = 1 << (spec.level - cube.level)
    out = []
    for a in range(spec.dim):
        start = int(round((lo[a] - spec.origin[a]) / h))
        stop = start + width_cells
        start_c, stop_c = max(start, 0), min(stop, spec.shape[a])
        if start_c >= stop_c:
            return None
        out.append((start, stop, start_c, stop_c))
    return out


def haar_function(cube: Cube, eta, spec: MeshSpec) -> MeshFunction:
    """The tensor Haar function of the cube with sign pattern eta in
    {0,1}**n, sampled on the mesh.  eta_i = 0 gives the normalized
    indicator factor, eta_i = 1 the +/- split into halves.
    """
    p = cube.grid.params
    eta = tuple(int(e) for e in np.atleast_1d(eta))
    if len(eta) != p.n or any(e not in (0, 1) for e in eta):
        raise ValueError("eta must be a {0,1} pattern of the cube dimension")
    if any(e == 1 for e in eta) and cube.level >= p.level_max:
        raise GridError("cancellative Haar needs resolvable halves")
    sl = _cube_slices(cube, spec)
    vals = np.zeros(spec.shape)
    if sl is None:
        return MeshFunction(spec, vals)
    norm = cube.side ** (-0.5 * p.n)
    # per-axis sign profile over the cube's cells
    width_cells = 1 << (spec.level - cube.level)
    region = vals
    # build by outer product of per-axis profiles restricted to the mesh
    profiles = []
    for a in range(spec.dim):
        start, stop, start_c, stop_c = sl[a]
        prof = np.ones(width_cells)
        if eta[a] == 1:
            prof[width_cells // 2:] = -1.0
        profiles.append(prof[start_c - start: stop_c - start])
    block = profiles[0]
    for prof in profiles[1:]:
        block = np.multiply.outer(block, prof)
    idx = tuple(slice(s[2], s[3]) for s in sl)
    region[idx] = norm * block
    return MeshFunction(spec, vals)


def cube_indicator(cube: Cube, spec: MeshSpec) -> MeshFunction:
    vals = np.zeros(spec.shape)
    sl = _cube_slices(cube, spec)
    if sl is not None:
        vals[tuple(slice(s[2], s[3]) for s in sl)] = 1.0
    return MeshFunction(spec, vals)


def cube_fits(cube: Cube, spec: MeshSpec) -> bool:
    """Whether the cube lies entirely inside the mesh box."""
    sl = _cube_slices(cube, spec)
    if sl is None:
        return False
    return all(s[0] == s[2] and s[1] == s[3] for s in sl)


# ----------------------------------------------------------------------
# per-variable orthonormal system


def variable_basis(grid: DyadicGrid, spec: MeshSpec):
    """All basis functions of one variable as columns over the flattened
    mesh.  Returns (matrix, keys); a key is (level, index, eta), with the
    all-zero eta used only at the coarsest window level (top indicators).
    """
    p = grid.params
    cols, keys = [], []
    zero = (0,) * p.n
    patterns = [e for e in np.ndindex(*(2,) * p.n) if any(e)]
    for level in range(p.level_min, p.level_max + 1):
        for cube in level_cubes_inside(grid, level, spec):
            if level == p.level_min:
                cols.append(haar_function(cube, zero, spec).values.ravel())
                keys.append((level, cube.index, zero))
            if level <= p.level_max - 1:
                for eta in patterns:
                    cols.append(haar_function(cube, eta, spec).values.ravel())
                    keys.append((level, cube.index, eta))
    return np.array(cols).T, keys


def level_cubes_inside(grid: DyadicGrid, level: int, spec: MeshSpec):
    """Cubes of one level lying entirely inside the mesh box."""
    p = grid.params
    h = spec.cell_width
    side_cells = 1 << (spec.level - level)
    shift = grid.shift_units(level)
    out = []
    ranges = []
    for a in range(p.n):
        lo_unit = int(round(spec.origin[a] / h))
        hi_unit = lo_unit + spec.shape[a]
        # smallest index with cube fully at or above the box bottom
        i0 = -((shift[a] - lo_unit) // side_cells)
        while i0 * side_cells + shift[a] < lo_unit:
            i0 += 1
        i1 = i0
        while (i1 + 1) * side_cells + shift[a] <= hi_unit:
            i1 += 1
        ranges.append(range(int(i0), int(i1)))
    for idx in np.ndindex(*(len(r) for r in ranges)):
        index = tuple(ranges[a][idx[a]] for a in range(p.n))
        out.append(grid.cube(level, index))
    return out


# ----------------------------------------------------------------------
# product expansion


class HaarCoefficients:
    """Coefficients of a product-mesh function in the tensor system of two
    grids.  Cancellative-pair coefficients are the `entries`; coefficients
    with a top-indicator factor are kept separately so the cancellative map
    carries exactly the mean-free part.
    """

    def __init__(self, grid1, grid2, keys1, keys2, matrix, spec1, spec2,
                 product_spec):
        self.grid1, self.grid2 = grid1, grid2
        self.keys1, self.keys2 = keys1, keys2
        self.matrix = matrix
        self.spec1, self.spec2 = spec1, spec2
        self.product_spec = product_spec

    @staticmethod
    def _cancellative(key) -> bool:
        return any(key[2])

    def entries(self) -> dict:
        out = {}
        for i, k1 in enumerate(self.keys1):
            if not self._cancellative(k1):
                continue
            for j, k2 in enumerate(self.keys2):
                if not self._cancellative(k2):
                    continue
                v = self.matrix[i, j]
                if v != 0.0:
                    out[(k1, k2)] = float(v)
        return out

    def support(self, tol: float = 1e-13):
        """Cancellative pairs with |coefficient| > tol, as
        (key1, key2, value) triples."""
        out = []
        for i, k1 in enumerate(self.keys1):
            if not self._cancellative(k1):
                continue
            for j, k2 in enumerate(self.keys2):
                if not self._cancellative(k2):
                    continue
                v = float(self.matrix[i, j])
                if abs(v) > tol:
                    out.append((k1, k2, v))
        return out

    def cancellative_energy(self) -> float:
        mask1 = np.array([self._cancellative(k) for k in self.keys1])
        mask2 = np.array([self._cancellative(k) for k in self.keys2])
        sub = self.matrix[np.ix_(mask1, mask2)]
        return float((sub ** 2).sum())

    def total_energy(self) -> float:
        return float((self.matrix ** 2).sum())


def product_haar_transform(f: MeshFunction, grid1: DyadicGrid,
                           grid2: DyadicGrid) -> HaarCoefficients:
    """Expand a function on the product mesh in the tensor basis of the two
    grids.  The first grid owns the leading n axes, the second the rest."""
    n, m = grid1.params.n, grid2.params.n
    if f.spec.dim != n + m:
        raise GridError("mesh dimension does not match the grid pair")
    spec1 = MeshSpec(level=f.spec.level, shape=f.spec.shape[:n],
                     origin=f.spec.origin[:n])
    spec2 = MeshSpec(level=f.spec.level, shape=f.spec.shape[n:],
                     origin=f.spec.origin[n:])
    if spec1.level != grid1.params.level_max or spec2.level != grid2.params.level_max:
        raise GridError("mesh level must match both windows' finest level")
    B1, keys1 = variable_basis(grid1, spec1)
    B2, keys2 = variable_basis(grid2, spec2)
    n1 = int(np.prod(spec1.shape))
    n2 = int(np.prod(spec2.shape))
    F = f.values.reshape(n1, n2)
    C = (B1.T @ F @ B2) * spec1.cell_volume * spec2.cell_volume
    return HaarCoefficients(grid1, grid2, keys1, keys2, C, spec1, spec2, f.spec)


def inverse_transform(coeffs: HaarCoefficients) -> MeshFunction:
    B1, _ = variable_basis(coeffs.grid1, coeffs.spec1)
    B2, _ = variable_basis(coeffs.grid2, coeffs.spec2)
    F = B1 @ coeffs.matrix @ B2.T
    return MeshFunction(coeffs.product_spec, F.reshape(coeffs.product_spec.shape))


def haar_polynomial(coeff_list, grid1, grid2, product_spec) -> MeshFunction:
    """Synthesize sum of c * h_{I}^{eta} (x) h_{J}^{theta} from
    ((level,index,eta),(level,index,theta),c) triples."""
    n = grid1.params.n
    spec1 = MeshSpec(level=product_spec.level, shape=product_spec.shape[:n],
                     origin=product_spec.origin[:n])
    spec2 = MeshSpec(level=product_spec.level, shape=product_spec.shape[n:],
                     origin=product_spec.origin[n:])
    vals = np.zeros((int(np.prod(spec1.shape)), int(np.prod(spec2.shape))))
    for k1, k2, c in coeff_list:
        h1 = haar_function(grid1.cube(k1[0], k1[1]), k1[2], spec1).values.ravel()
        h2 = haar_function(grid2.cube(k2[0], k2[1]), k2[2], spec2).values.ravel()
        vals += c * np.outer(h1, h2)
    return MeshFunction(product_spec, vals.reshape(product_spec.shape))


# ----------------------------------------------------------------------
# averages, martingale differences, corrections


def cube_average(f: MeshFunction, cube: Cube) -> float:
    """Mean of f over the cube; the cube must sit inside the mesh box."""
    sl = _cube_slices(cube, f.spec)
    if sl is None or not cube_fits(cube, f.spec):
        raise GridError("cube not inside the mesh box")
    idx = tuple(slice(s[2], s[3]) for s in sl)
    return float(f.values[idx].mean())


def martingale_difference(f: MeshFunction, cube: Cube) -> MeshFunction:
    """Sum over children of avg * indicator, minus avg over the cube."""
    out = np.zeros(f.spec.shape)
    for child in children(cube):
        sl = _cube_slices(child, f.spec)
        idx = tuple(slice(s[2], s[3]) for s in sl)
        out[idx] = f.values[idx].mean()
    sl = _cube_slices(cube, f.spec)
    idx = tuple(slice(s[2], s[3]) for s in sl)
    out[idx] -= f.values[idx].mean()
    return MeshFunction(f.spec, out)


def s_k_correction(cube: Cube, k: int, eta, spec: MeshSpec) -> MeshFunction:
    """The part of the k-th ancestor's Haar function that lives off the
    (k-1)-st ancestor:

        correction = haar(anc_k) - value of haar(anc_k) on anc_{k-1},

    as a global identity (the subtracted value extends as a constant).
    It vanishes on anc_{k-1} and is bounded by twice the Haar sup.
    """
    if k < 1:
        raise GridError("k must be >= 1")
    anc_k = ancestor(cube, k)
    anc_km1 = ancestor(cube, k - 1)
    h = haar_function(anc_k, eta, spec)
    avg = haar_value_on(anc_k, eta, anc_km1)
    vals = h.values - avg
    # outside anc_k the Haar function is 0, so the correction is -avg there;
    # h.values already is 0 there, giving -avg as required.
    return MeshFunction(spec, vals)


def haar_value_on(cube: Cube, eta, sub: Cube) -> float:
    """Value of the cube's Haar function on a strictly finer subcube (the
    function is constant there); 0 if the subcube is outside."""
    if not cube.contains_cube(sub):
        return 0.0
    if sub.level <= cube.level:
        raise GridError("subcube must be strictly finer")
    eta = tuple(int(e) for e in np.atleast_1d(eta))
    p = cube.grid.params
    norm = cube.side ** (-0.5 * p.n)
    lo_sub = sub.lower_units() * _unit_ratio_pair(sub, cube)[0]
    c = (cube.lower_units() + cube.upper_units()) * _unit_ratio_pair(sub, cube)[1] // 2
    sign = 1.0
    for a in range(p.n):
        if eta[a] == 1 and lo_sub[a] >= c[a]:
            sign = -sign
    return norm * sign


def _unit_ratio_pair(a: Cube, b: Cube):
    la, lb = a.grid.params.level_max, b.grid.params.level_max
    m = max(la, lb)
    return (1 << (m - la), 1 << (m - lb))


def slice_pairing(f: MeshFunction, J: Cube, theta, n_axes: int) -> MeshFunction:
    """Partial pairing in the second variable: integrate f against the Haar
    function of J over the trailing axes, returning a function of the
    first n_axes coordinates."""
    spec = f.spec
    m = spec.dim - n_axes
    if J.grid.params.n != m:
        raise GridError("second-variable dimension mismatch")
    spec2 = MeshSpec(level=spec.level, shape=spec.shape[n_axes:],
                     origin=spec.origin[n_axes:])
    h2 = haar_function(J, theta, spec2)
    out = np.tensordot(f.values, h2.values, axes=m) * spec2.cell_volume
    spec1 = MeshSpec(level=spec.level, shape=spec.shape[:n_axes],
                     origin=spec.origin[:n_axes])
    return MeshFunction(spec1, out)
