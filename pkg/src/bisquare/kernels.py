"""Bi-parameter kernels and quadrature evaluation of the smoothed operator.

Built-in families:
  * a cancellative tensor kernel (difference of two normalized bumps in
    each variable), which kills constants exactly;
  * a paraproduct-type kernel (the same tensor kernel multiplied by a
    bounded function of y), whose action on constants is nonzero.

Evaluators broadcast: `t` scalars, `x`/`y` scalars or numpy arrays (points
for one-dimensional variables; arrays with a trailing coordinate axis in
higher dimension).
"""
from __future__ import annotations

import math

import numpy as np

from .mesh import MeshFunction, MeshSpec, enlarged_mesh


def point_distance(x, y, n: int):
    if n == 1:
        return np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float),
                          axis=-1)


def envelope_integral(n: int, alpha: float) -> float:
    """Integral over R^n of t^a / (t + |u|)^(n+a) du (t-independent)."""
    omega = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    return omega * math.gamma(n) * math.gamma(alpha) / math.gamma(n + alpha)


def envelope_tail(n: int, alpha: float, t: float, d: float) -> float:
    """Upper bound for the envelope integral over |u| > d."""
    omega = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    return omega / alpha * t ** alpha * (t + d) ** (-alpha)


class OneParamKernel:
    """Base class: a kernel (t, x, y) -> value for one variable, with a
    declared Hoelder exponent and a size-envelope constant."""

    def __init__(self, n: int, alpha: float, label: str, size_bound: float):
        self.n = n
        self.alpha = alpha
        self.label = label
        self.size_bound = size_bound

    def eval(self, t, x, y):
        raise NotImplementedError


class BumpDifferenceKernel(OneParamKernel):
    """psi_t(x, y) = phi_t(x - y) - phi_{2t}(x - y) with phi_t a unit-mass
    bump c_n t^a / (t + |u|)^(n+a); integrates to zero in y for every t."""

    def __init__(self, n: int, alpha: float):
        if not (0.0 < alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        self.norm_const = 1.0 / envelope_integral(n, alpha)
        super().__init__(n, alpha, f"bump-difference(n={n},alpha={alpha})",
                         size_bound=self.norm_const * (1.0 + 2.0 ** alpha))

    def bump(self, t, u_abs):
        return self.norm_const * np.asarray(t, dtype=float) ** self.alpha \
            / (np.asarray(t, dtype=float) + u_abs) ** (self.n + self.alpha)

    def eval(self, t, x, y):
        u = point_distance(x, y, self.n)
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("t must be positive")
        return self.bump(t, u) - self.bump(2.0 * t, u)


class MultipliedOneParam(OneParamKernel):
    """A one-parameter kernel multiplied by a bounded function of y."""

    def __init__(self, base: OneParamKernel, multiplier):
        self.base = base
        self.multiplier = multiplier
        super().__init__(base.n, base.alpha, base.label + "*b",
                         size_bound=base.size_bound * multiplier.sup())

    def eval(self, t, x, y):
        return self.base.eval(t, x, y) * self.multiplier(y)


class TabulatedOneParam(OneParamKernel):
    """Kernel given by samples on a (t, x - y) grid; bilinear interpolation
    in (log2 t, u), zero outside the tabulated u-range.

    CSV schema (see load_tabulated): header "t,u,value", one row per grid
    node, t values forming a geometric grid and u values a uniform grid.
    """

    def __init__(self, n: int, alpha: float, t_grid, u_grid, values, label="tabulated"):
        self.t_grid = np.asarray(t_grid, dtype=float)
        self.u_grid = np.asarray(u_grid, dtype=float)
        self.table = np.asarray(values, dtype=float)
        if self.table.shape != (len(self.t_grid), len(self.u_grid)):
            raise ValueError("table shape mismatch")
        tt, uu = np.meshgrid(self.t_grid, self.u_grid, indexing="ij")
        ratios = np.abs(self.table) * (tt + np.abs(uu)) ** (n + alpha) / tt ** alpha
        super().__init__(n, alpha, label, size_bound=float(ratios.max()))

    def eval(self, t, x, y):
        if self.n != 1:
            raise NotImplementedError("tabulated kernels are one-dimensional")
        u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        logt = np.log2(np.asarray(t, dtype=float))
        lt_grid = np.log2(self.t_grid)
        it = np.clip(np.searchsorted(lt_grid, logt) - 1, 0, len(lt_grid) - 2)
        iu = np.clip(np.searchsorted(self.u_grid, u) - 1, 0, len(self.u_grid) - 2)
        wt = np.clip((logt - lt_grid[it]) / (lt_grid[it + 1] - lt_grid[it]), 0.0, 1.0)
        wu = (u - self.u_grid[iu]) / (self.u_grid[iu + 1] - self.u_grid[iu])
        inside = (u >= self.u_grid[0]) & (u <= self.u_grid[-1])
        wu = np.clip(wu, 0.0, 1.0)
        v = ((1 - wt) * (1 - wu) * self.table[it, iu]
             + (1 - wt) * wu * self.table[it, iu + 1]
             + wt * (1 - wu) * self.table[it + 1, iu]
             + wt * wu * self.table[it + 1, iu + 1])
        return np.where(inside, v, 0.0)


def load_tabulated(path, n: int, alpha: float) -> TabulatedOneParam:
    """Read a tabulated kernel from CSV with header t,u,value."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    t_vals = np.unique(rows[:, 0])
    u_vals = np.unique(rows[:, 1])
    table = np.zeros((len(t_vals), len(u_vals)))
    ti = np.searchsorted(t_vals, rows[:, 0])
    ui = np.searchsorted(u_vals, rows[:, 1])
    table[ti, ui] = rows[:, 2]
    return TabulatedOneParam(n, alpha, t_vals, u_vals, table)


# ----------------------------------------------------------------------
# multipliers (bounded functions of y sampled on a mesh)


class MeshMultiplier:
    """Nearest-cell lookup of a mesh-sampled bounded function; zero outside
    the mesh box, or periodic continuation of the box if requested."""

    def __init__(self, f: MeshFunction, periodic: bool = False):
        self.f = f
        self.periodic = periodic

    def sup(self) -> float:
        return float(np.abs(self.f.values).max())

    def __call__(self, *points):
        spec = self.f.spec
        if len(points) == 1 and spec.dim == 1:
            coords = [np.asarray(points[0], dtype=float)]
        elif len(points) == spec.dim:
            coords = [np.asarray(p, dtype=float) for p in points]
        else:
            raise ValueError("multiplier arity mismatch")
        idx = []
        inside = True
        for a, c in enumerate(coords):
            i = np.floor((c - spec.origin[a]) / spec.cell_width).astype(np.int64)
            if self.periodic:
                i = np.mod(i, spec.shape[a])
            else:
                inside = inside & (i >= 0) & (i < spec.shape[a])
                i = np.clip(i, 0, spec.shape[a] - 1)
            idx.append(i)
        vals = self.f.values[tuple(np.broadcast_arrays(*idx))] if len(idx) > 1 \
            else self.f.values[idx[0]]
        if self.periodic:
            return vals
        return np.where(inside, vals, 0.0)


# ----------------------------------------------------------------------
# bi-parameter kernels


class BiParamKernel:
    """Base class for kernels s_{t1,t2}(x1, x2, y1, y2)."""

    def __init__(self, n, m, alpha, beta, label, size_bound):
        self.n, self.m = n, m
        self.alpha, self.beta = alpha, beta
        self.label = label
        self.size_bound = size_bound

    def eval(self, t1, t2, x1, x2, y1, y2):
        raise NotImplementedError

    @property
    def tensor_factors(self):
        """(k1, k2, multiplier-or-None) when the kernel is a tensor of
        one-parameter kernels times a bounded function of y; else None."""
        return None


class TensorKernel(BiParamKernel):
    def __init__(self, k1: OneParamKernel, k2: OneParamKernel, multiplier=None,
                 label=None):
        sup = multiplier.sup() if multiplier is not None else 1.0
        super().__init__(k1.n, k2.n, k1.alpha, k2.alpha,
                         label or f"{k1.label} (x) {k2.label}",
                         size_bound=k1.size_bound * k2.size_bound * sup)
        self.k1, self.k2 = k1, k2
        self.multiplier = multiplier

    def eval(self, t1, t2, x1, x2, y1, y2):
        v = self.k1.eval(t1, x1, y1) * self.k2.eval(t2, x2, y2)
        if self.multiplier is not None:
            v = v * self.multiplier(y1, y2)
        return v

    @property
    def tensor_factors(self):
        return (self.k1, self.k2, self.multiplier)

    @property
    def separable(self) -> bool:
        """True when the y-multiplier (if any) does not couple the two
        variables, so applications factor per variable."""
        return self.multiplier is None


def builtin_cancellative(n, m, alpha, beta) -> TensorKernel:
    """Tensor of two bump differences; annihilates constants in each
    variable, so every Carleson-type quantity vanishes."""
    return TensorKernel(BumpDifferenceKernel(n, alpha), BumpDifferenceKernel(m, beta),
                        label=f"cancellative(n={n},m={m},a={alpha},b={beta})")


def builtin_paraproduct(n, m, alpha, beta, b, periodic: bool = False) -> TensorKernel:
    """The cancellative tensor kernel multiplied by a bounded function b of
    y.  b may be a MeshFunction on the product mesh, or a pair of
    per-variable MeshFunctions (then the kernel stays separable)."""
    k1 = BumpDifferenceKernel(n, alpha)
    k2 = BumpDifferenceKernel(m, beta)
    if isinstance(b, tuple):
        b1, b2 = b
        return TensorKernel(MultipliedOneParam(k1, MeshMultiplier(b1, periodic)),
                            MultipliedOneParam(k2, MeshMultiplier(b2, periodic)),
                            label=f"paraproduct-separable(n={n},m={m})")
    return TensorKernel(k1, k2, multiplier=MeshMultiplier(b, periodic),
                        label=f"paraproduct(n={n},m={m})")


# ----------------------------------------------------------------------
# quadrature application


def theta_apply(kernel: BiParamKernel, f: MeshFunction, t1: float, t2: float, x):
    """Midpoint-rule value of the smoothed operator at one point: kernel at
    cell centers times cell values, summed with cell volume."""
    if t1 <= 0 or t2 <= 0:
        raise ValueError("t must be positive")
    n, m = kernel.n, kernel.m
    spec = f.spec
    if spec.dim != n + m:
        raise ValueError("mesh dimension mismatch")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x1 = x[0] if n == 1 else x[:n]
    x2 = x[n] if m == 1 else x[n:]
    if n == 1 and m == 1:
        y1 = spec.centers(0)[:, None]
        y2 = spec.centers(1)[None, :]
        s = kernel.eval(t1, t2, x1, x2, y1, y2)
        return float((s * f.values).sum() * spec.cell_volume)
    y1pts = _variable_centers(spec, 0, n)
    y2pts = _variable_centers(spec, n, m)
    fac = kernel.tensor_factors
    if fac is None:
        raise NotImplementedError("generic kernels supported for n=m=1 only")
    k1, k2, mult = fac
    v1 = k1.eval(t1, x1, y1pts if n > 1 else y1pts[:, 0])
    v2 = k2.eval(t2, x2, y2pts if m > 1 else y2pts[:, 0])
    s = np.outer(v1, v2)
    if mult is not None:
        s = s * mult(*[c for c in y1pts.T], *[c for c in y2pts.T])
    vals = f.values.reshape(len(v1), len(v2))
    return float((s * vals).sum() * spec.cell_volume)


def _variable_centers(spec: MeshSpec, start: int, count: int) -> np.ndarray:
    axes = [spec.centers(a) for a in range(start, start + count)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def theta_one(kernel: BiParamKernel, t1: float, t2: float, x,
              base_spec: MeshSpec, enlargement: int = 3) -> float:
    """Action on the constant function 1, integrated over the enlargement of
    the base box.  See theta_one_report for the discarded-tail bound."""
    big = enlarged_mesh(base_spec, enlargement)
    return theta_apply(kernel, MeshFunction.constant(big, 1.0), t1, t2, x)


def theta_one_report(kernel: BiParamKernel, t1: float, t2: float, x,
                     base_spec: MeshSpec, enlargement: int = 3):
    """(value, tail_bound): the truncated integral and an analytic bound on
    the contribution of the discarded exterior, from the size envelope."""
    val = theta_one(kernel, t1, t2, x, base_spec, enlargement)
    big = enlarged_mesh(base_spec, enlargement)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n, m = kernel.n, kernel.m
    d1 = _boundary_margin(x[:n], big, 0, n)
    d2 = _boundary_margin(x[n:], big, n, m)
    full1 = envelope_integral(n, kernel.alpha)
    full2 = envelope_integral(m, kernel.beta)
    tail1 = envelope_tail(n, kernel.alpha, t1, d1)
    tail2 = envelope_tail(m, kernel.beta, t2, d2)
    bound = kernel.size_bound * (tail1 * full2 + full1 * tail2)
    return val, float(bound)


def _boundary_margin(xv, spec: MeshSpec, start: int, count: int) -> float:
    lens = spec.box_lengths()
    margins = []
    for a in range(count):
        lo = spec.origin[start + a]
        hi = lo + lens[start + a]
        margins.append(min(xv[a] - lo, hi - xv[a]))
    return max(0.0, min(margins))
