"""Scale-space quadrature nodes for one variable.

The band (x, t) with t in (2**-(j+1), 2**-j] over the domain is sampled at
every finest-mesh cell center in x and q log-uniform points in t; each
node carries dt/t mass log(2)/q, so the t-weights over a band sum to
log(2) exactly.  Because the level-j cubes of any shifted grid partition
the domain into whole mesh cells, each node belongs to exactly one cube's
scale-band region, and sums over cubes of the region quadratures are
independent of the grid shift.
"""
from __future__ import annotations

import numpy as np

from .grids import Cube, DyadicGrid, GridError, GridParams, goodness_flags, locate_cells
from .kernels import OneParamKernel
from .mesh import MeshSpec


def t_nodes(side: float, q: int) -> np.ndarray:
    """q log-uniform points in (side/2, side], each with dt/t weight ln2/q."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return side * 2.0 ** (-(np.arange(q) + 0.5) / q)


class AxisQuadrature:
    """Nodes and kernel-factor matrices for one one-dimensional variable.

    Node ordering within a level: t-index major, x-cell minor; the flat
    node index is i * ncells + c.
    """

    def __init__(self, params: GridParams, spec: MeshSpec, q: int = 4):
        if spec.dim != 1:
            raise GridError("axis quadrature is one-dimensional")
        if spec.level != params.level_max:
            raise GridError("mesh level must match the window's finest level")
        self.params = params
        self.spec = spec
        self.q = q
        self.x = spec.centers(0)
        self.ncells = spec.shape[0]

    @property
    def node_weight(self) -> float:
        """dx dt/t mass of one node (equal across all nodes and levels)."""
        return self.spec.cell_width * np.log(2.0) / self.q

    def level_t(self, level: int) -> np.ndarray:
        return t_nodes(2.0 ** (-level), self.q)

    def nodes(self, level: int):
        """(t, x) arrays of the level's nodes in flat order."""
        t = np.repeat(self.level_t(level), self.ncells)
        x = np.tile(self.x, self.q)
        return t, x

    def factor_matrix(self, kernel: OneParamKernel, level: int,
                      y_spec: MeshSpec) -> np.ndarray:
        """K[node, ycell] = kernel(t_node, x_node, y_center) * ycell width,
        so that K @ g evaluates the kernel integral against g."""
        t, x = self.nodes(level)
        y = y_spec.centers(0)
        K = kernel.eval(t[:, None], x[:, None], y[None, :])
        return K * y_spec.cell_width

    def owner_indices(self, grid: DyadicGrid, level: int) -> np.ndarray:
        """Axis index of the level-`level` cube owning each x cell."""
        cells = np.arange(self.ncells, dtype=np.int64)[:, None]
        return locate_cells(grid, level, cells, self.spec.level)[:, 0]

    def cell_good_mask(self, grid: DyadicGrid, level: int) -> np.ndarray:
        """Per-cell goodness of the owning cube (length ncells)."""
        owners = self.owner_indices(grid, level)
        uniq, inverse = np.unique(owners, return_inverse=True)
        flags = goodness_flags(grid, level, uniq[:, None])
        return flags[inverse]

    def node_good_mask(self, grid: DyadicGrid, level: int) -> np.ndarray:
        return np.tile(self.cell_good_mask(grid, level), self.q)

    def cube_nodes(self, cube: Cube):
        """(t, x, cell_indices) for the nodes of one cube's scale-band
        region, x restricted to the part of the cube inside the domain."""
        lo = float(cube.lower()[0])
        up = float(cube.upper()[0])
        mask = (self.x > lo) & (self.x < up)
        cells = np.nonzero(mask)[0]
        if cells.size == 0:
            return None
        t = self.level_t(cube.level)
        return t, self.x[cells], cells
