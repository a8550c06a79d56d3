"""Functions sampled on the finest dyadic mesh of a box.

A MeshFunction stores one scalar per mesh cell.  Cells are half-open
boxes of width 2**-level; integrals are exact sums value * cell_volume,
so every dyadic identity downstream holds to float precision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MeshSpec:
    """Geometry of a uniform dyadic mesh: cell width 2**-level, given shape
    and lower corner.  The box covered is origin + [0, shape * 2**-level)."""

    level: int
    shape: tuple[int, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if len(self.shape) != len(self.origin):
            raise ValueError("shape/origin dimension mismatch")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell_width(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def cell_volume(self) -> float:
        return self.cell_width ** self.dim

    def centers(self, axis: int) -> np.ndarray:
        h = self.cell_width
        return self.origin[axis] + h * (np.arange(self.shape[axis]) + 0.5)

    def lower(self, axis: int) -> np.ndarray:
        h = self.cell_width
        return self.origin[axis] + h * np.arange(self.shape[axis])

    def box_lengths(self) -> tuple[float, ...]:
        h = self.cell_width
        return tuple(n * h for n in self.shape)


def domain_mesh(level: int, dim: int = 1) -> MeshSpec:
    """Mesh of the unit box [0,1)**dim at cell width 2**-level."""
    return MeshSpec(level=level, shape=(2 ** level,) * dim, origin=(0.0,) * dim)


def enlarged_mesh(spec: MeshSpec, factor: int = 3) -> MeshSpec:
    """Concentric enlargement of the box by an odd integer factor, same cell
    width.  Used when integrating against data of unbounded support."""
    if factor % 2 != 1 or factor < 1:
        raise ValueError("enlargement factor must be a positive odd integer")
    k = (factor - 1) // 2
    shape = tuple(factor * n for n in spec.shape)
    origin = tuple(o - k * n * spec.cell_width for o, n in zip(spec.origin, spec.shape))
    return MeshSpec(level=spec.level, shape=shape, origin=origin)


class MeshFunction:
    """A scalar field sampled on a MeshSpec, one value per cell."""

    def __init__(self, spec: MeshSpec, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != spec.shape:
            raise ValueError(f"values shape {values.shape} != mesh shape {spec.shape}")
        self.spec = spec
        self.values = values

    @classmethod
    def zeros(cls, spec: MeshSpec) -> "MeshFunction":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def constant(cls, spec: MeshSpec, c: float) -> "MeshFunction":
        return cls(spec, np.full(spec.shape, float(c)))

    def copy(self) -> "MeshFunction":
        return MeshFunction(self.spec, self.values.copy())

    def _check_same_mesh(self, other: "MeshFunction"):
        if self.spec != other.spec:
            raise ValueError("mesh mismatch")

    def __add__(self, other):
        self._check_same_mesh(other)
        return MeshFunction(self.spec, self.values + other.values)

    def __sub__(self, other):
        self._check_same_mesh(other)
        return MeshFunction(self.spec, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, MeshFunction):
            self._check_same_mesh(c)
            return MeshFunction(self.spec, self.values * c.values)
        return MeshFunction(self.spec, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return MeshFunction(self.spec, -self.values)

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.cell_volume)

    def inner(self, other: "MeshFunction") -> float:
        self._check_same_mesh(other)
        return float((self.values * other.values).sum() * self.spec.cell_volume)

    def norm2(self) -> float:
        """L2 norm over the mesh box."""
        return float(np.sqrt((self.values ** 2).sum() * self.spec.cell_volume))

    # ------------------------------------------------------------------
    # import/export: flat binary (row-major float64) and CSV of
    # (flat cell index, value), row-major over the index lattice.

    def save_binary(self, path):
        self.values.astype("<f8").ravel().tofile(path)

    @classmethod
    def load_binary(cls, spec: MeshSpec, path) -> "MeshFunction":
        raw = np.fromfile(path, dtype="<f8")
        n = int(np.prod(spec.shape))
        if raw.size != n:
            raise ValueError(f"expected {n} values, file has {raw.size}")
        return cls(spec, raw.reshape(spec.shape))

    def save_csv(self, path):
        flat = self.values.ravel()
        with open(path, "w") as fh:
            fh.write("cell_index,value\n")
            for i, v in enumerate(flat):
                fh.write(f"{i},{float(v)!r}\n")

    @classmethod
    def load_csv(cls, spec: MeshSpec, path) -> "MeshFunction":
        n = int(np.prod(spec.shape))
        flat = np.zeros(n)
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("cell_index"):
                raise ValueError("bad CSV header for MeshFunction")
            for line in fh:
                if not line.strip():
                    continue
                idx_s, val_s = line.split(",")
                flat[int(idx_s)] = float(val_s)
        return cls(spec, flat.reshape(spec.shape))
