"""Run configuration: a single JSON file fully determines an experiment.

Top-level keys:
  n, m            axis dimensions (only 1 supported by the engine)
  alpha, beta     kernel regularity exponents, in (0, 1]
  r               goodness separation parameter
  level_min, level_max   dyadic window per axis
  seed            base RNG seed
  q               t-quadrature points per scale band (default 4)
  trials          Monte-Carlo trial count (default 200)
  samples         verifier sample count (default 200)
  kernel          {"type": "cancellative"}
                  {"type": "paraproduct", "b1_csv": path, "b2_csv": path}
                  {"type": "tabulated", "csv1": path, "csv2": path}
  omega           {"kind": "single", "rect": [l1, i1, l2, i2]}
                  {"kind": "random-unions", "count": N, "rectangles": k}
                  {"kind": "staircase", "steps": s}
                  {"kind": "csv", "paths": [path, ...]}
  weight          {"kind": "geometric", "ratio": rho in (0,1)}
                  {"kind": "power", "exponent": p > 0}   (1+k)^-p
                  {"kind": "table", "values": [...]}      must be decreasing
  input           {"kind": "zero"}
                  {"kind": "random-haar", "count": N}
"""
from __future__ import annotations

import hashlib
import json

import numpy as np

from .grids import DyadicGrid, GridParams, ShiftSequence
from .kernels import builtin_cancellative, builtin_paraproduct, load_tabulated
from .mesh import MeshFunction, MeshSpec

__version__ = "0.1.0"


class ConfigError(Exception):
    pass


_DEFAULTS = {"n": 1, "m": 1, "alpha": 1.0, "beta": 1.0, "r": 6,
             "level_min": 0, "level_max": 6, "seed": 0, "q": 4,
             "trials": 200, "samples": 200,
             "kernel": {"type": "cancellative"},
             "omega": {"kind": "random-unions", "count": 20, "rectangles": 4},
             "weight": {"kind": "geometric", "ratio": 0.5},
             "input": {"kind": "random-haar", "count": 5}}


class RunConfig:
    """Validated experiment configuration with a provenance hash."""

    def __init__(self, data: dict):
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
        unknown = set(data) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(_DEFAULTS)
        merged.update(data)
        self.data = merged
        self._validate()
        canon = json.dumps(merged, sort_keys=True, separators=(",", ":"))
        self.hash = hashlib.sha256(canon.encode()).hexdigest()[:16]

    def _validate(self):
        d = self.data
        for key in ("n", "m", "r", "level_min", "level_max", "seed", "q",
                    "trials", "samples"):
            if not isinstance(d[key], int):
                raise ConfigError(f"{key} must be an integer")
        if d["n"] != 1 or d["m"] != 1:
            raise ConfigError("only n = m = 1 is supported")
        for key in ("alpha", "beta"):
            v = d[key]
            if not isinstance(v, (int, float)) or not 0 < v <= 1:
                raise ConfigError(f"{key} must lie in (0, 1]")
        if d["level_min"] >= d["level_max"]:
            raise ConfigError("level window must be nonempty")
        if d["r"] < 1 or d["q"] < 1 or d["samples"] < 1:
            raise ConfigError("r, q, samples must be positive")
        k = d["kernel"]
        if not isinstance(k, dict) or k.get("type") not in (
                "cancellative", "paraproduct", "tabulated"):
            raise ConfigError("kernel.type must be cancellative, "
                              "paraproduct, or tabulated")
        if k["type"] == "paraproduct" and not (
                "b1_csv" in k and "b2_csv" in k):
            raise ConfigError("paraproduct kernel needs b1_csv and b2_csv")
        if k["type"] == "tabulated" and not ("csv1" in k and "csv2" in k):
            raise ConfigError("tabulated kernel needs csv1 and csv2")
        om = d["omega"]
        if not isinstance(om, dict) or om.get("kind") not in (
                "single", "random-unions", "staircase", "csv"):
            raise ConfigError("bad omega spec")
        w = d["weight"]
        if not isinstance(w, dict) or w.get("kind") not in (
                "geometric", "power", "table"):
            raise ConfigError("bad weight spec")
        if w["kind"] == "geometric" and not 0 < w.get("ratio", 0) < 1:
            raise ConfigError("geometric weight ratio must be in (0, 1)")
        if w["kind"] == "power" and not w.get("exponent", 0) > 0:
            raise ConfigError("power weight exponent must be positive")
        if w["kind"] == "table":
            vals = w.get("values")
            if not vals or any(vals[i] < vals[i + 1]
                               for i in range(len(vals) - 1)):
                raise ConfigError("weight table must be decreasing")
        fi = d["input"]
        if not isinstance(fi, dict) or fi.get("kind") not in (
                "zero", "random-haar"):
            raise ConfigError("bad input spec")

    # ------------------------------------------------------------------
    # constructed objects

    def params(self, axis: int = 1) -> GridParams:
        d = self.data
        alpha = d["alpha"] if axis == 1 else d["beta"]
        return GridParams(n=1, alpha=float(alpha), r=d["r"],
                          level_min=d["level_min"], level_max=d["level_max"])

    def product_spec(self) -> MeshSpec:
        d = self.data
        nx = 1 << (d["level_max"] - 0)
        return MeshSpec(d["level_max"], (nx, nx), (0.0, 0.0))

    def standard_grids(self):
        p1, p2 = self.params(1), self.params(2)
        return (DyadicGrid(p1, ShiftSequence.zero(p1)),
                DyadicGrid(p2, ShiftSequence.zero(p2)))

    def kernel(self):
        d = self.data
        k = d["kernel"]
        if k["type"] == "cancellative":
            return builtin_cancellative(1, 1, d["alpha"], d["beta"])
        if k["type"] == "paraproduct":
            nx = 1 << d["level_max"]
            s1 = MeshSpec(d["level_max"], (nx,), (0.0,))
            b1 = MeshFunction.load_csv(s1, k["b1_csv"])
            b2 = MeshFunction.load_csv(s1, k["b2_csv"])
            return builtin_paraproduct(1, 1, d["alpha"], d["beta"], (b1, b2))
        k1 = load_tabulated(k["csv1"], 1, d["alpha"])
        k2 = load_tabulated(k["csv2"], 1, d["beta"])
        from .kernels import TensorKernel
        return TensorKernel(k1, k2)

    def weight_fn(self):
        w = self.data["weight"]
        if w["kind"] == "geometric":
            rho = float(w["ratio"])
            return lambda k: rho ** k
        if w["kind"] == "power":
            p = float(w["exponent"])
            return lambda k: (1.0 + k) ** (-p)
        vals = [float(v) for v in w["values"]]
        return lambda k: vals[min(k, len(vals) - 1)]

    def omega_family(self, grid1, grid2):
        from . import combinatorics as C
        om = self.data["omega"]
        spec = self.product_spec()
        if om["kind"] == "single":
            l1, i1, l2, i2 = om["rect"]
            return [C.OpenSetOmega([(grid1.cube(l1, (i1,)),
                                     grid2.cube(l2, (i2,)))],
                                   spec, grid1, grid2)]
        if om["kind"] == "staircase":
            return [C.staircase_omega(grid1, grid2, spec, om["steps"])]
        if om["kind"] == "csv":
            return [C.OpenSetOmega.load_csv(p, spec, grid1, grid2)
                    for p in om["paths"]]
        rng = np.random.default_rng([self.data["seed"], 77])
        return [C.random_rectangle_union(grid1, grid2, spec,
                                         om["rectangles"], rng)
                for _ in range(om["count"])]

    def input_fields(self, spec: MeshSpec):
        fi = self.data["input"]
        if fi["kind"] == "zero":
            return [MeshFunction.zeros(spec)]
        g1, g2 = self.standard_grids()
        return [random_haar_polynomial(
            g1, g2, spec, np.random.default_rng([self.data["seed"], 101, i]))
            for i in range(fi["count"])]

    def provenance(self) -> dict:
        return {"config_hash": self.hash, "seed": self.data["seed"],
                "version": __version__}


def random_haar_polynomial(grid1, grid2, product_spec, rng,
                           terms: int = 8) -> MeshFunction:
    """Random finite combination of cancellative product Haar functions."""
    from .haar import haar_polynomial
    coeffs = []
    for _ in range(terms):
        pair = []
        for g in (grid1, grid2):
            p = g.params
            # halves of a level-j cube must be mesh-resolvable
            j = int(rng.integers(p.level_min, p.level_max))
            i = int(rng.integers(0, 1 << j))
            pair.append((j, i, 1))
        coeffs.append((pair[0], pair[1], float(rng.standard_normal())))
    return haar_polynomial(coeffs, grid1, grid2, product_spec)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    return RunConfig(data)
